use crate::error::{Error, Result};
use crate::prob_embed::{cosine_similarity, MatchMatrix, ProbEmbedding};

/// Per-class score is the best cosine between the ECG μ and that class's
/// prompt μs; the highest-scoring class wins, ties to the lowest index.
pub fn zeroshot_classify(ecg: &ProbEmbedding, prompts: &[Vec<ProbEmbedding>]) -> Result<usize> {
    if prompts.len() < 2 {
        return Err(Error::invalid("zero-shot needs at least two classes"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (c, class_prompts) in prompts.iter().enumerate() {
        if class_prompts.is_empty() {
            return Err(Error::invalid(format!("class {c} has no prompts")));
        }
        let mut score = f64::NEG_INFINITY;
        for p in class_prompts {
            score = score.max(cosine_similarity(&ecg.mu, &p.mu)?);
        }
        if score > best.1 {
            best = (c, score);
        }
    }
    Ok(best.0)
}

/// Fraction of rows whose `k` most similar columns include a match. Ties in
/// similarity rank the lower column first.
pub fn recall_at_k(similarity: &[Vec<f64>], m: &MatchMatrix, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if similarity.is_empty() {
        return Err(Error::invalid("no queries"));
    }
    if similarity.len() != m.rows() || similarity.iter().any(|r| r.len() != m.cols()) {
        return Err(Error::shape("recall_at_k", format!("similarity vs match matrix {}×{}", m.rows(), m.cols())));
    }
    let mut hits = 0usize;
    for (i, row) in similarity.iter().enumerate() {
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        if order.iter().take(k).any(|&j| m.get(i, j)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / similarity.len() as f64)
}

/// Unweighted mean of per-class recall over the classes present in `labels`.
pub fn balanced_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::shape("balanced_accuracy", format!("{} predictions, {} labels", preds.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::invalid("balanced accuracy of an empty set"));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut hit = vec![0usize; classes];
    let mut count = vec![0usize; classes];
    for (&p, &y) in preds.iter().zip(labels) {
        count[y] += 1;
        hit[y] += usize::from(p == y);
    }
    let recalls: Vec<f64> =
        count.iter().zip(&hit).filter(|(c, _)| **c > 0).map(|(c, h)| *h as f64 / *c as f64).collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Entropy in bits, with `0·log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { q * q.log2() };
    -(term(p) + term(1.0 - p))
}

/// Partition by the median: `≤` goes low, `>` goes high.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianSplit {
    pub median: f64,
    pub low: Vec<usize>,
    pub high: Vec<usize>,
    /// Set when one side is empty.
    pub degenerate: bool,
}

pub fn median_split(values: &[f64]) -> Result<MedianSplit> {
    if values.is_empty() {
        return Err(Error::invalid("median of an empty list"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("uncertainty list".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let (low, high): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| values[i] <= median);
    let degenerate = low.is_empty() || high.is_empty();
    Ok(MedianSplit { median, low, high, degenerate })
}

/// Cosine similarity of every query μ against every candidate μ.
pub fn cosine_matrix(queries: &[ProbEmbedding], candidates: &[ProbEmbedding]) -> Result<Vec<Vec<f64>>> {
    queries
        .iter()
        .map(|q| candidates.iter().map(|c| cosine_similarity(&q.mu, &c.mu)).collect())
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pe(mu: Vec<f64>) -> ProbEmbedding {
        let d = mu.len();
        ProbEmbedding::new(mu, vec![0.0; d]).unwrap()
    }

    #[test]
    fn zeroshot_cases() {
        let prompts = vec![vec![pe(vec![1.0, 0.0, 0.0])], vec![pe(vec![0.0, 1.0, 0.0])]];
        assert_eq!(zeroshot_classify(&pe(vec![1.0, 0.0, 0.0]), &prompts).unwrap(), 0);
        let prompts = vec![vec![pe(vec![0.5, 0.0, 0.75f64.sqrt()])], vec![pe(vec![0.0, 1.0, 0.0])]];
        assert_eq!(zeroshot_classify(&pe(vec![1.0, 0.0, 0.0]), &prompts).unwrap(), 0);
        let tie = vec![vec![pe(vec![1.0, 0.0])], vec![pe(vec![1.0, 0.0])]];
        assert_eq!(zeroshot_classify(&pe(vec![0.3, 0.2]), &tie).unwrap(), 0);
        let empty = vec![vec![pe(vec![1.0, 0.0])], vec![]];
        assert!(zeroshot_classify(&pe(vec![1.0, 0.0]), &empty).is_err());
    }

    #[test]
    fn recall_identity_and_reversed() {
        let n = 5;
        let sim: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        assert_eq!(recall_at_k(&sim, &MatchMatrix::identity(n), 1).unwrap(), 1.0);
        let rev: Vec<bool> = (0..n * n).map(|k| k / n + k % n == n - 1).collect();
        let rev = MatchMatrix::new(n, n, rev).unwrap();
        // Row i ranks column i first, then the tied zeros by index.
        let r2 = recall_at_k(&sim, &rev, 2).unwrap();
        let expected = (0..n)
            .filter(|&i| {
                let j = n - 1 - i;
                j == i || j == if i == 0 { 1 } else { 0 }
            })
            .count() as f64
            / n as f64;
        assert_eq!(r2, expected);
        assert!(recall_at_k(&sim, &rev, 0).is_err());
    }

    #[test]
    fn balanced_accuracy_cases() {
        assert_eq!(balanced_accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.5);
        let labels = [0, 0, 1, 1, 2, 2];
        let preds = [0, 0, 1, 0, 0, 1];
        assert_eq!(balanced_accuracy(&preds, &labels).unwrap(), 0.5);
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(binary_entropy(0.5), 1.0);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        let h = binary_entropy(0.11);
        assert!(h < 0.5 && h > 0.49, "{h}");
    }

    #[test]
    fn median_split_cases() {
        let s = median_split(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.low, s.high), (vec![0, 1], vec![2, 3]));
        let s = median_split(&[2.0; 5]).unwrap();
        assert_eq!(s.low.len(), 5);
        assert!(s.high.is_empty() && s.degenerate);
        assert!(median_split(&[]).is_err());
    }

    #[test]
    fn mean_sd_sample() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
