use proptest::prelude::*;
use pxm_core::eval::{
    balanced_accuracy, binary_entropy, fit_probe, median_split, recall_at_k, zeroshot_classify, ProbeOptions,
};
use pxm_core::prob_embed::{MatchMatrix, ProbEmbedding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Newton's method on the binary logistic objective
/// `mean log(1 + exp(−s·(w·x + β))) + (l2/4)·‖w‖²`, `s = ±1`.
fn newton_logistic(x: &[[f64; 2]], y: &[usize], l2: f64) -> ([f64; 2], f64) {
    let mut theta = [0.0f64; 3];
    let n = x.len() as f64;
    for _ in 0..100 {
        let mut g = [0.0f64; 3];
        let mut h = [[0.0f64; 3]; 3];
        for (xi, &yi) in x.iter().zip(y) {
            let z = [xi[0], xi[1], 1.0];
            let t = theta[0] * z[0] + theta[1] * z[1] + theta[2];
            let p = 1.0 / (1.0 + (-t).exp());
            let r = p - yi as f64;
            for a in 0..3 {
                g[a] += r * z[a] / n;
                for b in 0..3 {
                    h[a][b] += p * (1.0 - p) * z[a] * z[b] / n;
                }
            }
        }
        for a in 0..2 {
            g[a] += 0.5 * l2 * theta[a];
            h[a][a] += 0.5 * l2;
        }
        let step = solve3(h, g);
        for a in 0..3 {
            theta[a] -= step[a];
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-14 {
            break;
        }
    }
    ([theta[0], theta[1]], theta[2])
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * out[k]).sum();
        out[row] = (b[row] - s) / a[row][row];
    }
    out
}

#[test]
fn probe_matches_independent_logistic_solver() {
    let x = [
        [0.2, 1.1],
        [1.0, 0.3],
        [-0.5, 0.8],
        [1.5, -0.2],
        [0.1, -1.0],
        [-1.2, 0.4],
        [0.7, 0.9],
        [-0.3, -0.6],
        [1.1, 1.4],
        [-0.9, -1.3],
    ];
    let y = [1, 1, 0, 1, 0, 0, 1, 0, 0, 1];
    let opts = ProbeOptions { l2: 0.05, max_iters: 10_000, tol: 1e-9 };
    let rows: Vec<Vec<f64>> = x.iter().map(|r| r.to_vec()).collect();
    let probe = fit_probe(&rows, &y, &opts).unwrap();
    let (w, beta) = newton_logistic(&x, &y, opts.l2);
    for k in 0..2 {
        let got = probe.weights[1][k] - probe.weights[0][k];
        assert!((got - w[k]).abs() < 1e-4, "weight {k}: {got} vs {}", w[k]);
    }
    assert!((probe.bias[1] - probe.bias[0] - beta).abs() < 1e-4);
}

#[test]
fn entropy_threshold_probe() {
    assert!(binary_entropy(0.11) < 0.5);
    assert!(binary_entropy(0.12) > 0.5);
}

#[test]
fn median_split_of_odd_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let v: Vec<f64> = (0..101).map(|_| rng.random()).collect();
    let s = median_split(&v).unwrap();
    assert_eq!((s.low.len(), s.high.len()), (51, 50));
}

#[test]
fn zeroshot_agrees_with_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let emb = |rng: &mut ChaCha8Rng| {
        ProbEmbedding::new((0..6).map(|_| rng.random_range(-1.0..1.0)).collect(), vec![0.0; 6]).unwrap()
    };
    let prompts: Vec<Vec<ProbEmbedding>> = (0..4).map(|_| (0..3).map(|_| emb(&mut rng)).collect()).collect();
    for _ in 0..50 {
        let e = emb(&mut rng);
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            d / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
        };
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (c, ps) in prompts.iter().enumerate() {
            for p in ps {
                let s = cos(&e.mu, &p.mu);
                if s > best.1 {
                    best = (c, s);
                }
            }
        }
        assert_eq!(zeroshot_classify(&e, &prompts).unwrap(), best.0);
    }
}

fn brute_recall(sim: &[Vec<f64>], m: &MatchMatrix, k: usize) -> f64 {
    let mut hits = 0;
    for (i, row) in sim.iter().enumerate() {
        let hit = (0..row.len()).filter(|&j| m.get(i, j)).any(|j| {
            let ahead = (0..row.len()).filter(|&c| row[c] > row[j] || (row[c] == row[j] && c < j)).count();
            ahead < k
        });
        hits += usize::from(hit);
    }
    hits as f64 / sim.len() as f64
}

fn random_sim(seed: u64, n: usize, levels: u32) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..n).map(|_| f64::from(rng.random_range(0..levels))).collect()).collect()
}

proptest! {
    #[test]
    fn recall_matches_brute_force(seed in 0u64..10_000, k in 1usize..21, levels in 2u32..50) {
        let sim = random_sim(seed, 20, levels);
        let m = MatchMatrix::identity(20);
        prop_assert_eq!(recall_at_k(&sim, &m, k).unwrap(), brute_recall(&sim, &m, k));
    }

    #[test]
    fn recall_is_monotone_in_k(seed in 0u64..10_000, n in 2usize..15) {
        let sim = random_sim(seed, n, 1000);
        let m = MatchMatrix::identity(n);
        let r: Vec<f64> = (1..=n).map(|k| recall_at_k(&sim, &m, k).unwrap()).collect();
        prop_assert!(r.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(r[n - 1], 1.0);
    }

    #[test]
    fn zeroshot_ignores_positive_rescaling(seed in 0u64..1000, scale in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let prompts: Vec<Vec<ProbEmbedding>> = (0..3)
            .map(|_| vec![ProbEmbedding::new((0..5).map(|_| rng.random_range(-1.0..1.0)).collect(), vec![0.0; 5]).unwrap()])
            .collect();
        let a = ProbEmbedding::new(mu.clone(), vec![0.0; 5]).unwrap();
        let b = ProbEmbedding::new(mu.iter().map(|v| v * scale).collect(), vec![0.0; 5]).unwrap();
        prop_assert_eq!(zeroshot_classify(&a, &prompts).unwrap(), zeroshot_classify(&b, &prompts).unwrap());
    }

    #[test]
    fn balanced_accuracy_ignores_proportional_duplication(
        preds in prop::collection::vec(0usize..3, 3..30),
        copies in 2usize..4,
    ) {
        let labels: Vec<usize> = (0..preds.len()).map(|i| i % 3).collect();
        let base = balanced_accuracy(&preds, &labels).unwrap();
        let dp: Vec<usize> = preds.iter().flat_map(|&p| std::iter::repeat_n(p, copies)).collect();
        let dl: Vec<usize> = labels.iter().flat_map(|&l| std::iter::repeat_n(l, copies)).collect();
        prop_assert!((balanced_accuracy(&dp, &dl).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn median_split_is_a_partition(v in prop::collection::vec(-100.0f64..100.0, 1..80)) {
        let s = median_split(&v).unwrap();
        let mut all: Vec<usize> = s.low.iter().chain(&s.high).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..v.len()).collect::<Vec<_>>());
        prop_assert!(s.low.iter().all(|&i| v[i] <= s.median));
        prop_assert!(s.high.iter().all(|&i| v[i] > s.median));
    }
}
