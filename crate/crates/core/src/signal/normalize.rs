use super::Signal;

/// Per-lead z-score using the population standard deviation. Constant leads
/// become all zeros.
pub fn zscore_normalize(s: &Signal) -> Signal {
    let mut out = s.clone();
    for lead in out.leads_mut() {
        let n = lead.len() as f64;
        if lead.is_empty() {
            continue;
        }
        let mean = lead.iter().sum::<f64>() / n;
        let var = lead.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd <= 1e-12 * mean.abs().max(1.0) {
            lead.iter_mut().for_each(|v| *v = 0.0);
        } else {
            lead.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        }
    }
    out
}
