use std::path::Path;

use super::Signal;
use crate::error::{Error, Result};

pub const VCG_LEADS: [&str; 3] = ["X", "Y", "Z"];
pub const INDEPENDENT_LEADS: [&str; 8] = ["I", "II", "V1", "V2", "V3", "V4", "V5", "V6"];
pub const TWELVE_LEADS: [&str; 12] =
    ["I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"];

/// Regression map from the 8 independent leads (I, II, V1–V6) to X, Y, Z.
#[derive(Debug, Clone, PartialEq)]
pub struct KorsMatrix {
    pub rows: [[f64; 8]; 3],
}

impl Default for KorsMatrix {
    /// Published Kors regression coefficients, columns I, II, V1..V6.
    fn default() -> Self {
        KorsMatrix {
            rows: [
                [0.38, -0.07, -0.13, 0.05, -0.01, 0.14, 0.06, 0.54],
                [-0.07, 0.93, 0.06, -0.02, -0.05, 0.06, -0.17, 0.13],
                [0.11, -0.23, -0.43, -0.06, -0.14, -0.20, -0.11, 0.31],
            ],
        }
    }
}

fn invert3(m: [[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * c(1, 1, 2, 2) - m[0][1] * c(1, 0, 2, 2) + m[0][2] * c(1, 0, 2, 1);
    if det.abs() < 1e-12 {
        return Err(Error::Degenerate("Kors matrix is not full row rank".into()));
    }
    let adj = [
        [c(1, 1, 2, 2), -c(0, 1, 2, 2), c(0, 1, 1, 2)],
        [-c(1, 0, 2, 2), c(0, 0, 2, 2), -c(0, 0, 1, 2)],
        [c(1, 0, 2, 1), -c(0, 0, 2, 1), c(0, 0, 1, 1)],
    ];
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = adj[i][j] / det;
        }
    }
    Ok(inv)
}

impl KorsMatrix {
    /// Moore–Penrose pseudo-inverse `Kᵀ (K Kᵀ)⁻¹`, an 8 × 3 map.
    pub fn pseudo_inverse(&self) -> Result<[[f64; 3]; 8]> {
        let k = &self.rows;
        let mut kkt = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                kkt[i][j] = (0..8).map(|c| k[i][c] * k[j][c]).sum();
            }
        }
        let inv = invert3(kkt)?;
        let mut p = [[0.0; 3]; 8];
        for (c, row) in p.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|i| k[i][c] * inv[i][j]).sum();
            }
        }
        Ok(p)
    }

    /// Applies `K` to the 8 independent leads, giving X, Y, Z.
    pub fn apply(&self, leads8: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if leads8.len() != 8 {
            return Err(Error::invalid(format!("expected 8 independent leads, got {}", leads8.len())));
        }
        let n = leads8[0].len();
        Ok(self
            .rows
            .iter()
            .map(|row| (0..n).map(|t| row.iter().zip(leads8).map(|(k, l)| k * l[t]).sum()).collect())
            .collect())
    }

    /// Parses a 3 × 8 CSV; a non-numeric first line is treated as a header.
    pub fn from_csv_str(text: &str, origin: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            match parsed {
                Ok(v) => rows.push(v),
                Err(_) if rows.is_empty() && ln == 0 => continue,
                Err(e) => return Err(Error::parse(origin, format!("line {}: {e}", ln + 1))),
            }
        }
        if rows.len() != 3 || rows.iter().any(|r| r.len() != 8) {
            return Err(Error::parse(origin, "Kors matrix must be 3 rows of 8 values"));
        }
        let mut m = [[0.0; 8]; 3];
        for (i, r) in rows.iter().enumerate() {
            m[i].copy_from_slice(r);
        }
        Ok(KorsMatrix { rows: m })
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, path)
    }
}

/// Builds the 12-lead layout from the 8 independent leads using the
/// Einthoven/Goldberger identities.
pub fn derive_limb_leads(leads8: Vec<Vec<f64>>, fs: f64) -> Result<Signal> {
    if leads8.len() != 8 {
        return Err(Error::invalid(format!("expected 8 independent leads, got {}", leads8.len())));
    }
    let mut it = leads8.into_iter();
    let lead_i = it.next().expect("8 leads");
    let lead_ii = it.next().expect("8 leads");
    let precordial: Vec<Vec<f64>> = it.collect();
    let iii = lead_i.iter().zip(&lead_ii).map(|(a, b)| b - a).collect();
    let avr = lead_i.iter().zip(&lead_ii).map(|(a, b)| -(a + b) / 2.0).collect();
    let avl = lead_i.iter().zip(&lead_ii).map(|(a, b)| a - b / 2.0).collect();
    let avf = lead_i.iter().zip(&lead_ii).map(|(a, b)| b - a / 2.0).collect();
    let mut data = vec![lead_i, lead_ii, iii, avr, avl, avf];
    data.extend(precordial);
    Signal::with_leads(data, fs, &TWELVE_LEADS)
}

/// Reconstructs a 12-lead ECG from an X, Y, Z recording.
pub fn kors_vcg_to_12lead(vcg: &Signal, kors: &KorsMatrix) -> Result<Signal> {
    if vcg.lead_count() != 3 {
        return Err(Error::invalid(format!("VCG must have 3 leads (X, Y, Z), got {}", vcg.lead_count())));
    }
    let p = kors.pseudo_inverse()?;
    let n = vcg.samples();
    let (x, y, z) = (vcg.lead(0), vcg.lead(1), vcg.lead(2));
    let leads8 = p
        .iter()
        .map(|row| (0..n).map(|t| row[0] * x[t] + row[1] * y[t] + row[2] * z[t]).collect())
        .collect();
    derive_limb_leads(leads8, vcg.fs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vcg(vals: [Vec<f64>; 3]) -> Signal {
        Signal::with_leads(vals.to_vec(), 1000.0, &VCG_LEADS).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let out = kors_vcg_to_12lead(&vcg([vec![0.0; 7], vec![0.0; 7], vec![0.0; 7]]), &KorsMatrix::default())
            .unwrap();
        assert_eq!(out.lead_count(), 12);
        assert!(out.leads().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn pseudo_inverse_round_trip() {
        let k = KorsMatrix::default();
        let s = vcg([vec![0.3, -1.2, 2.0], vec![1.0, 0.1, -0.4], vec![-0.7, 0.5, 0.9]]);
        let out = kors_vcg_to_12lead(&s, &k).unwrap();
        let eight: Vec<Vec<f64>> =
            INDEPENDENT_LEADS.iter().map(|n| out.lead_by_name(n).unwrap().to_vec()).collect();
        let back = k.apply(&eight).unwrap();
        for (a, b) in back.iter().flatten().zip(s.leads().iter().flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn wrong_lead_count() {
        let s = Signal::with_leads(vec![vec![0.0; 3]; 2], 500.0, &["X", "Y"]).unwrap();
        assert!(kors_vcg_to_12lead(&s, &KorsMatrix::default()).is_err());
    }

    #[test]
    fn csv_with_header() {
        let text = "I,II,V1,V2,V3,V4,V5,V6\n0.38,-0.07,-0.13,0.05,-0.01,0.14,0.06,0.54\n\
                    -0.07,0.93,0.06,-0.02,-0.05,0.06,-0.17,0.13\n0.11,-0.23,-0.43,-0.06,-0.14,-0.20,-0.11,0.31\n";
        let k = KorsMatrix::from_csv_str(text, Path::new("k.csv")).unwrap();
        assert_eq!(k, KorsMatrix::default());
        assert!(KorsMatrix::from_csv_str("1,2,3\n", Path::new("k.csv")).is_err());
    }
}
