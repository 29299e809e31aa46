use std::fmt::Write as _;
use std::path::Path;

use super::kors::{derive_limb_leads, INDEPENDENT_LEADS};
use super::Signal;
use crate::error::{Error, Result};

/// Serialises a signal: `fs=<Hz>`, a header of lead names, one row per sample.
/// Values use the shortest round-trip float representation.
pub fn signal_to_csv(s: &Signal) -> String {
    let mut out = String::with_capacity(s.samples() * s.lead_count() * 12);
    let _ = writeln!(out, "fs={}", s.fs());
    out.push_str(&s.lead_names().join(","));
    out.push('\n');
    for t in 0..s.samples() {
        for (i, lead) in s.leads().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", lead[t]);
        }
        out.push('\n');
    }
    out
}

pub fn write_signal_csv(path: &Path, s: &Signal) -> Result<()> {
    std::fs::write(path, signal_to_csv(s)).map_err(|e| Error::io(path, e))
}

pub fn parse_signal_csv(text: &str, origin: &Path) -> Result<Signal> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let fs_line = lines.next().ok_or_else(|| Error::parse(origin, "empty file"))?;
    let fs: f64 = fs_line
        .trim()
        .strip_prefix("fs=")
        .ok_or_else(|| Error::parse(origin, "first line must be fs=<Hz>"))?
        .trim()
        .parse()
        .map_err(|_| Error::parse(origin, format!("bad sampling rate in {fs_line:?}")))?;
    let header = lines.next().ok_or_else(|| Error::parse(origin, "missing lead header"))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut data = vec![Vec::new(); names.len()];
    for (row, line) in lines.enumerate() {
        let mut count = 0;
        for (i, cell) in line.split(',').enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, format!("row {}: bad value {cell:?}", row + 3)))?;
            if i >= names.len() {
                return Err(Error::parse(origin, format!("row {}: too many columns", row + 3)));
            }
            data[i].push(v);
            count += 1;
        }
        if count != names.len() {
            return Err(Error::parse(origin, format!("row {}: expected {} columns", row + 3, names.len())));
        }
    }
    if names.iter().map(String::as_str).eq(INDEPENDENT_LEADS) {
        return derive_limb_leads(data, fs);
    }
    Signal::new(data, fs, names)
}

/// Reads a signal CSV. Files holding only the 8 independent leads are
/// expanded to 12 leads.
pub fn read_signal_csv(path: &Path) -> Result<Signal> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_signal_csv(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_bit_exact() {
        let s = Signal::with_leads(vec![vec![0.1, -1.0 / 3.0, 1e-17], vec![2.0, 3.5, -0.0]], 250.0, &["X", "Y"])
            .unwrap();
        let back = parse_signal_csv(&signal_to_csv(&s), Path::new("mem")).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn eight_leads_expand() {
        let leads: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 1.0]).collect();
        let s = Signal::with_leads(leads, 100.0, &INDEPENDENT_LEADS).unwrap();
        let back = parse_signal_csv(&signal_to_csv(&s), Path::new("mem")).unwrap();
        assert_eq!(back.lead_count(), 12);
        assert_eq!(back.lead_by_name("III").unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn malformed() {
        assert!(parse_signal_csv("I,II\n1,2\n", Path::new("m")).is_err());
        assert!(parse_signal_csv("fs=100\nI,II\n1\n", Path::new("m")).is_err());
        assert!(parse_signal_csv("fs=100\nI\nx\n", Path::new("m")).is_err());
    }
}
