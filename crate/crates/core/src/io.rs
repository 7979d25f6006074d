//! Shared number formatting for CSV output.

/// 17 significant digits, scientific notation. Deterministic across runs.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_roundtrip() {
        for v in [0.0, 1.0, -5.0, std::f64::consts::PI, 1e-300, 9.869604401089358] {
            let s = fmt_num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(0.5), "5.0000000000000000e-1");
    }
}
