use crate::error::{Error, Result};

/// Binary Shannon entropy in bits, with `0·log 0 = 0`.
pub fn binary_entropy(q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("binary entropy argument {q} outside [0, 1]")));
    }
    Ok(h(q))
}

pub(crate) fn h(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        return 0.0;
    }
    -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_maximum() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.5).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reference_value_at_measured_qber() {
        // 50-digit reference: h(0.0083) = 0.0692997226196414...
        let v = binary_entropy(0.0083).unwrap();
        assert!((v - 0.069_299_722_619_641_4).abs() < 1e-14, "{v}");
        assert!((v - 0.0693).abs() < 5e-5);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(binary_entropy(-0.01), Err(Error::Domain(_))));
        assert!(matches!(binary_entropy(1.5), Err(Error::Domain(_))));
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn symmetric() {
        for i in 0..=100 {
            let q = i as f64 / 100.0;
            assert!((h(q) - h(1.0 - q)).abs() < 1e-12);
        }
    }
}
