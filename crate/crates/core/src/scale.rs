//! The scale functions R_k(N) = floor(exp((ln ln N)^(k+1))).

use crate::error::{Error, Result};

/// R_k(N). Returned as f64 since values overflow integers quickly.
pub fn scale_r(k: u32, n: f64) -> Result<f64> {
    if !(n >= 3.0) {
        return Err(Error::Domain(format!("R_k needs N >= 3, got {n}")));
    }
    let ll = n.ln().ln();
    Ok(ll.powi(k as i32 + 1).exp().floor())
}

/// ln R_k(N) before flooring, computed from ln N. Usable for N far beyond f64.
pub fn ln_scale_r(k: u32, ln_n: f64) -> Result<f64> {
    if !(ln_n >= 3f64.ln()) {
        return Err(Error::Domain(format!("R_k needs ln N >= ln 3, got {ln_n}")));
    }
    Ok(ln_n.ln().powi(k as i32 + 1))
}

/// R_5(N) clamped to 1 below the domain, as used for block widths at tiny N.
pub fn r5_clamped(n: f64) -> f64 {
    scale_r(5, n).map(|r| r.max(1.0)).unwrap_or(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(scale_r(0, 1e6).unwrap(), 13.0);
        assert_eq!(scale_r(1, 1e6).unwrap(), 987.0);
        assert_eq!(scale_r(1, 3.0).unwrap(), 1.0);
        assert_eq!(scale_r(2, 12.0).unwrap(), 2.0);
        assert_eq!(scale_r(5, 3.0).unwrap(), 1.0);
        assert!(scale_r(0, 2.0).is_err());
    }

    #[test]
    fn r0_is_floor_log() {
        for n in [3.0, 10.0, 20.0, 1e3, 12345.0, 1e9] {
            assert_eq!(scale_r(0, n).unwrap(), n.ln().floor());
        }
    }

    #[test]
    fn log_domain_agrees() {
        for n in [10.0, 1e4, 1e12] {
            let direct = scale_r(3, n).unwrap();
            let via = ln_scale_r(3, f64::ln(n)).unwrap().exp().floor();
            assert_eq!(direct, via);
        }
    }
}
