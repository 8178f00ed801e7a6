use serde::{Deserialize, Serialize};

use super::SgpError;

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelHyper {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelHyper {
    pub fn validate(&self) -> Result<(), SgpError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.signal_variance) && ok(self.noise_variance) && self.lengthscales.iter().all(|l| ok(*l)) {
            Ok(())
        } else {
            Err(SgpError::InvalidHyper(format!("{self:?}")))
        }
    }
}

/// Matérn-5/2 correlation at scaled distance `r`, i.e. the kernel divided
/// by the signal variance.
#[inline]
pub fn matern52_corr(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// `-d corr / d(r²)`, finite at `r = 0`.
#[inline]
pub(crate) fn matern52_neg_dcorr_dr2(r: f64) -> f64 {
    let s = SQRT5 * r;
    5.0 / 6.0 * (1.0 + s) * (-s).exp()
}

/// Matérn-5/2 covariance between two points with ARD lengthscales.
pub fn matern52(x: &[f64], x_prime: &[f64], hyper: &KernelHyper) -> f64 {
    debug_assert_eq!(x.len(), x_prime.len());
    let r2: f64 = x
        .iter()
        .zip(x_prime)
        .zip(&hyper.lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    hyper.signal_variance * matern52_corr(r2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> KernelHyper {
        KernelHyper {
            signal_variance: 1.0,
            lengthscales: vec![1.0],
            noise_variance: 1e-2,
        }
    }

    #[test]
    fn reference_values() {
        let h = unit();
        assert_eq!(matern52(&[0.3], &[0.3], &h), 1.0);
        let expected = (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp();
        assert!((matern52(&[0.0], &[1.0], &h) - expected).abs() < 1e-15);
        assert_eq!(matern52(&[0.0], &[1.0], &h), matern52(&[1.0], &[0.0], &h));
        let h2 = KernelHyper {
            signal_variance: 2.5,
            lengthscales: vec![2.0, 0.5],
            noise_variance: 1e-3,
        };
        let r = ((1.0f64 / 2.0).powi(2) + (0.25f64 / 0.5).powi(2)).sqrt();
        let direct = 2.5 * (1.0 + 5f64.sqrt() * r + 5.0 * r * r / 3.0) * (-(5f64.sqrt()) * r).exp();
        assert!((matern52(&[1.0, 0.25], &[0.0, 0.0], &h2) - direct).abs() < 1e-14);
    }

    #[test]
    fn derivative_matches_difference() {
        for r in [0.0f64, 0.1, 0.7, 2.0] {
            let h = 1e-6;
            let r2 = r * r;
            let fd = -(matern52_corr((r2 + h).sqrt()) - matern52_corr((r2 - h).abs().sqrt())) / (2.0 * h);
            if r > 0.01 {
                assert!((fd - matern52_neg_dcorr_dr2(r)).abs() < 1e-6, "{r}");
            }
        }
        assert_eq!(matern52_neg_dcorr_dr2(0.0), 5.0 / 6.0);
    }

    #[test]
    fn validation() {
        assert!(unit().validate().is_ok());
        let mut h = unit();
        h.lengthscales[0] = 0.0;
        assert!(h.validate().is_err());
    }
}
