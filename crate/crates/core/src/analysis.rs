//! Communication-complexity helpers.

use crate::compressor::{CompressorError, CompressorSpec};
use crate::problem::ProblemConstants;

/// RAND-K with `k = round(d/(n+1))`, clamped to `[1, d]`.
///
/// For `d` divisible by `n + 1` this gives `α = d/k − 1 = n` and
/// `δ = 1/(n+1) ≤ 1/α`, where the per-device cost scales like `1 + ℓ/(μn)`.
pub fn balanced_rand_k(d: usize, n: usize) -> Result<CompressorSpec, CompressorError> {
    let k = ((d as f64) / (n as f64 + 1.0)).round() as usize;
    CompressorSpec::rand_k(k.clamp(1, d.max(1)), d)
}

/// Per-epoch, per-device full-gradient equivalents of the derived
/// hyperparameters, `1 + δ·ℓ/μ·(1+α/n)`, without the constant factor 30.
pub fn epoch_cost_scale(constants: &ProblemConstants, spec: &CompressorSpec, n: usize) -> f64 {
    1.0 + spec.delta() * constants.ell / constants.mu * (1.0 + spec.alpha() / n as f64)
}

/// Epochs needed for a `2^{-S}` reduction of `‖F‖²` to reach `target_ratio`.
pub fn epochs_for_ratio(target_ratio: f64) -> usize {
    if target_ratio >= 1.0 {
        return 0;
    }
    (-target_ratio.log2()).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_choice() {
        let s = balanced_rand_k(110, 10).unwrap();
        assert_eq!(s.alpha(), 10.0);
        assert!(s.delta() <= 1.0 / s.alpha());
        let s = balanced_rand_k(100, 10).unwrap();
        assert_eq!(s.kind(), crate::CompressorKind::RandK { k: 9 });
        assert_eq!(
            balanced_rand_k(3, 10).unwrap().kind(),
            crate::CompressorKind::RandK { k: 1 }
        );
    }

    #[test]
    fn cost_scale_with_balanced_compressor() {
        let c = ProblemConstants {
            ell: 100.0,
            mu: 1.0,
            ell_coupling: None,
        };
        let s = balanced_rand_k(110, 10).unwrap();
        // δ(1+α/n) = (1/11)·2, so the scale is 1 + 200/11.
        assert!((epoch_cost_scale(&c, &s, 10) - (1.0 + 200.0 / 11.0)).abs() < 1e-12);
    }

    #[test]
    fn epoch_counts() {
        assert_eq!(epochs_for_ratio(1.0), 0);
        assert_eq!(epochs_for_ratio(0.5), 1);
        assert_eq!(epochs_for_ratio(1e-6), 20);
    }
}
