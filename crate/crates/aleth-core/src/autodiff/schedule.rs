//! Piecewise-constant cosine learning-rate decay.

use crate::error::{AlethError, Result};

/// Reference iteration count at which the decay boundary is 2500 iterations.
const REFERENCE_TOTAL: f64 = 62_500.0;
const REFERENCE_BOUNDARY: f64 = 2_500.0;

/// Number of iterations between learning-rate updates, scaled proportionally
/// for runs shorter or longer than the reference schedule.
pub fn cosine_boundary(total_iters: u64) -> u64 {
    ((total_iters as f64 * REFERENCE_BOUNDARY / REFERENCE_TOTAL).round() as u64).max(1)
}

/// Single cosine annealed over the full run, updated at boundary multiples;
/// returns exactly `lr0` at iter 0 and exactly 0 at `total_iters` (no floor).
pub fn cosine_lr(iter: u64, total_iters: u64, lr0: f64) -> Result<f64> {
    if total_iters == 0 {
        return Err(AlethError::InvalidArgument("total_iters must be > 0".into()));
    }
    if iter > total_iters {
        return Err(AlethError::InvalidArgument(format!(
            "iter {iter} exceeds total_iters {total_iters}"
        )));
    }
    if iter == total_iters {
        return Ok(0.0);
    }
    let boundary = cosine_boundary(total_iters);
    let held = (iter / boundary) * boundary;
    Ok(lr0 * 0.5 * (1.0 + (std::f64::consts::PI * held as f64 / total_iters as f64).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_initial_rate() {
        assert_eq!(cosine_lr(0, 62_500, 5e-4).unwrap(), 5e-4);
    }

    #[test]
    fn ends_at_zero() {
        assert_eq!(cosine_lr(62_500, 62_500, 5e-4).unwrap(), 0.0);
        assert_eq!(cosine_lr(5_000, 5_000, 5e-4).unwrap(), 0.0);
    }

    #[test]
    fn midpoint_on_a_boundary_halves_the_rate() {
        // total = 30 gives boundary 1, so the midpoint is held exactly
        let lr = cosine_lr(15, 30, 5e-4).unwrap();
        assert!((lr - 2.5e-4).abs() < 1e-12, "{lr}");
        // at the reference scale the midpoint falls inside a held interval:
        // the rate is the boundary value below it
        let lr = cosine_lr(31_250, 62_500, 5e-4).unwrap();
        let held = 5e-4 * 0.5 * (1.0 + (std::f64::consts::PI * 30_000.0 / 62_500.0).cos());
        assert!((lr - held).abs() < 1e-15);
    }

    #[test]
    fn boundary_scales_with_total() {
        assert_eq!(cosine_boundary(62_500), 2_500);
        assert_eq!(cosine_boundary(5_000), 200);
        assert_eq!(cosine_boundary(10), 1);
    }

    #[test]
    fn piecewise_constant_within_a_boundary() {
        let b = cosine_boundary(62_500);
        let a = cosine_lr(b, 62_500, 5e-4).unwrap();
        let c = cosine_lr(2 * b - 1, 62_500, 5e-4).unwrap();
        assert_eq!(a, c);
        assert!(cosine_lr(2 * b, 62_500, 5e-4).unwrap() < a);
    }

    #[test]
    fn non_increasing_over_the_whole_run() {
        let total = 5_000;
        let mut prev = f64::INFINITY;
        for iter in 0..=total {
            let lr = cosine_lr(iter, total, 5e-4).unwrap();
            assert!(lr <= prev + 1e-18, "lr increased at iter {iter}");
            prev = lr;
        }
    }

    #[test]
    fn zero_total_is_an_error() {
        assert!(cosine_lr(0, 0, 5e-4).is_err());
        assert!(cosine_lr(10, 5, 5e-4).is_err());
    }
}
