//! Training losses: inverse-tone MSE against the adverse captures plus the
//! three unsupervised lightness losses on the exposure-corrected branch
//! (enhancement degree, neighbor contrast, gray-world color constancy).
//!
//! Sums in the source formulas are replaced by means so the loss weights are
//! independent of batch size.

use crate::autodiff::{Scalar, Tape, TensorId};
use crate::error::{AlethError, Result};

/// Epsilon added inside the inverse tone curve.
pub const TONE_EPS: f64 = 1e-3;
/// Default loss weights (degree, contrast, color constancy).
pub const LAMBDA_DEGREE: f64 = 1e-3;
pub const LAMBDA_CONTRAST: f64 = 1e-3;
pub const LAMBDA_COLOR: f64 = 1e-8;
/// Default enhancement degree and contrast scale.
pub const DEGREE_TARGET: f64 = 0.45;
pub const CONTRAST_ETA: f64 = 1.0;
/// In over-exposure training the contrast scale e * eta is pinned to 0.5.
pub const OVEREXPOSURE_CONTRAST_SCALE: f64 = 0.5;

/// Inverse tone curve phi(x) = 1/2 - sin(asin(1 - 2x) / 3), monotone on
/// [0, 1] with phi(0) = 0, phi(1/2) = 1/2, phi(1) = 1.
pub fn inverse_tone(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(AlethError::InvalidArgument(format!(
            "inverse tone input {x} outside [0, 1]"
        )));
    }
    Ok(0.5 - ((1.0 - 2.0 * x).asin() / 3.0).sin())
}

/// phi applied on the tape: clamp(x + eps, 0, 1) through the closed form.
pub fn inverse_tone_on_tape<S: Scalar>(tape: &mut Tape<S>, x: TensorId) -> TensorId {
    let eps = S::from_f64(TONE_EPS);
    let shifted = tape.add_scalar(x, eps);
    let clamped = tape.clamp(shifted, S::zero(), S::one());
    let u = tape.scale(clamped, S::from_f64(-2.0));
    let u = tape.add_scalar(u, S::one());
    let a = tape.asin(u);
    let a3 = tape.scale(a, S::from_f64(1.0 / 3.0));
    let s = tape.sin(a3);
    let neg = tape.neg(s);
    tape.add_scalar(neg, S::from_f64(0.5))
}

/// Mean squared difference of tone-mapped prediction and target.
pub fn it_mse_on_tape<S: Scalar>(tape: &mut Tape<S>, pred: TensorId, target: TensorId) -> TensorId {
    assert_eq!(tape.shape(pred), tape.shape(target), "it_mse shape mismatch");
    let fp = inverse_tone_on_tape(tape, pred);
    let ft = inverse_tone_on_tape(tape, target);
    let diff = tape.sub(fp, ft);
    let sq = tape.mul(diff, diff);
    tape.mean_all(sq)
}

/// Squared distance between the batch-global mean value and the target
/// enhancement degree.
pub fn degree_loss_on_tape<S: Scalar>(tape: &mut Tape<S>, pred_normal: TensorId, e: f64) -> TensorId {
    let mean = tape.mean_all(pred_normal);
    let centered = tape.add_scalar(mean, S::from_f64(-e));
    tape.mul(centered, centered)
}

/// Contrast between horizontally adjacent pixels: predictions are organised
/// as consecutive (left, center, right) triplets; for both neighbors the
/// squared deviation between the predicted difference and `scale` times the
/// adverse ground-truth difference is averaged.
pub fn contrast_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    pred_normal: TensorId,
    gt_adverse: TensorId,
    scale: f64,
) -> TensorId {
    let (rows, _) = tape.shape(pred_normal);
    assert_eq!(tape.shape(pred_normal), tape.shape(gt_adverse), "contrast shape mismatch");
    assert!(rows > 0 && rows % 3 == 0, "contrast loss needs triplet-aligned batches");
    let triplets = rows / 3;
    let lefts: Vec<usize> = (0..triplets).map(|k| 3 * k).collect();
    let centers: Vec<usize> = (0..triplets).map(|k| 3 * k + 1).collect();
    let rights: Vec<usize> = (0..triplets).map(|k| 3 * k + 2).collect();

    let s = S::from_f64(scale);
    let per_side = |tape: &mut Tape<S>, neighbor: &[usize]| -> TensorId {
        let pc = tape.gather_rows(pred_normal, &centers);
        let pn = tape.gather_rows(pred_normal, neighbor);
        let gc = tape.gather_rows(gt_adverse, &centers);
        let gn = tape.gather_rows(gt_adverse, neighbor);
        let dp = tape.sub(pc, pn);
        let dg = tape.sub(gc, gn);
        let dg_scaled = tape.scale(dg, s);
        let diff = tape.sub(dp, dg_scaled);
        let sq = tape.mul(diff, diff);
        tape.mean_all(sq)
    };
    let plus = per_side(tape, &rights);
    let minus = per_side(tape, &lefts);
    let sum = tape.add(plus, minus);
    tape.scale(sum, S::from_f64(0.5))
}

/// Gray-world color constancy: channel means over the batch, then the sum
/// of squared pairwise differences over (R,G), (G,B), (B,R).
pub fn color_constancy_on_tape<S: Scalar>(tape: &mut Tape<S>, pred_normal: TensorId) -> TensorId {
    let (rows, cols) = tape.shape(pred_normal);
    assert_eq!(cols, 3, "color constancy expects RGB rows");
    assert!(rows > 0, "color constancy needs a non-empty batch");
    let means = tape.col_mean(pred_normal);
    // rows of the matrix are input channels, columns the (R-G, G-B, B-R) diffs
    let pair = tape.constant(
        3,
        3,
        [1.0, 0.0, -1.0, -1.0, 1.0, 0.0, 0.0, -1.0, 1.0]
            .iter()
            .map(|&v| S::from_f64(v))
            .collect(),
    );
    let diffs = tape.matmul(means, pair);
    let sq = tape.mul(diffs, diffs);
    tape.sum_all(sq)
}

/// Weighted total and the detached per-part report.
#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub lambda_degree: f64,
    pub lambda_contrast: f64,
    pub lambda_color: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_degree: LAMBDA_DEGREE,
            lambda_contrast: LAMBDA_CONTRAST,
            lambda_color: LAMBDA_COLOR,
        }
    }
}

/// Scalar loss parts in f64; `total` always satisfies the weighted-sum
/// identity so the log can be re-asserted from its columns.
#[derive(Clone, Copy, Debug)]
pub struct LossReport {
    pub it_mse: f64,
    pub degree: f64,
    pub contrast: f64,
    pub color_constancy: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossReport {
    pub fn new(
        it_mse: f64,
        degree: f64,
        contrast: f64,
        color_constancy: f64,
        weights: LossWeights,
    ) -> Result<Self> {
        for (name, v) in [
            ("it_mse", it_mse),
            ("degree", degree),
            ("contrast", contrast),
            ("color_constancy", color_constancy),
        ] {
            if !v.is_finite() {
                return Err(AlethError::NonFinite(format!("loss part '{name}' is {v}")));
            }
        }
        let total = it_mse
            + weights.lambda_degree * degree
            + weights.lambda_contrast * contrast
            + weights.lambda_color * color_constancy;
        Ok(LossReport { it_mse, degree, contrast, color_constancy, total, weights })
    }

    pub fn recompute_total(&self) -> f64 {
        self.it_mse
            + self.weights.lambda_degree * self.degree
            + self.weights.lambda_contrast * self.contrast
            + self.weights.lambda_color * self.color_constancy
    }
}

/// Weighted total on the tape.
pub fn total_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    it_mse: TensorId,
    degree: TensorId,
    contrast: TensorId,
    color_constancy: TensorId,
    weights: LossWeights,
) -> TensorId {
    let d = tape.scale(degree, S::from_f64(weights.lambda_degree));
    let c = tape.scale(contrast, S::from_f64(weights.lambda_contrast));
    let cc = tape.scale(color_constancy, S::from_f64(weights.lambda_color));
    let a = tape.add(it_mse, d);
    let b = tape.add(c, cc);
    tape.add(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn scalar_of<S: Scalar>(tape: &Tape<S>, id: TensorId) -> f64 {
        tape.scalar(id).into_f64()
    }

    #[test]
    fn tone_curve_endpoints_are_exact() {
        assert!(inverse_tone(0.0).unwrap().abs() < 1e-12);
        assert!((inverse_tone(0.5).unwrap() - 0.5).abs() < 1e-12);
        assert!((inverse_tone(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(inverse_tone(-0.1).is_err());
        assert!(inverse_tone(1.1).is_err());
    }

    /// Closed-form check: phi(0.25) = 1/2 - sin(pi / 18).
    #[test]
    fn tone_curve_quarter_point_matches_closed_form() {
        let want = 0.5 - (std::f64::consts::PI / 18.0).sin();
        assert!((inverse_tone(0.25).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.32635).abs() < 1e-5);
    }

    #[test]
    fn tone_curve_is_strictly_increasing_and_symmetric() {
        let mut prev = -1.0;
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let v = inverse_tone(x).unwrap();
            assert!(v > prev, "not increasing at {x}");
            prev = v;
            let mirrored = inverse_tone(1.0 - x).unwrap();
            assert!((v + mirrored - 1.0).abs() < 1e-12, "symmetry broken at {x}");
        }
    }

    #[test]
    fn it_mse_is_zero_on_identical_inputs() {
        let mut tape: Tape<f64> = Tape::new();
        let vals = vec![0.1, 0.5, 0.9, 0.3, 0.2, 0.8];
        let p = tape.param(2, 3, vals.clone());
        let g = tape.constant(2, 3, vals);
        let loss = it_mse_on_tape(&mut tape, p, g);
        assert!(scalar_of(&tape, loss).abs() < 1e-15);
    }

    /// Single pixel, pred 0 vs target 1: (phi(0.001) - phi(1))^2 by the
    /// closed form (1 + eps clamps back to 1).
    #[test]
    fn it_mse_single_pixel_matches_closed_form() {
        let mut tape: Tape<f64> = Tape::new();
        let p = tape.param(1, 1, vec![0.0]);
        let g = tape.constant(1, 1, vec![1.0]);
        let loss = it_mse_on_tape(&mut tape, p, g);
        let want = (inverse_tone(0.001).unwrap() - inverse_tone(1.0).unwrap()).powi(2);
        assert!((scalar_of(&tape, loss) - want).abs() < 1e-12);
    }

    #[test]
    fn it_mse_decreases_toward_the_target() {
        let mut prev = f64::INFINITY;
        for i in 0..10 {
            let pred = i as f64 * 0.05; // 0 .. 0.45 approaching gt 0.5
            let mut tape: Tape<f64> = Tape::new();
            let p = tape.param(1, 1, vec![pred]);
            let g = tape.constant(1, 1, vec![0.5]);
            let loss = it_mse_on_tape(&mut tape, p, g);
            let v = scalar_of(&tape, loss);
            assert!(v < prev, "loss did not decrease at pred {pred}");
            prev = v;
        }
    }

    #[test]
    fn degree_loss_fixed_point_and_offset() {
        let mut tape: Tape<f64> = Tape::new();
        let exact = tape.constant(2, 3, vec![0.4, 0.5, 0.45, 0.45, 0.5, 0.4]);
        let loss = degree_loss_on_tape(&mut tape, exact, 0.45);
        assert!(scalar_of(&tape, loss).abs() < 1e-15);

        let bright = tape.constant(2, 3, vec![0.95; 6]);
        let loss = degree_loss_on_tape(&mut tape, bright, 0.45);
        assert!((scalar_of(&tape, loss) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn degree_loss_matches_direct_oracle() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let vals: Vec<f64> = (0..24).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut tape: Tape<f64> = Tape::new();
            let t = tape.constant(8, 3, vals.clone());
            let loss = degree_loss_on_tape(&mut tape, t, 0.45);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let want = (mean - 0.45).powi(2);
            assert!((scalar_of(&tape, loss) - want).abs() < 1e-12);
        }
    }

    fn contrast_oracle(pred: &[f64], gt: &[f64], scale: f64) -> f64 {
        let triplets = pred.len() / 9;
        let mut acc = 0.0;
        let mut count = 0usize;
        for k in 0..triplets {
            for (c_idx, n_idx) in [(3 * k + 1, 3 * k + 2), (3 * k + 1, 3 * k)] {
                for ch in 0..3 {
                    let dp = pred[c_idx * 3 + ch] - pred[n_idx * 3 + ch];
                    let dg = gt[c_idx * 3 + ch] - gt[n_idx * 3 + ch];
                    acc += (dp - scale * dg).powi(2);
                    count += 1;
                }
            }
        }
        acc / count as f64
    }

    #[test]
    fn contrast_loss_is_zero_when_differences_scale_exactly() {
        let mut rng = StdRng::seed_from_u64(5);
        let scale = 0.45;
        let gt: Vec<f64> = (0..5 * 9).map(|_| rng.gen_range(0.0..1.0)).collect();
        // prediction = scale * gt + per-triplet constant offset: differences
        // scale exactly
        let offsets: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..0.5)).collect();
        let mut pred = vec![0.0; gt.len()];
        for row in 0..15 {
            for j in 0..3 {
                pred[row * 3 + j] = scale * gt[row * 3 + j] + offsets[row / 3];
            }
        }
        let mut tape: Tape<f64> = Tape::new();
        let p = tape.constant(15, 3, pred);
        let g = tape.constant(15, 3, gt);
        let loss = contrast_loss_on_tape(&mut tape, p, g, scale);
        assert!(scalar_of(&tape, loss).abs() < 1e-20);
    }

    #[test]
    fn contrast_loss_is_zero_on_constant_images() {
        let mut tape: Tape<f64> = Tape::new();
        let p = tape.constant(6, 3, vec![0.7; 18]);
        let g = tape.constant(6, 3, vec![0.2; 18]);
        let loss = contrast_loss_on_tape(&mut tape, p, g, 0.45);
        assert_eq!(scalar_of(&tape, loss), 0.0);
    }

    #[test]
    fn contrast_loss_matches_direct_oracle() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let pred: Vec<f64> = (0..4 * 9).map(|_| rng.gen_range(0.0..1.0)).collect();
            let gt: Vec<f64> = (0..4 * 9).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut tape: Tape<f64> = Tape::new();
            let p = tape.constant(12, 3, pred.clone());
            let g = tape.constant(12, 3, gt.clone());
            let loss = contrast_loss_on_tape(&mut tape, p, g, 0.5);
            let want = contrast_oracle(&pred, &gt, 0.5);
            assert!((scalar_of(&tape, loss) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn misaligned_batch_is_rejected() {
        let mut tape: Tape<f64> = Tape::new();
        let p = tape.constant(4, 3, vec![0.5; 12]);
        let g = tape.constant(4, 3, vec![0.5; 12]);
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            contrast_loss_on_tape(&mut tape, p, g, 0.45)
        }));
        assert!(result.is_err());
    }

    #[test]
    fn color_constancy_is_zero_on_gray_batches() {
        let mut rng = StdRng::seed_from_u64(17);
        let grays: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
        let vals: Vec<f64> = grays.iter().flat_map(|&v| [v, v, v]).collect();
        let mut tape: Tape<f64> = Tape::new();
        let t = tape.constant(8, 3, vals);
        let loss = color_constancy_on_tape(&mut tape, t);
        assert!(scalar_of(&tape, loss).abs() < 1e-15);
    }

    #[test]
    fn pure_red_batch_scores_two() {
        let mut tape: Tape<f64> = Tape::new();
        let vals: Vec<f64> = (0..4).flat_map(|_| [1.0, 0.0, 0.0]).collect();
        let t = tape.constant(4, 3, vals);
        let loss = color_constancy_on_tape(&mut tape, t);
        assert!((scalar_of(&tape, loss) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn color_constancy_matches_direct_oracle() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..20 {
            let vals: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut tape: Tape<f64> = Tape::new();
            let t = tape.constant(10, 3, vals.clone());
            let loss = color_constancy_on_tape(&mut tape, t);
            let mut means = [0.0; 3];
            for row in vals.chunks_exact(3) {
                for c in 0..3 {
                    means[c] += row[c] / 10.0;
                }
            }
            let want = (means[0] - means[1]).powi(2)
                + (means[1] - means[2]).powi(2)
                + (means[2] - means[0]).powi(2);
            assert!((scalar_of(&tape, loss) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn total_loss_weights_and_identity() {
        let w = LossWeights::default();
        let r = LossReport::new(1.0, 0.0, 0.0, 0.0, w).unwrap();
        assert_eq!(r.total, 1.0);

        let r = LossReport::new(0.0, 1.0, 1.0, 1.0, w).unwrap();
        assert!((r.total - (1e-3 + 1e-3 + 1e-8)).abs() < 1e-18);

        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..20 {
            let r = LossReport::new(
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0),
                w,
            )
            .unwrap();
            assert!((r.total - r.recompute_total()).abs() < 1e-12);
        }
    }

    #[test]
    fn nan_part_names_the_part() {
        let err = LossReport::new(0.1, f64::NAN, 0.0, 0.0, LossWeights::default()).unwrap_err();
        assert!(err.to_string().contains("degree"), "{err}");
    }

    #[test]
    fn tape_total_matches_report() {
        let mut tape: Tape<f64> = Tape::new();
        let parts: Vec<TensorId> = [0.42, 0.01, 0.33, 0.07]
            .iter()
            .map(|&v| tape.constant(1, 1, vec![v]))
            .collect();
        let w = LossWeights::default();
        let total = total_loss_on_tape(&mut tape, parts[0], parts[1], parts[2], parts[3], w);
        let report = LossReport::new(0.42, 0.01, 0.33, 0.07, w).unwrap();
        assert!((scalar_of(&tape, total) - report.total).abs() < 1e-15);
    }

    /// Gradients of every loss with respect to predictions match central
    /// finite differences at relative tolerance 1e-4 (double precision).
    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(41);
        let rows = 6usize; // two triplets
        let gt: Vec<f64> = (0..rows * 3).map(|_| rng.gen_range(0.05..0.95)).collect();
        let at: Vec<f64> = (0..rows * 3).map(|_| rng.gen_range(0.05..0.95)).collect();

        type LossBuild = fn(&mut Tape<f64>, TensorId, TensorId) -> TensorId;
        let cases: Vec<(&str, LossBuild)> = vec![
            ("it_mse", |t, p, g| it_mse_on_tape(t, p, g)),
            ("degree", |t, p, _| degree_loss_on_tape(t, p, 0.45)),
            ("contrast", |t, p, g| contrast_loss_on_tape(t, p, g, 0.45)),
            ("color", |t, p, _| color_constancy_on_tape(t, p)),
            ("total", |t, p, g| {
                let a = it_mse_on_tape(t, p, g);
                let b = degree_loss_on_tape(t, p, 0.45);
                let c = contrast_loss_on_tape(t, p, g, 0.45);
                let d = color_constancy_on_tape(t, p);
                total_loss_on_tape(t, a, b, c, d, LossWeights::default())
            }),
        ];

        for (name, build) in cases {
            let eval = |vals: &[f64], grad: bool| -> (f64, Vec<f64>) {
                let mut tape: Tape<f64> = Tape::new();
                let p = tape.param(rows, 3, vals.to_vec());
                let g = tape.constant(rows, 3, gt.clone());
                let loss = build(&mut tape, p, g);
                if grad {
                    tape.backward(loss).unwrap();
                    (tape.scalar(loss), tape.grad_or_zeros(p))
                } else {
                    (tape.scalar(loss), Vec::new())
                }
            };
            let (_, analytic) = eval(&at, true);
            let h = 1e-4;
            for j in 0..at.len() {
                let mut up = at.clone();
                up[j] += h;
                let mut down = at.clone();
                down[j] -= h;
                let numeric = (eval(&up, false).0 - eval(&down, false).0) / (2.0 * h);
                let denom = analytic[j].abs().max(numeric.abs()).max(1e-3);
                assert!(
                    (analytic[j] - numeric).abs() / denom < 1e-4,
                    "{name} grad[{j}]: {} vs {}",
                    analytic[j],
                    numeric
                );
            }
        }
    }

    #[test]
    fn losses_are_non_negative() {
        let mut rng = StdRng::seed_from_u64(53);
        for _ in 0..50 {
            let vals: Vec<f64> = (0..18).map(|_| rng.gen_range(0.0..1.0)).collect();
            let gt: Vec<f64> = (0..18).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut tape: Tape<f64> = Tape::new();
            let p = tape.constant(6, 3, vals);
            let g = tape.constant(6, 3, gt);
            let a = it_mse_on_tape(&mut tape, p, g);
            let b = degree_loss_on_tape(&mut tape, p, 0.45);
            let c = contrast_loss_on_tape(&mut tape, p, g, 0.45);
            let d = color_constancy_on_tape(&mut tape, p);
            for id in [a, b, c, d] {
                assert!(scalar_of(&tape, id) >= 0.0);
            }
        }
    }
}
