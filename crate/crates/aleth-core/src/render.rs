//! Discrete volume rendering with and without concealing fields.
//!
//! Along a ray with samples i = 1..N, density sigma_i and spacing delta:
//! transmittance T_i = exp(-sum_{j<i} sigma_j delta), alpha_i =
//! 1 - exp(-sigma_i delta), weight w_i = T_i alpha_i and the pixel is
//! sum_i w_i c_i. The concealed variant multiplies T_i by the prefix
//! product of the local and global concealing factors, which darkens
//! everything behind concealing mass. Training renders the same field
//! twice sharing one evaluation of sigma and c per sample: the adverse
//! branch matches the captured exposure, the normal branch is the
//! exposure-corrected result.

use crate::autodiff::{Scalar, Tape, TensorId};
use crate::error::{AlethError, Result};

/// Floor for the weight-sum when normalising expected depth.
pub const DEPTH_WEIGHT_FLOOR: f64 = 1e-8;
/// Floor applied to concealing factors before taking logs on the tape.
const CONCEAL_FLOOR: f64 = 1e-30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransmittanceChoice {
    Plain,
    Concealed,
}

/// Accumulated transmittance per sample: T_1 = 1 (empty sum), then
/// T_i = exp(-sum_{j<i} sigma_j delta).
pub fn accumulated_transmittance<S: Scalar>(sigmas: &[S], delta: S) -> Result<Vec<S>> {
    if delta <= S::zero() {
        return Err(AlethError::InvalidArgument("delta must be positive".into()));
    }
    let mut out = Vec::with_capacity(sigmas.len());
    let mut acc = S::zero();
    for &s in sigmas {
        if s < S::zero() {
            return Err(AlethError::InvalidArgument(format!("negative density {s}")));
        }
        out.push((-acc).exp());
        acc = acc + s * delta;
    }
    Ok(out)
}

/// Concealed transmittance: T_i times the prefix product of
/// omega_j * theta_j over j < i. Factors must lie in (0, 1].
pub fn concealed_transmittance<S: Scalar>(
    sigmas: &[S],
    omegas: &[S],
    thetas: &[S],
    delta: S,
) -> Result<Vec<S>> {
    if omegas.len() != sigmas.len() || thetas.len() != sigmas.len() {
        return Err(AlethError::ShapeMismatch(format!(
            "{} densities, {} local and {} global concealing factors",
            sigmas.len(),
            omegas.len(),
            thetas.len()
        )));
    }
    for (&o, &t) in omegas.iter().zip(thetas.iter()) {
        if !(o > S::zero() && o <= S::one()) || !(t > S::zero() && t <= S::one()) {
            return Err(AlethError::InvalidArgument(format!(
                "concealing factors must lie in (0, 1], got omega {o}, theta {t}"
            )));
        }
    }
    let plain = accumulated_transmittance(sigmas, delta)?;
    let mut out = Vec::with_capacity(sigmas.len());
    let mut prefix = S::one();
    for i in 0..sigmas.len() {
        out.push(plain[i] * prefix);
        prefix = prefix * omegas[i] * thetas[i];
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RayRender<S: Scalar> {
    pub rgb: [S; 3],
    pub depth: S,
    pub weights: Vec<S>,
    pub transmittance: Vec<S>,
    pub transmittance_conceal: Option<Vec<S>>,
}

/// Render one ray. `conceal` selects which transmittance multiplies the
/// alpha-weighted colors; weights and depth always use the plain one.
pub fn volume_render<S: Scalar>(
    sigmas: &[S],
    colors: &[[S; 3]],
    tvals: &[S],
    delta: S,
    choice: TransmittanceChoice,
    conceal: Option<(&[S], &[S])>,
) -> Result<RayRender<S>> {
    if colors.len() != sigmas.len() || tvals.len() != sigmas.len() {
        return Err(AlethError::ShapeMismatch(format!(
            "{} densities, {} colors, {} depths",
            sigmas.len(),
            colors.len(),
            tvals.len()
        )));
    }
    let trans = accumulated_transmittance(sigmas, delta)?;
    let trans_conceal = match (choice, conceal) {
        (TransmittanceChoice::Plain, _) => None,
        (TransmittanceChoice::Concealed, Some((omegas, thetas))) => {
            Some(concealed_transmittance(sigmas, omegas, thetas, delta)?)
        }
        (TransmittanceChoice::Concealed, None) => {
            return Err(AlethError::InvalidArgument(
                "concealed rendering requires concealing factors".into(),
            ))
        }
    };
    let used: &[S] = trans_conceal.as_deref().unwrap_or(&trans);

    let mut rgb = [S::zero(); 3];
    let mut weights = Vec::with_capacity(sigmas.len());
    let mut wsum = S::zero();
    let mut wt = S::zero();
    for i in 0..sigmas.len() {
        let alpha = S::one() - (-sigmas[i] * delta).exp();
        for c in 0..3 {
            rgb[c] = rgb[c] + used[i] * alpha * colors[i][c];
        }
        let w = trans[i] * alpha;
        weights.push(w);
        wsum = wsum + w;
        wt = wt + w * tvals[i];
    }
    let depth = wt / wsum.max(S::from_f64(DEPTH_WEIGHT_FLOOR));
    Ok(RayRender { rgb, depth, weights, transmittance: trans, transmittance_conceal: trans_conceal })
}

// ---------------------------------------------------------------------------
// Batched differentiable rendering on the tape
// ---------------------------------------------------------------------------

/// Which renders a batch produces. In normal mode both branches alias the
/// plain render; in low light the adverse branch is concealed; in
/// over-exposure the normal branch is concealed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderScheme {
    Normal,
    Lowlight,
    Overexposure,
}

/// Forcing switch for the concealing factors at render time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConcealOverride {
    #[default]
    None,
    /// Behave as if omega = theta = 1 everywhere (no concealment).
    ForceOff,
    /// Conceal both branches.
    ForceOn,
}

/// Tape ids of the per-batch render products. All per-sample tensors are
/// [rays * samples, 1] with samples contiguous per ray; per-ray tensors are
/// [rays, k].
pub struct BatchRender {
    pub rgb_adverse: TensorId,
    pub rgb_normal: TensorId,
    pub depth: TensorId,
    pub weights: TensorId,
    pub transmittance: TensorId,
    pub transmittance_conceal: Option<TensorId>,
}

/// Build the render graph for a batch of rays over already-evaluated field
/// outputs. `sigma` [p, 1], `rgb` [p, 3] with p = rays * samples; `omega` /
/// `theta` likewise when the scheme needs them; `tvals` and `deltas` are
/// per-sample constants.
#[allow(clippy::too_many_arguments)]
pub fn render_batch_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    sigma: TensorId,
    rgb: TensorId,
    omega: Option<TensorId>,
    theta: Option<TensorId>,
    tvals: &[S],
    deltas: &[S],
    samples_per_ray: usize,
    scheme: RenderScheme,
    conceal_override: ConcealOverride,
) -> BatchRender {
    let (p, one_col) = tape.shape(sigma);
    assert_eq!(one_col, 1, "sigma must be a column");
    assert_eq!(tape.shape(rgb), (p, 3), "rgb must be [p, 3]");
    assert_eq!(tvals.len(), p);
    assert_eq!(deltas.len(), p);
    assert!(samples_per_ray > 0 && p % samples_per_ray == 0);
    let rays = p / samples_per_ray;

    let delta_c = tape.constant(p, 1, deltas.to_vec());
    let tau = tape.mul(sigma, delta_c);
    let cum = tape.segment_cumsum_exclusive(tau, samples_per_ray);
    let neg_cum = tape.neg(cum);
    let trans = tape.exp(neg_cum);
    let neg_tau = tape.neg(tau);
    let exp_neg_tau = tape.exp(neg_tau);
    let neg_exp = tape.neg(exp_neg_tau);
    let alpha = tape.add_scalar(neg_exp, S::one());

    // plain weights drive depth and importance sampling
    let w_plain = tape.mul(trans, alpha);

    let concealed_wanted = match (scheme, conceal_override) {
        (_, ConcealOverride::ForceOff) => false,
        (RenderScheme::Normal, ConcealOverride::None) => false,
        _ => true,
    };
    let trans_conceal = if concealed_wanted {
        let omega = omega.expect("concealed rendering requires omega");
        let theta = theta.expect("concealed rendering requires theta");
        let floor = S::from_f64(CONCEAL_FLOOR);
        let omega_safe = tape.clamp(omega, floor, S::one());
        let theta_safe = tape.clamp(theta, floor, S::one());
        let ln_o = tape.ln(omega_safe);
        let ln_t = tape.ln(theta_safe);
        let ln_sum = tape.add(ln_o, ln_t);
        let cum_ln = tape.segment_cumsum_exclusive(ln_sum, samples_per_ray);
        let prefix = tape.exp(cum_ln);
        Some(tape.mul(trans, prefix))
    } else {
        None
    };

    let render_with = |tape: &mut Tape<S>, t_used: TensorId| -> TensorId {
        let w = tape.mul(t_used, alpha);
        let weighted = tape.mul_col(rgb, w);
        tape.segment_sum(weighted, samples_per_ray)
    };

    let rgb_plain = render_with(tape, trans);
    let (rgb_adverse, rgb_normal) = match (scheme, trans_conceal) {
        (_, None) => (rgb_plain, rgb_plain),
        (RenderScheme::Lowlight, Some(tc)) => (render_with(tape, tc), rgb_plain),
        (RenderScheme::Overexposure, Some(tc)) => (rgb_plain, render_with(tape, tc)),
        // forced concealment in normal mode conceals both branches
        (RenderScheme::Normal, Some(tc)) => {
            let c = render_with(tape, tc);
            (c, c)
        }
    };

    let tvals_c = tape.constant(p, 1, tvals.to_vec());
    let wt = tape.mul(w_plain, tvals_c);
    let wt_sum = tape.segment_sum(wt, samples_per_ray);
    let w_sum = tape.segment_sum(w_plain, samples_per_ray);
    let w_floor = tape.clamp(w_sum, S::from_f64(DEPTH_WEIGHT_FLOOR), S::infinity());
    let depth = tape.div(wt_sum, w_floor);
    let _ = rays;

    BatchRender {
        rgb_adverse,
        rgb_normal,
        depth,
        weights: w_plain,
        transmittance: trans,
        transmittance_conceal: trans_conceal,
    }
}
