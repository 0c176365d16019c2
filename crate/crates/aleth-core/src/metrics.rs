//! Quantitative evaluation: PSNR, single-scale SSIM, and the
//! concealing-vs-density correlation analysis over a scene grid.

use crate::autodiff::Scalar;
use crate::error::{AlethError, Result};
use crate::fields::{FieldModel, NetKind};
use crate::scene::image::ImageBuffer;

/// 10 log10(1 / MSE) for values in [0, 1]; identical images report +inf.
pub fn psnr(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(AlethError::ShapeMismatch(format!(
            "psnr inputs {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let mut mse = 0.0f64;
    for (a, b) in pred.data.iter().zip(gt.data.iter()) {
        let d = *a as f64 - *b as f64;
        mse += d * d;
    }
    mse /= pred.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as isize;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = (i as isize - half) as f64;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

fn to_gray(img: &ImageBuffer) -> Vec<f64> {
    img.data
        .chunks_exact(3)
        .map(|px| (px[0] as f64 + px[1] as f64 + px[2] as f64) / 3.0)
        .collect()
}

/// Separable Gaussian filter, valid region only: output is
/// (h - w + 1) x (w - win + 1).
fn gaussian_filter_valid(src: &[f64], width: usize, height: usize) -> (Vec<f64>, usize, usize) {
    let k = gaussian_kernel();
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    // horizontal pass
    let mut tmp = vec![0.0; ow * height];
    for y in 0..height {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * src[y * width + x + i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // vertical pass
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, ow, oh)
}

/// Standard single-scale SSIM on the channel-mean grayscale images:
/// 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.
pub fn ssim(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(AlethError::ShapeMismatch(format!(
            "ssim inputs {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    if pred.width < SSIM_WINDOW || pred.height < SSIM_WINDOW {
        return Err(AlethError::InvalidArgument(format!(
            "image {}x{} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window",
            pred.width, pred.height
        )));
    }
    let (w, h) = (pred.width, pred.height);
    let x = to_gray(pred);
    let y = to_gray(gt);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y.iter()).map(|(a, b)| a * b).collect();

    let (mu_x, ow, oh) = gaussian_filter_valid(&x, w, h);
    let (mu_y, _, _) = gaussian_filter_valid(&y, w, h);
    let (m_xx, _, _) = gaussian_filter_valid(&xx, w, h);
    let (m_yy, _, _) = gaussian_filter_valid(&yy, w, h);
    let (m_xy, _, _) = gaussian_filter_valid(&xy, w, h);

    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mut acc = 0.0;
    for i in 0..ow * oh {
        let var_x = m_xx[i] - mu_x[i] * mu_x[i];
        let var_y = m_yy[i] - mu_y[i] * mu_y[i];
        let cov = m_xy[i] - mu_x[i] * mu_y[i];
        let s = ((2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * cov + c2))
            / ((mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (var_x + var_y + c2));
        acc += s;
    }
    Ok(acc / (ow * oh) as f64)
}

/// Pearson correlation coefficient; constant inputs have no defined value.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(AlethError::ShapeMismatch(format!(
            "pearson inputs of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(AlethError::InvalidArgument(
            "undefined correlation: an input map is constant".into(),
        ));
    }
    Ok(num / (va.sqrt() * vb.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plane {
    Xz,
    Yz,
}

impl std::fmt::Display for Plane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Plane::Xz => write!(f, "xz"),
            Plane::Yz => write!(f, "yz"),
        }
    }
}

/// Projected density/concealing maps for one plane plus their Pearson
/// coefficient. Maps are row-major [res, res] indexed (z, x) or (z, y).
#[derive(Clone, Debug)]
pub struct CorrelationReport {
    pub plane: Plane,
    pub res: usize,
    pub density_map: Vec<f64>,
    pub conceal_map: Vec<f64>,
    pub pearson: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct GridSpec {
    /// The analysis cube spans [-half_extent, half_extent] on every axis.
    pub half_extent: f64,
    pub res: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { half_extent: 2.0, res: 64 }
    }
}

/// Sample density and the combined concealing factor omega * theta on a
/// regular grid, project both by mean along y (xz plane) and x (yz plane),
/// and report the Pearson coefficient per plane.
///
/// Concealing is evaluated along +z columns: each (x, y) column is treated
/// as a ray with the grid's z-order as the sample order; the global factor
/// index is the z index capped at the configured maximum.
pub fn concealing_density_correlation<S: Scalar>(
    model: &FieldModel<S>,
    grid: GridSpec,
) -> Result<[CorrelationReport; 2]> {
    let g = grid.res;
    if g < 2 {
        return Err(AlethError::InvalidArgument("grid resolution must be at least 2".into()));
    }
    model.check_finite()?;
    let cell = |i: usize| -> f64 {
        // cell centers
        (-grid.half_extent) + (i as f64 + 0.5) * (2.0 * grid.half_extent / g as f64)
    };

    let theta_len = model.cfg.theta_len();
    let mut density = vec![0.0f64; g * g * g]; // indexed [z][y][x]
    let mut conceal = vec![0.0f64; g * g * g];

    // evaluate one (x, y) column at a time so the concealing convolution
    // sees the z-ordered sample sequence
    for yi in 0..g {
        for xi in 0..g {
            let pts: Vec<[f64; 3]> = (0..g).map(|zi| [cell(xi), cell(yi), cell(zi)]).collect();
            let (sigma, hidden) = model.eval_density(NetKind::Fine, &pts)?;
            let omega = eval_omega_column(model, &hidden, g)?;
            for zi in 0..g {
                let theta = model.eval_global_concealing(zi.min(theta_len - 1))?;
                let idx = zi * g * g + yi * g + xi;
                density[idx] = sigma[zi].into_f64();
                conceal[idx] = omega[zi] * theta.into_f64();
            }
        }
    }

    let project = |vals: &[f64], plane: Plane| -> Vec<f64> {
        let mut map = vec![0.0f64; g * g];
        for zi in 0..g {
            for yi in 0..g {
                for xi in 0..g {
                    let v = vals[zi * g * g + yi * g + xi];
                    match plane {
                        Plane::Xz => map[zi * g + xi] += v / g as f64,
                        Plane::Yz => map[zi * g + yi] += v / g as f64,
                    }
                }
            }
        }
        map
    };

    let mut out = Vec::with_capacity(2);
    for plane in [Plane::Xz, Plane::Yz] {
        let density_map = project(&density, plane);
        let conceal_map = project(&conceal, plane);
        let r = pearson(&conceal_map, &density_map)?;
        out.push(CorrelationReport { plane, res: g, density_map, conceal_map, pearson: r });
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap()])
}

fn eval_omega_column<S: Scalar>(
    model: &FieldModel<S>,
    hidden: &[S],
    samples: usize,
) -> Result<Vec<f64>> {
    let omega = model.eval_local_concealing(NetKind::Fine, hidden)?;
    debug_assert_eq!(omega.len(), samples);
    Ok(omega.iter().map(|v| v.into_f64()).collect())
}

/// Write a projected map as a grayscale PNG, normalised to its own range.
pub fn save_heatmap(path: &std::path::Path, map: &[f64], res: usize) -> Result<()> {
    let lo = map.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = ImageBuffer::new(res, res);
    for (i, &v) in map.iter().enumerate() {
        let t = ((v - lo) / span) as f32;
        let (x, y) = (i % res, i / res);
        img.set_pixel(x, y, [t, t, t]);
    }
    img.save_png(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldConfig;
    use crate::scene::manifest::Lighting;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn img_from(vals: Vec<f32>, w: usize, h: usize) -> ImageBuffer {
        ImageBuffer { width: w, height: h, data: vals }
    }

    fn random_img(rng: &mut StdRng, w: usize, h: usize) -> ImageBuffer {
        img_from((0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect(), w, h)
    }

    #[test]
    fn identical_images_have_infinite_psnr() {
        let mut rng = StdRng::seed_from_u64(1);
        let a = random_img(&mut rng, 8, 6);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn uniform_offset_gives_twenty_db() {
        let a = img_from(vec![0.5; 4 * 4 * 3], 4, 4);
        let b = img_from(vec![0.6; 4 * 4 * 3], 4, 4);
        let v = psnr(&a, &b).unwrap();
        // stored pixels are f32, so the 0.1 offset carries quantisation
        assert!((v - 20.0).abs() < 1e-5, "{v}");
    }

    #[test]
    fn psnr_matches_direct_mse_oracle() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random_img(&mut rng, 7, 5);
            let b = random_img(&mut rng, 7, 5);
            let got = psnr(&a, &b).unwrap();
            let mse: f64 = a
                .data
                .iter()
                .zip(b.data.iter())
                .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
                .sum::<f64>()
                / (7.0 * 5.0 * 3.0);
            let want = 10.0 * (1.0 / mse).log10();
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn psnr_rejects_size_mismatch() {
        let a = img_from(vec![0.0; 12], 2, 2);
        let b = img_from(vec![0.0; 27], 3, 3);
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let mut rng = StdRng::seed_from_u64(3);
        let a = random_img(&mut rng, 16, 14);
        let v = ssim(&a, &a).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn inverted_high_contrast_image_scores_negative() {
        // checkerboard and its inverse: structure anti-correlates
        let (w, h) = (24usize, 24usize);
        let mut a = ImageBuffer::new(w, h);
        let mut b = ImageBuffer::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let v = if (x / 2 + y / 2) % 2 == 0 { 0.9f32 } else { 0.1 };
                a.set_pixel(x, y, [v, v, v]);
                b.set_pixel(x, y, [1.0 - v; 3]);
            }
        }
        let v = ssim(&a, &b).unwrap();
        assert!(v < 0.0, "{v}");
    }

    #[test]
    fn ssim_rejects_images_smaller_than_the_window() {
        let a = img_from(vec![0.5; 10 * 10 * 3], 10, 10);
        assert!(ssim(&a, &a).is_err());
    }

    /// Independent direct-windowed implementation: per-pixel loops over the
    /// full 11x11 neighbourhood with explicit weighted sums.
    fn ssim_direct_oracle(pred: &ImageBuffer, gt: &ImageBuffer) -> f64 {
        let k = gaussian_kernel();
        let (w, h) = (pred.width, pred.height);
        let x = to_gray(pred);
        let y = to_gray(gt);
        let c1 = 0.01f64.powi(2);
        let c2 = 0.03f64.powi(2);
        let mut acc = 0.0;
        let mut count = 0usize;
        for cy in 0..h - SSIM_WINDOW + 1 {
            for cx in 0..w - SSIM_WINDOW + 1 {
                let mut mx = 0.0;
                let mut my = 0.0;
                let mut mxx = 0.0;
                let mut myy = 0.0;
                let mut mxy = 0.0;
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let wgt = k[dy] * k[dx];
                        let xv = x[(cy + dy) * w + cx + dx];
                        let yv = y[(cy + dy) * w + cx + dx];
                        mx += wgt * xv;
                        my += wgt * yv;
                        mxx += wgt * xv * xv;
                        myy += wgt * yv * yv;
                        mxy += wgt * xv * yv;
                    }
                }
                let vx = mxx - mx * mx;
                let vy = myy - my * my;
                let cov = mxy - mx * my;
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        acc / count as f64
    }

    #[test]
    fn ssim_matches_direct_windowed_oracle() {
        let mut rng = StdRng::seed_from_u64(4);
        let a = random_img(&mut rng, 20, 17);
        let b = random_img(&mut rng, 20, 17);
        let got = ssim(&a, &b).unwrap();
        let want = ssim_direct_oracle(&a, &b);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn perfect_anticorrelation_scores_minus_one() {
        let density: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let conceal: Vec<f64> = density.iter().map(|d| 1.0 - d).collect();
        let r = pearson(&conceal, &density).unwrap();
        assert!((r + 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn independent_maps_have_small_correlation() {
        let mut rng = StdRng::seed_from_u64(5);
        let a: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let r = pearson(&a, &b).unwrap();
        assert!(r.abs() < 0.1, "{r}");
    }

    #[test]
    fn constant_map_is_an_error() {
        let a = vec![0.5; 10];
        let b: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let err = pearson(&a, &b).unwrap_err();
        assert!(err.to_string().contains("undefined correlation"), "{err}");
    }

    #[test]
    fn correlation_analysis_runs_on_a_fresh_model() {
        let cfg = FieldConfig {
            depth: 2,
            width: 8,
            skip_layer: 1,
            l_pos: 2,
            l_dir: 1,
            n_coarse: 4,
            n_fine: 4,
            conceal_kernel: 3,
        };
        let mut model: FieldModel<f32> = FieldModel::init(cfg, Lighting::Lowlight, 7);
        // a fresh concealing head is constant 0.5 everywhere, which has no
        // defined correlation; perturb it so the maps vary
        let ki = model.param_index("fine.conceal.kernel").unwrap();
        for (i, v) in model.params[ki].values.iter_mut().enumerate() {
            *v = ((i as f32) * 0.61).sin() * 0.8;
        }
        let reports = concealing_density_correlation(&model, GridSpec { half_extent: 1.5, res: 8 }).unwrap();
        assert_eq!(reports[0].plane, Plane::Xz);
        assert_eq!(reports[1].plane, Plane::Yz);
        for r in &reports {
            assert!(r.pearson >= -1.0 && r.pearson <= 1.0);
            assert_eq!(r.density_map.len(), 64);
            assert_eq!(r.conceal_map.len(), 64);
        }
    }

    proptest! {
        /// PSNR is invariant under an identical permutation of both images.
        #[test]
        fn psnr_permutation_invariance(seed in 0u64..200) {
            let mut rng = StdRng::seed_from_u64(seed);
            let a = random_img(&mut rng, 6, 4);
            let b = random_img(&mut rng, 6, 4);
            let base = psnr(&a, &b).unwrap();
            // deterministic permutation of pixel order
            let mut idx: Vec<usize> = (0..24).collect();
            for i in (1..idx.len()).rev() {
                let j = rng.gen_range(0..=i);
                idx.swap(i, j);
            }
            let permute = |img: &ImageBuffer| -> ImageBuffer {
                let mut out = ImageBuffer::new(6, 4);
                for (dst, &src) in idx.iter().enumerate() {
                    for c in 0..3 {
                        out.data[dst * 3 + c] = img.data[src * 3 + c];
                    }
                }
                out
            };
            let shuffled = psnr(&permute(&a), &permute(&b)).unwrap();
            prop_assert!((base - shuffled).abs() < 1e-12);
        }

        /// Pearson is invariant under positive affine rescaling.
        #[test]
        fn pearson_affine_invariance(seed in 0u64..200, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let mut rng = StdRng::seed_from_u64(seed);
            let a: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
            let base = pearson(&a, &b).unwrap();
            let a2: Vec<f64> = a.iter().map(|v| v * scale + shift).collect();
            let again = pearson(&a2, &b).unwrap();
            prop_assert!((base - again).abs() < 1e-9);
        }
    }
}
