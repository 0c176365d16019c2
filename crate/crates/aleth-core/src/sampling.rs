//! Pinhole ray generation, stratified depth sampling and importance
//! resampling along rays.

use crate::error::{AlethError, Result};
use crate::geom::{Pose, Vec3};
use crate::scene::manifest::Intrinsics;
use rand::Rng;

/// A batch of camera rays. Depth samples are produced separately (all rays
/// in one batch share a sample count) so coarse and fine passes can reuse
/// the same geometry.
#[derive(Clone, Debug, Default)]
pub struct RayBatch {
    pub origins: Vec<Vec3>,
    /// Unit direction per ray.
    pub dirs: Vec<Vec3>,
    /// Pixel coordinates the rays were cast through.
    pub pixels: Vec<(f64, f64)>,
    /// Neighbor group id; rays sharing an id form one horizontal triplet
    /// (x-1, x, x+1) on a single row.
    pub groups: Vec<usize>,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

/// Cast rays through the given pixels: direction
/// `normalize(R * ((x-cx)/fx, -(y-cy)/fy, -1))`, origin at the pose
/// translation. Pixels outside `[0, width-1] x [0, height-1]` are an error.
pub fn generate_rays(intrinsics: &Intrinsics, pose: &Pose, pixels: &[(f64, f64)]) -> Result<RayBatch> {
    let mut batch = RayBatch::default();
    batch.origins.reserve(pixels.len());
    batch.dirs.reserve(pixels.len());
    batch.pixels.reserve(pixels.len());
    for &(x, y) in pixels {
        if !(0.0..=(intrinsics.width - 1) as f64).contains(&x)
            || !(0.0..=(intrinsics.height - 1) as f64).contains(&y)
        {
            return Err(AlethError::InvalidArgument(format!(
                "pixel ({x}, {y}) outside {}x{} image bounds",
                intrinsics.width, intrinsics.height
            )));
        }
        let cam = Vec3::new(
            (x - intrinsics.cx) / intrinsics.fx,
            -(y - intrinsics.cy) / intrinsics.fy,
            -1.0,
        );
        batch.dirs.push(pose.rotate(cam).normalized());
        batch.origins.push(pose.translation);
        batch.pixels.push((x, y));
    }
    batch.groups = vec![0; pixels.len()];
    Ok(batch)
}

/// One depth per uniform bin over [near, far]: bin midpoints when `jitter`
/// is off, otherwise one uniform draw per bin.
pub fn stratified_samples(near: f64, far: f64, n: usize, jitter: bool, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(AlethError::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    if !(near > 0.0 && near < far) {
        return Err(AlethError::InvalidArgument(format!("invalid depth bounds [{near}, {far}]")));
    }
    let delta = (far - near) / n as f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = near + i as f64 * delta;
        let t = if jitter { rng.gen_range(0.0..1.0) } else { 0.5 };
        out.push(lo + t * delta);
    }
    Ok(out)
}

/// Bin edges for importance sampling: midpoints between consecutive coarse
/// depths, extended by half a spacing at both ends. For midpoint-stratified
/// depths this exactly recovers the stratified bins.
fn bin_edges(depths: &[f64]) -> Vec<f64> {
    let n = depths.len();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(depths[0] - 0.5 * (depths[1] - depths[0]));
    for i in 1..n {
        edges.push(0.5 * (depths[i - 1] + depths[i]));
    }
    edges.push(depths[n - 1] + 0.5 * (depths[n - 1] - depths[n - 2]));
    edges
}

/// Draw `nf` depths by inverse-transform sampling from the piecewise-constant
/// PDF over coarse bins, proportional to the (non-negative) weights. All-zero
/// weights fall back to a uniform PDF rather than failing. Samples are
/// clamped into the coarse depth range so merged lists stay inside
/// [near, far].
pub fn hierarchical_samples(
    coarse_depths: &[f64],
    weights: &[f64],
    nf: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if coarse_depths.len() < 2 {
        return Err(AlethError::InvalidArgument("need at least 2 coarse depths".into()));
    }
    if weights.len() != coarse_depths.len() {
        return Err(AlethError::ShapeMismatch(format!(
            "{} weights for {} coarse depths",
            weights.len(),
            coarse_depths.len()
        )));
    }
    if nf == 0 {
        return Err(AlethError::InvalidArgument("need at least 1 fine sample".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(AlethError::InvalidArgument("weights must be finite and non-negative".into()));
    }

    let total: f64 = weights.iter().sum();
    let n = weights.len();
    let pdf: Vec<f64> = if total > 0.0 {
        weights.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    let mut cdf = Vec::with_capacity(n + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for p in &pdf {
        acc += p;
        cdf.push(acc);
    }
    cdf[n] = 1.0;

    let edges = bin_edges(coarse_depths);
    let (t_min, t_max) = (coarse_depths[0], coarse_depths[n - 1]);
    let mut out = Vec::with_capacity(nf);
    for _ in 0..nf {
        let u: f64 = rng.gen_range(0.0..1.0);
        // first bin whose CDF exceeds u
        let mut idx = n - 1;
        for j in 0..n {
            if u < cdf[j + 1] {
                idx = j;
                break;
            }
        }
        let span = cdf[idx + 1] - cdf[idx];
        let frac = if span > 0.0 { (u - cdf[idx]) / span } else { 0.5 };
        let t = edges[idx] + frac * (edges[idx + 1] - edges[idx]);
        out.push(t.clamp(t_min, t_max));
    }
    Ok(out)
}

/// Merge coarse and fine depths into one sorted list.
pub fn merge_sorted(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
    let mut all = Vec::with_capacity(coarse.len() + fine.len());
    all.extend_from_slice(coarse);
    all.extend_from_slice(fine);
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all
}

/// Per-interval spacings: delta_i = t_{i+1} - t_i, with the final interval
/// set to the mean spacing so every sample carries a width. Reduces to the
/// constant (far - near) / n under uniform midpoint sampling.
pub fn sample_deltas(depths: &[f64]) -> Vec<f64> {
    let n = depths.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut deltas = Vec::with_capacity(n);
    for i in 0..n - 1 {
        deltas.push(depths[i + 1] - depths[i]);
    }
    let mean = (depths[n - 1] - depths[0]) / (n - 1) as f64;
    deltas.push(mean);
    deltas
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn intr(fx: f64, cx: f64, w: usize) -> Intrinsics {
        Intrinsics { fx, fy: fx, cx, cy: cx, width: w, height: w }
    }

    #[test]
    fn principal_point_ray_points_down_negative_z() {
        let it = intr(50.0, 32.0, 64);
        let batch = generate_rays(&it, &Pose::identity(), &[(32.0, 32.0)]).unwrap();
        let d = batch.dirs[0];
        assert!((d.x).abs() < 1e-12 && (d.y).abs() < 1e-12);
        assert!((d.z + 1.0).abs() < 1e-12);
        assert_eq!(batch.origins[0], Vec3::ZERO);
    }

    #[test]
    fn identity_pose_rays_originate_at_zero() {
        let it = intr(50.0, 32.0, 64);
        let batch =
            generate_rays(&it, &Pose::identity(), &[(0.0, 0.0), (63.0, 63.0), (10.0, 40.0)]).unwrap();
        for o in &batch.origins {
            assert_eq!(*o, Vec3::ZERO);
        }
    }

    /// Closed-form pinhole check: pixel (cx + fx, cy) has camera-space
    /// direction (1, 0, -1) before normalisation.
    #[test]
    fn offset_pixel_matches_closed_form() {
        let it = intr(100.0, 128.0, 256);
        let mut pose = Pose::identity();
        pose.translation = Vec3::new(1.0, 2.0, 3.0);
        let batch = generate_rays(&it, &pose, &[(228.0, 128.0)]).unwrap();
        let want = Vec3::new(1.0, 0.0, -1.0).normalized();
        let got = batch.dirs[0];
        assert!((got.x - want.x).abs() < 1e-12);
        assert!((got.y - want.y).abs() < 1e-12);
        assert!((got.z - want.z).abs() < 1e-12);
        assert_eq!(batch.origins[0], Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn out_of_bounds_pixel_is_an_error() {
        let it = intr(50.0, 32.0, 64);
        assert!(generate_rays(&it, &Pose::identity(), &[(64.0, 0.0)]).is_err());
        assert!(generate_rays(&it, &Pose::identity(), &[(0.0, -0.5)]).is_err());
    }

    #[test]
    fn unjittered_samples_are_bin_midpoints() {
        let mut rng = StdRng::seed_from_u64(0);
        let t = stratified_samples(2.0, 6.0, 4, false, &mut rng).unwrap();
        assert_eq!(t, vec![2.5, 3.5, 4.5, 5.5]);
    }

    #[test]
    fn jittered_samples_stay_in_their_bins_and_increase() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let t = stratified_samples(2.0, 6.0, 8, true, &mut rng).unwrap();
            let delta = 0.5;
            for (i, &v) in t.iter().enumerate() {
                let lo = 2.0 + i as f64 * delta;
                assert!(v >= lo && v <= lo + delta);
                if i > 0 {
                    assert!(v > t[i - 1]);
                }
            }
        }
    }

    /// Monte-Carlo oracle: per-bin mean of many jittered draws approaches
    /// the bin midpoint.
    #[test]
    fn jittered_bin_means_approach_midpoints() {
        let mut rng = StdRng::seed_from_u64(21);
        let n = 4;
        let mut sums = vec![0.0; n];
        let reps = 100_000;
        for _ in 0..reps {
            let t = stratified_samples(2.0, 6.0, n, true, &mut rng).unwrap();
            for (s, v) in sums.iter_mut().zip(t.iter()) {
                *s += v;
            }
        }
        for (i, s) in sums.iter().enumerate() {
            let mean = s / reps as f64;
            let mid = 2.5 + i as f64;
            assert!((mean - mid).abs() < 0.01, "bin {i}: {mean} vs {mid}");
        }
    }

    #[test]
    fn single_positive_weight_confines_fine_samples_to_that_bin() {
        let mut rng = StdRng::seed_from_u64(5);
        let coarse = vec![2.5, 3.5, 4.5, 5.5];
        let mut weights = vec![0.0; 4];
        weights[2] = 1.0;
        let fine = hierarchical_samples(&coarse, &weights, 200, &mut rng).unwrap();
        for t in fine {
            assert!((4.0..=5.0).contains(&t), "{t} escaped bin 2");
        }
    }

    fn occupancy(coarse: &[f64], samples: &[f64]) -> Vec<usize> {
        let edges = bin_edges(coarse);
        let mut counts = vec![0usize; coarse.len()];
        for &t in samples {
            let mut idx = coarse.len() - 1;
            for j in 0..coarse.len() {
                if t <= edges[j + 1] {
                    idx = j;
                    break;
                }
            }
            counts[idx] += 1;
        }
        counts
    }

    #[test]
    fn uniform_weights_fill_bins_uniformly() {
        let mut rng = StdRng::seed_from_u64(8);
        let coarse = vec![2.5, 3.5, 4.5, 5.5];
        let draws = 100_000usize;
        let fine = hierarchical_samples(&coarse, &[1.0; 4], draws, &mut rng).unwrap();
        let counts = occupancy(&coarse, &fine);
        let p = 0.25;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let expected = draws as f64 * p;
            assert!(
                (c as f64 - expected).abs() < 3.0 * sigma,
                "bin {i}: {c} vs {expected} (3 sigma = {:.1})",
                3.0 * sigma
            );
        }
    }

    /// Multinomial oracle for a skewed weight vector.
    #[test]
    fn skewed_weights_match_multinomial_bounds() {
        let mut rng = StdRng::seed_from_u64(13);
        let coarse = vec![2.5, 3.5, 4.5, 5.5];
        let weights = [0.1, 0.2, 0.3, 0.4];
        let draws = 100_000usize;
        let fine = hierarchical_samples(&coarse, &weights, draws, &mut rng).unwrap();
        let counts = occupancy(&coarse, &fine);
        for (i, (&c, &p)) in counts.iter().zip(weights.iter()).enumerate() {
            let expected = draws as f64 * p;
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (c as f64 - expected).abs() < 3.0 * sigma,
                "bin {i}: {c} vs {expected}"
            );
        }
    }

    #[test]
    fn all_zero_weights_fall_back_to_uniform() {
        let mut rng = StdRng::seed_from_u64(2);
        let coarse = vec![2.5, 3.5, 4.5, 5.5];
        let fine = hierarchical_samples(&coarse, &[0.0; 4], 40_000, &mut rng).unwrap();
        let counts = occupancy(&coarse, &fine);
        for &c in &counts {
            assert!((c as f64 - 10_000.0).abs() < 3.0 * (40_000.0f64 * 0.25 * 0.75).sqrt());
        }
    }

    proptest! {
        /// Ray directions are invariant under uniform rescaling of
        /// intrinsics and pixel coordinates.
        #[test]
        fn ray_direction_scale_invariance(
            fx in 20.0f64..200.0,
            cx in 10.0f64..100.0,
            px in 0.0f64..199.0,
            py in 0.0f64..199.0,
            s in 0.1f64..10.0,
        ) {
            let a = intr(fx, cx, 200);
            let b = Intrinsics { fx: fx * s, fy: fx * s, cx: cx * s, cy: cx * s, width: 2000, height: 2000 };
            let ra = generate_rays(&a, &Pose::identity(), &[(px, py)]).unwrap();
            let rb = generate_rays(&b, &Pose::identity(), &[(px * s, py * s)]).unwrap();
            let (da, db) = (ra.dirs[0], rb.dirs[0]);
            prop_assert!((da.x - db.x).abs() < 1e-12);
            prop_assert!((da.y - db.y).abs() < 1e-12);
            prop_assert!((da.z - db.z).abs() < 1e-12);
        }

        /// Merged coarse+fine lists are sorted and stay within [near, far].
        #[test]
        fn merged_depths_sorted_in_range(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let coarse = stratified_samples(2.0, 6.0, 8, true, &mut rng).unwrap();
            let weights: Vec<f64> = (0..8).map(|i| (i as f64 * 0.3).sin().abs()).collect();
            let fine = hierarchical_samples(&coarse, &weights, 8, &mut rng).unwrap();
            let merged = merge_sorted(&coarse, &fine);
            for w in merged.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            for &t in &merged {
                prop_assert!((2.0..=6.0).contains(&t));
            }
        }

        #[test]
        fn ray_directions_are_unit(px in 0.0f64..63.0, py in 0.0f64..63.0) {
            let it = intr(50.0, 32.0, 64);
            let batch = generate_rays(&it, &Pose::identity(), &[(px, py)]).unwrap();
            prop_assert!((batch.dirs[0].norm() - 1.0).abs() < 1e-6);
        }
    }
}
