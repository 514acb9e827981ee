//! Box-counting dimension estimation on sampled attractors, a correlation
//! cross-estimator, and the packing-count dimension bound
//!
//! ```text
//! dim <= ln m / ln(2/(1+gamma)),    m = packing count at radius 4L/(1-gamma),
//! ```
//!
//! all in truncated mode coordinates. Covers use axis-aligned boxes instead
//! of balls; the two covering numbers differ by a dimension-dependent
//! constant that cancels in the log-log slope.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::history::{format_g17, HistorySegment};
use crate::integrator::{IntegratorConfig, Stepper};
use crate::model::ModelSpec;
use crate::spectral::SpectralState;

/// Provenance of a sampled cloud, carried along for reproducibility.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CloudMeta {
    pub description: String,
    pub seed: Option<u64>,
    pub transient: f64,
    pub sample_dt: f64,
    pub n_trajectories: usize,
}

impl CloudMeta {
    pub fn synthetic(description: impl Into<String>) -> Self {
        Self {
            description: description.into(),
            seed: None,
            transient: 0.0,
            sample_dt: 0.0,
            n_trajectories: 0,
        }
    }
}

/// Finite point set in fixed-dimension mode coordinates.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<Vec<f64>>,
    pub meta: CloudMeta,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>, meta: CloudMeta) -> Result<Self> {
        let cloud = Self { points, meta };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.points.first() else {
            return Err(Error::InvalidCloud("cloud is empty".into()));
        };
        let d = first.len();
        if d == 0 {
            return Err(Error::InvalidCloud("points must have dimension >= 1".into()));
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::InvalidCloud(format!(
                    "point {i} has dimension {}, expected {d}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidCloud(format!("point {i} has nonfinite entries")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-coordinate minimum, the anchor corner for box grids.
    pub fn min_corner(&self) -> Vec<f64> {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        for p in &self.points {
            for (l, x) in lo.iter_mut().zip(p) {
                *l = l.min(*x);
            }
        }
        lo
    }

    /// Largest per-coordinate extent.
    pub fn extent(&self) -> f64 {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in &self.points {
            for i in 0..d {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        lo.iter()
            .zip(&hi)
            .map(|(l, h)| h - l)
            .fold(0.0f64, f64::max)
    }

    /// One point per row, 17 significant digits.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        let d = self.dim();
        let header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|x| format_g17(*x)).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl std::io::Read, meta: CloudMeta) -> Result<Self> {
        let mut content = String::new();
        let mut r = std::io::BufReader::new(r);
        std::io::Read::read_to_string(&mut r, &mut content)
            .map_err(|e| Error::InvalidCloud(format!("unreadable csv: {e}")))?;
        let mut lines = content.lines();
        let Some(_header) = lines.next() else {
            return Err(Error::InvalidCloud("csv has no header".into()));
        };
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(str::trim).map(str::parse).collect();
            let row = row.map_err(|e| Error::InvalidCloud(format!("row {}: {e}", i + 2)))?;
            points.push(row);
        }
        Self::new(points, meta)
    }
}

/// Log-log slope estimate with the ladder, counts, and fit window that
/// produced it.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DimensionEstimate {
    /// Descending box sides (or radii).
    pub epsilons: Vec<f64>,
    /// Occupied-box counts (or close-pair counts) per rung.
    pub counts: Vec<u64>,
    pub slope: f64,
    pub stderr: f64,
    /// Half-open index range of the rungs used in the fit.
    pub window: (usize, usize),
}

fn check_ladder(eps: &[f64]) -> Result<()> {
    if eps.len() < 2 {
        return Err(Error::DegenerateLadder(format!(
            "need at least 2 rungs, got {}",
            eps.len()
        )));
    }
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::DegenerateLadder("rungs must be positive".into()));
    }
    if eps.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::DegenerateLadder(
            "rungs must be strictly descending".into(),
        ));
    }
    Ok(())
}

/// Geometric ladder from half the cloud extent, ratio 1/2, 8 rungs. A
/// degenerate (single-point) cloud falls back to a unit-based ladder.
pub fn default_eps_ladder(cloud: &PointCloud) -> Vec<f64> {
    let extent = cloud.extent();
    let start = if extent > 0.0 { 0.5 * extent } else { 1.0 };
    (0..8).map(|k| start * 0.5f64.powi(k)).collect()
}

/// Counts occupied axis-aligned boxes of side `eps` on the grid anchored at
/// the cloud's min corner, one rung per ladder entry, and fits the log-log
/// slope. The fit window drops the two coarsest rungs and any rung whose
/// count saturates toward the sample size (count > max(10, n/10)); if fewer
/// than two rungs survive, all rungs are used.
pub fn box_counting(cloud: &PointCloud, eps_ladder: &[f64]) -> Result<DimensionEstimate> {
    cloud.validate()?;
    check_ladder(eps_ladder)?;
    let anchor = cloud.min_corner();
    let counts: Vec<u64> = eps_ladder
        .par_iter()
        .map(|&eps| {
            let mut boxes: HashSet<Vec<i64>> = HashSet::with_capacity(cloud.len());
            for p in &cloud.points {
                let key: Vec<i64> = p
                    .iter()
                    .zip(&anchor)
                    .map(|(x, a)| ((x - a) / eps).floor() as i64)
                    .collect();
                boxes.insert(key);
            }
            boxes.len() as u64
        })
        .collect();
    let saturation = (cloud.len() as f64 / 10.0).max(10.0);
    let mut keep: Vec<usize> = (2..eps_ladder.len())
        .filter(|&i| (counts[i] as f64) <= saturation)
        .collect();
    if keep.len() < 2 {
        keep = (0..eps_ladder.len()).collect();
    }
    let window = (keep[0], keep[keep.len() - 1] + 1);
    let xs: Vec<f64> = keep.iter().map(|&i| (1.0 / eps_ladder[i]).ln()).collect();
    let ys: Vec<f64> = keep.iter().map(|&i| (counts[i] as f64).ln()).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(DimensionEstimate {
        epsilons: eps_ladder.to_vec(),
        counts,
        slope: fit.slope.max(0.0),
        stderr: fit.slope_stderr,
        window,
    })
}

/// Pair-counting cross-estimator: slope of `ln C(r)` vs `ln r` where `C(r)`
/// is the fraction of point pairs within distance `r`. The fit keeps rungs
/// with `0 < C(r) < 1/2`; when no such rung exists (all points coincide, or
/// fewer than two points) the slope is 0 by convention.
pub fn correlation_dimension(cloud: &PointCloud, radii: &[f64]) -> Result<DimensionEstimate> {
    cloud.validate()?;
    check_ladder(radii)?;
    let n = cloud.len();
    if n < 2 {
        return Ok(DimensionEstimate {
            epsilons: radii.to_vec(),
            counts: vec![0; radii.len()],
            slope: 0.0,
            stderr: 0.0,
            window: (0, 0),
        });
    }
    let total_pairs = (n * (n - 1) / 2) as u64;
    let radii_sq: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let counts: Vec<u64> = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let mut local = vec![0u64; radii.len()];
            let pi = &cloud.points[i];
            for pj in &cloud.points[i + 1..] {
                let d2: f64 = pi.iter().zip(pj).map(|(a, b)| (a - b) * (a - b)).sum();
                for (c, &r2) in local.iter_mut().zip(&radii_sq) {
                    if d2 <= r2 {
                        *c += 1;
                    }
                }
            }
            local
        })
        .reduce(
            || vec![0u64; radii.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let keep: Vec<usize> = (0..radii.len())
        .filter(|&i| counts[i] > 0 && (counts[i] as f64) < 0.5 * total_pairs as f64)
        .collect();
    let (slope, stderr, window) = if keep.len() >= 2 {
        let xs: Vec<f64> = keep.iter().map(|&i| radii[i].ln()).collect();
        let ys: Vec<f64> = keep
            .iter()
            .map(|&i| (counts[i] as f64 / total_pairs as f64).ln())
            .collect();
        let fit = linear_fit(&xs, &ys);
        (
            fit.slope.max(0.0),
            fit.slope_stderr,
            (keep[0], keep[keep.len() - 1] + 1),
        )
    } else {
        // Degenerate spread: every rung is saturated or empty.
        (0.0, 0.0, (0, 0))
    };
    Ok(DimensionEstimate {
        epsilons: radii.to_vec(),
        counts,
        slope,
        stderr,
        window,
    })
}

/// Radius at which the packing count should be evaluated for the dimension
/// bound: `4 L / (1 - gamma)`.
pub fn packing_radius(gamma: f64, lipschitz: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::OutOfRange(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if !(lipschitz.is_finite() && lipschitz > 0.0) {
        return Err(Error::OutOfRange(format!(
            "lipschitz constant must be positive, got {lipschitz}"
        )));
    }
    Ok(4.0 * lipschitz / (1.0 - gamma))
}

/// Dimension bound `ln(packing_count) / ln(2/(1+gamma))` for a map that
/// contracts by `(1+gamma)/2` modulo a compact part; `packing_count` is the
/// caller-evaluated packing number of the unit ball at [`packing_radius`].
/// Accepted as a real `>= 1` so that analytic values like `e^2` can be fed
/// straight through.
pub fn fractal_dimension_bound(gamma: f64, packing_count: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::OutOfRange(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if !(packing_count.is_finite() && packing_count >= 1.0) {
        return Err(Error::OutOfRange(format!(
            "packing count must be >= 1, got {packing_count}"
        )));
    }
    Ok(packing_count.ln() / (2.0 / (1.0 + gamma)).ln())
}

/// Integrates `n_traj` trajectories from seeded random initial data in a
/// fixed bounded set, discards `t < transient`, and records the first
/// `embed_modes` coefficients every `sample_dt`. Fewer than 1000 collected
/// points triggers a stderr warning (the estimate is then noisy).
pub fn sample_attractor(
    spec: &ModelSpec,
    cfg: &IntegratorConfig,
    n_traj: usize,
    transient: f64,
    sample_dt: f64,
    embed_modes: usize,
    seed: u64,
) -> Result<PointCloud> {
    if n_traj == 0 {
        return Err(Error::InvalidCloud(
            "n_traj = 0 would produce an empty cloud".into(),
        ));
    }
    cfg.validate(spec.r)?;
    let m = spec.order();
    if embed_modes == 0 || embed_modes > m {
        return Err(Error::InvalidConfig(format!(
            "embed_modes must lie in 1..={m}, got {embed_modes}"
        )));
    }
    let every = (sample_dt / cfg.dt).round();
    if !(every >= 1.0 && (sample_dt / cfg.dt - every).abs() <= 1e-9 * every) {
        return Err(Error::InvalidConfig(format!(
            "sample_dt = {sample_dt} must be a positive multiple of dt = {}",
            cfg.dt
        )));
    }
    let every = every as u64;
    if !(transient >= 0.0 && transient < cfg.t_final) {
        return Err(Error::InvalidConfig(format!(
            "transient = {transient} must lie in [0, t_final = {})",
            cfg.t_final
        )));
    }
    let n_steps = (cfg.t_final / cfg.dt - 1e-9).ceil().max(1.0) as u64;

    let run_one = |traj: usize| -> Result<Vec<Vec<f64>>> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_add((traj as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        // Random constant history inside a fixed bounded set: amplitudes
        // ~ 2 xi_k / k^(3/2) keep every draw in the same smooth ball.
        let amps: Vec<f64> = (1..=m)
            .map(|k| 2.0 * rng.gen_range(-1.0..1.0) / (k as f64).powf(1.5))
            .collect();
        let history = HistorySegment::from_function(
            |t| SpectralState::new(amps.clone(), t),
            spec.r,
            cfg.dt,
            m,
        )?;
        let mut stepper = Stepper::new(spec, history, cfg.dt, cfg.scheme)?;
        let mut points = Vec::new();
        for k in 1..=n_steps {
            stepper.advance()?;
            if k % every == 0 && stepper.t_now() >= transient {
                let head = stepper.history().head();
                points.push(head.coeffs[..embed_modes].to_vec());
            }
        }
        Ok(points)
    };
    let per_traj: Vec<Vec<Vec<f64>>> = (0..n_traj)
        .into_par_iter()
        .map(run_one)
        .collect::<Result<_>>()?;
    let points: Vec<Vec<f64>> = per_traj.into_iter().flatten().collect();
    if points.is_empty() {
        return Err(Error::InvalidCloud(
            "no samples survived the transient; lengthen t_final".into(),
        ));
    }
    if points.len() < 1000 {
        eprintln!(
            "warning: attractor sample holds only {} points; dimension \
             estimates will be noisy",
            points.len()
        );
    }
    PointCloud::new(
        points,
        CloudMeta {
            description: format!("sampled attractor, embed_modes = {embed_modes}"),
            seed: Some(seed),
            transient,
            sample_dt,
            n_trajectories: n_traj,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::Scheme;
    use crate::model::{
        BirthFunction, DelayFunctional, DelayedMap, Nonlinearity, Smoothing,
    };
    use crate::spectral::Spectrum;

    const PI: f64 = std::f64::consts::PI;

    /// One interior point per level-`depth` middle-thirds interval. The
    /// offsets inside the intervals increase strictly with the generation
    /// index: after the counting grid re-anchors at the cloud minimum, every
    /// point still sits a safe distance from every box boundary, so the
    /// counts are immune to floating-point edge effects while matching the
    /// interval construction exactly.
    fn cantor_cloud(depth: u32) -> PointCloud {
        let mut lefts: Vec<u64> = vec![0];
        let base = 3u64.pow(depth);
        for level in 0..depth {
            let shift = 2 * 3u64.pow(depth - 1 - level);
            lefts = lefts
                .iter()
                .flat_map(|&l| [l, l + shift])
                .collect();
        }
        let n = lefts.len() as f64;
        let points: Vec<Vec<f64>> = lefts
            .iter()
            .enumerate()
            .map(|(i, &l)| vec![(l as f64 + 0.5 + 0.25 * i as f64 / n) / base as f64])
            .collect();
        PointCloud::new(points, CloudMeta::synthetic("triadic dust")).unwrap()
    }

    #[test]
    fn cantor_counts_match_the_interval_oracle() {
        // At eps = 3^-k the occupied boxes are exactly the 2^k surviving
        // construction intervals, so the counts and the slope are known in
        // closed form.
        let cloud = cantor_cloud(10);
        assert_eq!(cloud.len(), 1024);
        let ladder: Vec<f64> = (0..8).map(|k| 3.0f64.powi(-k)).collect();
        let est = box_counting(&cloud, &ladder).unwrap();
        let expect: Vec<u64> = (0..8).map(|k| 1u64 << k).collect();
        assert_eq!(est.counts, expect);
        assert!(
            (est.slope - 0.6309297535714574).abs() <= 1e-12,
            "slope {}",
            est.slope
        );
    }

    #[test]
    fn uniform_square_fills_dimension_two() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let points: Vec<Vec<f64>> = (0..100_000)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let cloud = PointCloud::new(points, CloudMeta::synthetic("uniform square")).unwrap();
        let ladder: Vec<f64> = (0..8).map(|k| 0.5f64.powi(k)).collect();
        let est = box_counting(&cloud, &ladder).unwrap();
        assert!((est.slope - 2.0).abs() <= 0.1, "slope {}", est.slope);
    }

    #[test]
    fn single_repeated_point_has_dimension_zero() {
        let cloud = PointCloud::new(
            vec![vec![0.3, -1.2]; 50],
            CloudMeta::synthetic("one point"),
        )
        .unwrap();
        let ladder = default_eps_ladder(&cloud);
        let est = box_counting(&cloud, &ladder).unwrap();
        assert_eq!(est.slope, 0.0);
        assert!(est.counts.iter().all(|&c| c == 1));
    }

    #[test]
    fn nested_ladders_count_monotonically() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let points: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                (0..3)
                    .map(|_| rng.gen_range(-1.0..1.0) + 0.3 * rng.gen_range(0.0..1.0))
                    .collect()
            })
            .collect();
        let cloud = PointCloud::new(points, CloudMeta::synthetic("blob")).unwrap();
        let est = box_counting(&cloud, &default_eps_ladder(&cloud)).unwrap();
        assert!(est.counts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn subset_never_outcounts_superset() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut points: Vec<Vec<f64>> = (0..1500)
            .map(|_| vec![rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)])
            .collect();
        points.push(vec![0.0, 0.0]);
        let superset = PointCloud::new(points.clone(), CloudMeta::synthetic("all")).unwrap();
        // Keep the shared min corner so both grids are anchored identically.
        let subset_points: Vec<Vec<f64>> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 3 == 0 || *i == points.len() - 1)
            .map(|(_, p)| p.clone())
            .collect();
        let subset = PointCloud::new(subset_points, CloudMeta::synthetic("third")).unwrap();
        let ladder = default_eps_ladder(&superset);
        let big = box_counting(&superset, &ladder).unwrap();
        let small = box_counting(&subset, &ladder).unwrap();
        for (a, b) in small.counts.iter().zip(&big.counts) {
            assert!(a <= b, "subset count {a} exceeds superset count {b}");
        }
    }

    #[test]
    fn slope_is_translation_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let points: Vec<Vec<f64>> = (0..20_000)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let shifted: Vec<Vec<f64>> = points
            .iter()
            .map(|p| vec![p[0] + 13.7, p[1] - 2.19])
            .collect();
        let a = PointCloud::new(points, CloudMeta::synthetic("square")).unwrap();
        let b = PointCloud::new(shifted, CloudMeta::synthetic("square moved")).unwrap();
        let ladder = default_eps_ladder(&a);
        let sa = box_counting(&a, &ladder).unwrap().slope;
        let sb = box_counting(&b, &ladder).unwrap().slope;
        assert!((sa - sb).abs() < 0.02, "slopes {sa} vs {sb}");
    }

    #[test]
    fn bound_evaluator_reference_values() {
        let b = fractal_dimension_bound(0.5, 10.0).unwrap();
        assert!((b - 8.003922779651094).abs() <= 1e-9, "bound {b}");
        assert_eq!(fractal_dimension_bound(0.5, 1.0).unwrap(), 0.0);
        let e2 = std::f64::consts::E * std::f64::consts::E;
        let b2 = fractal_dimension_bound(1e-12, e2).unwrap();
        assert!((b2 - 2.8853900817779268).abs() <= 1e-8, "bound {b2}");
        assert!(fractal_dimension_bound(0.0, 10.0).is_err());
        assert!(fractal_dimension_bound(1.0, 10.0).is_err());
        assert!(fractal_dimension_bound(0.5, 0.5).is_err());
        let r = packing_radius(0.5, 3.0).unwrap();
        assert_eq!(r, 24.0);
    }

    #[test]
    fn correlation_slope_of_a_segment_is_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let points: Vec<Vec<f64>> = (0..4000).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
        let cloud = PointCloud::new(points, CloudMeta::synthetic("segment")).unwrap();
        let radii: Vec<f64> = (0..8).map(|k| 0.5 * 0.5f64.powi(k)).collect();
        let est = correlation_dimension(&cloud, &radii).unwrap();
        assert!((est.slope - 1.0).abs() <= 0.1, "slope {}", est.slope);
    }

    #[test]
    fn correlation_slope_of_coincident_points_is_zero() {
        let cloud = PointCloud::new(
            vec![vec![1.0, 2.0]; 40],
            CloudMeta::synthetic("stack"),
        )
        .unwrap();
        let radii: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).collect();
        let est = correlation_dimension(&cloud, &radii).unwrap();
        assert_eq!(est.slope, 0.0);
    }

    #[test]
    fn correlation_does_not_exceed_box_counting_on_the_dust() {
        let cloud = cantor_cloud(10);
        let ladder: Vec<f64> = (0..8).map(|k| 3.0f64.powi(-k)).collect();
        let corr = correlation_dimension(&cloud, &ladder).unwrap();
        let boxes = box_counting(&cloud, &ladder).unwrap();
        assert!(
            corr.slope <= boxes.slope + 0.05,
            "corr {} vs box {}",
            corr.slope,
            boxes.slope
        );
    }

    fn forced_linear_model(m: usize) -> ModelSpec {
        ModelSpec::new(
            Spectrum::dirichlet(m, PI).unwrap(),
            DelayFunctional::constant(0.5, 1.0).unwrap(),
            DelayedMap::new(BirthFunction::Linear { slope: 0.0 }, Smoothing::Identity)
                .unwrap(),
            Nonlinearity::Zero,
            SpectralState::mode(1, 1.0, m, 0.0),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_attractor_collapses_to_a_point() {
        let m = 2;
        let spec = forced_linear_model(m);
        let cfg = IntegratorConfig::new(0.05, Scheme::Etd1, 20.0, 1);
        let cloud = sample_attractor(&spec, &cfg, 3, 16.0, 0.5, m, 42).unwrap();
        // Unique equilibrium at e_1 (lambda_1 = 1 at L = pi).
        for p in &cloud.points {
            assert!((p[0] - 1.0).abs() <= 1e-6 && p[1].abs() <= 1e-6, "{p:?}");
        }
        assert!(cloud.extent() <= 2e-6);
        // Seen at any fixed macroscopic ladder the cloud is a single box on
        // every rung. Zooming the ladder into the residual 1e-7 blob would
        // instead resolve the approach manifold, which is not the claim.
        let ladder: Vec<f64> = (0..8).map(|k| 0.5f64.powi(k)).collect();
        let est = box_counting(&cloud, &ladder).unwrap();
        assert_eq!(est.slope, 0.0);
        assert!(est.counts.iter().all(|&c| c == 1));
        assert_eq!(cloud.meta.seed, Some(42));
    }

    #[test]
    fn bistable_cloud_concentrates_near_both_equilibria() {
        // One-mode cubic with g(s) = s^3 - 3s at L = pi: the projected
        // scalar equation is du/dt = -u - G(u) with roots 0, +sqrt(pi),
        // -sqrt(pi); the outer two attract.
        let m = 1;
        let spec = ModelSpec::new(
            Spectrum::dirichlet(m, PI).unwrap(),
            DelayFunctional::constant(0.5, 1.0).unwrap(),
            DelayedMap::new(BirthFunction::Linear { slope: 0.0 }, Smoothing::Identity)
                .unwrap(),
            Nonlinearity::Cubic { a1: 0.0, a2: -3.0 },
            SpectralState::zero(m, 0.0),
            1.0,
        )
        .unwrap();
        // Root oracle: bisection on the projected right-hand side.
        let rhs1 = |u: f64| -> f64 {
            let s = SpectralState::new(vec![u], 0.0);
            let g = spec.eval_g(&s).unwrap();
            -u - g.coeffs[0]
        };
        let (mut lo, mut hi) = (1.0, 3.0);
        assert!(rhs1(lo) > 0.0 && rhs1(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rhs1(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert!((root - PI.sqrt()).abs() <= 1e-9, "root {root}");

        let cfg = IntegratorConfig::new(0.05, Scheme::EtdRk2, 30.0, 1);
        let cloud = sample_attractor(&spec, &cfg, 8, 20.0, 0.5, 1, 1234).unwrap();
        let mut saw_pos = false;
        let mut saw_neg = false;
        for p in &cloud.points {
            let x = p[0];
            assert!(
                (x.abs() - root).abs() <= 1e-2,
                "point {x} far from both equilibria"
            );
            saw_pos |= x > 0.0;
            saw_neg |= x < 0.0;
        }
        assert!(saw_pos && saw_neg, "both basins should be visited");
    }

    #[test]
    fn empty_sampling_requests_are_rejected() {
        let spec = forced_linear_model(2);
        let cfg = IntegratorConfig::new(0.05, Scheme::Etd1, 5.0, 1);
        assert!(matches!(
            sample_attractor(&spec, &cfg, 0, 1.0, 0.5, 2, 1),
            Err(Error::InvalidCloud(_))
        ));
        assert!(sample_attractor(&spec, &cfg, 1, 6.0, 0.5, 2, 1).is_err());
    }

    #[test]
    fn cloud_csv_round_trips_exactly() {
        let cloud = PointCloud::new(
            vec![vec![0.1, -2.5e-17], vec![std::f64::consts::PI, 1e300]],
            CloudMeta::synthetic("tiny"),
        )
        .unwrap();
        let mut buf = Vec::new();
        cloud.write_csv(&mut buf).unwrap();
        let back =
            PointCloud::read_csv(buf.as_slice(), CloudMeta::synthetic("tiny again")).unwrap();
        assert_eq!(cloud.points, back.points);
    }

    #[test]
    fn malformed_ladders_are_rejected() {
        let cloud = PointCloud::new(
            vec![vec![0.0], vec![1.0]],
            CloudMeta::synthetic("pair"),
        )
        .unwrap();
        assert!(matches!(
            box_counting(&cloud, &[0.5]),
            Err(Error::DegenerateLadder(_))
        ));
        assert!(matches!(
            box_counting(&cloud, &[0.5, 0.5]),
            Err(Error::DegenerateLadder(_))
        ));
        assert!(matches!(
            box_counting(&cloud, &[0.5, -0.1]),
            Err(Error::DegenerateLadder(_))
        ));
    }
}
