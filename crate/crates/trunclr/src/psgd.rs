//! Projected stochastic gradient descent with the 1/(κt) schedule, plus the
//! multi-run majority vote that turns K constant-probability runs into a
//! high-probability estimate.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::interval::IntervalUnion;
use crate::likelihood::{self, GradSample, SampleSource};
use crate::model::Dataset;
use crate::warm_start::{self, ProjectionBall};

pub const KAPPA_FLOOR: f64 = 1e-6;

/// Source of stochastic gradients at a query point. Implemented by the
/// likelihood sampler in production and by stubs in tests.
pub trait GradientOracle {
    fn sample<R: Rng + ?Sized>(&mut self, w: &DVector<f64>, rng: &mut R) -> Result<GradSample>;
}

/// The production oracle: single-sample likelihood gradients over S.
pub struct LikelihoodOracle<'a, Src: SampleSource> {
    pub set: &'a IntervalUnion,
    pub zeta: f64,
    pub source: &'a Src,
}

impl<Src: SampleSource> GradientOracle for LikelihoodOracle<'_, Src> {
    fn sample<R: Rng + ?Sized>(&mut self, w: &DVector<f64>, rng: &mut R) -> Result<GradSample> {
        likelihood::gradient_sample(w, self.set, self.zeta, self.source, rng)
    }
}

impl<F> GradientOracle for F
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    fn sample<R: Rng + ?Sized>(&mut self, w: &DVector<f64>, _rng: &mut R) -> Result<GradSample> {
        Ok(GradSample { g: self(w), attempts: 0 })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub t: usize,
    pub eta: f64,
    pub grad_norm: f64,
    pub dist_to_center: f64,
}

#[derive(Debug, Clone)]
pub struct PsgdOutcome {
    pub average: DVector<f64>,
    pub skipped: usize,
    pub attempts: u64,
}

/// Run T projected SGD steps from `init`, step size 1/(κt), and return the
/// average iterate. A step whose gradient draw hits a zero-mass survival
/// region is skipped (iterate held); more than 0.1% of T skips aborts.
pub fn run_psgd<O: GradientOracle, R: Rng + ?Sized>(
    init: &DVector<f64>,
    ball: &ProjectionBall,
    t_steps: usize,
    kappa: f64,
    oracle: &mut O,
    rng: &mut R,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<PsgdOutcome> {
    if t_steps == 0 {
        return Err(Error::Config("T must be >= 1".into()));
    }
    if !(kappa > 0.0) {
        return Err(Error::Config(format!("kappa must be positive, got {kappa}")));
    }
    if !ball.contains(init) {
        return Err(Error::Config("PSGD start point outside projection ball".into()));
    }
    let max_skips = ((t_steps as f64) * 0.001).floor() as usize;
    let mut w = init.clone();
    let mut sum = DVector::zeros(w.len());
    let mut skipped = 0usize;
    let mut attempts = 0u64;
    for t in 1..=t_steps {
        let eta = 1.0 / (kappa * t as f64);
        match oracle.sample(&w, rng) {
            Ok(gs) => {
                attempts += gs.attempts;
                w = ball.project(&(&w - &gs.g * eta));
                debug_assert!(ball.contains(&w));
                if let Some(rows) = trace.as_deref_mut() {
                    rows.push(TraceRow {
                        t,
                        eta,
                        grad_norm: gs.g.norm(),
                        dist_to_center: (&w - ball.center_vec()).norm(),
                    });
                }
            }
            Err(Error::ZeroMass { .. }) => {
                skipped += 1;
                if skipped > max_skips {
                    return Err(Error::TooManySkippedSteps { skipped, total: t_steps });
                }
            }
            Err(e) => return Err(e),
        }
        sum += &w;
    }
    Ok(PsgdOutcome {
        average: sum / t_steps as f64,
        skipped,
        attempts,
    })
}

#[derive(Debug, Clone)]
pub struct Aggregate {
    pub w: DVector<f64>,
    pub chosen: usize,
    pub low_confidence: bool,
}

/// Majority vote over K run averages: pick the first run within 2ζ/3 of at
/// least ceil(3K/5) runs (itself included). If no run qualifies, fall back
/// to the run whose ceil(3K/5)-th nearest neighbor is closest and flag it.
pub fn aggregate(runs: &[DVector<f64>], zeta: f64) -> Result<Aggregate> {
    if runs.is_empty() {
        return Err(Error::EmptyRuns);
    }
    if !(zeta > 0.0) {
        return Err(Error::Config(format!("aggregation radius must be positive, got {zeta}")));
    }
    let k = runs.len();
    let quorum = (3 * k).div_ceil(5);
    let radius = 2.0 * zeta / 3.0;
    for (l, run) in runs.iter().enumerate() {
        let near = runs.iter().filter(|r| (*r - run).norm() <= radius).count();
        if near >= quorum {
            return Ok(Aggregate { w: run.clone(), chosen: l, low_confidence: false });
        }
    }
    // Best effort: smallest quorum-th nearest-neighbor distance.
    let mut best = (0usize, f64::INFINITY);
    for (l, run) in runs.iter().enumerate() {
        let mut dists: Vec<f64> = runs.iter().map(|r| (r - run).norm()).collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let reach = dists[quorum - 1];
        if reach < best.1 {
            best = (l, reach);
        }
    }
    Ok(Aggregate { w: runs[best.0].clone(), chosen: best.0, low_confidence: true })
}

/// Empirical strong-convexity constant: the smallest Hessian eigenvalue of
/// the perturbed NLL seen over `probes` random points in the ball (plus the
/// center), floored at KAPPA_FLOOR. The boolean reports whether the floor
/// was engaged.
pub fn estimate_kappa<R: Rng + ?Sized>(
    w_hat: &DVector<f64>,
    ball: &ProjectionBall,
    set: &IntervalUnion,
    data: &Dataset,
    probes: usize,
    rng: &mut R,
) -> Result<(f64, bool)> {
    if probes == 0 {
        return Err(Error::Config("need at least one probe point".into()));
    }
    let mut min_eig = f64::INFINITY;
    let mut points = vec![ball.project(w_hat)];
    for _ in 1..probes {
        points.push(ball.sample_uniform(rng));
    }
    for w in &points {
        let h = likelihood::population_hessian(w, set, data)?;
        let (lo, _) = warm_start::eigen_range(&h);
        min_eig = min_eig.min(lo);
    }
    if min_eig < KAPPA_FLOOR {
        Ok((KAPPA_FLOOR, true))
    } else {
        Ok((min_eig, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_truncated, FeatureDistSpec, TruncatedModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ball(center: Vec<f64>, radius: f64) -> ProjectionBall {
        ProjectionBall::new(DVector::from_vec(center), radius).unwrap()
    }

    #[test]
    fn zero_gradient_stream_returns_init() {
        let b = ball(vec![0.0, 0.0], 5.0);
        let init = DVector::from_vec(vec![1.0, -2.0]);
        let mut zero = |w: &DVector<f64>| DVector::zeros(w.len());
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let out = run_psgd(&init, &b, 100, 1.0, &mut zero, &mut rng, None).unwrap();
        assert_eq!(out.average, init);
    }

    #[test]
    fn quadratic_stub_converges_to_optimum() {
        let a = DVector::from_vec(vec![0.5, -0.25, 1.0]);
        let b = ball(vec![0.0, 0.0, 0.0], 3.0);
        let target = a.clone();
        let mut grad = move |w: &DVector<f64>| w - &target;
        let init = DVector::zeros(3);
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let out = run_psgd(&init, &b, 10_000, 1.0, &mut grad, &mut rng, None).unwrap();
        assert!((out.average - a).norm() < 1e-2);
    }

    #[test]
    fn quadratic_error_decays_like_log_t_over_t() {
        // Quadratic with curvatures (1, 1.5); kappa set to the smaller so the
        // first step does not land exactly on the optimum.
        let a = DVector::from_vec(vec![1.0, 1.0]);
        let b = ball(vec![0.0, 0.0], 4.0);
        let curving = DVector::from_vec(vec![1.0, 1.5]);
        let mut errs = Vec::new();
        for &t in &[1_000usize, 10_000, 100_000] {
            let target = a.clone();
            let h = curving.clone();
            let mut grad = move |w: &DVector<f64>| (w - &target).component_mul(&h);
            let init = DVector::zeros(2);
            let mut rng = ChaCha8Rng::seed_from_u64(53);
            let out = run_psgd(&init, &b, t, 1.0, &mut grad, &mut rng, None).unwrap();
            errs.push(((t as f64).ln(), (out.average - &a).norm().ln()));
        }
        // Least-squares slope of log error vs log T; log(T)/T decay gives a
        // slope near -1 (the log factor flattens it slightly).
        let n = errs.len() as f64;
        let sx: f64 = errs.iter().map(|e| e.0).sum();
        let sy: f64 = errs.iter().map(|e| e.1).sum();
        let sxx: f64 = errs.iter().map(|e| e.0 * e.0).sum();
        let sxy: f64 = errs.iter().map(|e| e.0 * e.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(slope < -0.7, "decay slope {slope}");
    }

    #[test]
    fn iterates_stay_in_ball_and_trace_logged() {
        let b = ball(vec![0.0, 0.0], 0.5);
        let mut grad = |_w: &DVector<f64>| DVector::from_vec(vec![10.0, -10.0]);
        let init = DVector::zeros(2);
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let mut trace = Vec::new();
        let out = run_psgd(&init, &b, 50, 2.0, &mut grad, &mut rng, Some(&mut trace)).unwrap();
        assert!(b.contains(&out.average));
        assert_eq!(trace.len(), 50);
        for (i, row) in trace.iter().enumerate() {
            assert_eq!(row.t, i + 1);
            assert!((row.eta - 1.0 / (2.0 * (i + 1) as f64)).abs() < 1e-15);
            assert!(row.dist_to_center <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn fixed_seed_reproduces_trajectory() {
        let b = ball(vec![0.0], 2.0);
        let init = DVector::from_vec(vec![1.0]);
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut grad = |w: &DVector<f64>| w.clone();
            let mut trace = Vec::new();
            run_psgd(&init, &b, 200, 1.0, &mut grad, &mut rng, Some(&mut trace)).unwrap();
            trace.iter().map(|r| r.dist_to_center).collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
    }

    #[test]
    fn too_many_skips_aborts() {
        struct AlwaysZeroMass;
        impl GradientOracle for AlwaysZeroMass {
            fn sample<R: Rng + ?Sized>(
                &mut self,
                _w: &DVector<f64>,
                _rng: &mut R,
            ) -> Result<GradSample> {
                Err(Error::ZeroMass { mu: 50.0 })
            }
        }
        let b = ball(vec![0.0], 1.0);
        let init = DVector::zeros(1);
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let res = run_psgd(&init, &b, 10_000, 1.0, &mut AlwaysZeroMass, &mut rng, None);
        assert!(matches!(res, Err(Error::TooManySkippedSteps { .. })));
    }

    #[test]
    fn aggregate_single_run() {
        let runs = vec![DVector::from_vec(vec![1.0, 2.0])];
        let agg = aggregate(&runs, 1.0).unwrap();
        assert_eq!(agg.w, runs[0]);
        assert!(!agg.low_confidence);
    }

    #[test]
    fn aggregate_majority_beats_outlier() {
        let mut runs = vec![DVector::from_vec(vec![0.0]); 4];
        runs.push(DVector::from_vec(vec![100.0]));
        let agg = aggregate(&runs, 1.0).unwrap();
        assert_eq!(agg.w[0], 0.0);
        assert!(!agg.low_confidence);
    }

    #[test]
    fn aggregate_cluster_within_zeta_of_true_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        for _ in 0..50 {
            let zeta = rng.random_range(0.2..2.0);
            let k = rng.random_range(5..15usize);
            let d = rng.random_range(1..5usize);
            let p = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
            let quorum = (3 * k).div_ceil(5);
            let mut runs = Vec::new();
            for i in 0..k {
                if i < quorum {
                    // Inside a ball of radius zeta/3 around p.
                    let dir = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                    let dir = if dir.norm() > 0.0 { dir.normalize() } else { dir };
                    runs.push(&p + dir * rng.random_range(0.0..zeta / 3.0));
                } else {
                    runs.push(DVector::from_fn(d, |_, _| rng.random_range(-50.0..50.0)));
                }
            }
            let agg = aggregate(&runs, zeta).unwrap();
            assert!((agg.w - &p).norm() <= zeta, "vote left the cluster");
        }
    }

    #[test]
    fn aggregate_fallback_flags_low_confidence() {
        let runs: Vec<DVector<f64>> = (0..5)
            .map(|i| DVector::from_vec(vec![100.0 * i as f64]))
            .collect();
        let agg = aggregate(&runs, 0.1).unwrap();
        assert!(agg.low_confidence);
    }

    #[test]
    fn kappa_full_line_matches_second_moment_eig() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let w = DVector::from_vec(vec![1.0, -0.5]);
        let model = TruncatedModel::new(
            w.iter().copied().collect(),
            IntervalUnion::full_line(),
            FeatureDistSpec::standard_gaussian(2),
            &mut rng,
        )
        .unwrap();
        let data = sample_truncated(&model, 2_000, &mut rng).unwrap();
        let b = ball(vec![0.0, 0.0], 3.0);
        let (kappa, floored) = estimate_kappa(
            &w,
            &b,
            &IntervalUnion::full_line(),
            &data,
            10,
            &mut rng,
        )
        .unwrap();
        let (lo, _) = warm_start::eigen_range(&warm_start::second_moment(&data));
        assert!(!floored);
        assert!((kappa - lo).abs() < 1e-10);
    }

    #[test]
    fn kappa_floor_engages_for_far_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        let xs = vec![DVector::from_vec(vec![1e-8]); 10];
        let ys = vec![30.0; 10];
        let data = Dataset::new(xs, ys).unwrap();
        let set = IntervalUnion::interval(25.0, 35.0).unwrap();
        let b = ball(vec![0.0], 1.0);
        let (kappa, floored) = estimate_kappa(
            &DVector::zeros(1),
            &b,
            &set,
            &data,
            5,
            &mut rng,
        )
        .unwrap();
        assert!(floored);
        assert_eq!(kappa, KAPPA_FLOOR);
    }
}
