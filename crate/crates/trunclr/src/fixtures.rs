//! Shared test fixtures: the non-identifiable basis-vector model pair, a
//! deterministic walkthrough instance for the greedy interval learner, and
//! the seeded "desk" model family the suite exercises end to end.

use nalgebra::DVector;
use rand::Rng;

use crate::error::Result;
use crate::interval::IntervalUnion;
use crate::model::{FeatureDistSpec, TruncatedModel};

/// Two models over uniform basis-vector features with survival set [-1, 1]
/// and weights ±B·e_1. For large B the observed laws are statistically
/// indistinguishable (the first vertex essentially never survives), so no
/// estimator can tell them apart — the suite uses this as a negative
/// control for the identifiability diagnostic.
pub fn basis_vector_pair<R: Rng + ?Sized>(
    b: f64,
    d: usize,
    rng: &mut R,
) -> Result<(TruncatedModel, TruncatedModel)> {
    assert!(b > 1.0 && d >= 2, "need B > 1 and d >= 2");
    let set = IntervalUnion::interval(-1.0, 1.0)?;
    let mut w = DVector::zeros(d);
    w[0] = b;
    let plus = TruncatedModel::new(
        w.iter().copied().collect(),
        set.clone(),
        FeatureDistSpec::SimplexVertices { dim: d },
        rng,
    )?;
    let minus = TruncatedModel::new(
        (-w).iter().copied().collect(),
        set,
        FeatureDistSpec::SimplexVertices { dim: d },
        rng,
    )?;
    Ok((plus, minus))
}

/// Survival probability of the first vertex for the pair above:
/// N(B, 1; [-1, 1]) <= exp(-(B-1)^2 / 2).
pub fn basis_vector_first_vertex_mass(b: f64) -> f64 {
    IntervalUnion::interval(-1.0, 1.0).unwrap().gaussian_mass(b)
}

/// Deterministic walkthrough for the greedy interval learner: k = 2,
/// eps = 0.2, so exactly 5 gaps get discarded. Two clusters of positives
/// with plenty of unlabeled points strewn between and around them.
pub fn greedy_walkthrough() -> (Vec<f64>, Vec<f64>, usize, f64, usize) {
    let positives: Vec<f64> = (0..10)
        .map(|i| 0.1 * i as f64)
        .chain((0..10).map(|i| 3.0 + 0.1 * i as f64))
        .collect();
    let unlabeled: Vec<f64> = (0..20).map(|i| -0.5 + 0.23 * i as f64).collect();
    (positives, unlabeled, 2, 0.2, 5)
}

/// Pinned synthetic family used across the suite: d = 5 standard Gaussian
/// features, ||w*|| = 2, survival set [-0.8, 0.6] u [1.8, 3.2] (about 38%
/// acceptance, asymmetric enough that plain least squares is visibly
/// biased).
pub fn desk_w_star() -> DVector<f64> {
    let v = DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0, 1.0]);
    let n = v.norm();
    v * (2.0 / n)
}

pub fn desk_survival_set() -> IntervalUnion {
    IntervalUnion::normalize(&[(-0.8, 0.6), (1.8, 3.2)]).unwrap()
}

pub fn desk_model<R: Rng + ?Sized>(rng: &mut R) -> Result<TruncatedModel> {
    TruncatedModel::new(
        desk_w_star().iter().copied().collect(),
        desk_survival_set(),
        FeatureDistSpec::standard_gaussian(5),
        rng,
    )
}
