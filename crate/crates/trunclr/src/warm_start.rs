//! OLS-ignoring-truncation warm start and the projection ball the PSGD
//! phase is confined to.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Relative eigenvalue threshold below which the design counts as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-10;

/// Euclidean ball defining the PSGD feasible region.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProjectionBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl ProjectionBall {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("ball center must be finite".into()));
        }
        Ok(ProjectionBall {
            center: center.as_slice().to_vec(),
            radius,
        })
    }

    pub fn center_vec(&self) -> DVector<f64> {
        DVector::from_vec(self.center.clone())
    }

    pub fn contains(&self, w: &DVector<f64>) -> bool {
        (w - self.center_vec()).norm() <= self.radius * (1.0 + 1e-12)
    }

    /// Euclidean projection onto the closed ball.
    pub fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        let c = self.center_vec();
        let diff = w - &c;
        let norm = diff.norm();
        if norm <= self.radius {
            w.clone()
        } else {
            c + diff * (self.radius / norm)
        }
    }

    /// Uniform draw from the ball.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.center.len();
        let z = DVector::from_fn(d, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            v
        });
        let norm = z.norm();
        if norm == 0.0 {
            return self.center_vec();
        }
        let u: f64 = rng.random::<f64>();
        let r = self.radius * u.powf(1.0 / d as f64);
        self.center_vec() + z * (r / norm)
    }
}

/// Empirical second-moment matrix sum x x^T / n.
pub fn second_moment(data: &Dataset) -> DMatrix<f64> {
    let d = data.dim();
    let mut m = DMatrix::zeros(d, d);
    for x in data.xs() {
        m.syger(1.0, x, x, 1.0);
    }
    // syger fills the lower triangle; mirror it.
    for i in 0..d {
        for j in (i + 1)..d {
            m[(i, j)] = m[(j, i)];
        }
    }
    m / data.len() as f64
}

/// Min and max eigenvalues of a symmetric matrix.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eigs = m.symmetric_eigenvalues();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &e in eigs.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    (lo, hi)
}

/// Ordinary least squares ignoring truncation:
/// (sum x x^T / n)^{-1} (sum y x / n), via Cholesky.
pub fn ols_estimate(data: &Dataset) -> Result<DVector<f64>> {
    let d = data.dim();
    if data.len() < d {
        return Err(Error::InsufficientSamples {
            needed: d,
            got: data.len(),
        });
    }
    let a = second_moment(data);
    let (min_eig, max_eig) = eigen_range(&a);
    if min_eig <= SINGULAR_THRESHOLD * max_eig.max(1.0) {
        return Err(Error::SingularDesign {
            min_eig,
            threshold: SINGULAR_THRESHOLD,
        });
    }
    let mut b = DVector::zeros(d);
    for (x, &y) in data.xs().iter().zip(data.ys()) {
        b.axpy(y, x, 1.0);
    }
    b /= data.len() as f64;
    let chol = a.clone().cholesky().ok_or(Error::SingularDesign {
        min_eig,
        threshold: SINGULAR_THRESHOLD,
    })?;
    let w = chol.solve(&b);
    let residual = (&a * &w - &b).norm();
    debug_assert!(residual <= 1e-8 * b.norm().max(1e-30), "solver residual {residual}");
    Ok(w)
}

/// Least-squares warm start through a pseudo-inverse, for near-singular
/// designs where `ols_estimate` refuses; components along eigendirections
/// below the threshold are zeroed.
pub fn ols_pseudo_inverse(data: &Dataset) -> DVector<f64> {
    let a = second_moment(data);
    let d = data.dim();
    let mut b = DVector::zeros(d);
    for (x, &y) in data.xs().iter().zip(data.ys()) {
        b.axpy(y, x, 1.0);
    }
    b /= data.len() as f64;
    let eig = nalgebra::SymmetricEigen::new(a);
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = SINGULAR_THRESHOLD * max_eig.max(1.0);
    let mut w = DVector::zeros(d);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let v = eig.eigenvectors.column(i);
            w.axpy(v.dot(&b) / lambda, &v.clone_owned(), 1.0);
        }
    }
    w
}

/// Plug-in estimates of the distributional constants the method's guarantees
/// are stated in terms of; estimated from the observed sample.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PlugInConstants {
    /// Max directional standard deviation of the observed features.
    pub sigma: f64,
    /// Norm of the observed feature mean.
    pub beta: f64,
    /// Min eigenvalue of the empirical second moment.
    pub rho_sq: f64,
    /// Survival mass lower bound (user-supplied or from synthetic truth).
    pub alpha: f64,
}

impl PlugInConstants {
    /// Estimate sigma, beta, rho^2 from the observed sample; alpha is
    /// supplied by the caller (config override or synthetic ground truth).
    pub fn estimate<R: Rng + ?Sized>(data: &Dataset, alpha: f64, rng: &mut R) -> Self {
        let d = data.dim();
        let n = data.len() as f64;
        let mut mean = DVector::zeros(d);
        for x in data.xs() {
            mean.axpy(1.0, x, 1.0);
        }
        mean /= n;
        let sm = second_moment(data);
        let (rho_sq, _) = eigen_range(&sm);
        // Directional stds over coordinate axes plus random directions.
        let mut dirs: Vec<DVector<f64>> = (0..d)
            .map(|i| {
                let mut e = DVector::zeros(d);
                e[i] = 1.0;
                e
            })
            .collect();
        for _ in 0..50 {
            let z = DVector::from_fn(d, |_, _| {
                let v: f64 = StandardNormal.sample(rng);
                v
            });
            let norm = z.norm();
            if norm > 0.0 {
                dirs.push(z / norm);
            }
        }
        let mut sigma: f64 = 0.0;
        for v in &dirs {
            let proj_mean = v.dot(&mean);
            let second = (v.transpose() * &sm * v)[(0, 0)];
            sigma = sigma.max((second - proj_mean * proj_mean).max(0.0).sqrt());
        }
        PlugInConstants {
            sigma,
            beta: mean.norm(),
            rho_sq: rho_sq.max(0.0),
            alpha,
        }
    }

    /// Default projection-ball radius c_ball * (sigma + beta) / (rho^2 alpha).
    pub fn ball_radius(&self, c_ball: f64) -> f64 {
        c_ball * (self.sigma + self.beta) / (self.rho_sq.max(1e-12) * self.alpha.max(1e-12))
    }
}
