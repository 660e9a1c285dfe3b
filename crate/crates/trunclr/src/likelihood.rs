//! The perturbed negative log-likelihood over a candidate survival set S:
//! empirical value, plug-in gradient/Hessian over observed data, and the
//! single-sample stochastic gradient used by the SGD phase.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::interval::IntervalUnion;
use crate::model::{Dataset, TruncatedModel};
use crate::trunc_gauss;

/// One stochastic gradient, with the sampling work it took to produce it.
#[derive(Debug, Clone)]
pub struct GradSample {
    pub g: DVector<f64>,
    pub attempts: u64,
}

/// Source of (x, y) pairs for the stochastic gradient. Either a live
/// generative model or bootstrap resampling from a fixed dataset, so the
/// optimizer can run identically on synthetic and file-backed inputs.
pub trait SampleSource {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DVector<f64>, f64, u64)>;
}

pub struct ModelStream<'a> {
    pub model: &'a TruncatedModel,
}

impl SampleSource for ModelStream<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DVector<f64>, f64, u64)> {
        self.model.sample_pair(rng)
    }
}

pub struct ResampleStream<'a> {
    pub data: &'a Dataset,
}

impl SampleSource for ResampleStream<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DVector<f64>, f64, u64)> {
        if self.data.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let i = rng.random_range(0..self.data.len());
        let (x, y) = self.data.pair(i);
        Ok((x.clone(), y, 1))
    }
}

/// Single stochastic gradient: with independent pairs (x̂, ŷ) and (x̃, _),
/// g = z̃·x̃ − ŷ·x̂ where z̃ ~ N(⟨w, x̃⟩, 1) conditioned on S. Unbiased up to
/// the mismatch between S and the true survival set.
pub fn gradient_sample<Src: SampleSource, R: Rng + ?Sized>(
    w: &DVector<f64>,
    set: &IntervalUnion,
    zeta: f64,
    source: &Src,
    rng: &mut R,
) -> Result<GradSample> {
    let (x_hat, y_hat, a1) = source.draw(rng)?;
    let (x_tilde, _y_tilde, a2) = source.draw(rng)?;
    let mu = w.dot(&x_tilde);
    let z = trunc_gauss::sample(mu, set, zeta, rng)?;
    let g = &x_tilde * z - &x_hat * y_hat;
    Ok(GradSample { g, attempts: a1 + a2 })
}

/// Indices of samples whose response lies in S.
fn surviving_indices(set: &IntervalUnion, data: &Dataset) -> Result<Vec<usize>> {
    let mut idx = Vec::new();
    for (i, &y) in data.ys().iter().enumerate() {
        if set.contains(y)? {
            idx.push(i);
        }
    }
    if idx.is_empty() {
        return Err(Error::NoSurvivingSamples);
    }
    Ok(idx)
}

/// Fold `per_sample` over the surviving samples, additionally dropping any
/// whose survival mass underflows at this w (their conditional law is not
/// representable; they carry vanishing curvature anyway). Errors if nothing
/// remains.
fn mean_over_usable<T>(
    set: &IntervalUnion,
    data: &Dataset,
    mut per_sample: impl FnMut(&DVector<f64>, f64) -> Result<T>,
    mut fold: impl FnMut(T),
) -> Result<usize> {
    let idx = surviving_indices(set, data)?;
    let mut used = 0usize;
    for &i in &idx {
        let (x, y) = data.pair(i);
        match per_sample(x, y) {
            Ok(v) => {
                fold(v);
                used += 1;
            }
            Err(Error::ZeroMass { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::NoSurvivingSamples);
    }
    Ok(used)
}

/// Plug-in gradient of the perturbed NLL over the samples with y ∈ S:
/// mean of trunc_mean(⟨w,x⟩, S)·x − y·x. Conditioning on y ∈ S realizes the
/// population formula's restriction to the effective survival region, since
/// each observed y|x is already truncated to the true set.
pub fn population_gradient(
    w: &DVector<f64>,
    set: &IntervalUnion,
    data: &Dataset,
) -> Result<DVector<f64>> {
    let mut acc = DVector::zeros(data.dim());
    let used = mean_over_usable(
        set,
        data,
        |x, y| trunc_gauss::trunc_mean(w.dot(x), set).map(|m| x * (m - y)),
        |term| acc += term,
    )?;
    Ok(acc / used as f64)
}

/// Plug-in Hessian: mean of trunc_var(⟨w,x⟩, S) · x xᵀ over surviving
/// samples. PSD as a nonnegative combination of rank-one terms.
pub fn population_hessian(
    w: &DVector<f64>,
    set: &IntervalUnion,
    data: &Dataset,
) -> Result<DMatrix<f64>> {
    let d = data.dim();
    let mut acc = DMatrix::zeros(d, d);
    let used = mean_over_usable(
        set,
        data,
        |x, _y| trunc_gauss::trunc_var(w.dot(x), set).map(|v| (x.clone(), v)),
        |(x, v)| acc.syger(v, &x, &x, 1.0),
    )?;
    acc /= used as f64;
    acc.fill_upper_triangle_with_lower_triangle();
    Ok(acc)
}

/// Empirical perturbed NLL over samples with y ∈ S:
/// mean of (y − ⟨w,x⟩)²/2 + log N(S; ⟨w,x⟩, 1), dropping the ½log(2π)
/// constant (gradients are unaffected).
pub fn perturbed_nll(w: &DVector<f64>, set: &IntervalUnion, data: &Dataset) -> Result<f64> {
    let mut acc = 0.0;
    let used = mean_over_usable(
        set,
        data,
        |x, y| {
            let mu = w.dot(x);
            let mass = set.gaussian_mass(mu);
            if mass <= 0.0 {
                return Err(Error::ZeroMass { mu });
            }
            Ok(0.5 * (y - mu) * (y - mu) + mass.ln())
        },
        |term| acc += term,
    )?;
    Ok(acc / used as f64)
}
