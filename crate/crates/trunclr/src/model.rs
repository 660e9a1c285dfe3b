//! Generative truncated-regression model: sample features, responses, and
//! apply truncation by rejection.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::IntervalUnion;

/// Default cap on rejection attempts for a single sample.
pub const DEFAULT_REJECTION_CAP: u64 = 1_000_000;
/// Monte Carlo draws used for the construction-time survival-mass check.
const ALPHA_CHECK_DRAWS: usize = 10_000;
/// Construction fails if the estimated survival mass is below this.
const ALPHA_FLOOR: f64 = 1e-4;

/// Feature distribution specification.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureDistSpec {
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    UniformBall {
        radius: f64,
        dim: usize,
    },
    /// Uniform over the standard basis vectors of R^d.
    SimplexVertices {
        dim: usize,
    },
}

impl FeatureDistSpec {
    pub fn dim(&self) -> usize {
        match self {
            FeatureDistSpec::Gaussian { mean, .. } => mean.len(),
            FeatureDistSpec::UniformBall { dim, .. } => *dim,
            FeatureDistSpec::SimplexVertices { dim } => *dim,
        }
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        let mut cov = vec![vec![0.0; dim]; dim];
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        FeatureDistSpec::Gaussian {
            mean: vec![0.0; dim],
            covariance: cov,
        }
    }
}

/// Validated feature sampler built from a spec (Cholesky factor cached for
/// the Gaussian case).
#[derive(Clone, Debug)]
pub struct FeatureSampler {
    spec: FeatureDistSpec,
    dim: usize,
    chol: Option<(DVector<f64>, DMatrix<f64>)>,
}

impl FeatureSampler {
    pub fn new(spec: FeatureDistSpec) -> Result<Self> {
        let dim = spec.dim();
        if dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        let chol = match &spec {
            FeatureDistSpec::Gaussian { mean, covariance } => {
                if covariance.len() != dim || covariance.iter().any(|r| r.len() != dim) {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: covariance.len(),
                    });
                }
                let cov = DMatrix::from_fn(dim, dim, |i, j| covariance[i][j]);
                if (&cov - cov.transpose()).amax() > 1e-10 {
                    return Err(Error::Config("covariance must be symmetric".into()));
                }
                let factor = cov.clone().cholesky().ok_or_else(|| {
                    let min_eig = cov
                        .symmetric_eigenvalues()
                        .iter()
                        .cloned()
                        .fold(f64::INFINITY, f64::min);
                    Error::NotPsd { min_eig }
                })?;
                Some((DVector::from_vec(mean.clone()), factor.l()))
            }
            FeatureDistSpec::UniformBall { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("ball radius must be positive".into()));
                }
                None
            }
            FeatureDistSpec::SimplexVertices { .. } => None,
        };
        Ok(FeatureSampler { spec, dim, chol })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &FeatureDistSpec {
        &self.spec
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match &self.spec {
            FeatureDistSpec::Gaussian { .. } => {
                let (mean, l) = self.chol.as_ref().unwrap();
                let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
                mean + l * z
            }
            FeatureDistSpec::UniformBall { radius, dim } => {
                let z = DVector::from_fn(*dim, |_, _| {
                    let v: f64 = StandardNormal.sample(rng);
                    v
                });
                let norm = z.norm();
                let u: f64 = rng.random::<f64>();
                let r = radius * u.powf(1.0 / *dim as f64);
                if norm == 0.0 {
                    DVector::zeros(*dim)
                } else {
                    z * (r / norm)
                }
            }
            FeatureDistSpec::SimplexVertices { dim } => {
                let i = rng.random_range(0..*dim);
                let mut x = DVector::zeros(*dim);
                x[i] = 1.0;
                x
            }
        }
    }
}

/// Truncated linear regression model: w*, survival set S*, feature law D,
/// unit noise variance.
#[derive(Clone, Debug)]
pub struct TruncatedModel {
    w_star: DVector<f64>,
    survival_set: IntervalUnion,
    features: FeatureSampler,
    rejection_cap: u64,
    alpha_hat: f64,
}

impl TruncatedModel {
    /// Build and validate a model. The survival mass is estimated by Monte
    /// Carlo at construction and must exceed 1e-4.
    pub fn new<R: Rng + ?Sized>(
        w_star: Vec<f64>,
        survival_set: IntervalUnion,
        features: FeatureDistSpec,
        rng: &mut R,
    ) -> Result<Self> {
        let sampler = FeatureSampler::new(features)?;
        if w_star.len() != sampler.dim() {
            return Err(Error::DimensionMismatch {
                expected: sampler.dim(),
                got: w_star.len(),
            });
        }
        if survival_set.is_empty() {
            return Err(Error::EmptySurvivalSet);
        }
        let mut model = TruncatedModel {
            w_star: DVector::from_vec(w_star),
            survival_set,
            features: sampler,
            rejection_cap: DEFAULT_REJECTION_CAP,
            alpha_hat: 1.0,
        };
        let (alpha_hat, _) = model.estimate_alpha(ALPHA_CHECK_DRAWS, rng);
        if alpha_hat <= ALPHA_FLOOR {
            return Err(Error::AlphaTooSmall {
                alpha_hat,
                min: ALPHA_FLOOR,
            });
        }
        model.alpha_hat = alpha_hat;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn w_star(&self) -> &DVector<f64> {
        &self.w_star
    }

    pub fn survival_set(&self) -> &IntervalUnion {
        &self.survival_set
    }

    pub fn features(&self) -> &FeatureSampler {
        &self.features
    }

    /// Survival-mass estimate from the construction-time check.
    pub fn alpha_hat(&self) -> f64 {
        self.alpha_hat
    }

    pub fn with_rejection_cap(mut self, cap: u64) -> Self {
        self.rejection_cap = cap;
        self
    }

    /// One observed pair via the rejection loop, along with the number of
    /// attempts it took.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DVector<f64>, f64, u64)> {
        for attempt in 1..=self.rejection_cap {
            let x = self.features.sample(rng);
            let noise: f64 = StandardNormal.sample(rng);
            let y = self.w_star.dot(&x) + noise;
            if self.survival_set.contains(y)? {
                return Ok((x, y, attempt));
            }
        }
        Err(Error::TruncationTooSevere {
            cap: self.rejection_cap,
        })
    }

    /// Monte Carlo estimate of E_{x~D}[p(x, w*, S*)] with its standard error.
    pub fn estimate_alpha<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> (f64, f64) {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..m {
            let x = self.features.sample(rng);
            let p = survival_probability(&x, &self.w_star, &self.survival_set);
            sum += p;
            sum_sq += p * p;
        }
        let mean = sum / m as f64;
        let var = (sum_sq / m as f64 - mean * mean).max(0.0);
        (mean, (var / m as f64).sqrt())
    }
}

/// p(x, w; S) = N(S; <w, x>, 1).
pub fn survival_probability(x: &DVector<f64>, w: &DVector<f64>, set: &IntervalUnion) -> f64 {
    set.gaussian_mass(w.dot(x))
}

/// Observed samples: feature vectors with responses.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    xs: Vec<DVector<f64>>,
    ys: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(xs: Vec<DVector<f64>>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InsufficientSamples {
                needed: 1,
                got: xs.len().min(ys.len()),
            });
        }
        let dim = xs[0].len();
        for x in &xs {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("non-finite feature value".into()));
            }
        }
        if ys.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite response value".into()));
        }
        Ok(Dataset { xs, ys, dim })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn xs(&self) -> &[DVector<f64>] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn pair(&self, i: usize) -> (&DVector<f64>, f64) {
        (&self.xs[i], self.ys[i])
    }

    /// CSV with header `x1,...,xd,y`; values formatted with Rust's shortest
    /// round-trip representation.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (1..=self.dim)
            .map(|i| format!("x{i}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        writeln!(file, "{}", header.join(","))?;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            row.push(format!("{y}"));
            writeln!(file, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let headers = reader.headers()?.clone();
        let cols = headers.len();
        if cols < 2 || headers.get(cols - 1) != Some("y") {
            return Err(Error::Schema {
                line: 1,
                message: "last column must be `y`".into(),
            });
        }
        for (i, name) in headers.iter().take(cols - 1).enumerate() {
            let expect = format!("x{}", i + 1);
            if name != expect {
                return Err(Error::Schema {
                    line: 1,
                    message: format!("expected column `{expect}`, found `{name}`"),
                });
            }
        }
        let dim = cols - 1;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record?;
            if record.len() != cols {
                return Err(Error::Schema {
                    line,
                    message: format!("expected {cols} fields, found {}", record.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Schema {
                    line,
                    message: format!("cannot parse `{s}` as a number"),
                })
            };
            let mut x = DVector::zeros(dim);
            for j in 0..dim {
                x[j] = parse(&record[j])?;
            }
            xs.push(x);
            ys.push(parse(&record[dim])?);
        }
        Dataset::new(xs, ys)
    }
}

/// Draw n observed pairs from the model.
pub fn sample_truncated<R: Rng + ?Sized>(
    model: &TruncatedModel,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y, _) = model.sample_pair(rng)?;
        xs.push(x);
        ys.push(y);
    }
    Dataset::new(xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn half_line_model(rng: &mut ChaCha8Rng) -> TruncatedModel {
        TruncatedModel::new(
            vec![0.0],
            IntervalUnion::interval(0.0, f64::INFINITY).unwrap(),
            FeatureDistSpec::standard_gaussian(1),
            rng,
        )
        .unwrap()
    }

    #[test]
    fn untruncated_acceptance_rate_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = TruncatedModel::new(
            vec![1.0, -0.5],
            IntervalUnion::full_line(),
            FeatureDistSpec::standard_gaussian(2),
            &mut rng,
        )
        .unwrap();
        for _ in 0..100 {
            let (_, _, attempts) = model.sample_pair(&mut rng).unwrap();
            assert_eq!(attempts, 1);
        }
        let (alpha, _) = model.estimate_alpha(100, &mut rng);
        assert_eq!(alpha, 1.0);
    }

    #[test]
    fn half_normal_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = half_line_model(&mut rng);
        let data = sample_truncated(&model, 100_000, &mut rng).unwrap();
        assert!(data.ys().iter().all(|&y| y >= 0.0));
        let mean: f64 = data.ys().iter().sum::<f64>() / data.len() as f64;
        let expect = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - expect).abs() < 0.01, "mean={mean}");
    }

    #[test]
    fn alpha_estimate_half_line_with_slope() {
        // d=1, D=N(0,1), w*=1, S*=[0,inf): y ~ N(0,2), so alpha = 0.5.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = TruncatedModel::new(
            vec![1.0],
            IntervalUnion::interval(0.0, f64::INFINITY).unwrap(),
            FeatureDistSpec::standard_gaussian(1),
            &mut rng,
        )
        .unwrap();
        let (alpha, se) = model.estimate_alpha(10_000, &mut rng);
        assert!((alpha - 0.5).abs() < 3.0 * se.max(1e-3), "alpha={alpha}");
    }

    #[test]
    fn determinism_same_seed_same_dataset() {
        let mut rng1 = ChaCha8Rng::seed_from_u64(9);
        let model1 = half_line_model(&mut rng1);
        let d1 = sample_truncated(&model1, 500, &mut rng1).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        let model2 = half_line_model(&mut rng2);
        let d2 = sample_truncated(&model2, 500, &mut rng2).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn rejection_cap_fires() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Mass ~ 1.3e-4 > construction floor, but a cap of 10 attempts
        // almost surely trips.
        let model = TruncatedModel::new(
            vec![0.0],
            IntervalUnion::interval(3.65, f64::INFINITY).unwrap(),
            FeatureDistSpec::standard_gaussian(1),
            &mut rng,
        )
        .unwrap()
        .with_rejection_cap(10);
        assert!(matches!(
            model.sample_pair(&mut rng),
            Err(Error::TruncationTooSevere { cap: 10 })
        ));
    }

    #[test]
    fn construction_rejects_vanishing_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let err = TruncatedModel::new(
            vec![0.0],
            IntervalUnion::interval(8.0, 9.0).unwrap(),
            FeatureDistSpec::standard_gaussian(1),
            &mut rng,
        );
        assert!(matches!(err, Err(Error::AlphaTooSmall { .. })));
    }

    #[test]
    fn non_psd_covariance_reports_min_eig() {
        let spec = FeatureDistSpec::Gaussian {
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        match FeatureSampler::new(spec) {
            Err(Error::NotPsd { min_eig }) => assert!((min_eig + 1.0).abs() < 1e-9),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = half_line_model(&mut rng);
        let data = sample_truncated(&model, 200, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        data.save_csv(&path).unwrap();
        let back = Dataset::load_csv(&path).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn csv_schema_errors_name_the_problem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,z\n1.0,2.0\n").unwrap();
        match Dataset::load_csv(&path) {
            Err(Error::Schema { line: 1, message }) => assert!(message.contains("`y`")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }
}
