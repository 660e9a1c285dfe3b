//! Kolmogorov–Smirnov tests used by the statistical checks in the suite.

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 Σ (-1)^{j-1} e^{-2 j² λ²}.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64).powi(2) * lambda * lambda).exp();
        if term < 1e-16 {
            break;
        }
        sum += sign * term;
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `samples` against a CDF. Returns (statistic, p-value).
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let xs = sorted(samples);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// Two-sample KS test. Returns (statistic, p-value).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let xa = sorted(a);
    let xb = sorted(b);
    let (na, nb) = (xa.len(), xb.len());
    let mut d = 0.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < na && j < nb {
        let t = xa[i].min(xb[j]);
        while i < na && xa[i] <= t {
            i += 1;
        }
        while j < nb && xb[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na as f64 + nb as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}
