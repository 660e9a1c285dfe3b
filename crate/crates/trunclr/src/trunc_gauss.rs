//! Sampling and closed-form moments of N(mu, 1, S) for S a finite union of
//! intervals. Sampling picks a piece proportionally to its mass and inverts
//! the conditional CDF inside it, so draws are exact in distribution (up to
//! the quantile solver tolerance) and always land in S.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gauss;
use crate::interval::IntervalUnion;

/// Pieces with mass below this underflow to zero at double precision and are
/// dropped from the selection table.
const MIN_PIECE_MASS: f64 = 1e-300;

fn piece_masses(mu: f64, set: &IntervalUnion) -> Result<(Vec<(f64, f64, f64)>, f64)> {
    let mut kept = Vec::with_capacity(set.piece_count());
    let mut total = 0.0;
    for &(lo, hi) in set.pieces() {
        let a = lo - mu;
        let b = hi - mu;
        let m = gauss::mass_std(a, b);
        if m >= MIN_PIECE_MASS {
            kept.push((a, b, m));
            total += m;
        }
    }
    if kept.is_empty() || total <= 0.0 {
        return Err(Error::ZeroMass { mu });
    }
    Ok((kept, total))
}

/// Draw from N(mu, 1, S). `zeta` is the TV budget from the interface
/// contract; the inversion tolerance is min(zeta, 1e-12), so draws are
/// effectively exact.
pub fn sample<R: Rng + ?Sized>(
    mu: f64,
    set: &IntervalUnion,
    _zeta: f64,
    rng: &mut R,
) -> Result<f64> {
    let (pieces, total) = piece_masses(mu, set)?;
    let u: f64 = rng.random::<f64>() * total;
    let mut cum = 0.0;
    let last = pieces.len() - 1;
    for (i, &(a, b, m)) in pieces.iter().enumerate() {
        if u < cum + m || i == last {
            let p = ((u - cum) / m).clamp(0.0, 1.0);
            let z = gauss::interval_quantile(a, b, p);
            return Ok(mu + z);
        }
        cum += m;
    }
    unreachable!("piece selection always terminates on the last piece")
}

/// Mean of N(mu, 1, S).
pub fn trunc_mean(mu: f64, set: &IntervalUnion) -> Result<f64> {
    let (pieces, total) = piece_masses(mu, set)?;
    let mut shift = 0.0;
    for &(a, b, _) in &pieces {
        shift += gauss::pdf(a) - gauss::pdf(b);
    }
    Ok(mu + shift / total)
}

/// Variance of N(mu, 1, S); clamped at zero against cancellation.
pub fn trunc_var(mu: f64, set: &IntervalUnion) -> Result<f64> {
    let (pieces, total) = piece_masses(mu, set)?;
    let mut shift = 0.0;
    let mut second = 0.0;
    for &(a, b, m) in &pieces {
        let pa = gauss::pdf(a);
        let pb = gauss::pdf(b);
        shift += pa - pb;
        // Integral of t^2 phi(t) over (a, b); t*phi(t) -> 0 at +-inf.
        let ta = if a.is_finite() { a * pa } else { 0.0 };
        let tb = if b.is_finite() { b * pb } else { 0.0 };
        second += m + ta - tb;
    }
    let mean_shift = shift / total;
    Ok((second / total - mean_shift * mean_shift).max(0.0))
}
