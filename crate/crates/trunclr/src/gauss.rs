//! Scalar standard-normal primitives shared by the interval-mass and
//! truncated-sampling code. All tail quantities go through `erfc` on the
//! smaller tail so masses stay accurate down to the double-precision
//! underflow boundary (|t| around 38).

use std::f64::consts::{PI, SQRT_2};

/// Standard normal density.
#[inline]
pub fn pdf(z: f64) -> f64 {
    if !z.is_finite() || z.abs() > 40.0 {
        return 0.0;
    }
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
#[inline]
pub fn cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal survival function, 1 - cdf(z), accurate in the upper tail.
#[inline]
pub fn sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// P(a < Z < b) for a standard normal Z, stable in both tails.
pub fn mass_std(a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let m = if a >= 0.0 {
        0.5 * (libm::erfc(a / SQRT_2) - libm::erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b / SQRT_2) - libm::erfc(-a / SQRT_2))
    } else {
        0.5 * (libm::erf(b / SQRT_2) - libm::erf(a / SQRT_2))
    };
    m.clamp(0.0, 1.0)
}

/// Inverse standard normal CDF (Acklam's rational approximation, ~1e-9
/// relative; callers refine by Newton where more accuracy is needed).
pub fn ppf(p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -ppf(1.0 - p)
    }
}

/// Largest |z| we ever need to resolve; beyond this every mass underflows.
pub const Z_MAX: f64 = 39.0;

/// Quantile of Z conditioned on Z in (a, b): returns z with
/// P(a < Z < z) = p * P(a < Z < b). Requires the conditioning mass to be
/// representable (> 0 at double precision).
pub fn interval_quantile(a: f64, b: f64, p: f64) -> f64 {
    let lo = a.max(-Z_MAX);
    let hi = b.min(Z_MAX);
    let total = mass_std(lo, hi);
    debug_assert!(total > 0.0, "interval_quantile on a zero-mass piece");
    if p <= 0.0 {
        return lo;
    }
    if p >= 1.0 {
        return hi;
    }
    let target = p * total;

    // Initial guess from the rational inverse CDF where the arithmetic is
    // well-conditioned, otherwise the bracket midpoint.
    let c_lo = cdf(lo);
    let guess = {
        let t = c_lo + target;
        if t > 1e-12 && t < 1.0 - 1e-12 {
            ppf(t)
        } else {
            0.5 * (lo + hi)
        }
    };

    // Safeguarded Newton on f(z) = mass_std(lo, z) - target; f' = pdf.
    let mut bl = lo;
    let mut bh = hi;
    let mut z = guess.clamp(lo, hi);
    for _ in 0..128 {
        let f = mass_std(lo, z) - target;
        if f > 0.0 {
            bh = z;
        } else {
            bl = z;
        }
        let d = pdf(z);
        let step = if d > 0.0 { -f / d } else { 0.0 };
        let mut next = z + step;
        if !(next > bl && next < bh) || step == 0.0 {
            next = 0.5 * (bl + bh);
        }
        if (next - z).abs() <= 1e-14 * (1.0 + z.abs()) {
            return next;
        }
        z = next;
    }
    z
}
