//! Learning the survival set from positive samples plus a smooth reference
//! sample: sort the positives, count reference points in each consecutive
//! gap, and discard the gaps holding the most. A brute-force pessimistic ERM
//! over all gap subsets is provided for test-oracle use at small scale.

use itertools::Itertools;
use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::interval::IntervalUnion;
use crate::model::Dataset;

/// Number of gaps the greedy learner discards: ceil((k-1)/eps).
pub fn discard_count(k: usize, eps: f64) -> usize {
    ((k as f64 - 1.0) / eps).ceil() as usize
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Count, for each consecutive gap (y_i, y_{i+1}) of the sorted positives,
/// how many unlabeled points fall strictly inside it.
fn gap_counts(positives_sorted: &[f64], unlabeled_sorted: &[f64]) -> Vec<usize> {
    let n = positives_sorted.len();
    let mut counts = vec![0usize; n - 1];
    let mut j = 0;
    // Skip unlabeled points below the first positive.
    while j < unlabeled_sorted.len() && unlabeled_sorted[j] <= positives_sorted[0] {
        j += 1;
    }
    for i in 0..n - 1 {
        let hi = positives_sorted[i + 1];
        while j < unlabeled_sorted.len() && unlabeled_sorted[j] < hi {
            counts[i] += 1;
            j += 1;
        }
        // Points equal to the gap's upper positive belong to no open gap.
        while j < unlabeled_sorted.len() && unlabeled_sorted[j] == hi {
            j += 1;
        }
    }
    counts
}

/// Assemble [y_1, y_n] minus the discarded open gaps. A retained run that
/// collapses to a single positive is widened by one ulp on each side so it
/// stays representable and keeps that positive covered.
fn assemble(positives_sorted: &[f64], discarded: &[bool]) -> Result<IntervalUnion> {
    let mut pieces = Vec::new();
    let mut start = positives_sorted[0];
    for (i, &gone) in discarded.iter().enumerate() {
        if gone {
            let end = positives_sorted[i];
            if start < end {
                pieces.push((start, end));
            } else {
                pieces.push((start.next_down(), start.next_up()));
            }
            start = positives_sorted[i + 1];
        }
    }
    let end = *positives_sorted.last().unwrap();
    if start < end {
        pieces.push((start, end));
    } else {
        pieces.push((start.next_down(), start.next_up()));
    }
    IntervalUnion::normalize(&pieces)
}

/// Greedy positive-only interval learner. Returns the span of the positives
/// minus the r = ceil((k-1)/eps) consecutive-positive gaps holding the most
/// unlabeled points.
pub fn learn_intervals(
    positives: &[f64],
    unlabeled: &[f64],
    k: usize,
    eps: f64,
) -> Result<IntervalUnion> {
    if positives.len() != unlabeled.len() {
        return Err(Error::Config(format!(
            "positive and unlabeled sample counts must match ({} vs {})",
            positives.len(),
            unlabeled.len()
        )));
    }
    if k == 0 || !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Config(format!(
            "need k >= 1 and 0 < eps < 1/2, got k={k}, eps={eps}"
        )));
    }
    let n = positives.len();
    let r = discard_count(k, eps);
    if n < 2 || r >= n - 1 {
        return Err(Error::InsufficientSamples {
            needed: r + 2,
            got: n,
        });
    }
    let pos = sorted(positives);
    let unl = sorted(unlabeled);
    let counts = gap_counts(&pos, &unl);

    // Rank gaps: most unlabeled points first; ties broken toward the wider
    // gap, then the lower index. Zero-width gaps are never discarded.
    let mut order: Vec<usize> = (0..counts.len())
        .filter(|&i| pos[i + 1] > pos[i])
        .collect();
    order.sort_by(|&i, &j| {
        counts[j]
            .cmp(&counts[i])
            .then_with(|| {
                let wi = pos[i + 1] - pos[i];
                let wj = pos[j + 1] - pos[j];
                wj.partial_cmp(&wi).unwrap()
            })
            .then_with(|| i.cmp(&j))
    });
    let mut discarded = vec![false; counts.len()];
    for &i in order.iter().take(r) {
        discarded[i] = true;
    }
    assemble(&pos, &discarded)
}

/// Brute-force pessimistic ERM: among all unions of k intervals with
/// endpoints in P that cover P, find one covering the fewest points of U.
/// Exhaustive over all C(|P|-1, k-1) discarded-gap choices; test scale only.
pub fn pessimistic_erm_oracle(
    positives: &[f64],
    unlabeled: &[f64],
    k: usize,
) -> Result<IntervalUnion> {
    if positives.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: positives.len(),
        });
    }
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let pos = sorted(positives);
    let unl = sorted(unlabeled);
    let gaps = pos.len() - 1;
    let choose = k - 1;
    let combos = binomial(gaps as u128, choose as u128);
    const CAP: u128 = 10_000_000;
    if combos > CAP {
        return Err(Error::CombinatorialBlowup { count: combos, cap: CAP });
    }
    let counts = gap_counts(&pos, &unl);
    let base: usize = counts.iter().sum();

    let mut best_discard: Option<Vec<usize>> = None;
    let mut best_objective = usize::MAX;
    for combo in (0..gaps).combinations(choose) {
        let removed: usize = combo.iter().map(|&i| counts[i]).sum();
        let objective = base - removed;
        if objective < best_objective {
            best_objective = objective;
            best_discard = Some(combo);
        }
    }
    let combo = best_discard.expect("at least the empty discard set exists");
    let mut discarded = vec![false; gaps];
    for i in combo {
        discarded[i] = true;
    }
    assemble(&pos, &discarded)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Number of unlabeled-style points a set covers (closed endpoints).
pub fn covered_count(set: &IntervalUnion, points: &[f64]) -> usize {
    points
        .iter()
        .filter(|&&p| set.contains(p).unwrap_or(false))
        .count()
}

/// Smooth reference sample: one z = <w_hat, x> + N(0,1) per feature vector.
pub fn make_smooth_samples<R: Rng + ?Sized>(
    xs: &[DVector<f64>],
    w_hat: &DVector<f64>,
    rng: &mut R,
) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let noise: f64 = StandardNormal.sample(rng);
            w_hat.dot(x) + noise
        })
        .collect()
}

/// Default window: 1.5 times the largest observed |y|.
pub fn default_window(ys: &[f64]) -> f64 {
    1.5 * ys.iter().fold(0.0f64, |m, &y| m.max(y.abs())).max(1e-9)
}

/// Phase I end to end: greedy learning on (responses, smooth reference),
/// clipped to [-L, L].
pub fn learn_survival_set<R: Rng + ?Sized>(
    data: &Dataset,
    w_hat: &DVector<f64>,
    k: usize,
    eps: f64,
    window: Option<f64>,
    rng: &mut R,
) -> Result<IntervalUnion> {
    let smooth = make_smooth_samples(data.xs(), w_hat, rng);
    let learned = learn_intervals(data.ys(), &smooth, k, eps)?;
    let l = window.unwrap_or_else(|| default_window(data.ys()));
    let clipped = learned.clip(l)?;
    if clipped.is_empty() {
        return Err(Error::DegenerateWindow);
    }
    Ok(clipped)
}
