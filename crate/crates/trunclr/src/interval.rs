//! Canonical finite unions of intervals on the real line, with Gaussian
//! mass computation. Endpoints may be infinite; finite endpoints are treated
//! as closed for membership. Touching pieces are merged so every value has a
//! unique representation.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gauss;

/// Finite union of disjoint intervals, sorted by lower endpoint, with
/// positive gaps between consecutive pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalUnion {
    pieces: Vec<(f64, f64)>,
}

/// Kind of pointwise Boolean combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoolOp {
    Union,
    Intersect,
    SymDiff,
}

impl IntervalUnion {
    /// The empty set.
    pub fn empty() -> Self {
        IntervalUnion { pieces: Vec::new() }
    }

    /// The whole real line.
    pub fn full_line() -> Self {
        IntervalUnion {
            pieces: vec![(f64::NEG_INFINITY, f64::INFINITY)],
        }
    }

    /// Canonicalize a raw list of intervals: sort, merge overlapping or
    /// touching pieces, drop empty ones. Rejects NaN endpoints and lo > hi.
    pub fn normalize(raw: &[(f64, f64)]) -> Result<Self> {
        let mut pieces: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for &(lo, hi) in raw {
            if lo.is_nan() || hi.is_nan() {
                return Err(Error::NanEndpoint);
            }
            if lo > hi {
                return Err(Error::InvalidInterval { lo, hi });
            }
            if lo < hi {
                pieces.push((lo, hi));
            }
        }
        pieces.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pieces.len());
        for (lo, hi) in pieces {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Ok(IntervalUnion { pieces: merged })
    }

    /// Convenience constructor for a single interval.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::normalize(&[(lo, hi)])
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Membership with closed finite endpoints.
    pub fn contains(&self, y: f64) -> Result<bool> {
        if y.is_nan() {
            return Err(Error::NanEndpoint);
        }
        let idx = self.pieces.partition_point(|&(lo, _)| lo <= y);
        Ok(idx > 0 && y <= self.pieces[idx - 1].1)
    }

    /// Complement within the real line.
    pub fn complement(&self) -> Self {
        if self.pieces.is_empty() {
            return Self::full_line();
        }
        let mut out = Vec::with_capacity(self.pieces.len() + 1);
        if self.pieces[0].0 > f64::NEG_INFINITY {
            out.push((f64::NEG_INFINITY, self.pieces[0].0));
        }
        for w in self.pieces.windows(2) {
            out.push((w[0].1, w[1].0));
        }
        let last = self.pieces.last().unwrap().1;
        if last < f64::INFINITY {
            out.push((last, f64::INFINITY));
        }
        IntervalUnion { pieces: out }
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut all: Vec<(f64, f64)> = self.pieces.clone();
        all.extend_from_slice(&other.pieces);
        Self::normalize(&all).expect("canonical inputs")
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.pieces.len() && j < other.pieces.len() {
            let (alo, ahi) = self.pieces[i];
            let (blo, bhi) = other.pieces[j];
            let lo = alo.max(blo);
            let hi = ahi.min(bhi);
            if lo < hi {
                out.push((lo, hi));
            }
            if ahi <= bhi {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalUnion { pieces: out }
    }

    /// Set difference self \ other (measure-zero endpoint slivers dropped).
    pub fn difference(&self, other: &Self) -> Self {
        self.intersect(&other.complement())
    }

    pub fn symdiff(&self, other: &Self) -> Self {
        self.difference(other).union(&other.difference(self))
    }

    pub fn boolean_op(kind: BoolOp, a: &Self, b: &Self) -> Self {
        match kind {
            BoolOp::Union => a.union(b),
            BoolOp::Intersect => a.intersect(b),
            BoolOp::SymDiff => a.symdiff(b),
        }
    }

    /// Mass that N(nu, 1) places on this set.
    pub fn gaussian_mass(&self, nu: f64) -> f64 {
        let total: f64 = self
            .pieces
            .iter()
            .map(|&(lo, hi)| gauss::mass_std(lo - nu, hi - nu))
            .sum();
        total.clamp(0.0, 1.0)
    }

    /// Intersection with the window [-L, L].
    pub fn clip(&self, l: f64) -> Result<Self> {
        if !(l > 0.0) {
            return Err(Error::NonPositiveWindow(l));
        }
        Ok(self.intersect(&IntervalUnion {
            pieces: vec![(-l, l)],
        }))
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }
}

// JSON form: list of [lo, hi] pairs, with "-inf"/"inf" strings for
// unbounded endpoints.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EndpointRepr {
    Num(f64),
    Sym(String),
}

fn to_repr(v: f64) -> EndpointRepr {
    if v == f64::INFINITY {
        EndpointRepr::Sym("inf".to_string())
    } else if v == f64::NEG_INFINITY {
        EndpointRepr::Sym("-inf".to_string())
    } else {
        EndpointRepr::Num(v)
    }
}

fn from_repr(r: &EndpointRepr) -> std::result::Result<f64, String> {
    match r {
        EndpointRepr::Num(v) => Ok(*v),
        EndpointRepr::Sym(s) => match s.as_str() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(format!("unknown endpoint sentinel `{other}`")),
        },
    }
}

impl Serialize for IntervalUnion {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr: Vec<[EndpointRepr; 2]> = self
            .pieces
            .iter()
            .map(|&(lo, hi)| [to_repr(lo), to_repr(hi)])
            .collect();
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for IntervalUnion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr: Vec<[EndpointRepr; 2]> = Vec::deserialize(deserializer)?;
        let mut raw = Vec::with_capacity(repr.len());
        for pair in &repr {
            let lo = from_repr(&pair[0]).map_err(D::Error::custom)?;
            let hi = from_repr(&pair[1]).map_err(D::Error::custom)?;
            raw.push((lo, hi));
        }
        IntervalUnion::normalize(&raw).map_err(|e| D::Error::custom(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iu(raw: &[(f64, f64)]) -> IntervalUnion {
        IntervalUnion::normalize(raw).unwrap()
    }

    #[test]
    fn normalize_merges_and_sorts() {
        assert_eq!(iu(&[(0.0, 1.0), (1.0, 2.0)]).pieces(), &[(0.0, 2.0)]);
        assert_eq!(
            iu(&[(3.0, 4.0), (0.0, 1.0)]).pieces(),
            &[(0.0, 1.0), (3.0, 4.0)]
        );
        assert_eq!(
            iu(&[(0.0, 2.0), (1.0, 3.0), (5.0, 5.0)]).pieces(),
            &[(0.0, 3.0)]
        );
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert!(IntervalUnion::normalize(&[(f64::NAN, 1.0)]).is_err());
        assert!(IntervalUnion::normalize(&[(2.0, 1.0)]).is_err());
    }

    #[test]
    fn boolean_examples() {
        let a = iu(&[(0.0, 2.0)]);
        let b = iu(&[(1.0, 3.0)]);
        assert_eq!(a.symdiff(&b).pieces(), &[(0.0, 1.0), (2.0, 3.0)]);
        let c = iu(&[(f64::NEG_INFINITY, 0.0)]);
        let d = iu(&[(-1.0, 1.0)]);
        assert_eq!(c.intersect(&d).pieces(), &[(-1.0, 0.0)]);
        assert_eq!(
            iu(&[(0.0, 1.0)]).union(&IntervalUnion::empty()).pieces(),
            &[(0.0, 1.0)]
        );
    }

    #[test]
    fn contains_examples() {
        let a = iu(&[(0.0, 1.0)]);
        assert!(a.contains(0.5).unwrap());
        assert!(a.contains(1.0).unwrap());
        assert!(a.contains(0.0).unwrap());
        assert!(!a.contains(1.0000001).unwrap());
        assert!(!IntervalUnion::empty().contains(0.0).unwrap());
        assert!(a.contains(f64::NAN).is_err());
    }

    #[test]
    fn gaussian_mass_examples() {
        let a = iu(&[(-1.0, 1.0)]);
        assert!((a.gaussian_mass(0.0) - 0.6827).abs() < 1e-3);
        assert_eq!(IntervalUnion::full_line().gaussian_mass(3.7), 1.0);
        let half = iu(&[(0.0, f64::INFINITY)]);
        assert!((half.gaussian_mass(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clip_examples() {
        let a = iu(&[(-5.0, -3.0), (1.0, 2.0)]);
        assert_eq!(a.clip(2.0).unwrap().pieces(), &[(1.0, 2.0)]);
        assert_eq!(
            IntervalUnion::full_line().clip(1.0).unwrap().pieces(),
            &[(-1.0, 1.0)]
        );
        assert!(IntervalUnion::empty().clip(1.0).unwrap().is_empty());
        assert!(a.clip(0.0).is_err());
        assert!(a.clip(-1.0).is_err());
    }

    #[test]
    fn json_round_trip_with_sentinels() {
        let a = iu(&[(f64::NEG_INFINITY, -2.0), (0.5, f64::INFINITY)]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"[["-inf",-2.0],[0.5,"inf"]]"#);
        let back: IntervalUnion = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
    }

    fn arb_union() -> impl Strategy<Value = IntervalUnion> {
        prop::collection::vec((-10.0f64..10.0, 0.0f64..4.0), 0..6).prop_map(|raw| {
            let pieces: Vec<(f64, f64)> = raw.iter().map(|&(lo, w)| (lo, lo + w)).collect();
            IntervalUnion::normalize(&pieces).unwrap()
        })
    }

    proptest! {
        #[test]
        fn round_trip_canonical(a in arb_union()) {
            let again = IntervalUnion::normalize(a.pieces()).unwrap();
            prop_assert_eq!(again, a);
        }

        #[test]
        fn boolean_laws_pointwise(a in arb_union(), b in arb_union(), y in -12.0f64..12.0) {
            // Skip probes that land exactly on an endpoint (measure zero).
            let on_edge = a.pieces().iter().chain(b.pieces().iter())
                .any(|&(lo, hi)| y == lo || y == hi);
            prop_assume!(!on_edge);
            let ia = a.contains(y).unwrap();
            let ib = b.contains(y).unwrap();
            prop_assert_eq!(a.union(&b).contains(y).unwrap(), ia || ib);
            prop_assert_eq!(a.intersect(&b).contains(y).unwrap(), ia && ib);
            prop_assert_eq!(a.symdiff(&b).contains(y).unwrap(), ia ^ ib);
        }

        #[test]
        fn mass_additive_on_disjoint(a in arb_union(), nu in -3.0f64..3.0) {
            let comp = a.complement();
            let total = a.gaussian_mass(nu) + comp.gaussian_mass(nu);
            prop_assert!((total - 1.0).abs() < 1e-10);
        }
    }
}
