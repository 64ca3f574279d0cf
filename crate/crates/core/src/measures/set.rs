use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{CbiError, Result};

/// A finite union of disjoint half-open intervals `(a, b]` inside `(0, ∞)`.
///
/// The upper endpoint may be `f64::INFINITY`, in which case the interval is
/// open at infinity. Intervals are kept sorted, disjoint, and merged when
/// adjacent, so structural equality coincides with set equality.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct JumpSet {
    intervals: Vec<(f64, f64)>,
}

/// Boolean operation used by [`combine_sets`].
#[derive(Debug, Clone, Copy)]
pub enum SetOp<'a> {
    Union(&'a JumpSet),
    Intersect(&'a JumpSet),
    /// Complement within `(0, ∞)`.
    Complement,
}

pub fn combine_sets(a: &JumpSet, op: SetOp<'_>) -> JumpSet {
    match op {
        SetOp::Union(b) => a.union(b),
        SetOp::Intersect(b) => a.intersect(b),
        SetOp::Complement => a.complement(),
    }
}

impl JumpSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The whole half-line `(0, ∞)`.
    pub fn full() -> Self {
        Self {
            intervals: vec![(0.0, f64::INFINITY)],
        }
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::from_intervals([(a, b)])
    }

    /// Builds a set from arbitrary (possibly overlapping) intervals.
    ///
    /// Each pair must satisfy `0 <= a < b`, with `a` finite.
    pub fn from_intervals<I>(intervals: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut raw = Vec::new();
        for (index, (a, b)) in intervals.into_iter().enumerate() {
            if a.is_nan() || b.is_nan() || !a.is_finite() || a < 0.0 || a >= b {
                return Err(CbiError::InvalidInput(format!(
                    "interval #{index} ({a}, {b}] must satisfy 0 <= a < b with finite a"
                )));
            }
            raw.push((a, b));
        }
        Ok(Self::normalized(raw))
    }

    fn normalized(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(a, b)| a < b);
        raw.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Self { intervals: merged }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, z: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a < z && z <= b)
    }

    pub fn union(&self, other: &JumpSet) -> JumpSet {
        let mut raw = self.intervals.clone();
        raw.extend_from_slice(&other.intervals);
        Self::normalized(raw)
    }

    pub fn intersect(&self, other: &JumpSet) -> JumpSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a1, b1) = self.intervals[i];
            let (a2, b2) = other.intervals[j];
            let lo = a1.max(a2);
            let hi = b1.min(b2);
            if lo < hi {
                out.push((lo, hi));
            }
            if b1 < b2 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::normalized(out)
    }

    pub fn complement(&self) -> JumpSet {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        let mut start = 0.0;
        for &(a, b) in &self.intervals {
            if a > start {
                out.push((start, a));
            }
            start = b;
        }
        if start < f64::INFINITY {
            out.push((start, f64::INFINITY));
        }
        Self { intervals: out }
    }

    pub fn difference(&self, other: &JumpSet) -> JumpSet {
        self.intersect(&other.complement())
    }

    pub fn is_subset_of(&self, other: &JumpSet) -> bool {
        self.difference(other).is_empty()
    }

    /// True when `0` lies in the closure of the set.
    pub fn touches_zero(&self) -> bool {
        self.intervals.first().is_some_and(|&(a, _)| a == 0.0)
    }

    /// Left endpoint of the first interval, if any.
    pub fn infimum(&self) -> Option<f64> {
        self.intervals.first().map(|&(a, _)| a)
    }
}

impl TryFrom<Vec<(f64, f64)>> for JumpSet {
    type Error = CbiError;

    fn try_from(value: Vec<(f64, f64)>) -> Result<Self> {
        Self::from_intervals(value)
    }
}

impl From<JumpSet> for Vec<(f64, f64)> {
    fn from(value: JumpSet) -> Self {
        value.intervals
    }
}

impl fmt::Display for JumpSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return write!(f, "∅");
        }
        for (i, (a, b)) in self.intervals.iter().enumerate() {
            if i > 0 {
                write!(f, " ∪ ")?;
            }
            if b.is_infinite() {
                write!(f, "({a},∞)")?;
            } else {
                write!(f, "({a},{b}]")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(pairs: &[(f64, f64)]) -> JumpSet {
        JumpSet::from_intervals(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn adjacent_intervals_merge() {
        let u = set(&[(0.0, 1.0)]).union(&set(&[(1.0, 2.0)]));
        assert_eq!(u, set(&[(0.0, 2.0)]));
        assert_eq!(u.intervals().len(), 1);
    }

    #[test]
    fn complement_of_middle_interval() {
        let c = set(&[(0.5, 1.5)]).complement();
        assert_eq!(c.intervals(), &[(0.0, 0.5), (1.5, f64::INFINITY)]);
        assert!(c.contains(0.5));
        assert!(!c.contains(1.5));
        assert!(c.contains(1.5000001));
    }

    #[test]
    fn intersection_of_overlapping() {
        assert_eq!(set(&[(0.0, 2.0)]).intersect(&set(&[(1.0, 3.0)])), set(&[(1.0, 2.0)]));
    }

    #[test]
    fn malformed_interval_rejected() {
        assert!(JumpSet::interval(2.0, 1.0).is_err());
        assert!(JumpSet::interval(-1.0, 1.0).is_err());
        assert!(JumpSet::interval(f64::INFINITY, f64::INFINITY).is_err());
    }

    #[test]
    fn full_and_empty() {
        assert_eq!(JumpSet::empty().complement(), JumpSet::full());
        assert!(JumpSet::full().complement().is_empty());
        assert!(JumpSet::full().touches_zero());
        assert!(!set(&[(0.1, 1.0)]).touches_zero());
    }

    #[test]
    fn combine_dispatch() {
        let a = set(&[(0.0, 1.0)]);
        let b = set(&[(1.0, 2.0)]);
        assert_eq!(combine_sets(&a, SetOp::Union(&b)), set(&[(0.0, 2.0)]));
        assert!(combine_sets(&a, SetOp::Intersect(&b)).is_empty());
        assert_eq!(combine_sets(&a, SetOp::Complement), set(&[(1.0, f64::INFINITY)]));
    }

    fn arb_set() -> impl Strategy<Value = JumpSet> {
        // Endpoints on a coarse lattice so boundary coincidences actually occur.
        prop::collection::vec((0u32..20, 1u32..6, any::<bool>()), 0..5).prop_map(|raw| {
            let pairs = raw.into_iter().map(|(a, len, open)| {
                let a = f64::from(a) * 0.25;
                let b = if open { f64::INFINITY } else { a + f64::from(len) * 0.25 };
                (a, b)
            });
            JumpSet::from_intervals(pairs).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn boolean_algebra_on_indicators(a in arb_set(), b in arb_set(), zi in 1u32..24, jitter in any::<bool>()) {
            let z = f64::from(zi) * 0.25 + if jitter { 0.1 } else { 0.0 };
            prop_assert_eq!(a.union(&b).contains(z), a.contains(z) || b.contains(z));
            prop_assert_eq!(a.intersect(&b).contains(z), a.contains(z) && b.contains(z));
            prop_assert_eq!(a.complement().contains(z), !a.contains(z));
            let u = a.union(&b);
            for w in u.intervals().windows(2) {
                prop_assert!(w[0].1 < w[1].0);
            }
        }
    }
}
