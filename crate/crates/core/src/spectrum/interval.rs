use serde::{Deserialize, Serialize};

/// Closed real interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn dilate(&self, r: f64) -> Self {
        Self::new(self.lo - r, self.hi + r)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Distance from `x` to the interval (0 inside).
    pub fn distance(&self, x: f64) -> f64 {
        (self.lo - x).max(x - self.hi).max(0.0)
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Self { lo, hi })
    }

    pub fn hull(&self, other: &Self) -> Self {
        Self::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }
}

/// Sort and merge overlapping (or touching) intervals.
pub fn merge_intervals(v: Vec<Interval>) -> Vec<Interval> {
    merge_within(v, 0.0)
}

/// Merge intervals separated by gaps of at most `slack`.
pub fn merge_within(mut v: Vec<Interval>, slack: f64) -> Vec<Interval> {
    v.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
    let mut out: Vec<Interval> = Vec::with_capacity(v.len());
    for iv in v {
        match out.last_mut() {
            Some(last) if iv.lo <= last.hi + slack => last.hi = last.hi.max(iv.hi),
            _ => out.push(iv),
        }
    }
    out
}

/// `window` minus the union of `holes`, as sorted disjoint intervals.
pub fn complement_in(window: Interval, holes: &[Interval]) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut start = window.lo;
    for h in merge_intervals(holes.to_vec()) {
        if h.hi < start {
            continue;
        }
        if h.lo > window.hi {
            break;
        }
        if h.lo > start {
            out.push(Interval::new(start, h.lo));
        }
        start = start.max(h.hi);
    }
    if start < window.hi {
        out.push(Interval::new(start, window.hi));
    }
    out
}

/// Distance from `x` to a union of intervals.
pub fn distance_to_union(x: f64, set: &[Interval]) -> f64 {
    set.iter()
        .map(|i| i.distance(x))
        .fold(f64::INFINITY, f64::min)
}
