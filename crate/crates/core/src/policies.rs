//! Rectangle selection policies.
//!
//! Every policy scores the feasible availability rectangles of a request on a
//! single criterion (start time, free-PE count, rectangle duration, or their
//! product) and breaks score ties by the earliest start.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::availability::{AvailabilityRectangle, EndTime};
use crate::Time;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("no feasible rectangle to choose from")]
    NoRectangles,
    #[error("unknown policy `{0}` (expected one of ff, pe_b, du_b, pedu_b, pe_w, du_w, pedu_w)")]
    Unknown(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Policy {
    /// Earliest feasible start.
    FirstFit,
    /// Fewest free PEs.
    PeBestFit,
    /// Shortest rectangle.
    DurationBestFit,
    /// Smallest PE-count by duration product.
    PeDurationBestFit,
    /// Most free PEs.
    PeWorstFit,
    /// Longest rectangle.
    DurationWorstFit,
    /// Largest PE-count by duration product.
    PeDurationWorstFit,
}

impl Policy {
    /// Canonical order, used for reports and legends.
    pub const ALL: [Policy; 7] = [
        Policy::FirstFit,
        Policy::PeBestFit,
        Policy::DurationBestFit,
        Policy::PeDurationBestFit,
        Policy::PeWorstFit,
        Policy::DurationWorstFit,
        Policy::PeDurationWorstFit,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Policy::FirstFit => "ff",
            Policy::PeBestFit => "pe_b",
            Policy::DurationBestFit => "du_b",
            Policy::PeDurationBestFit => "pedu_b",
            Policy::PeWorstFit => "pe_w",
            Policy::DurationWorstFit => "du_w",
            Policy::PeDurationWorstFit => "pedu_w",
        }
    }

    /// Position in [`Policy::ALL`].
    pub fn rank(self) -> usize {
        Policy::ALL.iter().position(|&p| p == self).unwrap()
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Policy {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.token() == s)
            .ok_or_else(|| PolicyError::Unknown(s.to_string()))
    }
}

/// A length or area that may be unbounded; `Unbounded` orders above every
/// finite value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Extent {
    Finite(u128),
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RectangleScore {
    pub pe_count: usize,
    pub duration: Extent,
    pub area: Extent,
    pub start: Time,
}

impl RectangleScore {
    pub fn of(rect: &AvailabilityRectangle) -> Self {
        let pe_count = rect.free.len();
        let duration = match rect.t_end {
            EndTime::At(end) => Extent::Finite(u128::from(end - rect.t_begin)),
            EndTime::Open => Extent::Unbounded,
        };
        let area = match duration {
            Extent::Finite(d) => Extent::Finite(d * pe_count as u128),
            Extent::Unbounded => Extent::Unbounded,
        };
        Self {
            pe_count,
            duration,
            area,
            start: rect.start,
        }
    }
}

/// Orders two scores so that the preferred one compares `Less`.
fn preference(policy: Policy, a: &RectangleScore, b: &RectangleScore) -> Ordering {
    let primary = match policy {
        Policy::FirstFit => Ordering::Equal,
        Policy::PeBestFit => a.pe_count.cmp(&b.pe_count),
        Policy::PeWorstFit => b.pe_count.cmp(&a.pe_count),
        Policy::DurationBestFit => a.duration.cmp(&b.duration),
        Policy::DurationWorstFit => b.duration.cmp(&a.duration),
        Policy::PeDurationBestFit => a.area.cmp(&b.area),
        Policy::PeDurationWorstFit => b.area.cmp(&a.area),
    };
    primary.then(a.start.cmp(&b.start))
}

/// Picks the rectangle `policy` prefers, earliest start on equal scores.
pub fn select(rectangles: &[AvailabilityRectangle], policy: Policy) -> Result<&AvailabilityRectangle, PolicyError> {
    rectangles
        .iter()
        .map(|r| (RectangleScore::of(r), r))
        .min_by(|(a, _), (b, _)| preference(policy, a, b))
        .map(|(_, r)| r)
        .ok_or(PolicyError::NoRectangles)
}
