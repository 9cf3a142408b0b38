//! Distances on the real state space.
//!
//! Every metric here has the form `d(x, y) = cap(|phi(x) - phi(y)|)` with `phi`
//! monotone and `cap` non-decreasing. The modulus engine relies on this: the
//! diameter of a finite set of states is attained by the pair with extreme
//! `phi` values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `|x - y|`.
    Euclidean,
    /// `1 ∧ |x - y|`.
    BoundedEuclidean,
    /// `|e^{-x} - e^{-y}|` on `[0, ∞]`, with `e^{-∞} = 0`.
    ExpCompactified,
}

impl Metric {
    pub const ALL: [Metric; 3] = [
        Metric::Euclidean,
        Metric::BoundedEuclidean,
        Metric::ExpCompactified,
    ];

    /// Monotone coordinate in which the metric is a (capped) absolute difference.
    #[inline]
    pub fn phi(self, x: f64) -> f64 {
        match self {
            Metric::Euclidean | Metric::BoundedEuclidean => x,
            Metric::ExpCompactified => {
                if x == f64::INFINITY {
                    0.0
                } else {
                    (-x).exp()
                }
            }
        }
    }

    #[inline]
    pub fn cap(self, gap: f64) -> f64 {
        match self {
            Metric::BoundedEuclidean => gap.min(1.0),
            _ => gap,
        }
    }

    /// Distance between two `phi` coordinates.
    #[inline]
    pub fn from_phi(self, a: f64, b: f64) -> f64 {
        self.cap((a - b).abs())
    }

    #[inline]
    pub fn distance(self, x: f64, y: f64) -> f64 {
        self.from_phi(self.phi(x), self.phi(y))
    }

    /// The truncated metric `1 ∧ d`.
    pub fn bounded(self) -> Metric {
        match self {
            Metric::Euclidean | Metric::BoundedEuclidean => Metric::BoundedEuclidean,
            // already takes values in [0, 1]
            Metric::ExpCompactified => Metric::ExpCompactified,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::BoundedEuclidean => "bounded_euclidean",
            Metric::ExpCompactified => "exp_compactified",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown metric `{0}` (expected euclidean, bounded_euclidean or exp_compactified)")]
pub struct UnknownMetric(pub String);

impl FromStr for Metric {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "bounded_euclidean" | "bounded" => Ok(Metric::BoundedEuclidean),
            "exp_compactified" | "exp" => Ok(Metric::ExpCompactified),
            other => Err(UnknownMetric(other.to_string())),
        }
    }
}
