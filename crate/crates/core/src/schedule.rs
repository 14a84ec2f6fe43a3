//! Checkpoint schedules shared by the urn and graph simulators.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CheckpointSchedule {
    /// 1, 2, 4, ... and the final step.
    #[default]
    PowersOfTwo,
    /// Rounded powers of `ratio` and the final step.
    Geometric { ratio: f64 },
    /// Given steps; those beyond the run length are dropped, the final step is added.
    Explicit { steps: Vec<u64> },
    /// Only the final step.
    Final,
}

impl CheckpointSchedule {
    /// Sorted, deduplicated checkpoint steps in `1..=n`, always ending at `n`.
    pub fn points(&self, n: u64) -> Vec<u64> {
        let mut pts: Vec<u64> = match self {
            Self::PowersOfTwo => (0..64).map(|e| 1u64 << e).take_while(|&p| p < n).collect(),
            Self::Geometric { ratio } => geometric(n, *ratio),
            Self::Explicit { steps } => steps.iter().copied().filter(|&s| s >= 1 && s < n).collect(),
            Self::Final => Vec::new(),
        };
        if n >= 1 {
            pts.push(n);
        }
        pts.sort_unstable();
        pts.dedup();
        pts
    }
}

/// `round(ratio^e)` for `e = 0, 1, ...` below `n`, without duplicates.
pub fn geometric(n: u64, ratio: f64) -> Vec<u64> {
    let ratio = if ratio > 1.0 { ratio } else { 2.0 };
    let mut out = Vec::new();
    let mut x = 1.0f64;
    while (x.round() as u64) < n {
        let p = x.round() as u64;
        if out.last() != Some(&p) {
            out.push(p);
        }
        x *= ratio;
    }
    out
}
