use crate::error::{Error, Result};

/// Normalized histogram of scalar endpoint draws.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyDistribution {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// `counts / (total * width)`, integrating to one.
    pub density: Vec<f64>,
    /// Centre of the fullest bin.
    pub mode: f64,
    pub mean: f64,
    pub total: usize,
}

impl ConsistencyDistribution {
    pub fn width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn centres(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

pub const MIN_DRAWS: usize = 1000;

/// Histogram with `bins` equal bins over `range`, or over the sample range
/// when `range` is `None`. Draws outside `range` are dropped from the
/// counts but still enter `total` and the mean.
pub fn consistency_distribution(
    draws: &[f64],
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<ConsistencyDistribution> {
    if draws.len() < MIN_DRAWS {
        return Err(Error::TooFewSamples {
            needed: MIN_DRAWS,
            found: draws.len(),
        });
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite draw".into()));
    }
    let (lo, hi) = range.unwrap_or_else(|| {
        let lo = draws.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!("degenerate histogram range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &v in draws {
        if v < lo || v > hi {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = draws.len();
    let density = counts.iter().map(|&c| c as f64 / (total as f64 * width)).collect();
    let best = counts
        .iter()
        .enumerate()
        .fold(0, |best, (i, &c)| if c > counts[best] { i } else { best });
    let mean = draws.iter().sum::<f64>() / total as f64;
    Ok(ConsistencyDistribution {
        mode: lo + (best as f64 + 0.5) * width,
        edges,
        counts,
        density,
        mean,
        total,
    })
}
