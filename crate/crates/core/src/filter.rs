//! False-peak suppression using the parallel, evenly spaced layout of line
//! bundles: keep the dominant orientation, then drop lines that break the
//! regular spacing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hough::PolarLine;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("points {0:?} and {1:?} coincide")]
    IdenticalPoints((f64, f64), (f64, f64)),
    #[error("lines are not parallel: angle gap {gap} rad exceeds tolerance {tolerance} rad")]
    NotParallel { gap: f64, tolerance: f64 },
    #[error("angle_bin must be positive")]
    AngleBin,
    #[error("spacing_variance_threshold must be positive")]
    VarianceThreshold,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Slope {
    Finite(f64),
    Vertical,
}

/// `(y_m - y_n) / (x_m - x_n)`, or [`Slope::Vertical`] when the x coordinates agree.
pub fn slope_of(p1: (f64, f64), p2: (f64, f64)) -> Result<Slope, FilterError> {
    if p1 == p2 {
        return Err(FilterError::IdenticalPoints(p1, p2));
    }
    if p1.0 == p2.0 {
        return Ok(Slope::Vertical);
    }
    Ok(Slope::Finite((p1.1 - p2.1) / (p1.0 - p2.0)))
}

/// Distance between two parallel lines.
///
/// In polar form `A = cos θ`, `B = sin θ`, `C = -ρ`, so
/// `|C1 - C2| / sqrt(A² + B²)` is just `|ρ1 - ρ2|` once both lines sit on the
/// same side of the θ seam.
pub fn parallel_distance(l1: &PolarLine, l2: &PolarLine, angle_tol: f64) -> Result<f64, FilterError> {
    let (theta, rho) = l2.on_branch_of(l1.theta);
    let gap = (l1.theta - theta).abs();
    if gap > angle_tol {
        return Err(FilterError::NotParallel {
            gap,
            tolerance: angle_tol,
        });
    }
    Ok((l1.rho - rho).abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpacingNormalization {
    None,
    ByMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub enabled: bool,
    /// Degrees.
    pub angle_bin: f64,
    pub spacing_variance_threshold: f64,
    pub spacing_normalization: SpacingNormalization,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            enabled: true,
            angle_bin: 1.0,
            spacing_variance_threshold: 0.01,
            spacing_normalization: SpacingNormalization::ByMean,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), FilterError> {
        if !(self.angle_bin > 0.0 && self.angle_bin.is_finite()) {
            return Err(FilterError::AngleBin);
        }
        if self.spacing_variance_threshold.is_nan() || self.spacing_variance_threshold <= 0.0 {
            return Err(FilterError::VarianceThreshold);
        }
        Ok(())
    }
}

fn angle_bins(angle_bin: f64) -> usize {
    ((180.0 / angle_bin).ceil() as usize).max(1)
}

fn bin_of(theta: f64, angle_bin: f64, bins: usize) -> usize {
    ((theta.to_degrees() / angle_bin).floor() as usize).min(bins - 1)
}

/// Keeps the candidates in the most populated orientation bin and its two
/// circular neighbours. Ties go to the bin with more total votes, then the
/// lower bin index.
pub fn slope_mode_filter(candidates: &[PolarLine], params: &FilterParams) -> Vec<PolarLine> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let bins = angle_bins(params.angle_bin);
    let mut counts = vec![(0usize, 0u64); bins];
    for line in candidates {
        let b = bin_of(line.theta, params.angle_bin, bins);
        counts[b].0 += 1;
        counts[b].1 += u64::from(line.votes);
    }
    let mode = (0..bins)
        .max_by(|&a, &b| {
            counts[a]
                .0
                .cmp(&counts[b].0)
                .then(counts[a].1.cmp(&counts[b].1))
                .then(b.cmp(&a))
        })
        .expect("at least one bin");
    let keep = [(mode + bins - 1) % bins, mode, (mode + 1) % bins];
    candidates
        .iter()
        .filter(|l| keep.contains(&bin_of(l.theta, params.angle_bin, bins)))
        .copied()
        .collect()
}

/// Consecutive ρ gaps of lines already sorted along one branch.
fn gaps(rhos: &[f64]) -> Vec<f64> {
    rhos.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Population variance of the gaps, optionally of the gaps divided by their mean.
pub fn gap_variance(rhos: &[f64], normalization: SpacingNormalization) -> f64 {
    let mut g = gaps(rhos);
    if g.len() < 2 {
        return 0.0;
    }
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    if normalization == SpacingNormalization::ByMean {
        if mean == 0.0 {
            return 0.0;
        }
        g.iter_mut().for_each(|v| *v /= mean);
    }
    let m = g.iter().sum::<f64>() / g.len() as f64;
    g.iter().map(|v| (v - m).powi(2)).sum::<f64>() / g.len() as f64
}

/// Lines expressed on a common θ branch and ordered by ρ.
fn on_common_branch(lines: &[PolarLine]) -> Vec<(f64, PolarLine)> {
    let reference = lines
        .iter()
        .max_by(|a, b| a.votes.cmp(&b.votes).then(b.theta.total_cmp(&a.theta)))
        .map_or(0.0, |l| l.theta);
    let mut out: Vec<(f64, PolarLine)> = lines
        .iter()
        .map(|l| (l.on_branch_of(reference).1, *l))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.theta.total_cmp(&b.1.theta)));
    out
}

/// Retains the near-parallel set whose gap variance falls below the
/// threshold, greedily removing the line whose removal leaves the smallest
/// variance (ties: fewer votes, then later in ρ order) until the criterion
/// holds or two lines remain. Output is in ρ order.
pub fn spacing_variance_filter(parallel: &[PolarLine], params: &FilterParams) -> Vec<PolarLine> {
    let mut lines = on_common_branch(parallel);
    let variance = |set: &[(f64, PolarLine)]| {
        let rhos: Vec<f64> = set.iter().map(|e| e.0).collect();
        gap_variance(&rhos, params.spacing_normalization)
    };
    while lines.len() > 2 && variance(&lines) >= params.spacing_variance_threshold {
        let mut best: Option<(f64, u32, usize)> = None;
        for i in 0..lines.len() {
            let mut rest = lines.clone();
            rest.remove(i);
            let v = variance(&rest);
            let votes = lines[i].1.votes;
            let better = match best {
                None => true,
                Some((bv, bvotes, _)) => v < bv || (v == bv && votes <= bvotes),
            };
            if better {
                best = Some((v, votes, i));
            }
        }
        let (_, _, drop) = best.expect("more than two lines");
        lines.remove(drop);
    }
    lines.into_iter().map(|(_, l)| l).collect()
}
