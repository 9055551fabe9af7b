//! Polar line parameter space, the standard (one-to-many) Hough transform and
//! the randomized two-point (many-to-one) Hough transform.
//!
//! A line is the set `{(x, y) : x cos θ + y sin θ = ρ}` with `θ ∈ [0, π)` the
//! angle of the line's normal and `ρ` the signed normal distance from the
//! top-left origin. Near the `θ = 0 / π` seam `(θ, ρ)` and `(θ - π, -ρ)`
//! describe the same line; every comparison here is seam-aware.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::BinaryImage;
use crate::region::RegionModel;
use crate::rng::SplitMix64;

#[derive(Debug, Error, PartialEq)]
pub enum HoughError {
    #[error("points {0:?} and {1:?} coincide; a line needs two distinct points")]
    IdenticalPoints((f64, f64), (f64, f64)),
    #[error("theta_bins must be at least 1")]
    NoThetaBins,
    #[error("vote threshold must be at least {min} (got {got})")]
    VoteThreshold { min: u32, got: u32 },
    #[error("max_samples must be at least 1")]
    NoSamples,
    #[error("epsilons must be finite and non-negative")]
    BadEpsilon,
    #[error("rho {rho} outside the accumulator range [-{max}, {max}]")]
    RhoOutOfRange { rho: f64, max: i64 },
    #[error("theta {0} outside [0, pi)")]
    ThetaOutOfRange(f64),
    #[error("region mask is {mask:?} but the edge map is {edges:?}")]
    MaskSize {
        mask: (usize, usize),
        edges: (usize, usize),
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarLine {
    /// Normal angle in radians, `[0, π)`.
    pub theta: f64,
    /// Signed normal distance from the origin in pixels.
    pub rho: f64,
    pub votes: u32,
}

impl PolarLine {
    pub fn new(theta: f64, rho: f64, votes: u32) -> Self {
        Self { theta, rho, votes }
    }

    /// Brings `theta` into `[0, π)`, negating `rho` when crossing the seam.
    pub fn normalized(self) -> Self {
        let mut theta = self.theta;
        let mut rho = self.rho;
        while theta < 0.0 {
            theta += PI;
            rho = -rho;
        }
        while theta >= PI {
            theta -= PI;
            rho = -rho;
        }
        // avoid -0.0 leaking into reports
        Self {
            theta: theta + 0.0,
            rho: rho + 0.0,
            votes: self.votes,
        }
    }

    /// This line expressed on the branch whose angle is closest to `reference`
    /// (the result may leave `[0, π)`).
    pub fn on_branch_of(&self, reference: f64) -> (f64, f64) {
        let direct = (self.theta - reference).abs();
        if direct <= PI / 2.0 {
            (self.theta, self.rho)
        } else if self.theta > reference {
            (self.theta - PI, -self.rho)
        } else {
            (self.theta + PI, -self.rho)
        }
    }

    /// Seam-aware parameter differences `(|Δθ|, |Δρ|)`.
    pub fn separation(&self, other: &PolarLine) -> (f64, f64) {
        let (theta, rho) = other.on_branch_of(self.theta);
        ((self.theta - theta).abs(), (self.rho - rho).abs())
    }

    pub fn approx_eq(&self, other: &PolarLine, epsilon_theta: f64, epsilon_rho: f64) -> bool {
        let (dt, dr) = self.separation(other);
        dt <= epsilon_theta && dr <= epsilon_rho
    }

    /// Signed residual `x cos θ + y sin θ - ρ` of a point.
    pub fn residual(&self, x: f64, y: f64) -> f64 {
        x * self.theta.cos() + y * self.theta.sin() - self.rho
    }

    pub fn theta_degrees(&self) -> f64 {
        self.theta.to_degrees()
    }
}

/// `ceil(sqrt(width² + height²))`, the largest possible `|ρ|`.
pub fn rho_limit(width: usize, height: usize) -> i64 {
    ((width * width + height * height) as f64).sqrt().ceil() as i64
}

/// The line through two distinct points.
pub fn polar_from_two_points(p1: (f64, f64), p2: (f64, f64)) -> Result<PolarLine, HoughError> {
    let (dx, dy) = (p2.0 - p1.0, p2.1 - p1.1);
    if dx == 0.0 && dy == 0.0 {
        return Err(HoughError::IdenticalPoints(p1, p2));
    }
    // the normal is the direction rotated by +90°
    let mut theta = dx.atan2(-dy);
    if theta < 0.0 {
        theta += PI;
    }
    if theta >= PI {
        theta -= PI;
    }
    theta += 0.0;
    let rho = p1.0 * theta.cos() + p1.1 * theta.sin();
    Ok(PolarLine::new(theta, rho + 0.0, 0))
}

/// Dense `(θ, ρ)` vote grid. `θ` bins are spaced `π / theta_bins` starting at
/// 0; `ρ` bins are 1 px wide and centered on the integers `-D..=D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    theta_bins: usize,
    rho_max: i64,
    cells: Vec<u32>,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Accumulator {
    pub fn new(theta_bins: usize, rho_max: i64) -> Result<Self, HoughError> {
        if theta_bins == 0 {
            return Err(HoughError::NoThetaBins);
        }
        let rho_bins = (2 * rho_max + 1) as usize;
        let (sin, cos) = (0..theta_bins)
            .map(|t| theta_of_bin(t, theta_bins).sin_cos())
            .unzip();
        Ok(Self {
            theta_bins,
            rho_max,
            cells: vec![0; theta_bins * rho_bins],
            cos,
            sin,
        })
    }

    /// Accumulator sized for an image of the given dimensions.
    pub fn for_image(theta_bins: usize, width: usize, height: usize) -> Result<Self, HoughError> {
        Self::new(theta_bins, rho_limit(width, height))
    }

    pub fn theta_bins(&self) -> usize {
        self.theta_bins
    }

    pub fn rho_bins(&self) -> usize {
        (2 * self.rho_max + 1) as usize
    }

    pub fn rho_max(&self) -> i64 {
        self.rho_max
    }

    pub fn theta_step(&self) -> f64 {
        PI / self.theta_bins as f64
    }

    pub fn get(&self, theta_bin: usize, rho_bin: usize) -> u32 {
        self.cells[theta_bin * self.rho_bins() + rho_bin]
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn total_votes(&self) -> u64 {
        self.cells.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn max_votes(&self) -> u32 {
        self.cells.iter().copied().max().unwrap_or(0)
    }

    /// One vote per θ bin at `rho_bin = round(x cos θ + y sin θ)`.
    pub fn vote_point(&mut self, x: usize, y: usize) {
        let rho_bins = self.rho_bins();
        let (xf, yf) = (x as f64, y as f64);
        for t in 0..self.theta_bins {
            let rho = (xf * self.cos[t] + yf * self.sin[t]).round() as i64;
            let r = (rho + self.rho_max) as usize;
            self.cells[t * rho_bins + r] += 1;
        }
    }

    /// Elementwise sum of two accumulators of identical shape.
    pub fn merge(&mut self, other: &Accumulator) {
        assert_eq!(self.cells.len(), other.cells.len(), "accumulator shape");
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a += b;
        }
    }

    /// Nearest-bin quantization of a line.
    pub fn bin_of(&self, line: &PolarLine) -> Result<(usize, usize), HoughError> {
        if !(0.0..PI).contains(&line.theta) {
            return Err(HoughError::ThetaOutOfRange(line.theta));
        }
        let mut theta_bin = (line.theta / self.theta_step()).round() as usize;
        let mut rho = line.rho;
        if theta_bin == self.theta_bins {
            theta_bin = 0;
            rho = -rho;
        }
        let rho_index = rho.round() as i64;
        if !rho.is_finite() || rho_index.abs() > self.rho_max {
            return Err(HoughError::RhoOutOfRange {
                rho: line.rho,
                max: self.rho_max,
            });
        }
        Ok((theta_bin, (rho_index + self.rho_max) as usize))
    }

    /// Line at the center of a bin.
    pub fn center_of(&self, theta_bin: usize, rho_bin: usize, votes: u32) -> PolarLine {
        PolarLine::new(
            theta_of_bin(theta_bin, self.theta_bins),
            (rho_bin as i64 - self.rho_max) as f64,
            votes,
        )
    }

    /// Cell reached from `(t, r)` by an unwrapped step, crossing the θ seam
    /// with ρ mirrored.
    fn wrapped(&self, t: i64, r: i64) -> Option<(usize, usize)> {
        let bins = self.theta_bins as i64;
        let turns = t.div_euclid(bins);
        let t = t.rem_euclid(bins);
        let r = if turns % 2 != 0 { 2 * self.rho_max - r } else { r };
        if r < 0 || r >= self.rho_bins() as i64 {
            return None;
        }
        Some((t as usize, r as usize))
    }

    /// Cells with at least `threshold` votes that survive 3×3 non-maximum
    /// suppression.
    ///
    /// Equal-valued connected plateaus are treated as one candidate: a
    /// plateau is a peak when every cell bordering it has fewer votes, and it
    /// is reported once, at its centroid when that falls on the plateau and at
    /// the member nearest the centroid otherwise.
    pub fn peaks(&self, threshold: u32) -> Vec<PolarLine> {
        let rho_bins = self.rho_bins();
        let mut visited = vec![false; self.cells.len()];
        let mut lines = Vec::new();
        let mut queue = VecDeque::new();
        let mut members: Vec<((i64, i64), (usize, usize))> = Vec::new();

        for start in 0..self.cells.len() {
            let value = self.cells[start];
            if value < threshold.max(1) || visited[start] {
                continue;
            }
            let (t0, r0) = (start / rho_bins, start % rho_bins);
            visited[start] = true;
            members.clear();
            queue.clear();
            queue.push_back((t0 as i64, r0 as i64));
            let mut is_peak = true;
            while let Some((ut, ur)) = queue.pop_front() {
                let cell = self.wrapped(ut, ur).expect("queued cells are in range");
                members.push(((ut, ur), cell));
                for dt in -1..=1 {
                    for dr in -1..=1 {
                        if dt == 0 && dr == 0 {
                            continue;
                        }
                        let Some((t, r)) = self.wrapped(ut + dt, ur + dr) else {
                            continue;
                        };
                        let idx = t * rho_bins + r;
                        let neighbour = self.cells[idx];
                        if neighbour > value {
                            is_peak = false;
                        } else if neighbour == value && !visited[idx] {
                            visited[idx] = true;
                            queue.push_back((ut + dt, ur + dr));
                        }
                    }
                }
            }
            if !is_peak {
                continue;
            }
            let count = members.len() as f64;
            let ct = members.iter().map(|m| m.0 .0 as f64).sum::<f64>() / count;
            let cr = members.iter().map(|m| m.0 .1 as f64).sum::<f64>() / count;
            let centroid = PolarLine::new(ct * self.theta_step(), cr - self.rho_max as f64, value).normalized();
            let on_plateau = self
                .bin_of(&centroid)
                .is_ok_and(|bin| members.iter().any(|m| m.1 == bin));
            if on_plateau {
                lines.push(centroid);
            } else {
                let &(_, (t, r)) = members
                    .iter()
                    .min_by(|a, b| {
                        let da = (a.0 .0 as f64 - ct).powi(2) + (a.0 .1 as f64 - cr).powi(2);
                        let db = (b.0 .0 as f64 - ct).powi(2) + (b.0 .1 as f64 - cr).powi(2);
                        da.total_cmp(&db).then(a.1.cmp(&b.1))
                    })
                    .expect("plateau has at least one member");
                lines.push(self.center_of(t, r, value));
            }
        }
        sort_lines(&mut lines);
        lines
    }
}

fn theta_of_bin(theta_bin: usize, theta_bins: usize) -> f64 {
    theta_bin as f64 * PI / theta_bins as f64
}

/// Votes descending, then θ ascending, then ρ ascending.
pub fn sort_lines(lines: &mut [PolarLine]) {
    lines.sort_by(|a, b| {
        b.votes
            .cmp(&a.votes)
            .then(a.theta.total_cmp(&b.theta))
            .then(a.rho.total_cmp(&b.rho))
    });
}

fn check_mask(edges: &BinaryImage, mask: Option<&RegionModel>) -> Result<(), HoughError> {
    match mask {
        Some(region) if region.dimensions() != edges.dimensions() => Err(HoughError::MaskSize {
            mask: region.dimensions(),
            edges: edges.dimensions(),
        }),
        _ => Ok(()),
    }
}

/// Edge pixels inside the mask (all of them without one), row-major.
pub fn candidate_points(edges: &BinaryImage, mask: Option<&RegionModel>) -> Vec<(usize, usize)> {
    match mask {
        None => edges.edge_points().collect(),
        Some(region) => {
            // only rows and columns inside the region are visited
            let mut points = Vec::new();
            for y in 0..edges.height() {
                for b in region.strips().iter().filter(|b| (b.upper_y..=b.lower_y).contains(&y)) {
                    points.extend(edges.row_points(y, b.x_start, b.x_end).map(|x| (x, y)));
                }
            }
            points
        }
    }
}

/// Votes every candidate edge pixel into a fresh accumulator.
pub fn accumulate(
    edges: &BinaryImage,
    mask: Option<&RegionModel>,
    theta_bins: usize,
) -> Result<Accumulator, HoughError> {
    check_mask(edges, mask)?;
    let mut acc = Accumulator::for_image(theta_bins, edges.width(), edges.height())?;
    for (x, y) in candidate_points(edges, mask) {
        acc.vote_point(x, y);
    }
    Ok(acc)
}

/// Standard Hough transform: accumulate, then threshold and suppress.
pub fn standard_hough(
    edges: &BinaryImage,
    mask: Option<&RegionModel>,
    theta_bins: usize,
    vote_threshold: u32,
) -> Result<(Accumulator, Vec<PolarLine>), HoughError> {
    if vote_threshold == 0 {
        return Err(HoughError::VoteThreshold {
            min: 1,
            got: vote_threshold,
        });
    }
    let acc = accumulate(edges, mask, theta_bins)?;
    let lines = acc.peaks(vote_threshold);
    Ok((acc, lines))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingParams {
    pub max_samples: u64,
    /// Radians.
    pub epsilon_theta: f64,
    /// Pixels.
    pub epsilon_rho: f64,
    pub vote_threshold: u32,
    pub rng_seed: u64,
    /// After sampling, an entry within `merge_radius` × ε of a stronger one
    /// hands its votes to it; 0 disables.
    pub merge_radius: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            max_samples: 5000,
            epsilon_theta: 1f64.to_radians(),
            epsilon_rho: 2.0,
            vote_threshold: 2,
            rng_seed: 42,
            merge_radius: 2.0,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), HoughError> {
        if self.max_samples == 0 {
            return Err(HoughError::NoSamples);
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.epsilon_theta) || !finite_nonneg(self.epsilon_rho) || !finite_nonneg(self.merge_radius) {
            return Err(HoughError::BadEpsilon);
        }
        if self.vote_threshold < 2 {
            return Err(HoughError::VoteThreshold {
                min: 2,
                got: self.vote_threshold,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingDiagnostic {
    /// Fewer than two candidate pixels; nothing could be sampled.
    TooFewPixels,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomizedOutcome {
    pub lines: Vec<PolarLine>,
    /// Every accumulated entry, before thresholding.
    pub entries: usize,
    pub samples: u64,
    pub candidates: usize,
    pub diagnostic: Option<SamplingDiagnostic>,
}

#[derive(Clone, Debug)]
struct Entry {
    theta: f64,
    rho: f64,
    votes: u32,
    key: (i64, i64),
}

/// Sparse parameter list: entries keyed by an ε-sized grid so that matching
/// only inspects neighbouring cells.
struct SparseList {
    epsilon_theta: f64,
    epsilon_rho: f64,
    cell_theta: f64,
    cell_rho: f64,
    entries: Vec<Entry>,
    index: FxHashMap<(i64, i64), Vec<usize>>,
}

impl SparseList {
    fn new(epsilon_theta: f64, epsilon_rho: f64) -> Self {
        Self {
            epsilon_theta,
            epsilon_rho,
            cell_theta: epsilon_theta.max(1e-9),
            cell_rho: epsilon_rho.max(1e-9),
            entries: Vec::new(),
            index: FxHashMap::default(),
        }
    }

    fn key(&self, theta: f64, rho: f64) -> (i64, i64) {
        (
            (theta / self.cell_theta).floor() as i64,
            (rho / self.cell_rho).floor() as i64,
        )
    }

    fn cost(&self, dt: f64, dr: f64) -> f64 {
        let part = |d: f64, eps: f64| if eps > 0.0 { d / eps } else { 0.0 };
        part(dt, self.epsilon_theta) + part(dr, self.epsilon_rho)
    }

    /// Nearest ε-equal entry (lowest index on ties).
    fn find(&self, line: &PolarLine) -> Option<usize> {
        let probes = [
            Some((line.theta, line.rho)),
            (line.theta <= self.epsilon_theta).then(|| (line.theta + PI, -line.rho)),
            (line.theta >= PI - self.epsilon_theta).then(|| (line.theta - PI, -line.rho)),
        ];
        let mut best: Option<(f64, usize)> = None;
        for (theta, rho) in probes.into_iter().flatten() {
            let (kt, kr) = self.key(theta, rho);
            for dt in -1..=1 {
                for dr in -1..=1 {
                    let Some(ids) = self.index.get(&(kt + dt, kr + dr)) else {
                        continue;
                    };
                    for &id in ids {
                        let e = &self.entries[id];
                        let (d_theta, d_rho) = ((e.theta - theta).abs(), (e.rho - rho).abs());
                        if d_theta > self.epsilon_theta || d_rho > self.epsilon_rho {
                            continue;
                        }
                        let cost = self.cost(d_theta, d_rho);
                        let better = match best {
                            None => true,
                            Some((c, i)) => cost < c || (cost == c && id < i),
                        };
                        if better {
                            best = Some((cost, id));
                        }
                    }
                }
            }
        }
        best.map(|(_, id)| id)
    }

    fn insert(&mut self, line: PolarLine) {
        let key = self.key(line.theta, line.rho);
        let id = self.entries.len();
        self.entries.push(Entry {
            theta: line.theta,
            rho: line.rho,
            votes: 1,
            key,
        });
        self.index.entry(key).or_default().push(id);
    }

    /// Adds a vote and moves the entry to the running mean of its samples.
    fn reinforce(&mut self, id: usize, line: &PolarLine) {
        let entry = &self.entries[id];
        let (theta, rho) = line.on_branch_of(entry.theta);
        let n = f64::from(entry.votes);
        let merged = PolarLine::new(
            (entry.theta * n + theta) / (n + 1.0),
            (entry.rho * n + rho) / (n + 1.0),
            entry.votes + 1,
        )
        .normalized();
        let old_key = entry.key;
        let new_key = self.key(merged.theta, merged.rho);
        if new_key != old_key {
            if let Some(ids) = self.index.get_mut(&old_key) {
                ids.retain(|&i| i != id);
            }
            self.index.entry(new_key).or_default().push(id);
        }
        let entry = &mut self.entries[id];
        entry.theta = merged.theta;
        entry.rho = merged.rho;
        entry.votes = merged.votes;
        entry.key = new_key;
    }
}

/// Walks `lines` in [`sort_lines`] order; a line within `(theta_radius,
/// rho_radius)` of an already kept one adds its votes to it instead of being
/// kept.
pub fn absorb_neighbours(lines: &[PolarLine], theta_radius: f64, rho_radius: f64) -> Vec<PolarLine> {
    let cell = (theta_radius.max(1e-9), rho_radius.max(1e-9));
    let key = |theta: f64, rho: f64| ((theta / cell.0).floor() as i64, (rho / cell.1).floor() as i64);
    let mut kept: Vec<PolarLine> = Vec::new();
    let mut index: FxHashMap<(i64, i64), Vec<usize>> = FxHashMap::default();
    for line in lines {
        let probes = [
            Some((line.theta, line.rho)),
            (line.theta <= theta_radius).then(|| (line.theta + PI, -line.rho)),
            (line.theta >= PI - theta_radius).then(|| (line.theta - PI, -line.rho)),
        ];
        let mut host: Option<usize> = None;
        'search: for (theta, rho) in probes.into_iter().flatten() {
            let (kt, kr) = key(theta, rho);
            for dt in -1..=1 {
                for dr in -1..=1 {
                    let Some(ids) = index.get(&(kt + dt, kr + dr)) else {
                        continue;
                    };
                    for &id in ids {
                        let (d_theta, d_rho) = kept[id].separation(line);
                        if d_theta <= theta_radius && d_rho <= rho_radius && host.is_none_or(|h| id < h) {
                            host = Some(id);
                        }
                    }
                }
            }
            if host.is_some() {
                break 'search;
            }
        }
        match host {
            Some(id) => kept[id].votes += line.votes,
            None => {
                index.entry(key(line.theta, line.rho)).or_default().push(kept.len());
                kept.push(*line);
            }
        }
    }
    sort_lines(&mut kept);
    kept
}

/// Randomized Hough transform over the candidate pixels inside `mask`.
///
/// Draws `max_samples` unordered pairs of distinct pixels, maps each pair to
/// its line and accumulates ε-equal lines into one entry. Entries that drifted
/// apart are then consolidated with [`absorb_neighbours`], and those with at
/// least `vote_threshold` votes are returned in [`sort_lines`] order.
pub fn randomized_hough(
    edges: &BinaryImage,
    mask: Option<&RegionModel>,
    params: &SamplingParams,
) -> Result<RandomizedOutcome, HoughError> {
    params.validate()?;
    check_mask(edges, mask)?;
    let points = candidate_points(edges, mask);
    Ok(randomized_hough_points(&points, params))
}

/// [`randomized_hough`] over an explicit candidate list.
pub fn randomized_hough_points(points: &[(usize, usize)], params: &SamplingParams) -> RandomizedOutcome {
    if points.len() < 2 {
        return RandomizedOutcome {
            lines: Vec::new(),
            entries: 0,
            samples: 0,
            candidates: points.len(),
            diagnostic: Some(SamplingDiagnostic::TooFewPixels),
        };
    }
    let mut rng = SplitMix64::new(params.rng_seed);
    let mut list = SparseList::new(params.epsilon_theta, params.epsilon_rho);
    for _ in 0..params.max_samples {
        let (i, j) = rng.distinct_pair(points.len());
        let (a, b) = (points[i], points[j]);
        let line = polar_from_two_points((a.0 as f64, a.1 as f64), (b.0 as f64, b.1 as f64))
            .expect("distinct indices address distinct pixels");
        match list.find(&line) {
            Some(id) => list.reinforce(id, &line),
            None => list.insert(line),
        }
    }
    let mut lines: Vec<PolarLine> = list
        .entries
        .iter()
        .filter(|e| e.votes >= 2)
        .map(|e| PolarLine::new(e.theta, e.rho, e.votes))
        .collect();
    sort_lines(&mut lines);
    if params.merge_radius > 0.0 {
        lines = absorb_neighbours(
            &lines,
            params.merge_radius * params.epsilon_theta,
            params.merge_radius * params.epsilon_rho,
        );
    }
    lines.retain(|l| l.votes >= params.vote_threshold);
    sort_lines(&mut lines);
    RandomizedOutcome {
        lines,
        entries: list.entries.len(),
        samples: params.max_samples,
        candidates: points.len(),
        diagnostic: None,
    }
}
