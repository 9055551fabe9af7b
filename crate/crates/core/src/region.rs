//! Line-bundle region delineation by pixel-strip boundary search.
//!
//! The edge map is cut into vertical strips. Inside each strip rows whose
//! longest horizontal edge run reaches `min_run` are line segments; the
//! bundle of segments spaced at most `d2` apart is bounded `d2` above its
//! first segment and `d2` below its last. The per-strip bounds are spliced
//! into a piecewise-rectangular region whose area fraction is the
//! segmentation coefficient `I_c`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::BinaryImage;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegionError {
    #[error("cannot split width {width} into {n} strips")]
    TooManyStrips { width: usize, n: usize },
    #[error("min_run must be at least 1")]
    MinRun,
    #[error("spacings must satisfy 0 < d1 <= d2 (got d1={d1}, d2={d2})")]
    Spacing { d1: usize, d2: usize },
    #[error("spacing estimation needs two segments in one strip; supply d1 and d2 explicitly")]
    EstimationFailed,
    #[error("region is {region:?} but the edge map is {edges:?}")]
    DimensionMismatch {
        region: (usize, usize),
        edges: (usize, usize),
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Strip {
    pub index: usize,
    pub x_start: usize,
    pub x_end: usize,
}

impl Strip {
    pub fn width(&self) -> usize {
        self.x_end - self.x_start
    }
}

/// One physical line crossing a strip: a group of adjacent rows with long
/// horizontal runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StripSegment {
    pub strip: usize,
    /// Row holding the group's longest run.
    pub y: usize,
    pub first_row: usize,
    pub last_row: usize,
    /// `(start column, length)` of that longest run.
    pub x_run: (usize, usize),
}

impl StripSegment {
    fn single(strip: usize, y: usize, x_run: (usize, usize)) -> Self {
        Self {
            strip,
            y,
            first_row: y,
            last_row: y,
            x_run,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StripBounds {
    pub x_start: usize,
    pub x_end: usize,
    pub upper_y: usize,
    pub lower_y: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionModel {
    #[serde(skip)]
    width: usize,
    #[serde(skip)]
    height: usize,
    strips: Vec<StripBounds>,
    d1: usize,
    d2: usize,
    i_c: f64,
}

impl RegionModel {
    /// Whole-image region.
    pub fn full(width: usize, height: usize, d1: usize, d2: usize) -> Self {
        let strips = vec![StripBounds {
            x_start: 0,
            x_end: width,
            upper_y: 0,
            lower_y: height - 1,
        }];
        Self::from_bounds(width, height, strips, d1, d2)
    }

    pub fn from_bounds(
        width: usize,
        height: usize,
        strips: Vec<StripBounds>,
        d1: usize,
        d2: usize,
    ) -> Self {
        let i_c = coefficient(&strips, width, height);
        Self {
            width,
            height,
            strips,
            d1,
            d2,
            i_c,
        }
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn strips(&self) -> &[StripBounds] {
        &self.strips
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    /// Segmentation coefficient: region pixels over image pixels.
    pub fn i_c(&self) -> f64 {
        self.i_c
    }

    pub fn pixel_count(&self) -> usize {
        self.strips
            .iter()
            .map(|s| (s.x_end - s.x_start) * (s.lower_y - s.upper_y + 1))
            .sum()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.strips
            .iter()
            .find(|s| x >= s.x_start && x < s.x_end)
            .is_some_and(|s| y >= s.upper_y && y <= s.lower_y)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("region serializes")
    }
}

fn coefficient(strips: &[StripBounds], width: usize, height: usize) -> f64 {
    let inside: usize = strips
        .iter()
        .map(|s| (s.x_end - s.x_start) * (s.lower_y - s.upper_y + 1))
        .sum();
    inside as f64 / (width * height) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub enabled: bool,
    pub n_strips: usize,
    pub min_run: usize,
    pub d1: Option<usize>,
    pub d2: Option<usize>,
    /// Give segment-free strips the bounds of their nearest populated strip
    /// instead of the full height.
    pub interpolate_empty_strips: bool,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            n_strips: 8,
            min_run: 5,
            d1: None,
            d2: None,
            interpolate_empty_strips: false,
        }
    }
}

/// Contiguous partition of `0..width`; the first `width % n` strips are one
/// pixel wider.
pub fn split_strips(width: usize, n: usize) -> Result<Vec<Strip>, RegionError> {
    if n == 0 || width < n {
        return Err(RegionError::TooManyStrips { width, n });
    }
    let base = width / n;
    let wide = width % n;
    let mut x = 0;
    Ok((0..n)
        .map(|index| {
            let w = base + usize::from(index < wide);
            let strip = Strip {
                index,
                x_start: x,
                x_end: x + w,
            };
            x += w;
            strip
        })
        .collect())
}

fn check_spacing(d1: usize, d2: usize) -> Result<(), RegionError> {
    if d1 == 0 || d1 > d2 {
        return Err(RegionError::Spacing { d1, d2 });
    }
    Ok(())
}

/// Top-to-bottom scan of one strip. Rows closer than `d1 / 2` to the previous
/// segment row belong to the same physical line.
pub fn find_segments(
    edges: &BinaryImage,
    strip: &Strip,
    min_run: usize,
    d1: usize,
    d2: usize,
) -> Result<Vec<StripSegment>, RegionError> {
    if min_run == 0 {
        return Err(RegionError::MinRun);
    }
    check_spacing(d1, d2)?;
    Ok(segments_from_runs(&strip_runs(edges, strip), strip, min_run, d1))
}

/// Longest edge run `(start column, length)` of every row within a strip.
fn strip_runs(edges: &BinaryImage, strip: &Strip) -> Vec<(usize, usize)> {
    (0..edges.height())
        .map(|y| edges.longest_run(y, strip.x_start, strip.x_end))
        .collect()
}

fn segments_from_runs(runs: &[(usize, usize)], strip: &Strip, min_run: usize, d1: usize) -> Vec<StripSegment> {
    let merge_below = d1 as f64 / 2.0;
    let mut segments: Vec<StripSegment> = Vec::new();
    for (y, &run) in runs.iter().enumerate() {
        let len = run.1;
        if len < min_run {
            continue;
        }
        match segments.last_mut() {
            Some(seg) if ((y - seg.last_row) as f64) < merge_below => {
                seg.last_row = y;
                if len > seg.x_run.1 {
                    seg.y = y;
                    seg.x_run = run;
                }
            }
            _ => segments.push(StripSegment::single(strip.index, y, run)),
        }
    }
    segments
}

/// Downward and upward passes over an ascending segment list: the bounds sit
/// `d2` beyond the outermost segments, clamped to the image. Without
/// segments the whole height is returned.
pub fn strip_boundaries(segments: &[StripSegment], d2: usize, image_height: usize) -> (usize, usize) {
    match (segments.first(), segments.last()) {
        (Some(first), Some(last)) => (
            first.first_row.saturating_sub(d2),
            (last.last_row + d2).min(image_height - 1),
        ),
        _ => (0, image_height - 1),
    }
}

/// The run of consecutive segments spaced at most `max_gap` apart that contains the
/// most segments (ties: larger vertical extent, then the upper one).
pub fn select_bundle(segments: &[StripSegment], max_gap: usize) -> &[StripSegment] {
    let mut best: &[StripSegment] = &segments[..0];
    let mut start = 0;
    for end in 1..=segments.len() {
        let breaks =
            end == segments.len() || segments[end].first_row - segments[end - 1].last_row > max_gap;
        if !breaks {
            continue;
        }
        let chain = &segments[start..end];
        let extent = |c: &[StripSegment]| c.last().map_or(0, |l| l.last_row - c[0].first_row);
        if chain.len() > best.len() || (chain.len() == best.len() && extent(chain) > extent(best)) {
            best = chain;
        }
        start = end;
    }
    best
}

/// Largest gap allowed inside a bundle: `d2` plus a quarter, since segment
/// rows wander a little with tilt and line width.
pub fn bundle_gap(d2: usize) -> usize {
    d2 + d2.div_ceil(4)
}

/// `(d1, d2)` as the smallest and largest consecutive gap in the first strip
/// with at least two segments.
pub fn estimate_spacings(per_strip: &[Vec<StripSegment>]) -> Result<(usize, usize), RegionError> {
    let segments = per_strip
        .iter()
        .find(|s| s.len() >= 2)
        .ok_or(RegionError::EstimationFailed)?;
    let gaps = segments.windows(2).map(|w| w[1].y - w[0].y);
    let d1 = gaps.clone().min().expect("two segments give one gap");
    let d2 = gaps.max().expect("two segments give one gap");
    Ok((d1.max(1), d2.max(1)))
}

/// Strips a segment must chain across to count as part of a line.
const MIN_CHAIN: usize = 3;

/// Segments that chain through at least [`MIN_CHAIN`] neighbouring strips
/// (fewer when there are fewer strips), each link moving by at most the
/// rise of a 5° slope across the strip.
fn continued_segments(per_strip: &[Vec<StripSegment>], strips: &[Strip]) -> Vec<Vec<StripSegment>> {
    let n = per_strip.len();
    let need = MIN_CHAIN.min(n);
    let linked = |a: &StripSegment, b: &StripSegment, strip: &Strip| {
        let tol = ((strip.width() as f64) * 5f64.to_radians().tan()).ceil().max(2.0) as usize;
        a.y.abs_diff(b.y) <= tol
    };
    // chain lengths ending at each segment from the left and from the right
    let mut left: Vec<Vec<usize>> = per_strip.iter().map(|s| vec![1; s.len()]).collect();
    for i in 1..n {
        for (k, seg) in per_strip[i].iter().enumerate() {
            let best = per_strip[i - 1]
                .iter()
                .zip(&left[i - 1])
                .filter(|(prev, _)| linked(prev, seg, &strips[i]))
                .map(|(_, &l)| l + 1)
                .max();
            if let Some(b) = best {
                left[i][k] = b;
            }
        }
    }
    let mut right: Vec<Vec<usize>> = per_strip.iter().map(|s| vec![1; s.len()]).collect();
    for i in (0..n.saturating_sub(1)).rev() {
        for (k, seg) in per_strip[i].iter().enumerate() {
            let best = per_strip[i + 1]
                .iter()
                .zip(&right[i + 1])
                .filter(|(next, _)| linked(seg, next, &strips[i]))
                .map(|(_, &r)| r + 1)
                .max();
            if let Some(b) = best {
                right[i][k] = b;
            }
        }
    }
    per_strip
        .iter()
        .enumerate()
        .map(|(i, segs)| {
            segs.iter()
                .enumerate()
                .filter(|&(k, _)| left[i][k] + right[i][k] > need)
                .map(|(_, s)| *s)
                .collect()
        })
        .collect()
}

// rows this close are one physical line while the real d1 is still unknown
const PROVISIONAL_D1: usize = 4;

pub fn build_region(edges: &BinaryImage, config: &RegionConfig) -> Result<RegionModel, RegionError> {
    let (width, height) = edges.dimensions();
    let strips = split_strips(width, config.n_strips)?;
    if config.min_run == 0 {
        return Err(RegionError::MinRun);
    }

    let runs: Vec<Vec<(usize, usize)>> = strips.iter().map(|s| strip_runs(edges, s)).collect();
    let (d1, d2) = match (config.d1, config.d2) {
        (Some(d1), Some(d2)) => (d1, d2),
        (given1, given2) => {
            let provisional: Vec<Vec<StripSegment>> = strips
                .iter()
                .zip(&runs)
                .map(|(s, r)| segments_from_runs(r, s, config.min_run, PROVISIONAL_D1))
                .collect();
            if provisional.iter().all(Vec::is_empty) {
                let d1 = given1.or(given2).unwrap_or(1);
                let d2 = given2.unwrap_or(d1).max(d1);
                return Ok(RegionModel::full(width, height, d1, d2));
            }
            let continued = continued_segments(&provisional, &strips);
            let (e1, e2) = estimate_spacings(&continued).or_else(|_| estimate_spacings(&provisional))?;
            let d1 = given1.unwrap_or(e1);
            (d1, given2.unwrap_or(e2).max(d1))
        }
    };
    check_spacing(d1, d2)?;

    let mut bounds: Vec<Option<StripBounds>> = Vec::with_capacity(strips.len());
    for (strip, strip_runs) in strips.iter().zip(&runs) {
        let segments = segments_from_runs(strip_runs, strip, config.min_run, d1);
        let bundle = select_bundle(&segments, bundle_gap(d2));
        bounds.push((!bundle.is_empty()).then(|| {
            let (upper_y, lower_y) = strip_boundaries(bundle, d2, height);
            StripBounds {
                x_start: strip.x_start,
                x_end: strip.x_end,
                upper_y,
                lower_y,
            }
        }));
    }

    let spliced = strips
        .iter()
        .enumerate()
        .map(|(i, strip)| {
            if let Some(b) = bounds[i] {
                return b;
            }
            let neighbour = config
                .interpolate_empty_strips
                .then(|| nearest_populated(&bounds, i))
                .flatten();
            let (upper_y, lower_y) = neighbour.map_or((0, height - 1), |n| (n.upper_y, n.lower_y));
            StripBounds {
                x_start: strip.x_start,
                x_end: strip.x_end,
                upper_y,
                lower_y,
            }
        })
        .collect();
    Ok(RegionModel::from_bounds(width, height, spliced, d1, d2))
}

fn nearest_populated(bounds: &[Option<StripBounds>], i: usize) -> Option<StripBounds> {
    (1..bounds.len()).find_map(|k| {
        let left = i.checked_sub(k).and_then(|j| bounds[j]);
        let right = bounds.get(i + k).copied().flatten();
        left.or(right)
    })
}

/// Edge pixels inside `region` only.
pub fn mask_edges(edges: &BinaryImage, region: &RegionModel) -> Result<BinaryImage, RegionError> {
    if edges.dimensions() != region.dimensions() {
        return Err(RegionError::DimensionMismatch {
            region: region.dimensions(),
            edges: edges.dimensions(),
        });
    }
    let (width, height) = edges.dimensions();
    let points = edges.edge_points().filter(|&(x, y)| region.contains(x, y));
    Ok(BinaryImage::from_points(width, height, points).expect("dimensions already validated"))
}
