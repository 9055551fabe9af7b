//! Seeded synthetic scenes with exact ground truth, detection scoring and the
//! three-method timing benchmark.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hough::PolarLine;
use crate::pipeline::{detect_edges, preprocess, Method, PipelineConfig, PipelineError};
use crate::raster::{GrayImage, RasterError};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("line {index} (theta {theta_deg} deg, rho {rho}) does not cross the {width}x{height} canvas")]
    LineOutsideCanvas {
        index: usize,
        theta_deg: f64,
        rho: f64,
        width: usize,
        height: usize,
    },
    #[error("line {index} has width {width}; only 1 or 2 px are supported")]
    LineWidth { index: usize, width: u8 },
    #[error("line {index} leaves the band rows {top}..={bottom}")]
    OutsideBand { index: usize, top: usize, bottom: usize },
    #[error("salt density {0} is outside [0, 1]")]
    SaltDensity(f64),
    #[error("model-conformant scene: {0}")]
    NonConformant(String),
    #[error("tolerances must be positive (got {theta_deg} deg, {rho} px)")]
    Tolerance { theta_deg: f64, rho: f64 },
    #[error("benchmark needs at least 3 repetitions (got {0})")]
    Repetitions(usize),
    #[error("scene `{scene}`: {source}")]
    Pipeline {
        scene: String,
        #[source]
        source: PipelineError,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneLine {
    pub theta_deg: f64,
    pub rho: f64,
    #[serde(default = "one")]
    pub width: u8,
}

fn one() -> u8 {
    1
}

impl SceneLine {
    pub fn polar(&self) -> PolarLine {
        PolarLine::new(self.theta_deg.to_radians(), self.rho, 0).normalized()
    }
}

/// Inclusive row range every line pixel must stay within.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub top: usize,
    pub bottom: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub salt_density: f64,
    pub clutter_blocks: usize,
    pub clutter_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Intensity {
    pub line: u8,
    pub background: u8,
    pub clutter: u8,
    pub salt: u8,
}

impl Default for Intensity {
    fn default() -> Self {
        Self {
            line: 230,
            background: 40,
            clutter: 170,
            salt: 255,
        }
    }
}

/// Declared spacing corridor and parallelism requirement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conformance {
    pub d1: f64,
    pub d2: f64,
    #[serde(default = "default_spread")]
    pub max_theta_spread_deg: f64,
}

fn default_spread() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub lines: Vec<SceneLine>,
    #[serde(default)]
    pub band: Option<Band>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub intensity: Intensity,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub conformance: Option<Conformance>,
}

impl SceneSpec {
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            lines: Vec::new(),
            band: None,
            noise: NoiseSpec::default(),
            intensity: Intensity::default(),
            seed: 0,
            conformance: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("spec serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 {
            return Err(RasterError::ZeroDimension {
                width: self.width,
                height: self.height,
            }
            .into());
        }
        if !(0.0..=1.0).contains(&self.noise.salt_density) {
            return Err(SynthError::SaltDensity(self.noise.salt_density));
        }
        for (index, line) in self.lines.iter().enumerate() {
            if line.width != 1 && line.width != 2 {
                return Err(SynthError::LineWidth {
                    index,
                    width: line.width,
                });
            }
        }
        if let Some(c) = &self.conformance {
            self.check_conformance(c)?;
        }
        Ok(())
    }

    fn check_conformance(&self, c: &Conformance) -> Result<(), SynthError> {
        if !(c.d1 > 0.0 && c.d1 <= c.d2) {
            return Err(SynthError::NonConformant(format!(
                "spacing corridor [{}, {}] is empty",
                c.d1, c.d2
            )));
        }
        let Some(first) = self.lines.first() else {
            return Ok(());
        };
        let reference = first.polar().theta;
        let mut branch: Vec<(f64, f64)> = self.lines.iter().map(|l| l.polar().on_branch_of(reference)).collect();
        let lo = branch.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
        let hi = branch.iter().map(|b| b.0).fold(f64::NEG_INFINITY, f64::max);
        let spread = (hi - lo).to_degrees();
        if spread > c.max_theta_spread_deg + 1e-9 {
            return Err(SynthError::NonConformant(format!(
                "theta spread {spread:.3} deg exceeds {} deg",
                c.max_theta_spread_deg
            )));
        }
        branch.sort_by(|a, b| a.1.total_cmp(&b.1));
        for pair in branch.windows(2) {
            let gap = pair[1].1 - pair[0].1;
            if gap < c.d1 - 1e-9 || gap > c.d2 + 1e-9 {
                return Err(SynthError::NonConformant(format!(
                    "rho gap {gap:.3} px outside [{}, {}]",
                    c.d1, c.d2
                )));
            }
        }
        Ok(())
    }
}

/// Pixels of a line of the given width, stepping along the major axis.
/// Two-pixel lines cover the two rows (or columns) that straddle the exact
/// position.
pub fn line_pixels(line: &SceneLine, width: usize, height: usize) -> Vec<(usize, usize)> {
    let theta = line.theta_deg.to_radians();
    let (s, c) = theta.sin_cos();
    let mut out = Vec::new();
    let mut push = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
            out.push((x as usize, y as usize));
        }
    };
    if s.abs() >= c.abs() {
        for x in 0..width as i64 {
            let y = (line.rho - x as f64 * c) / s;
            if line.width == 2 {
                let y0 = y.floor() as i64;
                push(x, y0);
                push(x, y0 + 1);
            } else {
                push(x, y.round() as i64);
            }
        }
    } else {
        for y in 0..height as i64 {
            let x = (line.rho - y as f64 * s) / c;
            if line.width == 2 {
                let x0 = x.floor() as i64;
                push(x0, y);
                push(x0 + 1, y);
            } else {
                push(x.round() as i64, y);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundTruth {
    pub lines: Vec<PolarLine>,
    /// Rows spanned by line pixels (`None` without lines).
    pub band: Option<(usize, usize)>,
    pub pixels: Vec<Vec<(usize, usize)>>,
}

impl GroundTruth {
    /// Band rows over image height.
    pub fn band_fraction(&self, height: usize) -> f64 {
        self.band
            .map_or(0.0, |(top, bottom)| (bottom - top + 1) as f64 / height as f64)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct TruthLine {
            theta_deg: f64,
            rho: f64,
            pixels: usize,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            lines: Vec<TruthLine>,
            band: Option<(usize, usize)>,
            pixels: &'a [Vec<(usize, usize)>],
        }
        let doc = Doc {
            lines: self
                .lines
                .iter()
                .zip(&self.pixels)
                .map(|(l, p)| TruthLine {
                    theta_deg: l.theta_degrees(),
                    rho: l.rho,
                    pixels: p.len(),
                })
                .collect(),
            band: self.band,
            pixels: &self.pixels,
        };
        let mut s = serde_json::to_string(&doc).expect("truth serializes");
        s.push('\n');
        s
    }
}

fn draw_clutter(img: &mut GrayImage, rng: &mut SplitMix64, noise: &NoiseSpec, value: u8) {
    let (w, h) = img.dimensions();
    let size = noise.clutter_size.max(2);
    for _ in 0..noise.clutter_blocks {
        if rng.chance(0.5) {
            let bw = rng.range_inclusive((size / 4).max(1) as i64, size as i64) as usize;
            let bh = rng.range_inclusive((size / 4).max(1) as i64, size as i64) as usize;
            let x0 = rng.below_usize(w);
            let y0 = rng.below_usize(h);
            for y in y0..(y0 + bh).min(h) {
                for x in x0..(x0 + bw).min(w) {
                    img.set(x, y, value);
                }
            }
        } else {
            let len = rng.range_inclusive(size as i64, 3 * size as i64) as f64;
            let angle = rng.range_f64(0.0, PI);
            let (x0, y0) = (rng.range_f64(0.0, w as f64), rng.range_f64(0.0, h as f64));
            let steps = len.ceil() as usize;
            for i in 0..=steps {
                let t = i as f64;
                let x = (x0 + t * angle.cos()).round();
                let y = (y0 + t * angle.sin()).round();
                if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
                    img.set(x as usize, y as usize, value);
                }
            }
        }
    }
}

/// Renders a scene: background, clutter, lines, then salt noise, all from
/// the spec's seed.
pub fn generate_scene(spec: &SceneSpec) -> Result<(GrayImage, GroundTruth), SynthError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = SplitMix64::new(spec.seed);
    let mut img = GrayImage::filled(w, h, spec.intensity.background)?;
    draw_clutter(&mut img, &mut rng, &spec.noise, spec.intensity.clutter);

    let mut pixels = Vec::with_capacity(spec.lines.len());
    let mut band: Option<(usize, usize)> = None;
    for (index, line) in spec.lines.iter().enumerate() {
        let px = line_pixels(line, w, h);
        if px.is_empty() {
            return Err(SynthError::LineOutsideCanvas {
                index,
                theta_deg: line.theta_deg,
                rho: line.rho,
                width: w,
                height: h,
            });
        }
        for &(x, y) in &px {
            img.set(x, y, spec.intensity.line);
            band = Some(match band {
                None => (y, y),
                Some((t, b)) => (t.min(y), b.max(y)),
            });
        }
        if let Some(b) = spec.band {
            if px.iter().any(|&(_, y)| y < b.top || y > b.bottom) {
                return Err(SynthError::OutsideBand {
                    index,
                    top: b.top,
                    bottom: b.bottom,
                });
            }
        }
        pixels.push(px);
    }

    if spec.noise.salt_density > 0.0 {
        for y in 0..h {
            for x in 0..w {
                if rng.chance(spec.noise.salt_density) {
                    img.set(x, y, spec.intensity.salt);
                }
            }
        }
    }

    let truth = GroundTruth {
        lines: spec.lines.iter().map(SceneLine::polar).collect(),
        band,
        pixels,
    };
    Ok((img, truth))
}

/// Knobs for [`model_scene`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSceneParams {
    pub width: usize,
    pub height: usize,
    pub n_lines: usize,
    /// Range of the expected region fraction: line band plus a `d2` margin
    /// above and below, over image height.
    pub region_fraction: (f64, f64),
    /// Upper spacing bound relative to the lower one.
    pub spacing_ratio: f64,
    /// Maximum tilt of the bundle away from horizontal.
    pub max_tilt_deg: f64,
    /// Per-line orientation jitter around the bundle direction.
    pub jitter_deg: f64,
    pub salt_density: (f64, f64),
    pub max_clutter_blocks: usize,
    pub clutter_size: usize,
    pub two_px_fraction: f64,
}

impl Default for ModelSceneParams {
    fn default() -> Self {
        Self {
            width: 620,
            height: 810,
            n_lines: 4,
            region_fraction: (0.1, 0.38),
            spacing_ratio: 1.1,
            max_tilt_deg: 2.0,
            jitter_deg: 0.05,
            salt_density: (0.002, 0.01),
            max_clutter_blocks: 20,
            clutter_size: 40,
            two_px_fraction: 0.25,
        }
    }
}

/// A model-conformant scene drawn from `seed`: a near-horizontal bundle of
/// roughly evenly spaced lines, salt noise and clutter.
pub fn model_scene(seed: u64, params: &ModelSceneParams) -> SceneSpec {
    let mut rng = SplitMix64::new(seed ^ 0x5ce9_e5ce_9e5c_e9e5);
    let (w, h) = (params.width, params.height);
    let n = params.n_lines.max(1);
    let fraction = rng.range_f64(params.region_fraction.0, params.region_fraction.1);
    // region = (n - 1) gaps + 2 margins, all at most d2
    let slots = (n - 1) as f64 + 2.0;
    let d2 = ((fraction * h as f64) / slots).floor().max(2.0);
    let d1 = (d2 / params.spacing_ratio).ceil().min(d2);
    let tilt = rng.range_f64(-params.max_tilt_deg, params.max_tilt_deg);
    let theta0 = 90.0 + tilt;

    let gaps: Vec<f64> = (1..n).map(|_| rng.range_inclusive(d1 as i64, d2 as i64) as f64).collect();
    let span: f64 = gaps.iter().sum();
    // keep the whole bundle, including tilt, inside the margins
    let drift = (w as f64) * tilt.to_radians().tan().abs();
    let lo = d2 + drift.max(0.0);
    let hi = (h as f64 - d2 - span - drift).max(lo);
    let start = rng.range_f64(lo, hi).round();
    let centre_x = (w as f64 - 1.0) / 2.0;

    let mut lines = Vec::with_capacity(n);
    let mut offset = start;
    for i in 0..n {
        if i > 0 {
            offset += gaps[i - 1];
        }
        let theta = theta0 + rng.range_f64(-params.jitter_deg, params.jitter_deg);
        let t = theta.to_radians();
        // line passes through (centre_x, offset)
        let rho = centre_x * t.cos() + offset * t.sin();
        let width = if rng.chance(params.two_px_fraction) { 2 } else { 1 };
        lines.push(SceneLine {
            theta_deg: theta,
            rho,
            width,
        });
    }
    let rhos: Vec<f64> = lines.iter().map(|l| l.polar().on_branch_of(theta0.to_radians()).1).collect();
    let rho_gaps: Vec<f64> = rhos.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
    let min_gap = rho_gaps.iter().cloned().fold(d1, f64::min).floor();
    let max_gap = rho_gaps.iter().cloned().fold(d2, f64::max).ceil();
    let clutter_blocks = rng.range_inclusive(0, params.max_clutter_blocks as i64) as usize;
    let salt_density = rng.range_f64(params.salt_density.0, params.salt_density.1);
    SceneSpec {
        width: w,
        height: h,
        lines,
        band: None,
        noise: NoiseSpec {
            salt_density,
            clutter_blocks,
            clutter_size: params.clutter_size,
        },
        intensity: Intensity::default(),
        seed,
        conformance: Some(Conformance {
            d1: min_gap,
            d2: max_gap,
            max_theta_spread_deg: 2.0,
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub epsilon_theta_deg: f64,
    pub epsilon_rho: f64,
}

/// Greedy one-to-one matching in ascending `Δθ/εθ + Δρ/ερ` order.
pub fn evaluate(
    detected: &[PolarLine],
    truth: &[PolarLine],
    epsilon_theta_deg: f64,
    epsilon_rho: f64,
) -> Result<EvalMetrics, SynthError> {
    if !(epsilon_theta_deg > 0.0 && epsilon_rho > 0.0) {
        return Err(SynthError::Tolerance {
            theta_deg: epsilon_theta_deg,
            rho: epsilon_rho,
        });
    }
    let eps_theta = epsilon_theta_deg.to_radians();
    let mut pairs = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, d) in detected.iter().enumerate() {
            let (dt, dr) = t.separation(d);
            if dt <= eps_theta && dr <= epsilon_rho {
                pairs.push((dt / eps_theta + dr / epsilon_rho, i, j));
            }
        }
    }
    // ties resolve on the detection's content so input order does not matter
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then_with(|| {
            let (da, db) = (&detected[a.2], &detected[b.2]);
            da.theta
                .total_cmp(&db.theta)
                .then(da.rho.total_cmp(&db.rho))
                .then(db.votes.cmp(&da.votes))
        })
    });
    let mut truth_used = vec![false; truth.len()];
    let mut det_used = vec![false; detected.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !truth_used[i] && !det_used[j] {
            truth_used[i] = true;
            det_used[j] = true;
            tp += 1;
        }
    }
    let fp = detected.len() - tp;
    let fn_ = truth.len() - tp;
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(EvalMetrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        epsilon_theta_deg,
        epsilon_rho,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub scene_id: String,
    pub method: Method,
    pub threshold: u32,
    pub elapsed_ms: f64,
    pub metrics: EvalMetrics,
}

pub const BENCH_HEADER: &str = "scene_id,method,threshold,elapsed_ms,precision,recall";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub pipeline: PipelineConfig,
    /// Absolute vote thresholds per method; unset methods use the pipeline's rule.
    pub standard_threshold: Option<u32>,
    pub random_threshold: Option<u32>,
    pub improved_threshold: Option<u32>,
    /// Hand the scene's declared spacing corridor to the region model.
    pub use_scene_spacing: bool,
    pub repetitions: usize,
    pub epsilon_theta_deg: f64,
    pub epsilon_rho: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            standard_threshold: None,
            random_threshold: None,
            improved_threshold: None,
            use_scene_spacing: false,
            repetitions: 3,
            epsilon_theta_deg: 1.0,
            epsilon_rho: 2.0,
        }
    }
}

impl BenchConfig {
    pub fn method_config(&self, method: Method, scene: &SceneSpec) -> PipelineConfig {
        let mut cfg = self.pipeline.clone().with_method(method);
        let fixed = match method {
            Method::Standard => self.standard_threshold,
            Method::Random => self.random_threshold,
            Method::Improved => self.improved_threshold,
        };
        if fixed.is_some() {
            cfg.hough.vote_threshold = fixed;
        }
        if self.use_scene_spacing {
            if let Some(c) = &scene.conformance {
                cfg.region.d1 = Some(c.d1.floor().max(1.0) as usize);
                cfg.region.d2 = Some(c.d2.ceil() as usize);
            }
        }
        cfg
    }
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2
    }
}

/// Benchmarks one scene: preprocessing once, then every method timed over
/// `repetitions` runs of everything after preprocessing.
pub fn bench_scene(
    scene_id: &str,
    spec: &SceneSpec,
    config: &BenchConfig,
) -> Result<Vec<BenchRecord>, SynthError> {
    if config.repetitions < 3 {
        return Err(SynthError::Repetitions(config.repetitions));
    }
    let wrap = |source| SynthError::Pipeline {
        scene: scene_id.to_string(),
        source,
    };
    let (img, truth) = generate_scene(spec)?;
    let edges = preprocess(&img, &config.pipeline.preprocess).map_err(wrap)?;
    let mut records = Vec::with_capacity(Method::ALL.len());
    for method in Method::ALL {
        let cfg = config.method_config(method, spec);
        let mut times = Vec::with_capacity(config.repetitions);
        let mut first = None;
        for _ in 0..config.repetitions {
            let started = Instant::now();
            let report = detect_edges(&edges, &cfg).map_err(wrap)?;
            times.push(started.elapsed());
            first.get_or_insert(report);
        }
        let report = first.expect("at least one repetition");
        let metrics = evaluate(
            &report.retained,
            &truth.lines,
            config.epsilon_theta_deg,
            config.epsilon_rho,
        )?;
        let elapsed_ms = (median(times).as_secs_f64() * 1e3).max(1e-6);
        records.push(BenchRecord {
            scene_id: scene_id.to_string(),
            method,
            threshold: report.threshold,
            elapsed_ms,
            metrics,
        });
    }
    Ok(records)
}

pub fn run_bench(scenes: &[(String, SceneSpec)], config: &BenchConfig) -> Result<Vec<BenchRecord>, SynthError> {
    let mut out = Vec::new();
    for (id, spec) in scenes {
        out.extend(bench_scene(id, spec, config)?);
    }
    Ok(out)
}

pub fn bench_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{:.3},{:.6},{:.6}\n",
            r.scene_id, r.method, r.threshold, r.elapsed_ms, r.metrics.precision, r.metrics.recall
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn horizontal(y: f64) -> SceneLine {
        SceneLine {
            theta_deg: 90.0,
            rho: y,
            width: 1,
        }
    }

    fn truth_of(lines: &[(f64, f64)]) -> Vec<PolarLine> {
        lines
            .iter()
            .map(|&(t, r)| PolarLine::new(t.to_radians(), r, 0))
            .collect()
    }

    #[test]
    fn empty_spec_gives_constant_image() {
        let (img, truth) = generate_scene(&SceneSpec::blank(30, 20)).unwrap();
        assert!(img.pixels().iter().all(|&p| p == Intensity::default().background));
        assert!(truth.lines.is_empty() && truth.pixels.is_empty());
        assert_eq!(truth.band, None);
    }

    #[test]
    fn horizontal_line_covers_the_width() {
        let mut spec = SceneSpec::blank(50, 20);
        spec.lines.push(horizontal(7.0));
        let (img, truth) = generate_scene(&spec).unwrap();
        assert_eq!(truth.pixels[0].len(), 50);
        assert_eq!(truth.band, Some((7, 7)));
        let bright = img.pixels().iter().filter(|&&p| p == Intensity::default().line).count();
        assert_eq!(bright, 50);
    }

    #[test]
    fn two_pixel_lines_straddle_the_position() {
        let line = SceneLine {
            theta_deg: 90.0,
            rho: 7.5,
            width: 2,
        };
        let px = line_pixels(&line, 10, 20);
        assert_eq!(px.len(), 20);
        assert!(px.iter().all(|&(_, y)| y == 7 || y == 8));
    }

    #[test]
    fn lines_off_canvas_are_rejected() {
        let mut spec = SceneSpec::blank(40, 40);
        spec.lines.push(horizontal(55.0));
        assert!(matches!(
            generate_scene(&spec),
            Err(SynthError::LineOutsideCanvas { index: 0, .. })
        ));
        let mut spec = SceneSpec::blank(40, 40);
        spec.lines.push(SceneLine {
            theta_deg: 90.0,
            rho: 5.0,
            width: 3,
        });
        assert!(matches!(spec.validate(), Err(SynthError::LineWidth { .. })));
    }

    #[test]
    fn band_constraint_is_enforced() {
        let mut spec = SceneSpec::blank(40, 40);
        spec.lines.push(horizontal(30.0));
        spec.band = Some(Band { top: 5, bottom: 20 });
        assert!(matches!(generate_scene(&spec), Err(SynthError::OutsideBand { .. })));
    }

    #[test]
    fn conformance_checks_spread_and_gaps() {
        let mut spec = SceneSpec::blank(100, 100);
        spec.lines = vec![horizontal(20.0), horizontal(35.0), horizontal(50.0)];
        spec.conformance = Some(Conformance {
            d1: 14.0,
            d2: 20.0,
            max_theta_spread_deg: 2.0,
        });
        spec.validate().unwrap();
        spec.lines[2].rho = 80.0;
        assert!(matches!(spec.validate(), Err(SynthError::NonConformant(_))));
        spec.lines[2] = SceneLine {
            theta_deg: 93.0,
            rho: 50.0,
            width: 1,
        };
        assert!(matches!(spec.validate(), Err(SynthError::NonConformant(_))));
    }

    #[test]
    fn seeded_four_line_scene_is_reproducible() {
        let mut spec = SceneSpec::blank(620, 810);
        spec.lines = [300.0, 314.0, 330.0, 350.0].iter().map(|&y| horizontal(y)).collect();
        spec.lines[1].theta_deg = 90.5;
        spec.noise.salt_density = 0.005;
        spec.seed = 7;
        spec.conformance = Some(Conformance {
            d1: 14.0,
            d2: 20.0,
            max_theta_spread_deg: 2.0,
        });
        let (a, ta) = generate_scene(&spec).unwrap();
        let (b, tb) = generate_scene(&spec).unwrap();
        assert_eq!(ta.lines.len(), 4);
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let round_trip = SceneSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(round_trip, spec);
    }

    #[test]
    fn salt_density_is_respected() {
        let mut spec = SceneSpec::blank(200, 200);
        spec.noise.salt_density = 0.01;
        spec.seed = 3;
        let (img, _) = generate_scene(&spec).unwrap();
        let salt = img.pixels().iter().filter(|&&p| p == 255).count() as f64;
        // 400 expected, sd 20
        assert!((salt - 400.0).abs() < 100.0, "{salt}");
    }

    #[test]
    fn model_scenes_conform() {
        let params = ModelSceneParams::default();
        for seed in 0..200 {
            let spec = model_scene(seed, &params);
            spec.validate().unwrap();
            let (_, truth) = generate_scene(&spec).unwrap();
            assert_eq!(truth.lines.len(), 4);
            let c = spec.conformance.unwrap();
            let expected = truth.band_fraction(spec.height) + 2.0 * c.d2 / spec.height as f64;
            assert!(expected <= 0.45, "seed {seed}: {expected}");
            assert!(spec.noise.clutter_blocks <= 20);
        }
    }

    #[test]
    fn exact_detections_score_perfectly() {
        let truth = truth_of(&[(90.0, 10.0), (90.0, 25.0)]);
        let m = evaluate(&truth, &truth, 1.0, 2.0).unwrap();
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (2, 0, 0));
        assert_eq!((m.precision, m.recall), (1.0, 1.0));
    }

    #[test]
    fn empty_detections_are_vacuously_precise() {
        let truth = truth_of(&[(90.0, 10.0)]);
        let m = evaluate(&[], &truth, 1.0, 2.0).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 0.0));
        let m = evaluate(&[], &[], 1.0, 2.0).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 1.0));
    }

    #[test]
    fn one_extra_detection() {
        let truth = truth_of(&[(89.0, 10.0), (89.5, 25.0), (90.0, 40.0), (90.5, 55.0)]);
        let mut detected = truth.clone();
        detected.push(PolarLine::new(30f64.to_radians(), 5.0, 9));
        let m = evaluate(&detected, &truth, 1.0, 2.0).unwrap();
        assert_eq!((m.true_positives, m.false_positives), (4, 1));
        assert!((m.precision - 0.8).abs() < 1e-12);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn matching_is_one_to_one_and_handles_the_seam() {
        let truth = truth_of(&[(0.2, 10.0)]);
        let detected = vec![
            PolarLine::new(179.8f64.to_radians(), -10.5, 3),
            PolarLine::new(0.1f64.to_radians(), 10.2, 4),
        ];
        let m = evaluate(&detected, &truth, 1.0, 2.0).unwrap();
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (1, 1, 0));
        assert!(evaluate(&detected, &truth, 0.0, 2.0).is_err());
    }

    #[test]
    fn bench_needs_three_repetitions() {
        let config = BenchConfig {
            repetitions: 2,
            ..BenchConfig::default()
        };
        let spec = SceneSpec::blank(10, 10);
        assert!(matches!(
            bench_scene("x", &spec, &config),
            Err(SynthError::Repetitions(2))
        ));
    }

    #[test]
    fn bench_csv_layout() {
        let mut spec = SceneSpec::blank(120, 90);
        spec.lines = vec![horizontal(30.0), horizontal(45.0), horizontal(60.0)];
        spec.seed = 5;
        let records = run_bench(&[("tiny".into(), spec)], &BenchConfig::default()).unwrap();
        assert_eq!(records.len(), 3);
        let methods: Vec<Method> = records.iter().map(|r| r.method).collect();
        assert_eq!(methods, Method::ALL.to_vec());
        assert!(records.iter().all(|r| r.elapsed_ms > 0.0));
        let csv = bench_csv(&records);
        let mut rows = csv.lines();
        assert_eq!(rows.next(), Some(BENCH_HEADER));
        for row in rows {
            assert_eq!(row.split(',').count(), 6);
            assert!(row.starts_with("tiny,"));
        }
    }

    proptest! {
        #[test]
        fn evaluate_ignores_detection_order(
            lines in prop::collection::vec((80.0f64..100.0, 0.0f64..60.0), 0..8),
            truth in prop::collection::vec((80.0f64..100.0, 0.0f64..60.0), 0..6),
            rotate in 0usize..8,
        ) {
            let detected: Vec<PolarLine> = lines.iter().map(|&(t, r)| PolarLine::new(t.to_radians(), r, 1)).collect();
            let truth = truth_of(&truth);
            let mut shuffled = detected.clone();
            if !shuffled.is_empty() {
                let k = rotate % shuffled.len();
                shuffled.rotate_left(k);
                shuffled.reverse();
            }
            let a = evaluate(&detected, &truth, 1.0, 2.0).unwrap();
            let b = evaluate(&shuffled, &truth, 1.0, 2.0).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a.true_positives <= truth.len().min(detected.len()));
        }

        #[test]
        fn generation_is_deterministic(seed in any::<u64>()) {
            let params = ModelSceneParams { width: 160, height: 200, ..ModelSceneParams::default() };
            let spec = model_scene(seed, &params);
            let (a, ta) = generate_scene(&spec).unwrap();
            let (b, tb) = generate_scene(&spec).unwrap();
            prop_assert_eq!(a, b);
            prop_assert_eq!(ta, tb);
        }
    }
}
