//! End-to-end detection: preprocessing, parameter space setup, region
//! delineation, accumulation, thresholded peak extraction, orientation and
//! spacing filters.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{slope_mode_filter, spacing_variance_filter, FilterError, FilterParams};
use crate::hough::{self, Accumulator, HoughError, PolarLine, SamplingDiagnostic, SamplingParams};
use crate::raster::{BinaryImage, GrayImage};
use crate::region::{build_region, RegionConfig, RegionError, RegionModel};
use crate::ridge::{canny_baseline, ridge_map, RidgeError, RidgeParams};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("preprocess: {0}")]
    Preprocess(#[from] RidgeError),
    #[error("region: {0}")]
    Region(#[from] RegionError),
    #[error("hough: {0}")]
    Hough(#[from] HoughError),
    #[error("filter: {0}")]
    Filter(#[from] FilterError),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Standard,
    Random,
    Improved,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Standard, Method::Random, Method::Improved];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::Random => "random",
            Method::Improved => "improved",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Method::Standard),
            "random" => Ok(Method::Random),
            "improved" => Ok(Method::Improved),
            other => Err(format!("unknown method `{other}` (expected standard, random or improved)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreprocessMethod {
    Hessian,
    Canny,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub method: PreprocessMethod,
    pub ridge: RidgeParams,
    pub canny_low: f64,
    pub canny_high: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            method: PreprocessMethod::Hessian,
            ridge: RidgeParams::default(),
            canny_low: 20.0,
            canny_high: 60.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoughConfig {
    pub theta_bins: usize,
    pub sampling: SamplingParams,
    /// Candidate lines need at least this fraction of the strongest peak's votes.
    pub vote_fraction: f64,
    /// Absolute vote threshold; overrides `vote_fraction` when set.
    pub vote_threshold: Option<u32>,
    /// When set, the randomized transforms draw
    /// `min(max_samples, ceil(samples_per_candidate × candidate pixels))` pairs.
    pub samples_per_candidate: Option<f64>,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            theta_bins: 180,
            sampling: SamplingParams {
                max_samples: 20_000,
                ..SamplingParams::default()
            },
            vote_fraction: 0.5,
            vote_threshold: None,
            samples_per_candidate: Some(2.0),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: Option<String>,
    pub overlay: Option<String>,
    pub report: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub method: Method,
    pub preprocess: PreprocessConfig,
    pub hough: HoughConfig,
    pub region: RegionConfig,
    pub filter: FilterParams,
    pub output: OutputConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            method: Method::Improved,
            preprocess: PreprocessConfig::default(),
            hough: HoughConfig::default(),
            region: RegionConfig::default(),
            filter: FilterParams::default(),
            output: OutputConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.preprocess.method == PreprocessMethod::Hessian {
            self.preprocess.ridge.validate()?;
        }
        if self.hough.theta_bins == 0 {
            return Err(HoughError::NoThetaBins.into());
        }
        if self.method != Method::Standard {
            self.hough.sampling.validate()?;
        }
        if !(self.hough.vote_fraction > 0.0 && self.hough.vote_fraction <= 1.0) {
            return Err(PipelineError::Config(format!(
                "vote_fraction must lie in (0, 1] (got {})",
                self.hough.vote_fraction
            )));
        }
        if let Some(spc) = self.hough.samples_per_candidate {
            if !(spc > 0.0 && spc.is_finite()) {
                return Err(PipelineError::Config(format!(
                    "samples_per_candidate must be positive (got {spc})"
                )));
            }
        }
        if self.method == Method::Improved && self.filter.enabled {
            self.filter.validate()?;
        }
        Ok(())
    }

    fn region_active(&self) -> bool {
        self.method == Method::Improved && self.region.enabled
    }

    fn filter_active(&self) -> bool {
        self.method == Method::Improved && self.filter.enabled
    }
}

/// Ridge (or Canny) map used as the transforms' input.
pub fn preprocess(img: &GrayImage, config: &PreprocessConfig) -> Result<BinaryImage, PipelineError> {
    Ok(match config.method {
        PreprocessMethod::Hessian => ridge_map(img, &config.ridge)?,
        PreprocessMethod::Canny => canny_baseline(img, config.canny_low, config.canny_high)?,
    })
}

/// Line as written to reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineRecord {
    pub theta_deg: f64,
    pub rho_px: f64,
    pub votes: u32,
}

impl From<&PolarLine> for LineRecord {
    fn from(l: &PolarLine) -> Self {
        Self {
            theta_deg: l.theta_degrees(),
            rho_px: l.rho,
            votes: l.votes,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StageCounts {
    pub edge_pixels: usize,
    /// Edge pixels inside the region (all edge pixels without one).
    pub region_pixels: usize,
    /// Pixel pairs drawn (randomized methods) or pixels voted (standard).
    pub accumulated: u64,
    pub peak_candidates: usize,
    pub after_slope_filter: usize,
    pub after_spacing_filter: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub preprocess: Duration,
    pub region: Duration,
    pub hough: Duration,
    pub filter: Duration,
}

impl StageTimings {
    /// Everything after preprocessing.
    pub fn detection(&self) -> Duration {
        self.region + self.hough + self.filter
    }
}

/// Result of one pipeline run. The serialized body holds no timings so that
/// identical runs write identical reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionReport {
    pub method: Method,
    pub config: PipelineConfig,
    pub threshold: u32,
    pub i_c: Option<f64>,
    pub region: Option<RegionModel>,
    pub counts: StageCounts,
    pub diagnostic: Option<SamplingDiagnostic>,
    pub candidates: Vec<LineRecord>,
    pub lines: Vec<LineRecord>,
    #[serde(skip)]
    pub retained: Vec<PolarLine>,
    #[serde(skip)]
    pub timings: StageTimings,
}

impl DetectionReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `method,theta_deg,rho_px,votes` rows with a header line.
    pub fn lines_csv(&self) -> String {
        lines_csv(self.method, &self.retained)
    }
}

pub fn lines_csv(method: Method, lines: &[PolarLine]) -> String {
    let mut out = String::from("method,theta_deg,rho_px,votes\n");
    for l in lines {
        out.push_str(&format!(
            "{},{:.6},{:.6},{}\n",
            method,
            l.theta_degrees(),
            l.rho,
            l.votes
        ));
    }
    out
}

fn effective_threshold(config: &HoughConfig, strongest: u32, floor: u32) -> u32 {
    config
        .vote_threshold
        .unwrap_or_else(|| (config.vote_fraction * f64::from(strongest)).ceil() as u32)
        .max(floor)
}

/// Runs every stage after preprocessing on an edge map.
pub fn detect_edges(edges: &BinaryImage, config: &PipelineConfig) -> Result<DetectionReport, PipelineError> {
    config.validate()?;
    let mut timings = StageTimings::default();
    let mut counts = StageCounts {
        edge_pixels: edges.edge_count(),
        ..StageCounts::default()
    };

    // Steps 1-2: parameter space and region
    let started = Instant::now();
    let region = if config.region_active() {
        Some(build_region(edges, &config.region)?)
    } else {
        None
    };
    let points = hough::candidate_points(edges, region.as_ref());
    counts.region_pixels = points.len();
    timings.region = started.elapsed();

    // Steps 3-4: accumulate, threshold, peaks
    let started = Instant::now();
    let mut diagnostic = None;
    let (threshold, candidates) = match config.method {
        Method::Standard => {
            let (w, h) = edges.dimensions();
            let mut acc = Accumulator::for_image(config.hough.theta_bins, w, h)?;
            for &(x, y) in &points {
                acc.vote_point(x, y);
            }
            counts.accumulated = points.len() as u64;
            let threshold = effective_threshold(&config.hough, acc.max_votes(), 1);
            (threshold, acc.peaks(threshold))
        }
        Method::Random | Method::Improved => {
            let mut sampling = config.hough.sampling.clone();
            if let Some(spc) = config.hough.samples_per_candidate {
                let budget = (spc * points.len() as f64).ceil() as u64;
                sampling.max_samples = sampling.max_samples.min(budget.max(1));
            }
            let outcome = hough::randomized_hough_points(&points, &sampling);
            counts.accumulated = outcome.samples;
            diagnostic = outcome.diagnostic;
            let strongest = outcome.lines.first().map_or(0, |l| l.votes);
            let threshold = effective_threshold(&config.hough, strongest, sampling.vote_threshold);
            let kept = outcome
                .lines
                .into_iter()
                .filter(|l| l.votes >= threshold)
                .collect();
            (threshold, kept)
        }
    };
    counts.peak_candidates = candidates.len();
    timings.hough = started.elapsed();

    // Steps 5-6: orientation mode, then spacing regularity
    let started = Instant::now();
    let retained = if config.filter_active() {
        let parallel = slope_mode_filter(&candidates, &config.filter);
        counts.after_slope_filter = parallel.len();
        let spaced = spacing_variance_filter(&parallel, &config.filter);
        counts.after_spacing_filter = spaced.len();
        spaced
    } else {
        counts.after_slope_filter = candidates.len();
        counts.after_spacing_filter = candidates.len();
        candidates.clone()
    };
    timings.filter = started.elapsed();

    debug_assert!(counts.peak_candidates >= counts.after_slope_filter);
    debug_assert!(counts.after_slope_filter >= counts.after_spacing_filter);

    Ok(DetectionReport {
        method: config.method,
        config: config.clone(),
        threshold,
        i_c: region.as_ref().map(RegionModel::i_c),
        region,
        counts,
        diagnostic,
        candidates: candidates.iter().map(LineRecord::from).collect(),
        lines: retained.iter().map(LineRecord::from).collect(),
        retained,
        timings,
    })
}

/// Full pipeline on a grayscale image.
pub fn detect_pipeline(img: &GrayImage, config: &PipelineConfig) -> Result<DetectionReport, PipelineError> {
    config.validate()?;
    let started = Instant::now();
    let edges = preprocess(img, &config.preprocess)?;
    let preprocess_time = started.elapsed();
    let mut report = detect_edges(&edges, config)?;
    report.timings.preprocess = preprocess_time;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>(), Ok(m));
        }
        assert!("hough".parse::<Method>().is_err());
    }

    #[test]
    fn config_defaults_fill_missing_fields() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"hough":{"theta_bins":90}}"#).unwrap();
        assert_eq!(cfg.hough.theta_bins, 90);
        assert_eq!(cfg.region, RegionConfig::default());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn blank_image_report_is_empty() {
        let img = GrayImage::filled(64, 48, 30).unwrap();
        for method in Method::ALL {
            let report = detect_pipeline(&img, &PipelineConfig::default().with_method(method)).unwrap();
            assert_eq!(report.counts.edge_pixels, 0);
            assert_eq!(report.counts.peak_candidates, 0);
            assert_eq!(report.counts.after_spacing_filter, 0);
            assert!(report.lines.is_empty());
        }
    }

    #[test]
    fn threshold_rules() {
        let cfg = HoughConfig::default();
        assert_eq!(effective_threshold(&cfg, 101, 2), 51);
        assert_eq!(effective_threshold(&cfg, 0, 2), 2);
        let fixed = HoughConfig {
            vote_threshold: Some(7),
            ..HoughConfig::default()
        };
        assert_eq!(effective_threshold(&fixed, 1000, 2), 7);
    }

    #[test]
    fn lines_csv_format() {
        let csv = lines_csv(Method::Random, &[PolarLine::new(std::f64::consts::FRAC_PI_2, -3.25, 12)]);
        assert_eq!(csv, "method,theta_deg,rho_px,votes\nrandom,90.000000,-3.250000,12\n");
    }

    fn parallel_scene() -> BinaryImage {
        let mut rng = crate::rng::SplitMix64::new(9);
        BinaryImage::from_fn(160, 120, |_, y| y == 40 || y == 58 || y == 77 || rng.chance(0.01)).unwrap()
    }

    #[test]
    fn disabled_stages_reduce_to_the_plain_transform() {
        let edges = parallel_scene();
        let mut cfg = PipelineConfig::default();
        cfg.region.enabled = false;
        cfg.filter.enabled = false;
        let report = detect_edges(&edges, &cfg).unwrap();
        assert_eq!(report.i_c, None);
        let random = detect_edges(&edges, &cfg.clone().with_method(Method::Random)).unwrap();
        assert_eq!(report.retained, random.retained);

        let points = hough::candidate_points(&edges, None);
        let mut sampling = cfg.hough.sampling.clone();
        sampling.max_samples = report.counts.accumulated;
        sampling.vote_threshold = report.threshold;
        let direct = hough::randomized_hough(&edges, None, &sampling).unwrap();
        assert_eq!(direct.candidates, points.len());
        assert_eq!(report.retained, direct.lines);
    }

    #[test]
    fn counts_never_grow_through_the_filters() {
        let edges = parallel_scene();
        for method in Method::ALL {
            let r = detect_edges(&edges, &PipelineConfig::default().with_method(method)).unwrap();
            assert!(r.counts.peak_candidates >= r.counts.after_slope_filter);
            assert!(r.counts.after_slope_filter >= r.counts.after_spacing_filter);
            assert_eq!(r.lines.len(), r.counts.after_spacing_filter);
            assert!(r.counts.region_pixels <= r.counts.edge_pixels);
        }
        let improved = detect_edges(&edges, &PipelineConfig::default()).unwrap();
        let i_c = improved.i_c.unwrap();
        assert!(i_c > 0.0 && i_c < 1.0);
        let ys: Vec<f64> = improved.retained.iter().map(|l| l.rho).collect();
        assert_eq!(ys.len(), 3, "{ys:?}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.hough.vote_fraction = 0.0;
        assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
        let mut cfg = PipelineConfig::default();
        cfg.hough.sampling.vote_threshold = 1;
        assert!(matches!(cfg.validate(), Err(PipelineError::Hough(_))));
        let mut cfg = PipelineConfig::default();
        cfg.preprocess.ridge.sigma = 0.0;
        assert!(matches!(cfg.validate(), Err(PipelineError::Preprocess(_))));
    }
}
