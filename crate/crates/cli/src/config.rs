use std::path::{Path, PathBuf};

use halt_core::events::EligibilityConfig;
use halt_core::fit::{FitConfig, FitRange, PowerLawFitter};
use halt_core::pipeline::AnalysisConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Trend windows accepted for sign classification, in traded minutes.
pub const TREND_WINDOWS: [usize; 4] = [60, 120, 180, 240];

/// Declarative run configuration. Every key is optional in the TOML file and
/// falls back to the default shown in [`RunConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub bars: Option<PathBuf>,
    pub calendar: Option<PathBuf>,
    pub halts: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub trend_window: usize,
    pub lookback_days: usize,
    pub measure_pre: usize,
    pub measure_post: usize,
    pub cum_pre: usize,
    pub cum_post: usize,
    pub max_span_days: usize,
    pub max_gap_fraction: f64,
    pub fit_t_min: usize,
    pub fit_t_max: usize,
    pub min_r2: f64,
    pub bootstrap_resamples: usize,
    pub seed: u64,
    pub reversal_horizons: Vec<usize>,
    pub robustness_windows: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = EligibilityConfig::default();
        RunConfig {
            bars: None,
            calendar: None,
            halts: None,
            out_dir: None,
            trend_window: e.trend_window,
            lookback_days: e.lookback_days,
            measure_pre: e.measure_pre,
            measure_post: e.measure_post,
            cum_pre: e.cum_pre,
            cum_post: e.cum_post,
            max_span_days: e.max_span_days,
            max_gap_fraction: e.max_gap_fraction,
            fit_t_min: 1,
            fit_t_max: 160,
            min_r2: 0.2,
            bootstrap_resamples: 1000,
            seed: 0,
            reversal_horizons: vec![1, 2],
            robustness_windows: TREND_WINDOWS.to_vec(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML config. Relative paths inside it are taken relative to
    /// the directory holding the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.bars,
            &mut config.calendar,
            &mut config.halts,
            &mut config.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        for w in std::iter::once(&self.trend_window).chain(&self.robustness_windows) {
            if !TREND_WINDOWS.contains(w) {
                return bad(format!("trend window {w} is not one of {TREND_WINDOWS:?}"));
            }
        }
        if self.robustness_windows.is_empty() {
            return bad("robustness_windows is empty".into());
        }
        if self.lookback_days == 0 {
            return bad("lookback_days must be positive".into());
        }
        if self.measure_post == 0 || self.cum_post == 0 {
            return bad("post-resumption windows must be positive".into());
        }
        if self.fit_t_min == 0 || self.fit_t_min > self.fit_t_max || self.fit_t_max > self.measure_post {
            return bad(format!(
                "fit range [{}, {}] must lie inside 1..={}",
                self.fit_t_min, self.fit_t_max, self.measure_post
            ));
        }
        if !(0.0..=1.0).contains(&self.max_gap_fraction) {
            return bad("max_gap_fraction must be in [0, 1]".into());
        }
        if !(self.min_r2.is_finite() && self.min_r2 <= 1.0) {
            return bad("min_r2 must be at most 1".into());
        }
        if self.reversal_horizons.iter().any(|&h| h == 0 || h > self.cum_post + 1) {
            return bad(format!("reversal horizons must lie in 1..={}", self.cum_post + 1));
        }
        Ok(())
    }

    pub fn required(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        path.clone()
            .ok_or_else(|| CliError::Validation(format!("missing input path `{key}`")))
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            eligibility: EligibilityConfig {
                trend_window: self.trend_window,
                lookback_days: self.lookback_days,
                cum_pre: self.cum_pre,
                cum_post: self.cum_post,
                measure_pre: self.measure_pre,
                measure_post: self.measure_post,
                max_span_days: self.max_span_days,
                max_gap_fraction: self.max_gap_fraction,
            },
            fit: FitConfig {
                range: FitRange {
                    t_min: self.fit_t_min,
                    t_max: self.fit_t_max,
                },
                min_r2: self.min_r2,
                fitter: PowerLawFitter::default(),
            },
            bootstrap_resamples: self.bootstrap_resamples,
            seed: self.seed,
            reversal_horizons: self.reversal_horizons.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
