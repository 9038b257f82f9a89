use serde::Serialize;

use super::powerlaw::{fit_series, make_excess, FitRange, PowerLawFit, PowerLawFitter};
use crate::events::GroupKey;
use crate::study::{GroupAverage, MeasureKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub range: FitRange,
    /// Fits with a lower R² are reported as having no power-law relaxation.
    pub min_r2: f64,
    pub fitter: PowerLawFitter,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            range: FitRange::default(),
            min_r2: 0.2,
            fitter: PowerLawFitter::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitFlag {
    Ok,
    NoPowerLaw,
    NoData,
}

impl FitFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            FitFlag::Ok => "ok",
            FitFlag::NoPowerLaw => "no_power_law",
            FitFlag::NoData => "no_data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentEntry {
    pub measure: MeasureKind,
    pub group: GroupKey,
    /// Present whenever the optimiser converged, even if flagged.
    pub fit: Option<PowerLawFit>,
    pub flag: FitFlag,
    pub note: Option<String>,
}

/// Fits every (measure, group) average. Groups without an average get a
/// `NoData` row so the table always has one row per cell.
pub fn fit_all_groups(averages: &[GroupAverage], config: &FitConfig) -> Vec<ExponentEntry> {
    let mut out = Vec::new();
    for measure in MeasureKind::ALL {
        for group in GroupKey::all() {
            let avg = averages
                .iter()
                .find(|a| a.measure == measure && a.group == Some(group));
            let entry = match avg {
                None => ExponentEntry {
                    measure,
                    group,
                    fit: None,
                    flag: FitFlag::NoData,
                    note: Some("no eligible events".into()),
                },
                Some(avg) => {
                    let excess = make_excess(avg);
                    match fit_series(&config.fitter, &excess, config.range) {
                        Ok(fit) if fit.r2 >= config.min_r2 => ExponentEntry {
                            measure,
                            group,
                            fit: Some(fit),
                            flag: FitFlag::Ok,
                            note: None,
                        },
                        Ok(fit) => ExponentEntry {
                            measure,
                            group,
                            note: Some(format!("r2 {:.4} below {}", fit.r2, config.min_r2)),
                            fit: Some(fit),
                            flag: FitFlag::NoPowerLaw,
                        },
                        Err(e) => ExponentEntry {
                            measure,
                            group,
                            fit: None,
                            flag: FitFlag::NoPowerLaw,
                            note: Some(e.to_string()),
                        },
                    }
                }
            };
            out.push(entry);
        }
    }
    out
}
