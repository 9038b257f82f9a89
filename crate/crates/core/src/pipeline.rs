//! End-to-end analysis of one panel and halt registry, without any I/O.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::events::{
    filter_eligibility, tabulate_counts, BarStamp, CountTable, EligibilityConfig, EventError,
    EventSign, GroupKey, HaltEvent, HaltRecord,
};
use crate::fit::{bootstrap_alpha_stderr, fit_all_groups, ExponentEntry, FitConfig, FitFlag};
use crate::market_data::Panel;
use crate::stats::derive_seed;
use crate::study::{
    average_cumulative_return, event_returns, extract_trajectory, group_average,
    reversal_stats, CumulativeReturnCurve, EventTrajectory, GroupAverage, MeasureKind,
    ReversalFraction, StudyError, TrajectoryWindow,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Study(#[from] StudyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub eligibility: EligibilityConfig,
    pub fit: FitConfig,
    /// 0 disables the bootstrap.
    pub bootstrap_resamples: usize,
    pub seed: u64,
    pub reversal_horizons: Vec<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            eligibility: EligibilityConfig::default(),
            fit: FitConfig::default(),
            bootstrap_resamples: 1000,
            seed: 0,
            reversal_horizons: vec![1, 2],
        }
    }
}

impl AnalysisConfig {
    pub fn trajectory_window(&self) -> TrajectoryWindow {
        TrajectoryWindow {
            pre: self.eligibility.measure_pre,
            post: self.eligibility.measure_post,
            lookback_days: self.eligibility.lookback_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReturns {
    pub group: GroupKey,
    pub curve: CumulativeReturnCurve,
    pub reversals: Vec<ReversalFraction>,
}

/// An eligible event left out of one analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFailure {
    pub stock_id: String,
    pub halt_begin: BarStamp,
    /// `None` for the cumulative-return analysis.
    pub measure: Option<MeasureKind>,
    pub error: StudyError,
}

#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub events: Vec<HaltEvent>,
    pub counts: CountTable,
    pub returns: Vec<GroupReturns>,
    pub averages: Vec<GroupAverage>,
    pub exponents: Vec<ExponentEntry>,
    pub failures: Vec<EventFailure>,
}

impl AnalysisOutput {
    pub fn exponent(&self, measure: MeasureKind, group: GroupKey) -> Option<&ExponentEntry> {
        self.exponents
            .iter()
            .find(|e| e.measure == measure && e.group == group)
    }

    pub fn average(&self, measure: MeasureKind, group: GroupKey) -> Option<&GroupAverage> {
        self.averages
            .iter()
            .find(|a| a.measure == measure && a.group == Some(group))
    }
}

fn failure(event: &HaltEvent, measure: Option<MeasureKind>, error: StudyError) -> EventFailure {
    EventFailure {
        stock_id: event.record.stock_id.clone(),
        halt_begin: event.record.halt_begin,
        measure,
        error,
    }
}

/// Classification, eligibility, cumulative returns, deseasonalized group
/// averages and power-law fits.
///
/// The panel is forward-filled first so that isolated missing bars carry the
/// previous price. Filled bars are flagged and never enter the intraday
/// patterns or trajectories.
pub fn analyze(
    panel: &Panel,
    records: &[HaltRecord],
    config: &AnalysisConfig,
) -> Result<AnalysisOutput, PipelineError> {
    let panel = panel.forward_fill_all();
    let events = filter_eligibility(records, &panel, &config.eligibility)?;
    let counts = tabulate_counts(&events);

    let mut groups: BTreeMap<GroupKey, Vec<&HaltEvent>> = BTreeMap::new();
    for e in &events {
        if let Some(g) = e.group() {
            groups.entry(g).or_default().push(e);
        }
    }

    let elig = &config.eligibility;
    let mut failures = Vec::new();
    let mut returns = Vec::new();
    for group in GroupKey::all() {
        let Some(members) = groups.get(&group) else {
            continue;
        };
        let checked: Vec<Result<(), StudyError>> = members
            .par_iter()
            .map(|e| event_returns(&panel, e, elig.cum_pre, elig.cum_post).map(|_| ()))
            .collect();
        let mut usable = Vec::with_capacity(members.len());
        for (e, ok) in members.iter().zip(checked) {
            match ok {
                Ok(()) => usable.push((*e).clone()),
                Err(err) => failures.push(failure(e, None, err)),
            }
        }
        if usable.is_empty() {
            continue;
        }
        let curve = average_cumulative_return(&panel, &usable, elig.cum_pre, elig.cum_post)?;
        let reversals = reversal_stats(&panel, &usable, &config.reversal_horizons)?;
        returns.push(GroupReturns {
            group,
            curve,
            reversals,
        });
    }

    let window = config.trajectory_window();
    let mut averages = Vec::new();
    let mut trajectories: BTreeMap<(MeasureKind, GroupKey), Vec<EventTrajectory>> = BTreeMap::new();
    for measure in MeasureKind::ALL {
        for group in GroupKey::all() {
            let Some(members) = groups.get(&group) else {
                continue;
            };
            let extracted: Vec<Result<EventTrajectory, StudyError>> = members
                .par_iter()
                .map(|e| extract_trajectory(&panel, e, measure, &window))
                .collect();
            let mut ok = Vec::with_capacity(members.len());
            for (e, r) in members.iter().zip(extracted) {
                match r {
                    Ok(tr) => ok.push(tr),
                    Err(err) => failures.push(failure(e, Some(measure), err)),
                }
            }
            if ok.is_empty() {
                continue;
            }
            averages.push(group_average(&ok)?);
            trajectories.insert((measure, group), ok);
        }
    }

    let mut exponents = fit_all_groups(&averages, &config.fit);
    if config.bootstrap_resamples > 0 {
        for (cell, entry) in exponents.iter_mut().enumerate() {
            let Some(fit) = entry.fit.as_mut() else {
                continue;
            };
            if entry.flag != FitFlag::Ok {
                continue;
            }
            let Some(trs) = trajectories.get(&(entry.measure, entry.group)) else {
                continue;
            };
            if trs.len() < 2 {
                continue;
            }
            let boot = bootstrap_alpha_stderr(
                trs,
                config.fit.range,
                config.bootstrap_resamples,
                derive_seed(config.seed, cell as u64),
                &config.fit.fitter,
            );
            if let Ok(b) = boot {
                fit.bootstrap_alpha_stderr = b.stderr;
            }
        }
    }

    Ok(AnalysisOutput {
        events,
        counts,
        returns,
        averages,
        exponents,
        failures,
    })
}

/// Trend sign of one event under each trend window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignComparison {
    pub stock_id: String,
    pub halt_begin: BarStamp,
    pub signs: Vec<Option<EventSign>>,
    /// Adjacent window pairs whose signs differ.
    pub flips: usize,
}

/// Compares the classified sign of each event across runs that differ only
/// in the trend window. `runs` holds the classified events of each window in
/// sweep order.
pub fn sign_flips(runs: &[Vec<HaltEvent>]) -> Vec<SignComparison> {
    let mut table: BTreeMap<(String, BarStamp), Vec<Option<EventSign>>> = BTreeMap::new();
    for (w, events) in runs.iter().enumerate() {
        for e in events {
            let row = table
                .entry((e.record.stock_id.clone(), e.record.halt_begin))
                .or_insert_with(|| vec![None; runs.len()]);
            row[w] = e.sign;
        }
    }
    table
        .into_iter()
        .map(|((stock_id, halt_begin), signs)| {
            let flips = signs
                .windows(2)
                .filter(|p| matches!((p[0], p[1]), (Some(a), Some(b)) if a != b))
                .count();
            SignComparison {
                stock_id,
                halt_begin,
                signs,
                flips,
            }
        })
        .collect()
}
