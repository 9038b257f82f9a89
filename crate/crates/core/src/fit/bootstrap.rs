use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::powerlaw::{fit_series, ExcessSeries, FitRange, PowerLawFitter};
use super::FitError;
use crate::stats::{derive_seed, Running};
use crate::study::{EventTrajectory, StudyError};

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// Sample standard deviation of the resampled exponents.
    pub stderr: Option<f64>,
    pub alphas: Vec<f64>,
    pub n_failed: usize,
}

/// Event indices drawn with replacement for each resample. Resample `b` uses
/// its own ChaCha8 stream, so the draws do not depend on scheduling.
pub fn resample_indices(n_events: usize, n_resamples: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..n_resamples)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
            (0..n_events).map(|_| rng.random_range(0..n_events)).collect()
        })
        .collect()
}

fn resampled_excess(ordered: &[&EventTrajectory], draw: &[usize]) -> ExcessSeries {
    let first = ordered[0];
    let t1 = usize::try_from(1 - first.t_start).unwrap_or(usize::MAX);
    let len = first.values.len().saturating_sub(t1);
    let mut acc = vec![Running::default(); len];
    for &i in draw {
        for (slot, v) in acc.iter_mut().zip(&ordered[i].values[t1.min(first.values.len())..]) {
            if let Some(v) = v {
                slot.push(*v);
            }
        }
    }
    ExcessSeries {
        group: first.group,
        measure: first.measure,
        values: acc.iter().map(|r| r.mean().map(|z| z - 1.0)).collect(),
    }
}

/// Bootstrap standard error of the decay exponent: events are resampled with
/// replacement, re-averaged and refitted. Resamples whose fit fails are
/// dropped and counted.
pub fn bootstrap_alpha_stderr(
    trajectories: &[EventTrajectory],
    range: FitRange,
    n_resamples: usize,
    seed: u64,
    fitter: &PowerLawFitter,
) -> Result<BootstrapResult, FitError> {
    if trajectories.len() < 2 {
        return Err(FitError::TooFewTrajectories(trajectories.len()));
    }
    let first = &trajectories[0];
    if trajectories.iter().any(|tr| {
        tr.measure != first.measure
            || tr.t_start != first.t_start
            || tr.values.len() != first.values.len()
    }) {
        return Err(StudyError::MismatchedTrajectories.into());
    }
    let mut ordered: Vec<&EventTrajectory> = trajectories.iter().collect();
    ordered.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

    let draws = resample_indices(ordered.len(), n_resamples, seed);
    let fits: Vec<Option<f64>> = draws
        .par_iter()
        .map(|draw| {
            let ex = resampled_excess(&ordered, draw);
            fit_series(fitter, &ex, range).ok().map(|f| f.alpha)
        })
        .collect();

    let alphas: Vec<f64> = fits.iter().flatten().copied().collect();
    let n_failed = fits.len() - alphas.len();
    let stderr = alphas.iter().copied().collect::<Running>().sample_std();
    Ok(BootstrapResult {
        stderr,
        alphas,
        n_failed,
    })
}
