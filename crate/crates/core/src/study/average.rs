use super::trajectory::EventTrajectory;
use super::{MeasureKind, StudyError};
use crate::events::GroupKey;
use crate::stats::Running;

/// Equal-weight average of trajectories at each event time.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAverage {
    pub group: Option<GroupKey>,
    pub measure: MeasureKind,
    pub t_start: isize,
    pub mean: Vec<Option<f64>>,
    /// Sample standard deviation over `sqrt(n)`; missing where `n < 2`.
    pub stderr: Vec<Option<f64>>,
    pub n: Vec<usize>,
}

impl GroupAverage {
    pub fn t_end(&self) -> isize {
        self.t_start + self.mean.len() as isize - 1
    }

    pub fn mean_at(&self, t: isize) -> Option<f64> {
        let i = usize::try_from(t - self.t_start).ok()?;
        self.mean.get(i).copied().flatten()
    }
}

/// Per-t available-case average. Events are accumulated in (stock, halt
/// begin) order so the result does not depend on input order.
pub fn group_average(trajectories: &[EventTrajectory]) -> Result<GroupAverage, StudyError> {
    let first = trajectories.first().ok_or(StudyError::EmptyGroup)?;
    if trajectories.iter().any(|tr| {
        tr.measure != first.measure
            || tr.t_start != first.t_start
            || tr.values.len() != first.values.len()
    }) {
        return Err(StudyError::MismatchedTrajectories);
    }
    let mut ordered: Vec<&EventTrajectory> = trajectories.iter().collect();
    ordered.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

    let mut acc = vec![Running::default(); first.values.len()];
    for tr in ordered {
        for (slot, v) in acc.iter_mut().zip(&tr.values) {
            if let Some(v) = v {
                slot.push(*v);
            }
        }
    }
    Ok(GroupAverage {
        group: first.group,
        measure: first.measure,
        t_start: first.t_start,
        mean: acc.iter().map(Running::mean).collect(),
        stderr: acc.iter().map(Running::std_error).collect(),
        n: acc.iter().map(Running::count).collect(),
    })
}
