use super::cumulative::event_return;
use super::pattern::{compute_intraday_pattern, deseasonalize, MeasureKind};
use super::StudyError;
use crate::calendar::SessionMinute;
use crate::events::{BarStamp, GroupKey, HaltEvent};
use crate::market_data::Panel;

/// Event-time extent of a trajectory and the pattern lookback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryWindow {
    pub pre: usize,
    pub post: usize,
    pub lookback_days: usize,
}

impl Default for TrajectoryWindow {
    fn default() -> Self {
        TrajectoryWindow {
            pre: 80,
            post: 160,
            lookback_days: 40,
        }
    }
}

/// A deseasonalized measure around one event, indexed by event time
/// `t = -pre..=post`. `t = 0` is the resumption bar.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrajectory {
    pub stock_id: String,
    pub halt_begin: BarStamp,
    pub group: Option<GroupKey>,
    pub measure: MeasureKind,
    pub t_start: isize,
    pub values: Vec<Option<f64>>,
    /// Session position each event time maps to.
    pub positions: Vec<SessionMinute>,
}

impl EventTrajectory {
    pub fn t_end(&self) -> isize {
        self.t_start + self.values.len() as isize - 1
    }

    pub fn value(&self, t: isize) -> Option<f64> {
        let i = t.checked_sub(self.t_start)?;
        usize::try_from(i).ok().and_then(|i| self.values.get(i)).copied().flatten()
    }

    pub fn sort_key(&self) -> (&str, BarStamp) {
        (&self.stock_id, self.halt_begin)
    }
}

/// Walks traded minutes back from the last pre-halt bar and forward from the
/// resumption bar, deseasonalizing each value against the event's own
/// intraday pattern at that bar's intraday minute.
///
/// The absolute return at `t = 0` spans the halt: last pre-halt price to
/// first post-resumption price.
pub fn extract_trajectory(
    panel: &Panel,
    event: &HaltEvent,
    measure: MeasureKind,
    window: &TrajectoryWindow,
) -> Result<EventTrajectory, StudyError> {
    let stock = &event.record.stock_id;
    let series = panel
        .series(stock)
        .ok_or_else(|| StudyError::UnknownStock(stock.clone()))?;
    let pattern = compute_intraday_pattern(panel, event, measure, window.lookback_days)?;
    if event.resume_at.0 + window.post > series.last().0 {
        return Err(StudyError::InsufficientPostWindow {
            stock: stock.clone(),
        });
    }
    let t_start = -(window.pre as isize);
    let mut values = Vec::with_capacity(window.pre + window.post + 1);
    let mut positions = Vec::with_capacity(values.capacity());
    for t in t_start..=window.post as isize {
        let at = event
            .position_of(t)
            .ok_or_else(|| StudyError::InsufficientWindow {
                stock: stock.clone(),
            })?;
        let raw = match measure {
            MeasureKind::AbsoluteReturn if t == 0 => {
                let real = series.get(at).is_some_and(|b| !b.synthetic_fill);
                if real {
                    event_return(series, event, 0).map(f64::abs)
                } else {
                    None
                }
            }
            _ => measure.value_at(series, at),
        };
        let z = match raw {
            Some(v) => Some(deseasonalize(v, pattern.at(at.minute())).map_err(|_| {
                StudyError::ZeroBaseline {
                    stock: stock.clone(),
                    minute: at.minute(),
                }
            })?),
            None => None,
        };
        values.push(z);
        positions.push(at);
    }
    Ok(EventTrajectory {
        stock_id: stock.clone(),
        halt_begin: event.record.halt_begin,
        group: event.group(),
        measure,
        t_start,
        values,
        positions,
    })
}
