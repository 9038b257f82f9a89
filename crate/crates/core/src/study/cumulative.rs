use super::StudyError;
use crate::events::{EventSign, GroupKey, HaltEvent};
use crate::market_data::{Panel, StockSeries};
use crate::stats::Running;

/// Log return at event time `t`. The return at `t = 0` runs from the last
/// pre-halt price to the resumption price, so it carries the whole halt gap.
pub(crate) fn event_return(series: &StockSeries, event: &HaltEvent, t: isize) -> Option<f64> {
    if t == 0 {
        let p1 = series.get(event.resume_at)?.last_price;
        let p0 = series.get(event.halt_begin_at.offset(-1)?)?.last_price;
        Some(p1.ln() - p0.ln())
    } else {
        series.log_return(event.position_of(t)?)
    }
}

/// Event-time returns `r(-pre) ..= r(post)` of one event.
pub fn event_returns(
    panel: &Panel,
    event: &HaltEvent,
    pre: usize,
    post: usize,
) -> Result<Vec<f64>, StudyError> {
    let stock = &event.record.stock_id;
    let series = panel
        .series(stock)
        .ok_or_else(|| StudyError::UnknownStock(stock.clone()))?;
    (-(pre as isize)..=post as isize)
        .map(|t| {
            event_return(series, event, t).ok_or_else(|| StudyError::InsufficientWindow {
                stock: stock.clone(),
            })
        })
        .collect()
}

/// Average cumulative return of a group, shifted so that `R(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeReturnCurve {
    pub group: Option<GroupKey>,
    pub t_start: isize,
    pub values: Vec<f64>,
    /// Standard error across events of the per-event shifted cumulative sums.
    pub stderr: Vec<Option<f64>>,
    pub n_events: usize,
    pub stability_s: f64,
}

impl CumulativeReturnCurve {
    pub fn value(&self, t: isize) -> Option<f64> {
        let i = usize::try_from(t - self.t_start).ok()?;
        self.values.get(i).copied()
    }

    pub fn t_end(&self) -> isize {
        self.t_start + self.values.len() as isize - 1
    }
}

/// Equal-weight average over events of `sum_{i=-pre}^{t} r(i)`, then shifted
/// vertically to zero at `t = 0`.
pub fn average_cumulative_return(
    panel: &Panel,
    events: &[HaltEvent],
    pre: usize,
    post: usize,
) -> Result<CumulativeReturnCurve, StudyError> {
    if events.is_empty() {
        return Err(StudyError::EmptyGroup);
    }
    let mut ordered: Vec<&HaltEvent> = events.iter().collect();
    ordered.sort_by(|a, b| {
        (&a.record.stock_id, a.halt_begin_at).cmp(&(&b.record.stock_id, b.halt_begin_at))
    });

    let len = pre + post + 1;
    let mut sums = vec![0.0; len];
    let mut shifted = vec![Running::default(); len];
    for event in &ordered {
        let returns = event_returns(panel, event, pre, post)?;
        let mut cum = Vec::with_capacity(len);
        let mut c = 0.0;
        for r in returns {
            c += r;
            cum.push(c);
        }
        let at_zero = cum[pre];
        for (i, c) in cum.iter().enumerate() {
            sums[i] += c;
            shifted[i].push(c - at_zero);
        }
    }
    let n = ordered.len() as f64;
    let raw: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let values: Vec<f64> = raw.iter().map(|r| r - raw[pre]).collect();
    let mut curve = CumulativeReturnCurve {
        group: events[0].group(),
        t_start: -(pre as isize),
        values,
        stderr: shifted.iter().map(Running::std_error).collect(),
        n_events: ordered.len(),
        stability_s: 0.0,
    };
    curve.stability_s = stability_stat(&curve);
    Ok(curve)
}

/// Sample standard deviation of `R(t)` for `t = 1..=t_end`.
pub fn stability_stat(curve: &CumulativeReturnCurve) -> f64 {
    let r: Running = (1..=curve.t_end())
        .filter_map(|t| curve.value(t))
        .collect();
    r.sample_std().unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReversalFraction {
    pub horizon: usize,
    pub reversed: usize,
    pub total: usize,
    pub fraction: f64,
}

/// For each horizon `k`, the fraction of events whose cumulative return from
/// the last pre-halt price to the price `k` traded minutes after resumption
/// (event times `0..k`) has the sign opposite to the pre-halt trend.
pub fn reversal_stats(
    panel: &Panel,
    events: &[HaltEvent],
    horizons: &[usize],
) -> Result<Vec<ReversalFraction>, StudyError> {
    if events.is_empty() {
        return Err(StudyError::EmptyGroup);
    }
    let max_h = horizons.iter().copied().max().unwrap_or(0);
    let mut per_event = Vec::with_capacity(events.len());
    for event in events {
        let stock = &event.record.stock_id;
        let sign = event.sign.ok_or_else(|| StudyError::UnsignedEvent {
            stock: stock.clone(),
        })?;
        let returns = event_returns(panel, event, 0, max_h.saturating_sub(1))?;
        per_event.push((sign, returns));
    }
    Ok(horizons
        .iter()
        .map(|&k| {
            let reversed = per_event
                .iter()
                .filter(|(sign, returns)| {
                    let cum: f64 = returns[..k].iter().sum();
                    match sign {
                        EventSign::Negative => cum > 0.0,
                        EventSign::Positive => cum < 0.0,
                    }
                })
                .count();
            ReversalFraction {
                horizon: k,
                reversed,
                total: per_event.len(),
                fraction: reversed as f64 / per_event.len() as f64,
            }
        })
        .collect())
}
