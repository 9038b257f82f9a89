use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StudyError;
use crate::calendar::{SessionMinute, MINUTES_PER_DAY};
use crate::events::{days_with_data_before, HaltEvent};
use crate::market_data::{Panel, StockSeries};
use crate::stats::Running;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    AbsoluteReturn,
    Volume,
    BidAskSpread,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 3] = [
        MeasureKind::AbsoluteReturn,
        MeasureKind::Volume,
        MeasureKind::BidAskSpread,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MeasureKind::AbsoluteReturn => "absolute_return",
            MeasureKind::Volume => "volume",
            MeasureKind::BidAskSpread => "bid_ask_spread",
        }
    }

    /// Raw value at a bar. Synthetic fill bars carry no observation.
    pub(crate) fn value_at(self, series: &StockSeries, at: SessionMinute) -> Option<f64> {
        let bar = series.get(at).filter(|b| !b.synthetic_fill)?;
        match self {
            MeasureKind::AbsoluteReturn => series.log_return(at).map(f64::abs),
            MeasureKind::Volume => Some(bar.volume),
            MeasureKind::BidAskSpread => bar.spread(),
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MeasureKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown measure {s:?}"))
    }
}

/// Per-intraday-minute mean of a measure over the lookback days of one event.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradayPattern {
    /// `values[m - 1]` is the baseline for intraday minute `m`.
    pub values: Vec<f64>,
    pub n_observations: Vec<usize>,
    pub lookback_days: usize,
}

impl IntradayPattern {
    pub fn at(&self, minute: u16) -> f64 {
        self.values[minute as usize - 1]
    }
}

/// Averages the measure at each intraday minute over the `lookback` most
/// recent trading days with data before the halt day. Days on which the stock
/// was suspended for the whole session are skipped.
pub fn compute_intraday_pattern(
    panel: &Panel,
    event: &HaltEvent,
    measure: MeasureKind,
    lookback: usize,
) -> Result<IntradayPattern, StudyError> {
    let stock = &event.record.stock_id;
    let series = panel
        .series(stock)
        .ok_or_else(|| StudyError::UnknownStock(stock.clone()))?;
    let mut days = days_with_data_before(series, event.halt_begin_at.day_index());
    if days.len() < lookback {
        return Err(StudyError::InsufficientHistory {
            stock: stock.clone(),
            needed: lookback,
        });
    }
    days.truncate(lookback);
    days.reverse();

    let mut acc = vec![Running::default(); MINUTES_PER_DAY];
    for &d in &days {
        for (i, slot) in acc.iter_mut().enumerate() {
            if let Some(v) = measure.value_at(series, SessionMinute::new(d, i as u16 + 1)) {
                slot.push(v);
            }
        }
    }
    let mut values = Vec::with_capacity(MINUTES_PER_DAY);
    for (i, r) in acc.iter().enumerate() {
        match r.mean() {
            Some(v) if v > 0.0 && v.is_finite() => values.push(v),
            _ => {
                return Err(StudyError::ZeroBaseline {
                    stock: stock.clone(),
                    minute: i as u16 + 1,
                })
            }
        }
    }
    Ok(IntradayPattern {
        values,
        n_observations: acc.iter().map(Running::count).collect(),
        lookback_days: lookback,
    })
}

/// `value / baseline`.
pub fn deseasonalize(value: f64, baseline: f64) -> Result<f64, StudyError> {
    if baseline > 0.0 {
        Ok(value / baseline)
    } else {
        Err(StudyError::ZeroDivisor)
    }
}
