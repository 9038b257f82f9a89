//! Halt records, their duration/trend classification and eligibility filtering.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{first_bar_from, SessionMinute, TradingCalendar};
use crate::market_data::{Panel, StockSeries};

pub const HALT_CSV_HEADER: [&str; 6] = [
    "stock_id",
    "halt_date",
    "halt_minute",
    "resume_date",
    "resume_minute",
    "is_st",
];

#[derive(Debug, Error)]
pub enum EventError {
    #[error("halt of {stock}: resume {resume} is not after halt begin {begin}")]
    InvalidInterval {
        stock: String,
        begin: BarStamp,
        resume: BarStamp,
    },
    #[error("halt of {stock}: {day} is not a trading day in the calendar")]
    UnknownDay { stock: String, day: NaiveDate },
    #[error("halt of {stock}: not enough history before the halt")]
    InsufficientHistory { stock: String },
    #[error("line {line}: malformed halt row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A (trading day, intraday bar) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BarStamp {
    pub day: NaiveDate,
    pub minute: u16,
}

impl BarStamp {
    pub fn new(day: NaiveDate, minute: u16) -> Self {
        BarStamp { day, minute }
    }
}

impl fmt::Display for BarStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.day.format("%Y-%m-%d"), self.minute)
    }
}

/// One halt as listed in the registry.
///
/// `halt_begin` is the first suspended bar and `resume` the first bar traded
/// after the suspension is lifted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaltRecord {
    pub stock_id: String,
    pub halt_begin: BarStamp,
    pub resume: BarStamp,
    pub is_st_stock: bool,
    pub reason_code: Option<String>,
}

impl HaltRecord {
    pub fn new(
        stock_id: impl Into<String>,
        halt_begin: BarStamp,
        resume: BarStamp,
        is_st_stock: bool,
    ) -> Result<Self, EventError> {
        let stock_id = stock_id.into();
        if resume <= halt_begin {
            return Err(EventError::InvalidInterval {
                stock: stock_id,
                begin: halt_begin,
                resume,
            });
        }
        Ok(HaltRecord {
            stock_id,
            halt_begin,
            resume,
            is_st_stock,
            reason_code: None,
        })
    }

    /// Builds a record from wall-clock halt and resumption times. Resumption
    /// after the close rolls to bar 1 of the next trading day.
    pub fn from_wall_clock(
        stock_id: impl Into<String>,
        calendar: &TradingCalendar,
        halt: (NaiveDate, NaiveTime),
        resume: (NaiveDate, NaiveTime),
        is_st_stock: bool,
    ) -> Result<Self, EventError> {
        let stock_id = stock_id.into();
        let to_stamp = |(day, time): (NaiveDate, NaiveTime)| -> Result<BarStamp, EventError> {
            let idx = calendar.day_index(day).ok_or_else(|| EventError::UnknownDay {
                stock: stock_id.clone(),
                day,
            })?;
            match first_bar_from(time) {
                Some(m) => Ok(BarStamp::new(day, m)),
                None if idx + 1 < calendar.len() => Ok(BarStamp::new(calendar.day(idx + 1), 1)),
                None => Err(EventError::UnknownDay {
                    stock: stock_id.clone(),
                    day,
                }),
            }
        };
        let begin = to_stamp(halt)?;
        let resume = to_stamp(resume)?;
        HaltRecord::new(stock_id, begin, resume, is_st_stock)
    }

    /// Positions of the first halted bar and the resumption bar.
    pub fn positions(
        &self,
        calendar: &TradingCalendar,
    ) -> Result<(SessionMinute, SessionMinute), EventError> {
        let locate = |s: BarStamp| {
            calendar
                .position(s.day, s.minute)
                .ok_or_else(|| EventError::UnknownDay {
                    stock: self.stock_id.clone(),
                    day: s.day,
                })
        };
        let begin = locate(self.halt_begin)?;
        let resume = locate(self.resume)?;
        if resume <= begin {
            return Err(EventError::InvalidInterval {
                stock: self.stock_id.clone(),
                begin: self.halt_begin,
                resume: self.resume,
            });
        }
        Ok((begin, resume))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HaltType {
    Intraday,
    OneDay,
    InterDay,
}

impl HaltType {
    pub const ALL: [HaltType; 3] = [HaltType::Intraday, HaltType::OneDay, HaltType::InterDay];

    pub fn as_str(self) -> &'static str {
        match self {
            HaltType::Intraday => "intraday",
            HaltType::OneDay => "oneday",
            HaltType::InterDay => "interday",
        }
    }
}

impl fmt::Display for HaltType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HaltType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HaltType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown halt type {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventSign {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
}

impl EventSign {
    pub const ALL: [EventSign; 2] = [EventSign::Positive, EventSign::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            EventSign::Positive => "pos",
            EventSign::Negative => "neg",
        }
    }

    /// Positive only for a strictly positive trend.
    pub fn of_trend(trend: f64) -> Self {
        if trend > 0.0 {
            EventSign::Positive
        } else {
            EventSign::Negative
        }
    }
}

impl fmt::Display for EventSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventSign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventSign::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown event sign {s:?}"))
    }
}

/// Halt type × trend sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub halt_type: HaltType,
    pub sign: EventSign,
}

impl GroupKey {
    pub fn new(halt_type: HaltType, sign: EventSign) -> Self {
        GroupKey { halt_type, sign }
    }

    /// The six groups in table order.
    pub fn all() -> impl Iterator<Item = GroupKey> {
        HaltType::ALL
            .into_iter()
            .flat_map(|t| EventSign::ALL.into_iter().map(move |s| GroupKey::new(t, s)))
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.halt_type, self.sign)
    }
}

impl FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (t, sign) = s.split_once('_').ok_or_else(|| format!("bad group key {s:?}"))?;
        Ok(GroupKey::new(t.parse()?, sign.parse()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    Successive,
    StStock,
    TooLong,
    DataGap,
    InsufficientHistory,
    InsufficientPostWindow,
}

impl RejectionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectionReason::Successive => "successive",
            RejectionReason::StStock => "st_stock",
            RejectionReason::TooLong => "too_long",
            RejectionReason::DataGap => "data_gap",
            RejectionReason::InsufficientHistory => "insufficient_history",
            RejectionReason::InsufficientPostWindow => "insufficient_post_window",
        }
    }
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A classified halt.
#[derive(Debug, Clone, PartialEq)]
pub struct HaltEvent {
    pub record: HaltRecord,
    pub halt_type: HaltType,
    /// `None` only when the trend window is not covered by data, in which
    /// case the event is rejected for insufficient history.
    pub sign: Option<EventSign>,
    /// Cumulative log return over the trend window.
    pub trend: Option<f64>,
    pub rejection_reason: Option<RejectionReason>,
    pub halt_begin_at: SessionMinute,
    pub resume_at: SessionMinute,
}

impl HaltEvent {
    pub fn eligible(&self) -> bool {
        self.rejection_reason.is_none()
    }

    /// Group of an eligible event.
    pub fn group(&self) -> Option<GroupKey> {
        match (self.eligible(), self.sign) {
            (true, Some(sign)) => Some(GroupKey::new(self.halt_type, sign)),
            _ => None,
        }
    }

    /// Session position of event time `t`: `t < 0` counts back from the last
    /// pre-halt bar, `t >= 0` forward from the resumption bar.
    pub fn position_of(&self, t: isize) -> Option<SessionMinute> {
        if t < 0 {
            self.halt_begin_at.offset(t)
        } else {
            self.resume_at.offset(t)
        }
    }
}

/// Number of trading days on which the stock was suspended for the whole
/// session.
pub fn full_suspended_days(begin: SessionMinute, resume: SessionMinute) -> usize {
    let first_full = if begin.minute() == 1 {
        begin.day_index()
    } else {
        begin.day_index() + 1
    };
    resume.day_index().saturating_sub(first_full)
}

/// Intraday when no full day is suspended, one-day for exactly one, inter-day
/// otherwise.
pub fn classify_halt_type(
    record: &HaltRecord,
    calendar: &TradingCalendar,
) -> Result<HaltType, EventError> {
    let (begin, resume) = record.positions(calendar)?;
    Ok(match full_suspended_days(begin, resume) {
        0 => HaltType::Intraday,
        1 => HaltType::OneDay,
        _ => HaltType::InterDay,
    })
}

/// Cumulative log return over the `trend_window` traded minutes ending at the
/// last bar before the halt.
pub fn trend_return(
    panel: &Panel,
    record: &HaltRecord,
    trend_window: usize,
) -> Result<f64, EventError> {
    let (begin, _) = record.positions(panel.calendar())?;
    let insufficient = || EventError::InsufficientHistory {
        stock: record.stock_id.clone(),
    };
    let series = panel.series(&record.stock_id).ok_or_else(insufficient)?;
    let end = begin.offset(-1).ok_or_else(insufficient)?;
    let start = end
        .offset(-(trend_window as isize))
        .ok_or_else(insufficient)?;
    let p_end = series.get(end).ok_or_else(insufficient)?.last_price;
    let p_start = series.get(start).ok_or_else(insufficient)?.last_price;
    Ok((p_end / p_start).ln())
}

/// Positive for a strictly rising trend, negative otherwise (including flat).
pub fn classify_sign(
    panel: &Panel,
    record: &HaltRecord,
    trend_window: usize,
) -> Result<EventSign, EventError> {
    trend_return(panel, record, trend_window).map(EventSign::of_trend)
}

/// Windows and thresholds used by [`filter_eligibility`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityConfig {
    pub trend_window: usize,
    pub lookback_days: usize,
    /// Event-time window of the cumulative-return analysis, `-cum_pre..=cum_post`.
    pub cum_pre: usize,
    pub cum_post: usize,
    /// Event-time window of the measure trajectories, `-measure_pre..=measure_post`.
    pub measure_pre: usize,
    pub measure_post: usize,
    pub max_span_days: usize,
    pub max_gap_fraction: f64,
}

impl Default for EligibilityConfig {
    fn default() -> Self {
        EligibilityConfig {
            trend_window: 240,
            lookback_days: 40,
            cum_pre: 160,
            cum_post: 160,
            measure_pre: 80,
            measure_post: 160,
            max_span_days: 22,
            max_gap_fraction: 0.10,
        }
    }
}

impl EligibilityConfig {
    fn pre_reach(&self) -> usize {
        self.cum_pre.max(self.measure_pre)
    }

    fn post_reach(&self) -> usize {
        self.cum_post.max(self.measure_post)
    }
}

/// Trading days before `day_index` on which the stock has real data, most
/// recent first.
pub fn days_with_data_before(series: &StockSeries, day_index: usize) -> Vec<usize> {
    let first_day = series.first().day_index();
    (first_day..day_index)
        .rev()
        .filter(|&d| series.has_real_data_on(d))
        .collect()
}

fn gap_fraction(series: &StockSeries, event: &HaltEvent, pre: usize, post: usize) -> f64 {
    // The return at the earliest window point needs the bar before it.
    let ts = -(pre as isize) - 1..=post as isize;
    let total = ts.clone().count();
    let bad = ts
        .filter(|&t| {
            !matches!(event.position_of(t).and_then(|at| series.get(at)), Some(b) if !b.synthetic_fill)
        })
        .count();
    bad as f64 / total as f64
}

/// Classifies every record and applies the eligibility filters. Output is
/// sorted by (stock, halt begin).
///
/// Only records that cannot be located on the calendar produce an error;
/// every filter outcome is encoded in [`HaltEvent::rejection_reason`].
pub fn filter_eligibility(
    records: &[HaltRecord],
    panel: &Panel,
    config: &EligibilityConfig,
) -> Result<Vec<HaltEvent>, EventError> {
    let calendar = panel.calendar();
    let mut events = Vec::with_capacity(records.len());
    for record in records {
        let (begin, resume) = record.positions(calendar)?;
        let halt_type = classify_halt_type(record, calendar)?;
        let trend = trend_return(panel, record, config.trend_window).ok();
        events.push(HaltEvent {
            record: record.clone(),
            halt_type,
            sign: trend.map(EventSign::of_trend),
            trend,
            rejection_reason: None,
            halt_begin_at: begin,
            resume_at: resume,
        });
    }
    events.sort_by(|a, b| {
        (&a.record.stock_id, a.halt_begin_at, a.resume_at)
            .cmp(&(&b.record.stock_id, b.halt_begin_at, b.resume_at))
    });

    // Successive halts: event windows [begin - pre, resume + post] overlap.
    let mut successive = vec![false; events.len()];
    let mut by_stock: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in events.iter().enumerate() {
        by_stock.entry(&e.record.stock_id).or_default().push(i);
    }
    let (pre, post) = (config.pre_reach(), config.post_reach());
    for idx in by_stock.values() {
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                let end_i = events[i].resume_at.0 + post;
                let start_j = events[j].halt_begin_at.0.saturating_sub(pre);
                if start_j <= end_i {
                    successive[i] = true;
                    successive[j] = true;
                }
            }
        }
    }

    for (i, event) in events.iter_mut().enumerate() {
        event.rejection_reason = rejection(event, successive[i], panel, config);
    }
    Ok(events)
}

fn rejection(
    event: &HaltEvent,
    successive: bool,
    panel: &Panel,
    config: &EligibilityConfig,
) -> Option<RejectionReason> {
    if successive {
        return Some(RejectionReason::Successive);
    }
    if event.record.is_st_stock {
        return Some(RejectionReason::StStock);
    }
    let span = event.resume_at.day_index() - event.halt_begin_at.day_index();
    if span > config.max_span_days {
        return Some(RejectionReason::TooLong);
    }
    let Some(series) = panel.series(&event.record.stock_id) else {
        return Some(RejectionReason::InsufficientHistory);
    };
    let history = days_with_data_before(series, event.halt_begin_at.day_index());
    if history.len() < config.lookback_days || event.sign.is_none() {
        return Some(RejectionReason::InsufficientHistory);
    }
    if event.resume_at.0 + config.post_reach() > series.last().0 {
        return Some(RejectionReason::InsufficientPostWindow);
    }
    let gaps = [
        gap_fraction(series, event, config.cum_pre, config.cum_post),
        gap_fraction(series, event, config.measure_pre, config.measure_post),
    ];
    if gaps.iter().any(|&g| g > config.max_gap_fraction) {
        return Some(RejectionReason::DataGap);
    }
    None
}

/// Eligible-event counts by halt type and sign.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CountTable {
    /// Rows follow [`HaltType::ALL`], columns [`EventSign::ALL`].
    pub counts: [[usize; 2]; 3],
}

impl CountTable {
    pub fn get(&self, halt_type: HaltType, sign: EventSign) -> usize {
        self.counts[halt_type as usize][sign as usize]
    }

    pub fn row_total(&self, halt_type: HaltType) -> usize {
        self.counts[halt_type as usize].iter().sum()
    }

    pub fn column_total(&self, sign: EventSign) -> usize {
        self.counts.iter().map(|row| row[sign as usize]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["halt_type", "positive", "negative", "total"])?;
        for t in HaltType::ALL {
            w.write_record([
                t.as_str().to_string(),
                self.get(t, EventSign::Positive).to_string(),
                self.get(t, EventSign::Negative).to_string(),
                self.row_total(t).to_string(),
            ])?;
        }
        w.write_record([
            "total".to_string(),
            self.column_total(EventSign::Positive).to_string(),
            self.column_total(EventSign::Negative).to_string(),
            self.total().to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

pub fn tabulate_counts(events: &[HaltEvent]) -> CountTable {
    let mut table = CountTable::default();
    for key in events.iter().filter_map(HaltEvent::group) {
        table.counts[key.halt_type as usize][key.sign as usize] += 1;
    }
    table
}

/// Parses the halt registry CSV
/// (`stock_id,halt_date,halt_minute,resume_date,resume_minute,is_st`).
pub fn parse_halt_file<R: Read>(stream: R) -> Result<Vec<HaltRecord>, EventError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(stream);
    let mut records = reader.records();
    match records.next() {
        None => return Ok(Vec::new()),
        Some(header) => {
            let header = header?;
            if header.iter().map(str::trim).ne(HALT_CSV_HEADER) {
                return Err(EventError::MalformedRow {
                    line: 1,
                    reason: format!("expected header {}", HALT_CSV_HEADER.join(",")),
                });
            }
        }
    }
    let mut out = Vec::new();
    for row in records {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| EventError::MalformedRow { line, reason };
        if row.len() != HALT_CSV_HEADER.len() {
            return Err(bad(format!("expected 6 fields, found {}", row.len())));
        }
        let date = |s: &str| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| bad(format!("bad date {s:?}")))
        };
        let minute = |s: &str| match s.trim().parse::<u16>() {
            Ok(m) if (1..=240).contains(&m) => Ok(m),
            _ => Err(bad(format!("bad minute {s:?}"))),
        };
        let is_st = match row[5].trim() {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("is_st must be 0 or 1, found {other:?}"))),
        };
        let record = HaltRecord::new(
            row[0].trim(),
            BarStamp::new(date(&row[1])?, minute(&row[2])?),
            BarStamp::new(date(&row[3])?, minute(&row[4])?),
            is_st,
        )
        .map_err(|e| bad(e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_halt_file<W: Write>(records: &[HaltRecord], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HALT_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.stock_id.clone(),
            r.halt_begin.day.format("%Y-%m-%d").to_string(),
            r.halt_begin.minute.to_string(),
            r.resume.day.format("%Y-%m-%d").to_string(),
            r.resume.minute.to_string(),
            (r.is_st_stock as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per event: key, type, sign, eligibility and rejection reason.
pub fn write_eligibility_report<W: Write>(events: &[HaltEvent], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "stock_id",
        "halt_date",
        "halt_minute",
        "resume_date",
        "resume_minute",
        "halt_type",
        "sign",
        "trend",
        "eligible",
        "rejection_reason",
    ])?;
    for e in events {
        let r = &e.record;
        w.write_record([
            r.stock_id.clone(),
            r.halt_begin.day.format("%Y-%m-%d").to_string(),
            r.halt_begin.minute.to_string(),
            r.resume.day.format("%Y-%m-%d").to_string(),
            r.resume.minute.to_string(),
            e.halt_type.to_string(),
            e.sign.map(|s| s.to_string()).unwrap_or_default(),
            e.trend.map(|v| v.to_string()).unwrap_or_default(),
            (e.eligible() as u8).to_string(),
            e.rejection_reason.map(|r| r.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
