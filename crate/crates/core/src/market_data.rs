//! Minute-bar panels.
//!
//! A [`Panel`] holds, per stock, a dense run of bar slots spanning the stock's
//! first to last observed minute in calendar traded-minute order. Empty slots
//! are minutes without a bar; [`Panel::forward_fill`] turns them into flagged
//! synthetic bars so that returns are defined at every covered minute.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use thiserror::Error;

use crate::calendar::{SessionMinute, TradingCalendar, MINUTES_PER_DAY};

/// Header of the bar CSV format.
pub const BAR_CSV_HEADER: [&str; 7] = [
    "stock_id",
    "date",
    "minute",
    "last_price",
    "volume",
    "best_bid",
    "best_ask",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: last price {price} is not positive")]
    NonPositivePrice { line: u64, price: f64 },
    #[error("line {line}: ask {ask} below bid {bid}")]
    CrossedQuote { line: u64, bid: f64, ask: f64 },
    #[error("line {line}: {day} is not a trading day in the calendar")]
    UnknownDay { line: u64, day: NaiveDate },
    #[error("line {line}: duplicate bar for {stock} {day} minute {minute}")]
    DuplicateBar {
        line: u64,
        stock: String,
        day: NaiveDate,
        minute: u16,
    },
    #[error("no bars for stock {0}")]
    NoData(String),
    #[error("no bar for {stock} at {day} minute {minute}")]
    MissingBar {
        stock: String,
        day: NaiveDate,
        minute: u16,
    },
    #[error("no predecessor bar for {stock} at {day} minute {minute}")]
    NoPredecessor {
        stock: String,
        day: NaiveDate,
        minute: u16,
    },
    #[error("panels use different calendars")]
    CalendarMismatch,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Values of one stock-minute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub last_price: f64,
    pub volume: f64,
    pub best_bid: Option<f64>,
    pub best_ask: Option<f64>,
    pub synthetic_fill: bool,
}

impl Bar {
    /// Best ask minus best bid; missing unless both quotes are present.
    pub fn spread(&self) -> Option<f64> {
        match (self.best_bid, self.best_ask) {
            (Some(bid), Some(ask)) => Some(ask - bid),
            _ => None,
        }
    }
}

/// A bar together with its key.
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteBar {
    pub stock_id: String,
    pub day: NaiveDate,
    pub minute: u16,
    pub last_price: f64,
    pub volume: f64,
    pub best_bid: Option<f64>,
    pub best_ask: Option<f64>,
    pub synthetic_fill: bool,
}

impl MinuteBar {
    pub fn values(&self) -> Bar {
        Bar {
            last_price: self.last_price,
            volume: self.volume,
            best_bid: self.best_bid,
            best_ask: self.best_ask,
            synthetic_fill: self.synthetic_fill,
        }
    }

    pub fn spread(&self) -> Option<f64> {
        self.values().spread()
    }
}

/// Bars of one stock from its first to its last observed minute.
#[derive(Debug, Clone, PartialEq)]
pub struct StockSeries {
    first: SessionMinute,
    slots: Vec<Option<Bar>>,
}

impl StockSeries {
    /// Builds a series from dense slots; leading and trailing empty slots are
    /// trimmed. Returns `None` when every slot is empty.
    pub fn from_slots(first: SessionMinute, mut slots: Vec<Option<Bar>>) -> Option<Self> {
        let lead = slots.iter().position(Option::is_some)?;
        let tail = slots.iter().rposition(Option::is_some)?;
        slots.truncate(tail + 1);
        slots.drain(..lead);
        Some(StockSeries {
            first: SessionMinute(first.0 + lead),
            slots,
        })
    }

    pub fn first(&self) -> SessionMinute {
        self.first
    }

    /// Last covered minute (inclusive).
    pub fn last(&self) -> SessionMinute {
        SessionMinute(self.first.0 + self.slots.len() - 1)
    }

    pub fn get(&self, at: SessionMinute) -> Option<&Bar> {
        at.0.checked_sub(self.first.0)
            .and_then(|i| self.slots.get(i))
            .and_then(Option::as_ref)
    }

    /// `ln p(at) − ln p(at − 1)`, if both bars exist.
    pub fn log_return(&self, at: SessionMinute) -> Option<f64> {
        let prev = at.offset(-1)?;
        let p1 = self.get(at)?.last_price;
        let p0 = self.get(prev)?.last_price;
        Some(p1.ln() - p0.ln())
    }

    pub fn iter(&self) -> impl Iterator<Item = (SessionMinute, &Bar)> {
        let first = self.first.0;
        self.slots
            .iter()
            .enumerate()
            .filter_map(move |(i, b)| b.as_ref().map(|b| (SessionMinute(first + i), b)))
    }

    pub fn n_bars(&self) -> usize {
        self.slots.iter().filter(|b| b.is_some()).count()
    }

    /// Whether the trading day has at least one non-synthetic bar.
    pub fn has_real_data_on(&self, day_index: usize) -> bool {
        let start = SessionMinute::new(day_index, 1).0;
        (start..start + MINUTES_PER_DAY)
            .any(|g| matches!(self.get(SessionMinute(g)), Some(b) if !b.synthetic_fill))
    }

    fn filled(&self) -> StockSeries {
        let mut slots = Vec::with_capacity(self.slots.len());
        let mut prev: Option<Bar> = None;
        for slot in &self.slots {
            let bar = match (slot, prev) {
                (Some(b), _) => *b,
                (None, Some(p)) => Bar {
                    last_price: p.last_price,
                    volume: 0.0,
                    best_bid: p.best_bid,
                    best_ask: p.best_ask,
                    synthetic_fill: true,
                },
                (None, None) => unreachable!("series starts with a bar"),
            };
            prev = Some(bar);
            slots.push(Some(bar));
        }
        StockSeries {
            first: self.first,
            slots,
        }
    }
}

/// Minute bars of many stocks on one calendar. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    calendar: TradingCalendar,
    stocks: BTreeMap<String, StockSeries>,
}

impl Panel {
    pub fn empty(calendar: TradingCalendar) -> Self {
        Panel {
            calendar,
            stocks: BTreeMap::new(),
        }
    }

    /// Builds a panel from keyed bars, enforcing the bar invariants.
    pub fn from_bars(
        calendar: TradingCalendar,
        bars: impl IntoIterator<Item = MinuteBar>,
    ) -> Result<Self, DataError> {
        let mut builder = PanelBuilder::new(calendar);
        for bar in bars {
            builder.push(0, bar)?;
        }
        Ok(builder.finish())
    }

    pub fn from_series(
        calendar: TradingCalendar,
        stocks: impl IntoIterator<Item = (String, StockSeries)>,
    ) -> Self {
        Panel {
            calendar,
            stocks: stocks.into_iter().collect(),
        }
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn stock_ids(&self) -> impl Iterator<Item = &str> {
        self.stocks.keys().map(String::as_str)
    }

    pub fn series(&self, stock: &str) -> Option<&StockSeries> {
        self.stocks.get(stock)
    }

    pub fn n_bars(&self) -> usize {
        self.stocks.values().map(StockSeries::n_bars).sum()
    }

    pub fn bar(&self, stock: &str, day: NaiveDate, minute: u16) -> Option<&Bar> {
        let at = self.calendar.position(day, minute)?;
        self.stocks.get(stock)?.get(at)
    }

    /// All bars in (stock, day, minute) order.
    pub fn bars(&self) -> impl Iterator<Item = MinuteBar> + '_ {
        self.stocks.iter().flat_map(move |(id, series)| {
            series.iter().map(move |(at, b)| {
                let (day, minute) = self.calendar.locate(at);
                MinuteBar {
                    stock_id: id.clone(),
                    day,
                    minute,
                    last_price: b.last_price,
                    volume: b.volume,
                    best_bid: b.best_bid,
                    best_ask: b.best_ask,
                    synthetic_fill: b.synthetic_fill,
                }
            })
        })
    }

    /// Fills every missing minute between the stock's first and last bar with
    /// a synthetic bar carrying the previous price and quotes and zero volume.
    pub fn forward_fill(&self, stock: &str) -> Result<Panel, DataError> {
        let series = self
            .stocks
            .get(stock)
            .ok_or_else(|| DataError::NoData(stock.to_string()))?;
        let mut out = self.clone();
        out.stocks.insert(stock.to_string(), series.filled());
        Ok(out)
    }

    /// [`forward_fill`](Self::forward_fill) applied to every stock.
    pub fn forward_fill_all(&self) -> Panel {
        Panel {
            calendar: self.calendar.clone(),
            stocks: self
                .stocks
                .iter()
                .map(|(k, s)| (k.clone(), s.filled()))
                .collect(),
        }
    }

    /// One-minute log return ending at (day, minute). The predecessor of bar 1
    /// is bar 240 of the previous trading day.
    pub fn log_return(&self, stock: &str, day: NaiveDate, minute: u16) -> Result<f64, DataError> {
        let series = self
            .stocks
            .get(stock)
            .ok_or_else(|| DataError::NoData(stock.to_string()))?;
        let missing = || DataError::MissingBar {
            stock: stock.to_string(),
            day,
            minute,
        };
        let at = self.calendar.position(day, minute).ok_or_else(missing)?;
        series.get(at).ok_or_else(missing)?;
        series.log_return(at).ok_or_else(|| DataError::NoPredecessor {
            stock: stock.to_string(),
            day,
            minute,
        })
    }

    /// Merges two panels on the same calendar. Overlapping bars are an error.
    pub fn merge(self, other: Panel) -> Result<Panel, DataError> {
        if self.calendar != other.calendar {
            return Err(DataError::CalendarMismatch);
        }
        let calendar = self.calendar.clone();
        let mut builder = PanelBuilder::new(calendar);
        for bar in self.bars().chain(other.bars()) {
            builder.push(0, bar)?;
        }
        Ok(builder.finish())
    }

    /// Writes the canonical bar CSV. Synthetic fill bars are not observations
    /// and are omitted.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(BAR_CSV_HEADER)?;
        for bar in self.bars().filter(|b| !b.synthetic_fill) {
            w.write_record([
                bar.stock_id.clone(),
                bar.day.format("%Y-%m-%d").to_string(),
                bar.minute.to_string(),
                bar.last_price.to_string(),
                bar.volume.to_string(),
                bar.best_bid.map(|v| v.to_string()).unwrap_or_default(),
                bar.best_ask.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct PanelBuilder {
    calendar: TradingCalendar,
    rows: BTreeMap<String, BTreeMap<SessionMinute, (u64, Bar)>>,
}

impl PanelBuilder {
    fn new(calendar: TradingCalendar) -> Self {
        PanelBuilder {
            calendar,
            rows: BTreeMap::new(),
        }
    }

    fn push(&mut self, line: u64, bar: MinuteBar) -> Result<(), DataError> {
        if !(1..=MINUTES_PER_DAY as u16).contains(&bar.minute) {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("minute {} outside 1..=240", bar.minute),
            });
        }
        if !(bar.last_price > 0.0 && bar.last_price.is_finite()) {
            return Err(DataError::NonPositivePrice {
                line,
                price: bar.last_price,
            });
        }
        if let (Some(bid), Some(ask)) = (bar.best_bid, bar.best_ask) {
            if ask < bid {
                return Err(DataError::CrossedQuote { line, bid, ask });
            }
        }
        let at = self
            .calendar
            .position(bar.day, bar.minute)
            .ok_or(DataError::UnknownDay { line, day: bar.day })?;
        let stock = self.rows.entry(bar.stock_id.clone()).or_default();
        if stock.contains_key(&at) {
            return Err(DataError::DuplicateBar {
                line,
                stock: bar.stock_id,
                day: bar.day,
                minute: bar.minute,
            });
        }
        stock.insert(at, (line, bar.values()));
        Ok(())
    }

    fn finish(self) -> Panel {
        let stocks = self
            .rows
            .into_iter()
            .filter_map(|(id, bars)| {
                let first = *bars.keys().next()?;
                let last = *bars.keys().next_back()?;
                let mut slots = vec![None; last.0 - first.0 + 1];
                for (at, (_, bar)) in bars {
                    slots[at.0 - first.0] = Some(bar);
                }
                Some((id, StockSeries { first, slots }))
            })
            .collect();
        Panel {
            calendar: self.calendar,
            stocks,
        }
    }
}

fn parse_f64(field: &str, name: &str, line: u64) -> Result<f64, DataError> {
    let v: f64 = field.trim().parse().map_err(|_| DataError::MalformedRow {
        line,
        reason: format!("{name} {field:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(DataError::MalformedRow {
            line,
            reason: format!("{name} {field:?} is not finite"),
        });
    }
    Ok(v)
}

fn parse_quote(field: &str, name: &str, line: u64) -> Result<Option<f64>, DataError> {
    if field.trim().is_empty() {
        return Ok(None);
    }
    let v = parse_f64(field, name, line)?;
    if v <= 0.0 {
        return Err(DataError::MalformedRow {
            line,
            reason: format!("{name} {v} is not positive"),
        });
    }
    Ok(Some(v))
}

/// Parses the bar CSV (`stock_id,date,minute,last_price,volume,best_bid,best_ask`).
///
/// An empty stream yields an empty panel. Errors carry the 1-based line number.
pub fn parse_bar_file<R: Read>(stream: R, calendar: TradingCalendar) -> Result<Panel, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(stream);
    let mut builder = PanelBuilder::new(calendar);
    let mut records = reader.records();

    match records.next() {
        None => return Ok(builder.finish()),
        Some(header) => {
            let header = header?;
            let names: Vec<&str> = header.iter().map(str::trim).collect();
            if names != BAR_CSV_HEADER {
                return Err(DataError::MalformedRow {
                    line: 1,
                    reason: format!("expected header {}", BAR_CSV_HEADER.join(",")),
                });
            }
        }
    }

    for record in records {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != BAR_CSV_HEADER.len() {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected 7 fields, found {}", record.len()),
            });
        }
        let day = NaiveDate::parse_from_str(record[1].trim(), "%Y-%m-%d").map_err(|_| {
            DataError::MalformedRow {
                line,
                reason: format!("bad date {:?}", &record[1]),
            }
        })?;
        let minute: u16 = record[2].trim().parse().map_err(|_| DataError::MalformedRow {
            line,
            reason: format!("bad minute {:?}", &record[2]),
        })?;
        let volume = parse_f64(&record[4], "volume", line)?;
        if volume < 0.0 {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("negative volume {volume}"),
            });
        }
        let bar = MinuteBar {
            stock_id: record[0].trim().to_string(),
            day,
            minute,
            last_price: parse_f64(&record[3], "last_price", line)?,
            volume,
            best_bid: parse_quote(&record[5], "best_bid", line)?,
            best_ask: parse_quote(&record[6], "best_ask", line)?,
            synthetic_fill: false,
        };
        builder.push(line, bar)?;
    }
    Ok(builder.finish())
}
