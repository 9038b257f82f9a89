#![allow(dead_code)]

use chrono::NaiveDate;
use halt_core::calendar::{SessionMinute, TradingCalendar, MINUTES_PER_DAY};
use halt_core::events::{BarStamp, EventSign, HaltEvent, HaltRecord, HaltType};
use halt_core::market_data::{Bar, Panel, StockSeries};

pub fn calendar(n_days: usize) -> TradingCalendar {
    TradingCalendar::weekdays(NaiveDate::from_ymd_opt(2011, 5, 2).unwrap(), n_days)
}

pub fn bar(price: f64, volume: f64, spread: f64) -> Bar {
    let bid = price - 0.5 * spread;
    Bar {
        last_price: price,
        volume,
        best_bid: Some(bid),
        best_ask: Some(bid + spread),
        synthetic_fill: false,
    }
}

/// One stock whose slot `g` is `f(g)`.
pub fn series_from(n_days: usize, f: impl FnMut(usize) -> Option<Bar>) -> StockSeries {
    let slots = (0..n_days * MINUTES_PER_DAY).map(f).collect();
    StockSeries::from_slots(SessionMinute(0), slots).unwrap()
}

pub fn panel(n_days: usize, stocks: Vec<(&str, StockSeries)>) -> Panel {
    Panel::from_series(
        calendar(n_days),
        stocks.into_iter().map(|(k, s)| (k.to_string(), s)),
    )
}

/// An eligible event with the given sign, bypassing classification.
pub fn event(
    cal: &TradingCalendar,
    stock: &str,
    begin: SessionMinute,
    resume: SessionMinute,
    sign: EventSign,
) -> HaltEvent {
    let stamp = |at: SessionMinute| BarStamp::new(cal.day(at.day_index()), at.minute());
    HaltEvent {
        record: HaltRecord::new(stock, stamp(begin), stamp(resume), false).unwrap(),
        halt_type: HaltType::Intraday,
        sign: Some(sign),
        trend: None,
        rejection_reason: None,
        halt_begin_at: begin,
        resume_at: resume,
    }
}
