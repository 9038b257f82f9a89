//! Trading calendar and the fixed two-session intraday layout.
//!
//! The exchange trades 09:30–11:30 and 13:00–15:00. Bars are labelled by the
//! minute they *end* on, so the 09:30–09:31 minute is bar 1, the bar ending at
//! 11:30 is 120, the bar ending at 13:01 is 121 and the close is 240.
//!
//! Every (trading day, bar) pair also has a position in one global sequence of
//! traded minutes, [`SessionMinute`]. Lunch breaks and overnight gaps do not
//! occupy positions, so stepping one position back from bar 1 of a day lands
//! on bar 240 of the previous trading day.

use std::collections::HashMap;
use std::io::BufRead;

use chrono::{Datelike, Duration, NaiveDate, NaiveTime, Weekday};
use thiserror::Error;

/// Bars per trading day.
pub const MINUTES_PER_DAY: usize = 240;
/// Bars in the morning session.
pub const MORNING_MINUTES: usize = 120;

const MORNING_OPEN: (u32, u32) = (9, 30);
const AFTERNOON_OPEN: (u32, u32) = (13, 0);

#[derive(Debug, Error)]
pub enum CalendarError {
    #[error("{0} is outside the trading sessions")]
    OutsideSession(NaiveTime),
    #[error("intraday minute {0} is outside 1..=240")]
    MinuteOutOfRange(u16),
    #[error("line {line}: cannot parse date {text:?}")]
    BadDate { line: usize, text: String },
    #[error("calendar day {0} is not strictly after its predecessor")]
    NotIncreasing(NaiveDate),
    #[error("calendar is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Position of a bar in the calendar's global traded-minute order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionMinute(pub usize);

impl SessionMinute {
    pub fn new(day_index: usize, minute: u16) -> Self {
        debug_assert!((1..=MINUTES_PER_DAY as u16).contains(&minute));
        SessionMinute(day_index * MINUTES_PER_DAY + minute as usize - 1)
    }

    pub fn day_index(self) -> usize {
        self.0 / MINUTES_PER_DAY
    }

    /// Intraday bar number, 1..=240.
    pub fn minute(self) -> u16 {
        (self.0 % MINUTES_PER_DAY) as u16 + 1
    }

    pub fn offset(self, delta: isize) -> Option<SessionMinute> {
        self.0.checked_add_signed(delta).map(SessionMinute)
    }
}

/// Converts a wall-clock time to the bar that ends at it.
///
/// 09:31 is bar 1 and 15:00 is bar 240. Times that are not the end of a
/// traded minute (before 09:31, 11:31 through 13:00, after 15:00) are rejected.
pub fn wall_clock_to_minute(time: NaiveTime) -> Result<u16, CalendarError> {
    let since_midnight = time.signed_duration_since(NaiveTime::MIN).num_minutes();
    let morning_open = (MORNING_OPEN.0 * 60 + MORNING_OPEN.1) as i64;
    let afternoon_open = (AFTERNOON_OPEN.0 * 60 + AFTERNOON_OPEN.1) as i64;
    let morning = since_midnight - morning_open;
    if (1..=MORNING_MINUTES as i64).contains(&morning) {
        return Ok(morning as u16);
    }
    let afternoon = since_midnight - afternoon_open;
    if (1..=MORNING_MINUTES as i64).contains(&afternoon) {
        return Ok((MORNING_MINUTES as i64 + afternoon) as u16);
    }
    Err(CalendarError::OutsideSession(time))
}

/// Wall-clock end time of a bar; inverse of [`wall_clock_to_minute`].
pub fn minute_to_wall_clock(minute: u16) -> Result<NaiveTime, CalendarError> {
    let m = minute as u32;
    let (open, k) = match m {
        1..=120 => (MORNING_OPEN, m),
        121..=240 => (AFTERNOON_OPEN, m - MORNING_MINUTES as u32),
        _ => return Err(CalendarError::MinuteOutOfRange(minute)),
    };
    let total = open.0 * 60 + open.1 + k;
    Ok(NaiveTime::from_hms_opt(total / 60, total % 60, 0).expect("session times are valid"))
}

/// First bar whose one-minute interval starts at or after `time` on the same
/// day, or `None` once the afternoon session has closed.
///
/// A halt announced at 10:30 suspends bar 61 (10:30–10:31); trading resumed
/// at 11:30 first prints in bar 121 because the morning session is over.
pub fn first_bar_from(time: NaiveTime) -> Option<u16> {
    let next = time + Duration::minutes(1);
    if next <= time {
        // wrapped past midnight
        return None;
    }
    match wall_clock_to_minute(next) {
        Ok(m) => Some(m),
        Err(_) => {
            let at = |(h, m): (u32, u32)| NaiveTime::from_hms_opt(h, m, 0).unwrap();
            if next <= at(MORNING_OPEN) {
                Some(1)
            } else if next <= at(AFTERNOON_OPEN) {
                Some(MORNING_MINUTES as u16 + 1)
            } else {
                None
            }
        }
    }
}

/// Ordered list of trading days.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    days: Vec<NaiveDate>,
    index: HashMap<NaiveDate, usize>,
}

impl TradingCalendar {
    pub fn new(days: Vec<NaiveDate>) -> Result<Self, CalendarError> {
        for pair in days.windows(2) {
            if pair[1] <= pair[0] {
                return Err(CalendarError::NotIncreasing(pair[1]));
            }
        }
        let index = days.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        Ok(TradingCalendar { days, index })
    }

    /// `n` consecutive weekdays starting at `start` (or the next weekday).
    pub fn weekdays(start: NaiveDate, n: usize) -> Self {
        let mut days = Vec::with_capacity(n);
        let mut d = start;
        while days.len() < n {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                days.push(d);
            }
            d = d.succ_opt().expect("date overflow");
        }
        TradingCalendar::new(days).expect("generated days are increasing")
    }

    /// Reads one `YYYY-MM-DD` per line. Blank lines are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, CalendarError> {
        let mut days = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let day = NaiveDate::parse_from_str(text, "%Y-%m-%d").map_err(|_| {
                CalendarError::BadDate {
                    line: i + 1,
                    text: text.to_string(),
                }
            })?;
            days.push(day);
        }
        if days.is_empty() {
            return Err(CalendarError::Empty);
        }
        TradingCalendar::new(days)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.days.len() * 11);
        for d in &self.days {
            s.push_str(&d.format("%Y-%m-%d").to_string());
            s.push('\n');
        }
        s
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn day_index(&self, day: NaiveDate) -> Option<usize> {
        self.index.get(&day).copied()
    }

    pub fn day(&self, index: usize) -> NaiveDate {
        self.days[index]
    }

    /// Number of traded minutes covered by the calendar.
    pub fn total_minutes(&self) -> usize {
        self.days.len() * MINUTES_PER_DAY
    }

    pub fn position(&self, day: NaiveDate, minute: u16) -> Option<SessionMinute> {
        if !(1..=MINUTES_PER_DAY as u16).contains(&minute) {
            return None;
        }
        self.day_index(day).map(|d| SessionMinute::new(d, minute))
    }

    pub fn locate(&self, at: SessionMinute) -> (NaiveDate, u16) {
        (self.days[at.day_index()], at.minute())
    }
}
