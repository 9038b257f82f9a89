//! Event-study analytics for market dynamics around trading halts.
//!
//! The pipeline runs bottom-up through these modules:
//!
//! - [`calendar`] and [`market_data`]: trading calendar, minute-bar panels,
//!   forward fill and one-minute log returns.
//! - [`events`]: halt registry, duration/trend classification, eligibility.
//! - [`study`]: intraday patterns, deseasonalized event-time trajectories,
//!   group averages and average cumulative returns.
//! - [`fit`]: excess series and power-law relaxation fits with asymptotic
//!   and bootstrap errors.
//! - [`synth`]: seeded synthetic panels with planted ground truth.
//! - [`pipeline`]: the in-memory end-to-end analysis.

pub mod calendar;
pub mod events;
pub mod fit;
pub mod market_data;
pub mod pipeline;
pub mod stats;
pub mod study;
pub mod synth;

pub use calendar::{SessionMinute, TradingCalendar};
pub use events::{EventSign, GroupKey, HaltEvent, HaltRecord, HaltType};
pub use market_data::{Bar, MinuteBar, Panel};
