//! Seed-deterministic synthetic panels with planted halt responses.
//!
//! Every measure is `base × pattern(minute) × response(t) × noise`, where the
//! response is the planted peak at the resumption bar and `1 + A t^-alpha`
//! for the following 160 traded minutes. Deseasonalizing against the
//! stock's own history therefore isolates the planted curve exactly when the
//! noise is switched off.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{SessionMinute, TradingCalendar, MINUTES_PER_DAY};
use crate::events::{
    full_suspended_days, BarStamp, EventSign, GroupKey, HaltRecord, HaltType,
};
use crate::fit::FitFlag;
use crate::market_data::{Bar, Panel, StockSeries};
use crate::pipeline::{analyze, AnalysisConfig};
use crate::stats::derive_seed;
use crate::study::MeasureKind;

/// Event-time reach of a planted response after resumption.
pub const RESPONSE_HORIZON: usize = 160;
/// Pre-halt minutes whose return signs are steered to realize the trend.
pub const TREND_MINUTES: usize = 240;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{stock}: planted events closer than {RESPONSE_HORIZON} traded minutes")]
    OverlapViolation { stock: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// One value per measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerMeasure<T> {
    pub absolute_return: T,
    pub volume: T,
    pub bid_ask_spread: T,
}

impl<T: Copy> PerMeasure<T> {
    pub fn splat(v: T) -> Self {
        PerMeasure {
            absolute_return: v,
            volume: v,
            bid_ask_spread: v,
        }
    }

    pub fn get(&self, measure: MeasureKind) -> T {
        match measure {
            MeasureKind::AbsoluteReturn => self.absolute_return,
            MeasureKind::Volume => self.volume,
            MeasureKind::BidAskSpread => self.bid_ask_spread,
        }
    }
}

/// Planted response of one measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    pub peak: f64,
    pub amplitude: f64,
    pub alpha: f64,
}

impl Relaxation {
    /// Multiplier at event time `t >= 0`.
    pub fn factor(&self, t: usize) -> f64 {
        if t == 0 {
            self.peak
        } else {
            1.0 + self.amplitude * (t as f64).powf(-self.alpha)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub stock: String,
    pub begin_day: usize,
    pub begin_minute: u16,
    pub resume_day: usize,
    pub resume_minute: u16,
    pub planted_type: HaltType,
    pub trend_sign: EventSign,
    /// Target absolute log return over the pre-halt trend minutes.
    pub trend_magnitude: f64,
    pub response: PerMeasure<Relaxation>,
}

impl PlantedEvent {
    /// Standard layout with the halt starting on day `halt_day`: intraday
    /// halts suspend 10:30–11:30 and resume at 13:00, one-day halts cover one
    /// full session and inter-day halts three.
    pub fn standard(
        stock: impl Into<String>,
        halt_day: usize,
        group: GroupKey,
        trend_magnitude: f64,
        response: PerMeasure<Relaxation>,
    ) -> Self {
        let (bm, rd, rm) = match group.halt_type {
            HaltType::Intraday => (61, halt_day, 121),
            HaltType::OneDay => (1, halt_day + 1, 1),
            HaltType::InterDay => (1, halt_day + 3, 1),
        };
        PlantedEvent {
            stock: stock.into(),
            begin_day: halt_day,
            begin_minute: bm,
            resume_day: rd,
            resume_minute: rm,
            planted_type: group.halt_type,
            trend_sign: group.sign,
            trend_magnitude,
            response,
        }
    }

    pub fn group(&self) -> GroupKey {
        GroupKey::new(self.planted_type, self.trend_sign)
    }

    fn begin(&self) -> SessionMinute {
        SessionMinute::new(self.begin_day, self.begin_minute)
    }

    fn resume(&self) -> SessionMinute {
        SessionMinute::new(self.resume_day, self.resume_minute)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub base: f64,
    /// Log-normal noise parameter; 0 disables noise.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_stocks: usize,
    pub n_days: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// 240 positive per-minute multipliers.
    pub pattern_shape: Vec<f64>,
    pub levels: PerMeasure<NoiseLevel>,
    pub initial_price: f64,
    pub events: Vec<PlantedEvent>,
}

/// U-shaped multipliers: 1.5 at each session open and close, 0.8 midsession.
pub fn u_shape() -> Vec<f64> {
    let half = 120.0 / 2.0;
    (0..MINUTES_PER_DAY)
        .map(|i| {
            let k = (i % 120) as f64 + 0.5;
            let x = (k - half) / half;
            0.8 + 0.7 * x * x
        })
        .collect()
}

/// Planted responses for all six groups. The exponents follow the published
/// relaxation table; the spread has no planted relaxation outside intraday
/// halts, so those cells should come out as having no power law.
pub fn reference_responses() -> Vec<(GroupKey, PerMeasure<Relaxation>)> {
    let r = |peak, amplitude, alpha| Relaxation {
        peak,
        amplitude,
        alpha,
    };
    let table = [
        (0.89, 0.45, Some(1.19)),
        (0.61, 0.37, Some(1.59)),
        (0.89, 0.80, None),
        (0.54, 0.55, None),
        (0.96, 0.60, None),
        (1.15, 0.66, None),
    ];
    GroupKey::all()
        .zip(table)
        .map(|(g, (ar, vol, spread))| {
            let spread = match spread {
                Some(alpha) => r(3.0, 0.8, alpha),
                None => r(1.0, 0.0, 1.0),
            };
            (
                g,
                PerMeasure {
                    absolute_return: r(6.0, 2.0, ar),
                    volume: r(4.0, 1.5, vol),
                    bid_ask_spread: spread,
                },
            )
        })
        .collect()
}

/// Stock id of the `i`-th synthetic stock.
pub fn stock_id(i: usize) -> String {
    format!("{:06}", 600_000 + i)
}

impl SyntheticSpec {
    /// No events, default levels and noise `sigma` on every measure.
    pub fn baseline(n_stocks: usize, n_days: usize, seed: u64, sigma: f64) -> Self {
        SyntheticSpec {
            n_stocks,
            n_days,
            seed,
            start_date: NaiveDate::from_ymd_opt(2012, 1, 4).expect("valid date"),
            pattern_shape: u_shape(),
            levels: PerMeasure {
                absolute_return: NoiseLevel { base: 0.002, sigma },
                volume: NoiseLevel { base: 10_000.0, sigma },
                bid_ask_spread: NoiseLevel { base: 0.02, sigma },
            },
            initial_price: 10.0,
            events: Vec::new(),
        }
    }

    /// `events_per_group` events for each listed group, one event per stock,
    /// all halting on day 41 of a 46-day calendar.
    pub fn grouped(
        groups: &[(GroupKey, PerMeasure<Relaxation>)],
        events_per_group: usize,
        seed: u64,
        sigma: f64,
    ) -> Self {
        const HALT_DAY: usize = 41;
        let mut spec = SyntheticSpec::baseline(groups.len() * events_per_group, HALT_DAY + 5, seed, sigma);
        for (g, (group, response)) in groups.iter().enumerate() {
            for k in 0..events_per_group {
                spec.events.push(PlantedEvent::standard(
                    stock_id(g * events_per_group + k),
                    HALT_DAY,
                    *group,
                    0.1,
                    *response,
                ));
            }
        }
        spec
    }

    pub fn calendar(&self) -> TradingCalendar {
        TradingCalendar::weekdays(self.start_date, self.n_days)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_days == 0 {
            return bad("n_days must be positive".into());
        }
        if self.pattern_shape.len() != MINUTES_PER_DAY {
            return bad(format!("pattern has {} entries", self.pattern_shape.len()));
        }
        if self.pattern_shape.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return bad("pattern multipliers must be positive".into());
        }
        for m in MeasureKind::ALL {
            let l = self.levels.get(m);
            if !(l.base.is_finite() && l.base > 0.0) || !(l.sigma.is_finite() && l.sigma >= 0.0) {
                return bad(format!("bad level for {m}"));
            }
        }
        if !(self.initial_price.is_finite() && self.initial_price > 0.0) {
            return bad("initial price must be positive".into());
        }
        let ids: Vec<String> = (0..self.n_stocks).map(stock_id).collect();
        let total = self.n_days * MINUTES_PER_DAY;
        let mut by_stock: BTreeMap<&str, Vec<&PlantedEvent>> = BTreeMap::new();
        for e in &self.events {
            if !ids.contains(&e.stock) {
                return bad(format!("unknown stock {}", e.stock));
            }
            for minute in [e.begin_minute, e.resume_minute] {
                if !(1..=MINUTES_PER_DAY as u16).contains(&minute) {
                    return bad(format!("{}: minute {minute} out of range", e.stock));
                }
            }
            let (b, r) = (e.begin(), e.resume());
            if r <= b {
                return bad(format!("{}: resume not after begin", e.stock));
            }
            if b.0 < TREND_MINUTES + 1 || r.0 + RESPONSE_HORIZON >= total {
                return bad(format!("{}: event too close to the panel edge", e.stock));
            }
            let span_type = match full_suspended_days(b, r) {
                0 => HaltType::Intraday,
                1 => HaltType::OneDay,
                _ => HaltType::InterDay,
            };
            if span_type != e.planted_type {
                return bad(format!(
                    "{}: planted {} but span is {}",
                    e.stock, e.planted_type, span_type
                ));
            }
            if !(e.trend_magnitude.is_finite() && e.trend_magnitude > 0.0) {
                return bad(format!("{}: trend magnitude must be positive", e.stock));
            }
            for m in MeasureKind::ALL {
                let x = e.response.get(m);
                let ok = x.peak.is_finite()
                    && x.peak > 0.0
                    && x.amplitude.is_finite()
                    && x.amplitude >= 0.0
                    && x.alpha.is_finite();
                if !ok {
                    return bad(format!("{}: bad response for {m}", e.stock));
                }
            }
            by_stock.entry(e.stock.as_str()).or_default().push(e);
        }
        for (stock, mut evs) in by_stock {
            evs.sort_by_key(|e| e.begin());
            for w in evs.windows(2) {
                let reach = w[0].resume().0 + RESPONSE_HORIZON;
                if reach + RESPONSE_HORIZON >= w[1].begin().0 {
                    return Err(SynthError::OverlapViolation {
                        stock: stock.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Planted and realized parameters of one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTruth {
    pub stock: String,
    pub halt_begin: BarStamp,
    pub resume: BarStamp,
    pub halt_type: HaltType,
    pub trend_sign: EventSign,
    pub planted_trend: f64,
    /// Log return actually realized over the trend minutes.
    pub realized_trend: f64,
    pub response: PerMeasure<Relaxation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub n_stocks: usize,
    pub n_days: usize,
    pub events: Vec<EventTruth>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }

    /// Planted relaxation of each group, taken from its first event.
    pub fn planted(&self, group: GroupKey, measure: MeasureKind) -> Option<Relaxation> {
        self.events
            .iter()
            .find(|e| GroupKey::new(e.halt_type, e.trend_sign) == group)
            .map(|e| e.response.get(measure))
    }
}

pub struct SyntheticData {
    pub panel: Panel,
    pub registry: Vec<HaltRecord>,
    pub truth: GroundTruth,
}

struct StockPlan<'a> {
    events: Vec<&'a PlantedEvent>,
}

impl StockPlan<'_> {
    fn halted(&self, g: usize) -> bool {
        self.events.iter().any(|e| (e.begin().0..e.resume().0).contains(&g))
    }

    fn response(&self, g: usize) -> Option<(&PerMeasure<Relaxation>, usize)> {
        self.events.iter().find_map(|e| {
            let r = e.resume().0;
            (r..=r + RESPONSE_HORIZON)
                .contains(&g)
                .then(|| (&e.response, g - r))
        })
    }

    fn trend_target(&self, g: usize) -> Option<(usize, f64)> {
        self.events.iter().find_map(|e| {
            let b = e.begin().0;
            let sign = match e.trend_sign {
                EventSign::Positive => 1.0,
                EventSign::Negative => -1.0,
            };
            (b - TREND_MINUTES..b)
                .contains(&g)
                .then(|| (b - TREND_MINUTES, sign * e.trend_magnitude))
        })
    }
}

fn lognormal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let eps: f64 = rng.sample(StandardNormal);
    (sigma * eps - 0.5 * sigma * sigma).exp()
}

fn generate_stock(spec: &SyntheticSpec, index: usize, plan: &StockPlan) -> Vec<Option<Bar>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, index as u64));
    let total = spec.n_days * MINUTES_PER_DAY;
    let mut slots = Vec::with_capacity(total);
    let mut log_price = spec.initial_price.ln();
    let mut trend_start_log = 0.0;
    for g in 0..total {
        let noise = [
            lognormal(&mut rng, spec.levels.absolute_return.sigma),
            lognormal(&mut rng, spec.levels.volume.sigma),
            lognormal(&mut rng, spec.levels.bid_ask_spread.sigma),
        ];
        let coin: bool = rng.random();
        if plan.halted(g) {
            slots.push(None);
            continue;
        }
        let shape = spec.pattern_shape[g % MINUTES_PER_DAY];
        let factor = |m: MeasureKind| plan.response(g).map_or(1.0, |(r, t)| r.get(m).factor(t));
        let level = |m: MeasureKind, i: usize| spec.levels.get(m).base * shape * factor(m) * noise[i];
        let abs_ret = level(MeasureKind::AbsoluteReturn, 0);
        let volume = level(MeasureKind::Volume, 1);
        let spread = level(MeasureKind::BidAskSpread, 2);

        // Steer signs along a straight ramp to the target so that every
        // trailing sub-window of the trend minutes shares its sign.
        let up = match plan.trend_target(g) {
            Some((start, target)) => {
                if g == start {
                    trend_start_log = log_price;
                }
                let ramp = target * (g - start + 1) as f64 / TREND_MINUTES as f64;
                ramp - (log_price - trend_start_log) > 0.0
            }
            None => coin,
        };
        log_price += if up { abs_ret } else { -abs_ret };
        let price = log_price.exp();
        let bid = price - 0.5 * spread;
        slots.push(Some(Bar {
            last_price: price,
            volume,
            best_bid: Some(bid),
            best_ask: Some(bid + spread),
            synthetic_fill: false,
        }));
    }
    slots
}

/// Generates the panel, the halt registry and the ground truth. Stocks are
/// generated in parallel from per-stock derived seeds and merged in stock
/// order, so the output does not depend on the worker count.
pub fn generate_panel(spec: &SyntheticSpec) -> Result<SyntheticData, SynthError> {
    spec.validate()?;
    let calendar = spec.calendar();
    let plans: Vec<StockPlan> = (0..spec.n_stocks)
        .map(|i| {
            let id = stock_id(i);
            StockPlan {
                events: spec.events.iter().filter(|e| e.stock == id).collect(),
            }
        })
        .collect();
    let series: Vec<(String, StockSeries)> = plans
        .par_iter()
        .enumerate()
        .map(|(i, plan)| {
            let slots = generate_stock(spec, i, plan);
            let s = StockSeries::from_slots(SessionMinute(0), slots)
                .expect("generated series has bars");
            (stock_id(i), s)
        })
        .collect();
    let panel = Panel::from_series(calendar.clone(), series);

    let stamp = |at: SessionMinute| BarStamp::new(calendar.day(at.day_index()), at.minute());
    let mut registry = Vec::with_capacity(spec.events.len());
    let mut truth = Vec::with_capacity(spec.events.len());
    for e in &spec.events {
        let series = panel.series(&e.stock).expect("planted stock exists");
        let end = SessionMinute(e.begin().0 - 1);
        let start = SessionMinute(end.0 - TREND_MINUTES);
        let lp = |at| series.get(at).expect("trend window is traded").last_price.ln();
        let sign = match e.trend_sign {
            EventSign::Positive => 1.0,
            EventSign::Negative => -1.0,
        };
        registry.push(
            HaltRecord::new(e.stock.clone(), stamp(e.begin()), stamp(e.resume()), false)
                .expect("validated interval"),
        );
        truth.push(EventTruth {
            stock: e.stock.clone(),
            halt_begin: stamp(e.begin()),
            resume: stamp(e.resume()),
            halt_type: e.planted_type,
            trend_sign: e.trend_sign,
            planted_trend: sign * e.trend_magnitude,
            realized_trend: lp(end) - lp(start),
            response: e.response,
        });
    }
    registry.sort_by(|a, b| (&a.stock_id, a.halt_begin).cmp(&(&b.stock_id, b.halt_begin)));
    truth.sort_by(|a, b| (&a.stock, a.halt_begin).cmp(&(&b.stock, b.halt_begin)));
    Ok(SyntheticData {
        panel,
        registry,
        truth: GroundTruth {
            seed: spec.seed,
            n_stocks: spec.n_stocks,
            n_days: spec.n_days,
            events: truth,
        },
    })
}

/// Fitted exponents of one (measure, group) cell across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryCell {
    pub measure: MeasureKind,
    pub group: GroupKey,
    pub planted_alpha: f64,
    /// One entry per seed; `None` when the cell was not fitted.
    pub fitted: Vec<Option<f64>>,
    pub bias: Option<f64>,
    pub mean_abs_error: Option<f64>,
    pub within_tolerance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub n_seeds: usize,
    pub tolerance: f64,
    pub cells: Vec<RecoveryCell>,
    /// Seeds whose generation or analysis failed, with the error.
    pub seed_errors: Vec<(u64, String)>,
}

impl RecoveryReport {
    pub fn cell(&self, measure: MeasureKind, group: GroupKey) -> Option<&RecoveryCell> {
        self.cells
            .iter()
            .find(|c| c.measure == measure && c.group == group)
    }
}

/// Seed of the `i`-th run of a recovery study.
pub fn study_seed(base: u64, i: usize) -> u64 {
    derive_seed(base, i as u64)
}

/// Regenerates `spec` under `n_seeds` derived seeds, analyzes each panel and
/// compares fitted exponents with the planted ones. Seeds run one after the
/// other; a failing seed is recorded and the study continues.
pub fn recovery_study(
    spec: &SyntheticSpec,
    n_seeds: usize,
    config: &AnalysisConfig,
    tolerance: f64,
) -> RecoveryReport {
    let mut planted: Vec<(MeasureKind, GroupKey, f64)> = Vec::new();
    for m in MeasureKind::ALL {
        for g in GroupKey::all() {
            if let Some(e) = spec.events.iter().find(|e| e.group() == g) {
                planted.push((m, g, e.response.get(m).alpha));
            }
        }
    }
    let mut fitted = vec![Vec::with_capacity(n_seeds); planted.len()];
    let mut seed_errors = Vec::new();
    for i in 0..n_seeds {
        let mut s = spec.clone();
        s.seed = study_seed(spec.seed, i);
        let result = generate_panel(&s)
            .map_err(|e| e.to_string())
            .and_then(|d| analyze(&d.panel, &d.registry, config).map_err(|e| e.to_string()));
        match result {
            Ok(out) => {
                for (slot, &(m, g, _)) in fitted.iter_mut().zip(&planted) {
                    let alpha = out
                        .exponent(m, g)
                        .filter(|e| e.flag == FitFlag::Ok)
                        .and_then(|e| e.fit.as_ref())
                        .map(|f| f.alpha);
                    slot.push(alpha);
                }
            }
            Err(e) => {
                seed_errors.push((s.seed, e));
                for slot in fitted.iter_mut() {
                    slot.push(None);
                }
            }
        }
    }
    let cells = planted
        .into_iter()
        .zip(fitted)
        .map(|((measure, group, planted_alpha), fitted)| {
            let errs: Vec<f64> = fitted.iter().flatten().map(|a| a - planted_alpha).collect();
            let n = errs.len() as f64;
            RecoveryCell {
                measure,
                group,
                planted_alpha,
                bias: (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / n),
                mean_abs_error: (!errs.is_empty()).then(|| errs.iter().map(|e| e.abs()).sum::<f64>() / n),
                within_tolerance: errs.iter().filter(|e| e.abs() <= tolerance).count(),
                fitted,
            }
        })
        .collect();
    RecoveryReport {
        n_seeds,
        tolerance,
        cells,
        seed_errors,
    }
}
