mod common;

use common::{bar, calendar, event, panel, series_from};
use halt_core::calendar::{SessionMinute, MINUTES_PER_DAY};
use halt_core::events::{BarStamp, EventSign, HaltEvent};
use halt_core::market_data::Panel;
use halt_core::study::{
    average_cumulative_return, compute_intraday_pattern, deseasonalize, extract_trajectory,
    group_average, reversal_stats, EventTrajectory, MeasureKind, StudyError, TrajectoryWindow,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DAY: usize = MINUTES_PER_DAY;

/// 42 days, intraday halt on day 40 from bar 61 to bar 121.
fn intraday_fixture(volume: impl Fn(usize) -> f64) -> (Panel, HaltEvent) {
    let begin = SessionMinute::new(40, 61);
    let resume = SessionMinute::new(40, 121);
    let s = series_from(42, |g| {
        if (begin.0..resume.0).contains(&g) {
            None
        } else {
            let price = if g % 2 == 0 { 10.0 } else { 10.1 };
            Some(bar(price, volume(g), 0.02))
        }
    });
    let p = panel(42, vec![("600000", s)]);
    let e = event(p.calendar(), "600000", begin, resume, EventSign::Positive);
    (p, e)
}

#[test]
fn constant_volume_gives_constant_pattern() {
    let (p, e) = intraday_fixture(|_| 500.0);
    let pat = compute_intraday_pattern(&p, &e, MeasureKind::Volume, 40).unwrap();
    assert!(pat.values.iter().all(|&v| v == 500.0));
    assert!(pat.n_observations.iter().all(|&n| n == 40));
}

#[test]
fn alternating_days_average_to_three() {
    let (p, e) = intraday_fixture(|g| if (g / DAY).is_multiple_of(2) { 2.0 } else { 4.0 });
    let pat = compute_intraday_pattern(&p, &e, MeasureKind::Volume, 40).unwrap();
    assert_eq!(pat.at(1), 3.0);
    assert!(pat.values.iter().all(|&v| v == 3.0));
}

#[test]
fn thirty_nine_days_is_not_enough() {
    let begin = SessionMinute::new(39, 61);
    let resume = SessionMinute::new(39, 121);
    let s = series_from(41, |g| (!(begin.0..resume.0).contains(&g)).then(|| bar(10.0, 1.0, 0.02)));
    let p = panel(41, vec![("600000", s)]);
    let e = event(p.calendar(), "600000", begin, resume, EventSign::Negative);
    assert!(matches!(
        compute_intraday_pattern(&p, &e, MeasureKind::Volume, 40),
        Err(StudyError::InsufficientHistory { needed: 40, .. })
    ));
}

#[test]
fn flat_price_has_zero_return_baseline() {
    let begin = SessionMinute::new(40, 61);
    let resume = SessionMinute::new(40, 121);
    let s = series_from(42, |g| (!(begin.0..resume.0).contains(&g)).then(|| bar(10.0, 1.0, 0.02)));
    let p = panel(42, vec![("600000", s)]);
    let e = event(p.calendar(), "600000", begin, resume, EventSign::Negative);
    assert!(matches!(
        compute_intraday_pattern(&p, &e, MeasureKind::AbsoluteReturn, 40),
        Err(StudyError::ZeroBaseline { .. })
    ));
    assert_eq!(deseasonalize(1.0, 0.0), Err(StudyError::ZeroDivisor));
}

#[test]
fn intraday_event_time_skips_lunch() {
    let (p, e) = intraday_fixture(|_| 1.0);
    let tr = extract_trajectory(&p, &e, MeasureKind::Volume, &TrajectoryWindow::default()).unwrap();
    let at = |t: isize| tr.positions[(t - tr.t_start) as usize];
    assert_eq!(at(0).minute(), 121);
    assert_eq!(at(-1).minute(), 60);
    assert_eq!(at(1).minute(), 122);
    assert_eq!((at(160).day_index(), at(160).minute()), (41, 41));
    assert!(tr.values.iter().all(|v| *v == Some(1.0)));
}

#[test]
fn one_day_event_time_crosses_days() {
    let cal = calendar(45);
    let e = event(
        &cal,
        "600000",
        SessionMinute::new(41, 1),
        SessionMinute::new(42, 1),
        EventSign::Positive,
    );
    let before = e.position_of(-1).unwrap();
    let after = e.position_of(0).unwrap();
    assert_eq!((before.day_index(), before.minute()), (40, 240));
    assert_eq!((after.day_index(), after.minute()), (42, 1));
}

fn trajectory(stock: &str, values: Vec<Option<f64>>) -> EventTrajectory {
    let n = values.len();
    EventTrajectory {
        stock_id: stock.into(),
        halt_begin: BarStamp::new(calendar(1).day(0), 1),
        group: None,
        measure: MeasureKind::Volume,
        t_start: 0,
        values,
        positions: (0..n).map(SessionMinute).collect(),
    }
}

#[test]
fn average_of_one_and_three() {
    let avg = group_average(&[
        trajectory("a", vec![Some(1.0), Some(5.0)]),
        trajectory("b", vec![Some(3.0), None]),
    ])
    .unwrap();
    assert_eq!(avg.mean, vec![Some(2.0), Some(5.0)]);
    assert_eq!(avg.n, vec![2, 1]);
    assert!((avg.stderr[0].unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(avg.stderr[1], None);
}

#[test]
fn average_of_copies_is_exact() {
    let v = vec![Some(0.1), Some(1.0 / 3.0), Some(7.25)];
    let trs: Vec<_> = (0..37)
        .map(|i| trajectory(&format!("{i:03}"), v.clone()))
        .collect();
    let avg = group_average(&trs).unwrap();
    assert_eq!(avg.mean, v);
    assert!(avg.stderr.iter().all(|s| *s == Some(0.0)));
}

#[test]
fn average_rejects_empty_and_mismatched() {
    assert_eq!(group_average(&[]), Err(StudyError::EmptyGroup));
    let r = group_average(&[trajectory("a", vec![Some(1.0)]), trajectory("b", vec![])]);
    assert_eq!(r, Err(StudyError::MismatchedTrajectories));
}

/// Ten stocks, each with an intraday halt; `resume_moves[i]` is the log move
/// from the last pre-halt price to the resumption price.
fn price_fixture(resume_moves: &[f64], path: impl Fn(usize) -> f64) -> (Panel, Vec<HaltEvent>) {
    let n_days = 4;
    let begin = SessionMinute::new(2, 61);
    let resume = SessionMinute::new(2, 121);
    let mut stocks = Vec::new();
    let ids: Vec<String> = (0..resume_moves.len()).map(|i| format!("{:06}", 600000 + i)).collect();
    for (i, &mv) in resume_moves.iter().enumerate() {
        let s = series_from(n_days, |g| {
            if (begin.0..resume.0).contains(&g) {
                return None;
            }
            let lp = if g >= resume.0 {
                path(begin.0 - 1) + mv + path(g) - path(resume.0)
            } else {
                path(g)
            };
            Some(bar(lp.exp(), 1.0, 0.01))
        });
        stocks.push((ids[i].as_str(), s));
    }
    let p = panel(n_days, stocks);
    let events = ids
        .iter()
        .map(|id| event(p.calendar(), id, begin, resume, EventSign::Positive))
        .collect();
    (p, events)
}

#[test]
fn flat_prices_have_zero_stability() {
    let (p, events) = price_fixture(&[0.0; 3], |_| 10f64.ln());
    let curve = average_cumulative_return(&p, &events, 160, 160).unwrap();
    assert!(curve.values.iter().all(|&v| v == 0.0));
    assert_eq!(curve.stability_s, 0.0);
    assert_eq!(curve.value(0), Some(0.0));
}

#[test]
fn alternating_returns_stability() {
    let c = 0.01;
    let (p, events) = price_fixture(&[0.0], |g| 2.0 + if g % 2 == 0 { 0.0 } else { c });
    let curve = average_cumulative_return(&p, &events, 160, 160).unwrap();
    // R(t) alternates between +-c and 0 after the halt: half the points at
    // distance c/2 from the mean.
    let expected = 0.5 * c * (160.0f64 / 159.0).sqrt();
    assert!((curve.stability_s - expected).abs() < 1e-12, "{}", curve.stability_s);
}

#[test]
fn six_of_ten_reverse() {
    let moves = [-0.01, -0.02, -0.005, -0.03, -0.01, -0.01, 0.01, 0.02, 0.0, 0.01];
    let (p, events) = price_fixture(&moves, |_| 10f64.ln());
    let rev = reversal_stats(&p, &events, &[1, 2]).unwrap();
    assert_eq!(rev[0].reversed, 6);
    assert_eq!(rev[0].total, 10);
    assert_eq!(rev[0].fraction, 0.6);
    assert_eq!(rev[1].fraction, 0.6);
}

/// Direct transcription: per event, sum one-minute log returns from the start
/// of the window, average over events, subtract the value at t = 0.
fn literal_cumulative(p: &Panel, events: &[HaltEvent], pre: isize, post: isize) -> Vec<f64> {
    let n = events.len() as f64;
    let mut out = Vec::new();
    for t in -pre..=post {
        let mut total = 0.0;
        for e in events {
            let s = p.series(&e.record.stock_id).unwrap();
            let price = |at: SessionMinute| s.get(at).unwrap().last_price;
            let mut sum = 0.0;
            for i in -pre..=t {
                let r = if i == 0 {
                    price(e.resume_at).ln() - price(SessionMinute(e.halt_begin_at.0 - 1)).ln()
                } else {
                    let at = e.position_of(i).unwrap();
                    price(at).ln() - price(SessionMinute(at.0 - 1)).ln()
                };
                sum += r;
            }
            total += sum;
        }
        out.push(total / n);
    }
    let zero = out[pre as usize];
    out.iter().map(|v| v - zero).collect()
}

fn random_fixture(seed: u64) -> (Panel, Vec<HaltEvent>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_days = 8;
    let n_stocks = rng.random_range(1..=5);
    let mut stocks = Vec::new();
    let mut spans = Vec::new();
    for _ in 0..n_stocks {
        let begin = rng.random_range(200..900);
        let resume = begin + rng.random_range(1..600);
        let mut lp: f64 = rng.random_range(0.0..4.0);
        let s = series_from(n_days, |g| {
            lp += rng.random_range(-0.01..0.01);
            (!(begin..resume).contains(&g)).then(|| bar(lp.exp(), 1.0, 0.01))
        });
        stocks.push(s);
        spans.push((SessionMinute(begin), SessionMinute(resume)));
    }
    let ids: Vec<String> = (0..n_stocks).map(|i| format!("{:06}", 600000 + i)).collect();
    let p = panel(n_days, ids.iter().map(String::as_str).zip(stocks).collect());
    let events = ids
        .iter()
        .zip(spans)
        .map(|(id, (b, r))| event(p.calendar(), id, b, r, EventSign::Negative))
        .collect();
    (p, events)
}

#[test]
fn cumulative_matches_literal_sum() {
    for seed in 0..5 {
        let (p, events) = random_fixture(seed);
        let curve = average_cumulative_return(&p, &events, 160, 160).unwrap();
        let oracle = literal_cumulative(&p, &events, 160, 160);
        for (a, b) in curve.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "seed {seed}: {a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn volume_scale_does_not_move_z(scale in 0.01f64..100.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<f64> = (0..42 * DAY).map(|_| rng.random_range(1.0..10.0)).collect();
        let (p1, e1) = intraday_fixture(|g| base[g]);
        let (p2, e2) = intraday_fixture(|g| base[g] * scale);
        let w = TrajectoryWindow::default();
        let a = extract_trajectory(&p1, &e1, MeasureKind::Volume, &w).unwrap();
        let b = extract_trajectory(&p2, &e2, MeasureKind::Volume, &w).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            let (x, y) = (x.unwrap(), y.unwrap());
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn price_scale_does_not_move_reversals(scale in 0.01f64..100.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let moves: Vec<f64> = (0..10).map(|_| rng.random_range(-0.05..0.05)).collect();
        let path: Vec<f64> = (0..4 * DAY).map(|_| rng.random_range(2.0..2.1)).collect();
        let (p1, e1) = price_fixture(&moves, |g| path[g]);
        let (p2, e2) = price_fixture(&moves, |g| path[g] + scale.ln());
        let r1 = reversal_stats(&p1, &e1, &[1, 2, 5]).unwrap();
        let r2 = reversal_stats(&p2, &e2, &[1, 2, 5]).unwrap();
        prop_assert_eq!(r1, r2);
    }
}
