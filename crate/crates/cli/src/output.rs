//! Output files of a run. Everything is written from one thread after the
//! analysis has finished, in a fixed order, so repeated runs produce
//! byte-identical trees.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use halt_core::events::{
    write_eligibility_report, EventSign, GroupKey, HaltType,
};
use halt_core::fit::{make_excess, ExponentEntry, FitRange};
use halt_core::pipeline::{AnalysisOutput, GroupReturns};
use halt_core::study::{GroupAverage, MeasureKind};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;

pub const CURVES_HEADER: [&str; 6] = ["group", "measure", "t", "mean", "stderr", "n"];
pub const EXPONENTS_HEADER: [&str; 11] = [
    "measure",
    "halt_type",
    "sign",
    "A",
    "alpha",
    "alpha_se_asymptotic",
    "alpha_se_bootstrap",
    "sse",
    "r2",
    "converged",
    "flag",
];
pub const LOGLOG_HEADER: [&str; 5] = ["group", "measure", "t", "z_ex", "fit_value"];

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn csv_file(
    path: &Path,
    body: impl FnOnce(&mut csv::Writer<BufWriter<File>>) -> Result<(), csv::Error>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    body(&mut w).map_err(|e| CliError::csv(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn group_label(g: Option<GroupKey>) -> String {
    g.map(|g| g.to_string()).unwrap_or_else(|| "all".into())
}

pub fn write_curves(path: &Path, averages: &[GroupAverage]) -> Result<(), CliError> {
    csv_file(path, |w| {
        w.write_record(CURVES_HEADER)?;
        for a in averages {
            for (i, mean) in a.mean.iter().enumerate() {
                w.write_record([
                    group_label(a.group),
                    a.measure.to_string(),
                    (a.t_start + i as isize).to_string(),
                    opt(*mean),
                    opt(a.stderr[i]),
                    a.n[i].to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

/// Same schema as the measure curves, with measure `cumulative_return`.
pub fn write_cumulative(path: &Path, returns: &[GroupReturns]) -> Result<(), CliError> {
    csv_file(path, |w| {
        w.write_record(CURVES_HEADER)?;
        for r in returns {
            let c = &r.curve;
            for (i, v) in c.values.iter().enumerate() {
                w.write_record([
                    r.group.to_string(),
                    "cumulative_return".to_string(),
                    (c.t_start + i as isize).to_string(),
                    num(*v),
                    opt(c.stderr[i]),
                    c.n_events.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn write_excess(path: &Path, averages: &[GroupAverage]) -> Result<(), CliError> {
    csv_file(path, |w| {
        w.write_record(["group", "measure", "t", "z_ex"])?;
        for a in averages {
            let ex = make_excess(a);
            for (i, v) in ex.values.iter().enumerate() {
                w.write_record([
                    group_label(a.group),
                    a.measure.to_string(),
                    (i + 1).to_string(),
                    opt(*v),
                ])?;
            }
        }
        Ok(())
    })
}

fn find<'a>(exponents: &'a [ExponentEntry], a: &GroupAverage) -> Option<&'a ExponentEntry> {
    exponents
        .iter()
        .find(|e| Some(e.group) == a.group && e.measure == a.measure)
}

/// Excess values inside the fit range next to the fitted curve.
pub fn write_loglog(
    path: &Path,
    averages: &[GroupAverage],
    exponents: &[ExponentEntry],
    range: FitRange,
) -> Result<(), CliError> {
    csv_file(path, |w| {
        w.write_record(LOGLOG_HEADER)?;
        for a in averages {
            let ex = make_excess(a);
            let fit = find(exponents, a).and_then(|e| e.fit.as_ref());
            for t in range.t_min..=range.t_max.min(ex.t_max()) {
                w.write_record([
                    group_label(a.group),
                    a.measure.to_string(),
                    t.to_string(),
                    opt(ex.value(t)),
                    opt(fit.map(|f| f.value(t as f64))),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn write_exponents(path: &Path, exponents: &[ExponentEntry]) -> Result<(), CliError> {
    csv_file(path, |w| {
        w.write_record(EXPONENTS_HEADER)?;
        for e in exponents {
            let f = e.fit.as_ref();
            w.write_record([
                e.measure.to_string(),
                e.group.halt_type.to_string(),
                e.group.sign.to_string(),
                opt(f.map(|f| f.amplitude)),
                opt(f.map(|f| f.alpha)),
                opt(f.and_then(|f| f.alpha_stderr)),
                opt(f.and_then(|f| f.bootstrap_alpha_stderr)),
                opt(f.map(|f| f.sse)),
                opt(f.map(|f| f.r2)),
                f.map(|f| f.converged.to_string()).unwrap_or_default(),
                e.flag.as_str().to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Stability `s` and reversal fractions, one row per statistic.
pub fn write_stats(path: &Path, returns: &[GroupReturns]) -> Result<(), CliError> {
    csv_file(path, |w| {
        w.write_record(["group", "n_events", "statistic", "horizon", "value"])?;
        for r in returns {
            let n = r.curve.n_events.to_string();
            w.write_record([
                r.group.to_string(),
                n.clone(),
                "s".into(),
                String::new(),
                num(r.curve.stability_s),
            ])?;
            for f in &r.reversals {
                w.write_record([
                    r.group.to_string(),
                    n.clone(),
                    "reversal_fraction".into(),
                    f.horizon.to_string(),
                    num(f.fraction),
                ])?;
            }
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct ExponentRow<'a> {
    measure: MeasureKind,
    halt_type: HaltType,
    sign: EventSign,
    amplitude: Option<f64>,
    alpha: Option<f64>,
    alpha_se_asymptotic: Option<f64>,
    alpha_se_bootstrap: Option<f64>,
    r2: Option<f64>,
    flag: &'a str,
    note: Option<&'a str>,
}

pub fn exponent_rows(exponents: &[ExponentEntry]) -> serde_json::Value {
    let rows: Vec<ExponentRow> = exponents
        .iter()
        .map(|e| {
            let f = e.fit.as_ref();
            ExponentRow {
                measure: e.measure,
                halt_type: e.group.halt_type,
                sign: e.group.sign,
                amplitude: f.map(|f| f.amplitude),
                alpha: f.map(|f| f.alpha),
                alpha_se_asymptotic: f.and_then(|f| f.alpha_stderr),
                alpha_se_bootstrap: f.and_then(|f| f.bootstrap_alpha_stderr),
                r2: f.map(|f| f.r2),
                flag: e.flag.as_str(),
                note: e.note.as_deref(),
            }
        })
        .collect();
    serde_json::to_value(rows).expect("rows serialize")
}

fn summary(config: &RunConfig, out: &AnalysisOutput) -> serde_json::Value {
    let mut counts = BTreeMap::new();
    for t in HaltType::ALL {
        let row: BTreeMap<&str, usize> = EventSign::ALL
            .into_iter()
            .map(|s| (s.as_str(), out.counts.get(t, s)))
            .collect();
        counts.insert(t.as_str(), row);
    }
    let returns: Vec<_> = out
        .returns
        .iter()
        .map(|r| {
            json!({
                "group": r.group.to_string(),
                "n_events": r.curve.n_events,
                "s": r.curve.stability_s,
                "reversal_fractions": r.reversals.iter().map(|f| json!({
                    "horizon": f.horizon,
                    "reversed": f.reversed,
                    "total": f.total,
                    "fraction": f.fraction,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let failures: Vec<_> = out
        .failures
        .iter()
        .map(|f| {
            json!({
                "stock_id": f.stock_id,
                "halt_begin": f.halt_begin.to_string(),
                "measure": f.measure.map(|m| m.to_string()),
                "error": f.error.to_string(),
            })
        })
        .collect();
    json!({
        "config": config,
        "n_records": out.events.len(),
        "n_eligible": out.counts.total(),
        "counts": counts,
        "returns": returns,
        "exponents": exponent_rows(&out.exponents),
        "failures": failures,
    })
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut f = create(path)?;
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .and_then(|_| f.flush())
        .map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes the full output tree of one analysis into `dir`.
pub fn write_run(dir: &Path, config: &RunConfig, out: &AnalysisOutput) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_text(&dir.join("config.resolved.toml"), &config.to_toml())?;
    let path = dir.join("eligibility.csv");
    write_eligibility_report(&out.events, create(&path)?).map_err(|e| CliError::csv(&path, e))?;
    let path = dir.join("counts.csv");
    out.counts
        .write_csv(create(&path)?)
        .map_err(|e| CliError::csv(&path, e))?;
    write_cumulative(&dir.join("cumulative_returns.csv"), &out.returns)?;
    write_stats(&dir.join("stats.csv"), &out.returns)?;
    write_curves(&dir.join("curves.csv"), &out.averages)?;
    write_excess(&dir.join("excess.csv"), &out.averages)?;
    let range = config.analysis().fit.range;
    write_loglog(&dir.join("loglog.csv"), &out.averages, &out.exponents, range)?;
    write_exponents(&dir.join("exponents.csv"), &out.exponents)?;
    write_json(&dir.join("summary.json"), &summary(config, out))
}

/// Reads measure curves written by [`write_curves`] back into group
/// averages. Rows of one (group, measure) must be contiguous in `t`.
pub fn read_curves(path: &Path) -> Result<Vec<GroupAverage>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let bad = |line: u64, m: String| CliError::Validation(format!("{}:{line}: {m}", path.display()));
    let headers = reader.headers().map_err(|e| CliError::csv(path, e))?.clone();
    if headers.iter().ne(CURVES_HEADER) {
        return Err(bad(1, format!("expected header {}", CURVES_HEADER.join(","))));
    }
    let mut out: Vec<GroupAverage> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| CliError::csv(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let group: GroupKey = row[0].parse().map_err(|_| bad(line, format!("bad group {:?}", &row[0])))?;
        let measure: MeasureKind = row[1].parse().map_err(|_| bad(line, format!("bad measure {:?}", &row[1])))?;
        let t: isize = row[2].parse().map_err(|_| bad(line, format!("bad t {:?}", &row[2])))?;
        let float = |s: &str| -> Result<Option<f64>, CliError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(line, format!("bad number {s:?}")))
            }
        };
        let mean = float(&row[3])?;
        let stderr = float(&row[4])?;
        let n: usize = row[5].parse().map_err(|_| bad(line, format!("bad count {:?}", &row[5])))?;
        match out.last_mut() {
            Some(a) if a.group == Some(group) && a.measure == measure => {
                if t != a.t_end() + 1 {
                    return Err(bad(line, format!("t = {t} does not follow {}", a.t_end())));
                }
                a.mean.push(mean);
                a.stderr.push(stderr);
                a.n.push(n);
            }
            _ => out.push(GroupAverage {
                group: Some(group),
                measure,
                t_start: t,
                mean: vec![mean],
                stderr: vec![stderr],
                n: vec![n],
            }),
        }
    }
    Ok(out)
}
