use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use halt_core::calendar::TradingCalendar;
use halt_core::events::{
    filter_eligibility, parse_halt_file, tabulate_counts, write_eligibility_report,
    write_halt_file, HaltEvent, HaltRecord,
};
use halt_core::fit::fit_all_groups;
use halt_core::market_data::{parse_bar_file, Panel};
use halt_core::pipeline::{analyze, sign_flips, AnalysisOutput, SignComparison};
use halt_core::synth::{generate_panel, reference_responses, GroundTruth, SyntheticSpec};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output;

pub struct Inputs {
    pub panel: Panel,
    pub records: Vec<HaltRecord>,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn load_inputs(config: &RunConfig) -> Result<Inputs, CliError> {
    let cal_path = config.required(&config.calendar, "calendar")?;
    let bars_path = config.required(&config.bars, "bars")?;
    let halts_path = config.required(&config.halts, "halts")?;
    let calendar = TradingCalendar::parse(open(&cal_path)?).map_err(|source| CliError::Calendar {
        path: cal_path.clone(),
        source,
    })?;
    let panel = parse_bar_file(open(&bars_path)?, calendar).map_err(|source| CliError::Bars {
        path: bars_path.clone(),
        source,
    })?;
    let records = parse_halt_file(open(&halts_path)?).map_err(|source| CliError::Halts {
        path: halts_path.clone(),
        source,
    })?;
    Ok(Inputs { panel, records })
}

/// The configuration echoed into an output tree. The output location is left
/// out so that the same run written to two places gives identical files.
fn echoed(config: &RunConfig) -> RunConfig {
    RunConfig {
        out_dir: None,
        ..config.clone()
    }
}

pub fn analyze_inputs(config: &RunConfig, inputs: &Inputs) -> Result<AnalysisOutput, CliError> {
    Ok(analyze(&inputs.panel, &inputs.records, &config.analysis())?)
}

/// Full analysis of the configured inputs, written to `out`.
pub fn cmd_run(config: &RunConfig, out: &Path) -> Result<AnalysisOutput, CliError> {
    config.validate()?;
    let inputs = load_inputs(config)?;
    let result = analyze_inputs(config, &inputs)?;
    output::write_run(out, &echoed(config), &result)?;
    Ok(result)
}

fn window_dir(out: &Path, window: usize) -> PathBuf {
    out.join(format!("window_{window:03}"))
}

/// Reruns the analysis under each trend window and counts, per event, how
/// often the trend sign changes between consecutive windows.
pub fn cmd_robustness(config: &RunConfig, out: &Path) -> Result<Vec<SignComparison>, CliError> {
    config.validate()?;
    let inputs = load_inputs(config)?;
    let mut classified: Vec<Vec<HaltEvent>> = Vec::new();
    let mut results = Vec::new();
    for &w in &config.robustness_windows {
        let cfg = RunConfig {
            trend_window: w,
            ..config.clone()
        };
        let result = analyze_inputs(&cfg, &inputs)?;
        classified.push(result.events.clone());
        results.push((w, cfg, result));
    }
    let flips = sign_flips(&classified);

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for (w, cfg, result) in &results {
        output::write_run(&window_dir(out, *w), &echoed(cfg), result)?;
    }
    let path = out.join("sign_flips.csv");
    let mut w = csv::Writer::from_writer(File::create(&path).map_err(|e| CliError::io(&path, e))?);
    let mut header = vec!["stock_id".to_string(), "halt_date".into(), "halt_minute".into()];
    header.extend(config.robustness_windows.iter().map(|w| format!("sign_{w}")));
    header.push("flips".into());
    w.write_record(&header).map_err(|e| CliError::csv(&path, e))?;
    for row in &flips {
        let mut rec = vec![
            row.stock_id.clone(),
            row.halt_begin.day.format("%Y-%m-%d").to_string(),
            row.halt_begin.minute.to_string(),
        ];
        rec.extend(row.signs.iter().map(|s| s.map(|s| s.to_string()).unwrap_or_default()));
        rec.push(row.flips.to_string());
        w.write_record(&rec).map_err(|e| CliError::csv(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(flips)
}

/// Classification and eligibility only.
pub fn cmd_counts(config: &RunConfig, out: &Path) -> Result<Vec<HaltEvent>, CliError> {
    config.validate()?;
    let inputs = load_inputs(config)?;
    let panel = inputs.panel.forward_fill_all();
    let events = filter_eligibility(&inputs.records, &panel, &config.analysis().eligibility)
        .map_err(|e| CliError::Pipeline(e.into()))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path = out.join("eligibility.csv");
    let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_eligibility_report(&events, f).map_err(|e| CliError::csv(&path, e))?;
    let path = out.join("counts.csv");
    let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    tabulate_counts(&events)
        .write_csv(f)
        .map_err(|e| CliError::csv(&path, e))?;
    Ok(events)
}

/// Refits the exponent table from a curves file of an earlier run. No
/// per-event data is available, so the bootstrap column stays empty.
pub fn cmd_fit(config: &RunConfig, curves: &Path, out: &Path) -> Result<(), CliError> {
    config.validate()?;
    let averages = output::read_curves(curves)?;
    let fit = config.analysis().fit;
    let exponents = fit_all_groups(&averages, &fit);
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    output::write_exponents(&out.join("exponents.csv"), &exponents)?;
    output::write_loglog(&out.join("loglog.csv"), &averages, &exponents, fit.range)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub events_per_group: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            events_per_group: 20,
            sigma: 0.25,
            seed: 0,
        }
    }
}

/// Writes a synthetic calendar, bar file, halt registry, ground truth and a
/// ready-to-use run configuration into `out`.
pub fn cmd_synth(opts: &SynthOptions, out: &Path) -> Result<GroundTruth, CliError> {
    if opts.events_per_group == 0 || !(opts.sigma.is_finite() && opts.sigma >= 0.0) {
        return Err(CliError::Validation(
            "events per group must be positive and sigma non-negative".into(),
        ));
    }
    let spec = SyntheticSpec::grouped(&reference_responses(), opts.events_per_group, opts.seed, opts.sigma);
    let data = generate_panel(&spec)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    output::write_text(&out.join("calendar.txt"), &data.panel.calendar().to_text())?;
    let path = out.join("bars.csv");
    let f = std::io::BufWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?);
    data.panel.write_csv(f).map_err(|source| CliError::Bars {
        path: path.clone(),
        source,
    })?;
    let path = out.join("halts.csv");
    let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_halt_file(&data.registry, f).map_err(|e| CliError::csv(&path, e))?;
    output::write_text(&out.join("truth.json"), &(data.truth.to_json() + "\n"))?;
    let run = RunConfig {
        bars: Some("bars.csv".into()),
        calendar: Some("calendar.txt".into()),
        halts: Some("halts.csv".into()),
        seed: opts.seed,
        ..RunConfig::default()
    };
    output::write_text(&out.join("run.toml"), &run.to_toml())?;
    Ok(data.truth)
}
