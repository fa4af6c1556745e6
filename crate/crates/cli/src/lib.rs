//! Batch front-end for the closed-loop channel: scenario files in, CSV and
//! JSON artifacts out.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use closedloop::comms::{
    equilibrium_concentration, equilibrium_with_ones_fraction, isi_decompose, received_signal_on, single_shot,
    BitSequence, TransitionTime,
};
use closedloop::config::{Scenario, ScenarioFile};
use closedloop::io::{coefficients_csv, series_csv, sidecar_path, write_atomic, write_json};
use closedloop::pbs::{pbs_run_with_snapshots, PbsConfig, Snapshot};
use closedloop::spectral::{open_loop_reference, rx_signal, solve};
use closedloop::{ChannelConfig, Error, ReceiverSpec, TimeGrid, TimeSeries};

pub const DEFAULT_RMSE_THRESHOLD: f64 = 0.05;

/// Exit status for each failure class.
pub mod exit {
    pub const VALIDATION: i32 = 1;
    pub const NUMERICAL: i32 = 2;
    pub const THRESHOLD: i32 = 3;
}

/// Comparison metric above its threshold.
#[derive(Debug)]
pub struct ThresholdExceeded {
    pub metric: &'static str,
    pub value: f64,
    pub threshold: f64,
}

impl fmt::Display for ThresholdExceeded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {:.4e} is not below the threshold {:.4e}", self.metric, self.value, self.threshold)
    }
}

impl std::error::Error for ThresholdExceeded {}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ThresholdExceeded>().is_some() {
            return exit::THRESHOLD;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return if e.is_validation() { exit::VALIDATION } else { exit::NUMERICAL };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() || cause.downcast_ref::<UsageError>().is_some() {
            return exit::VALIDATION;
        }
    }
    exit::NUMERICAL
}

/// Bad command-line usage not caught by the argument parser.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone)]
pub struct Options {
    pub seed: Option<u64>,
    /// Divide concentrations by `N_P`.
    pub normalized: bool,
    pub rmse_threshold: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            seed: None,
            normalized: true,
            rmse_threshold: DEFAULT_RMSE_THRESHOLD,
        }
    }
}

/// A loaded scenario together with the file form used for audit sidecars.
pub struct Loaded {
    pub file: ScenarioFile,
    pub scenario: Scenario,
}

pub fn load(path: &Path, seed: Option<u64>) -> anyhow::Result<Loaded> {
    let file = ScenarioFile::load(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = file.resolve(seed)?;
    Ok(Loaded { file, scenario })
}

fn scale(opts: &Options, channel: &ChannelConfig) -> f64 {
    if opts.normalized {
        1.0 / channel.n_molecules as f64
    } else {
        1.0
    }
}

fn write_with_meta(path: &Path, body: &str, meta: serde_json::Value) -> anyhow::Result<()> {
    write_atomic(path, body.as_bytes())?;
    write_json(&sidecar_path(path), &meta)?;
    Ok(())
}

fn meta(command: &str, loaded: &Loaded, opts: &Options, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "command": command,
        "scenario": loaded.file,
        "seed_override": opts.seed,
        "normalized": opts.normalized,
        "result": extra,
    })
}

/// `<stem>_<suffix>.<ext>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub mass_end: f64,
    pub peak_value: f64,
    pub peak_time: f64,
}

pub fn cmd_solve(loaded: &Loaded, out: &Path, coefficients: bool, opts: &Options) -> anyhow::Result<SolveSummary> {
    let sc = &loaded.scenario;
    let solution = solve(&sc.channel, &sc.grid)?;
    let k = scale(opts, &sc.channel);
    let rx = rx_signal(&solution, &sc.receiver)?.scaled(k);
    let mass = solution.mass_series().scaled(k);
    let (peak_idx, peak_value) = rx.argmax().unwrap_or((0, 0.0));
    let summary = SolveSummary {
        mass_end: *mass.values.last().unwrap_or(&0.0),
        peak_value,
        peak_time: rx.time(peak_idx),
    };
    write_with_meta(
        out,
        &series_csv(&["t", "c_rx"], &[&rx])?,
        meta("solve", loaded, opts, json!(summary)),
    )?;
    if coefficients {
        let path = sibling(out, "coefficients");
        let mut sol = solution;
        sol.trajectory.mapv_inplace(|z| z * k);
        write_with_meta(&path, &coefficients_csv(&sol), meta("solve", loaded, opts, json!(summary)))?;
    }
    Ok(summary)
}

fn snapshot_csv(snap: &Snapshot, loop_length: f64) -> String {
    let p = &snap.population;
    let mut out = String::from("x,y,z,alive,x_unwrapped\n");
    for i in 0..p.len() {
        out.push_str(&format!(
            "{:?},{:?},{:?},{},{:?}\n",
            p.x[i],
            p.y[i],
            p.z[i],
            u8::from(p.alive[i]),
            p.unwrapped_x(i, loop_length)
        ));
    }
    out
}

fn pbs_config(sc: &Scenario) -> anyhow::Result<&PbsConfig> {
    sc.pbs.as_ref().ok_or_else(|| usage("scenario has no `pbs` section"))
}

pub fn cmd_pbs(loaded: &Loaded, out: &Path, snapshots: &[f64], opts: &Options) -> anyhow::Result<Vec<String>> {
    let sc = &loaded.scenario;
    let pbs = pbs_config(sc)?;
    let run = pbs_run_with_snapshots(&sc.channel, pbs, &sc.receiver, &sc.grid, snapshots)?;
    let k = if opts.normalized { 1.0 } else { sc.channel.n_molecules as f64 };
    let rx = run.rx.scaled(k);
    write_with_meta(
        out,
        &series_csv(&["t", "c_rx_pbs", "alive_fraction"], &[&rx, &run.alive_fraction])?,
        meta("pbs", loaded, opts, json!({ "warnings": run.warnings, "pbs": pbs })),
    )?;
    for snap in &run.snapshots {
        let path = sibling(out, &format!("snapshot_t{:?}", snap.t));
        write_with_meta(
            &path,
            &snapshot_csv(snap, sc.channel.loop_length),
            meta("pbs", loaded, opts, json!({ "snapshot_time": snap.t })),
        )?;
    }
    Ok(run.warnings)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub rmse: f64,
    /// RMSE divided by the analytic maximum.
    pub normalized_rmse: f64,
    pub max_deviation: f64,
    /// Fraction of samples with `t ≥ band_from` where the analytic curve lies
    /// within three binomial standard errors of the particle estimate.
    pub band_coverage: f64,
    pub band_from: f64,
    pub threshold: f64,
    pub passed: bool,
    pub warnings: Vec<String>,
    pub analytic: TimeSeries,
    pub particles: TimeSeries,
}

/// Spectral solution of `solver_channel` against the particle simulation of
/// `pbs_channel`, both normalized by their `N_P`.
pub fn compare(
    solver_channel: &ChannelConfig,
    pbs_channel: &ChannelConfig,
    rx: &ReceiverSpec,
    grid: &TimeGrid,
    pbs: &PbsConfig,
    threshold: f64,
) -> anyhow::Result<CompareReport> {
    let solution = solve(solver_channel, grid)?;
    let analytic = rx_signal(&solution, rx)?.scaled(1.0 / solver_channel.n_molecules as f64);
    let run = closedloop::pbs::pbs_run(pbs_channel, pbs, rx, grid)?;
    let particles = run.rx;
    let n = analytic.len() as f64;
    let sq: f64 = analytic.values.iter().zip(&particles.values).map(|(a, p)| (a - p).powi(2)).sum();
    let rmse = (sq / n).sqrt();
    let peak = analytic.max_abs().max(f64::MIN_POSITIVE);
    let n_p = pbs_channel.n_molecules as f64;
    let band_from = 1.0;
    let (mut inside, mut counted) = (0usize, 0usize);
    for k in 0..analytic.len() {
        if analytic.time(k) < band_from {
            continue;
        }
        counted += 1;
        let p = analytic.values[k].clamp(0.0, 1.0);
        let sigma = (p * (1.0 - p) / n_p).sqrt();
        if (particles.values[k] - analytic.values[k]).abs() <= 3.0 * sigma {
            inside += 1;
        }
    }
    let normalized_rmse = rmse / peak;
    Ok(CompareReport {
        rmse,
        normalized_rmse,
        max_deviation: analytic.max_abs_diff(&particles),
        band_coverage: if counted == 0 { 1.0 } else { inside as f64 / counted as f64 },
        band_from,
        threshold,
        passed: normalized_rmse < threshold,
        warnings: run.warnings,
        analytic,
        particles,
    })
}

pub fn cmd_compare(loaded: &Loaded, out: &Path, opts: &Options) -> anyhow::Result<CompareReport> {
    let sc = &loaded.scenario;
    let pbs = pbs_config(sc)?;
    let report = compare(&sc.channel, &sc.channel, &sc.receiver, &sc.grid, pbs, opts.rmse_threshold)?;
    write_json(
        out,
        &meta("compare", loaded, opts, serde_json::to_value(&report)?),
    )?;
    let series = sibling(out, "series");
    let series = series.with_extension("csv");
    write_with_meta(
        &series,
        &series_csv(&["t", "c_rx", "c_rx_pbs"], &[&report.analytic, &report.particles])?,
        meta("compare", loaded, opts, json!({ "normalized_rmse": report.normalized_rmse })),
    )?;
    if !report.passed {
        return Err(ThresholdExceeded {
            metric: "normalized RMSE",
            value: report.normalized_rmse,
            threshold: opts.rmse_threshold,
        }
        .into());
    }
    Ok(report)
}

fn sequence(sc: &Scenario) -> anyhow::Result<&BitSequence> {
    sc.sequence.as_ref().ok_or_else(|| usage("scenario has no `sequence` section"))
}

#[derive(Debug, Clone, Serialize)]
pub struct IsiSummary {
    pub transition_time: TransitionTime,
    pub equilibrium: Option<f64>,
    pub equilibrium_adjusted: Option<f64>,
    pub ones_fraction: f64,
    pub epsilon: f64,
    pub peak_delay: f64,
    pub first_wrap: f64,
    pub sum_defect: f64,
    pub warnings: Vec<String>,
}

fn ones_fraction_warning(seq: &BitSequence) -> Option<String> {
    let p = seq.ones_fraction();
    ((p - 0.5).abs() > 0.05).then(|| {
        format!("ones fraction {p:.3} deviates from 1/2 by more than 10%; equilibrium assumes equiprobable bits")
    })
}

pub fn cmd_isi(loaded: &Loaded, out: &Path, opts: &Options) -> anyhow::Result<IsiSummary> {
    let sc = &loaded.scenario;
    let seq = sequence(sc)?;
    let d = isi_decompose(&sc.channel, &sc.receiver, seq, &sc.grid, sc.epsilon)?;
    let k = scale(opts, &sc.channel);
    let adjusted = equilibrium_with_ones_fraction(&sc.channel, seq.symbol_duration, seq.ones_fraction()).ok();
    let summary = IsiSummary {
        transition_time: d.transition_time,
        equilibrium: d.equilibrium.map(|r| r * k),
        equilibrium_adjusted: adjusted.map(|r| r * k),
        ones_fraction: seq.ones_fraction(),
        epsilon: d.epsilon,
        peak_delay: d.peak_delay,
        first_wrap: d.first_wrap,
        sum_defect: d.sum_defect(),
        warnings: ones_fraction_warning(seq).into_iter().collect(),
    };
    let cols = [&d.total, &d.desired, &d.channel, &d.inter_loop, &d.offset].map(|s| s.scaled(k));
    let extra = json!({
        "t_i": summary.transition_time.time(),
        "r_eq": summary.equilibrium,
        "r_eq_adjusted": summary.equilibrium_adjusted,
        "ones_fraction": summary.ones_fraction,
        "epsilon": summary.epsilon,
        "t_p": d.peak_delay,
        "first_wrap": d.first_wrap,
        "sequence": seq.as_digits(),
        "seed": opts.seed.or(loaded.file.sequence.as_ref().and_then(|s| s.seed)),
        "warnings": summary.warnings,
    });
    write_with_meta(
        out,
        &series_csv(&["t", "r", "r_d", "r_c", "r_i", "r_o"], &cols.iter().collect::<Vec<_>>())?,
        meta("isi", loaded, opts, extra.clone()),
    )?;
    let open = [&d.open, &d.closed_zero, &d.open_zero].map(|s| s.scaled(k));
    write_with_meta(
        &sibling(out, "open"),
        &series_csv(&["t", "r_open", "c0", "c0_open"], &open.iter().collect::<Vec<_>>())?,
        meta("isi", loaded, opts, extra),
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Alpha,
    Beta,
    #[value(name = "T_S", alias = "t_s")]
    #[serde(rename = "T_S")]
    SymbolDuration,
    #[value(name = "x_rx")]
    XRx,
    #[value(name = "N", alias = "n")]
    N,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::SymbolDuration => "T_S",
            SweepParam::XRx => "x_rx",
            SweepParam::N => "N",
        })
    }
}

/// Scenario with one parameter replaced. Returns a warning when the value had
/// to be adjusted.
pub fn apply_sweep(sc: &Scenario, param: SweepParam, value: f64) -> anyhow::Result<(Scenario, Option<String>)> {
    let mut s = sc.clone();
    let mut warning = None;
    match param {
        SweepParam::Alpha => {
            let beta = s.channel.damping.beta;
            if value < beta {
                warning = Some(format!("alpha = {value} is below beta = {beta}; running with alpha = beta"));
            }
            s.channel.damping.alpha = value.max(beta);
        }
        SweepParam::Beta => s.channel.damping.beta = value,
        SweepParam::SymbolDuration => {
            let seq = s.sequence.as_mut().ok_or_else(|| usage("sweeping T_S needs a `sequence` section"))?;
            seq.symbol_duration = value;
        }
        SweepParam::XRx => s.receiver = s.receiver.recentered(value),
        SweepParam::N => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(usage(format!("N = {value} is not a positive integer")));
            }
            s.channel.truncation_order = value as usize;
        }
    }
    s.channel.validate()?;
    s.receiver.validate(s.channel.loop_length)?;
    Ok((s, warning))
}

/// Closed- and open-loop received signals of a scenario: the whole sequence
/// when one is given, else the single-shot response.
pub fn closed_and_open(sc: &Scenario) -> anyhow::Result<(TimeSeries, TimeSeries)> {
    match &sc.sequence {
        Some(seq) => {
            let n = sc.grid.n_samples + ((sc.grid.t_start - seq.t_start).max(0.0) / sc.grid.dt).ceil() as usize;
            let shot = single_shot(&sc.channel, &sc.receiver, &TimeGrid::new(0.0, sc.grid.dt, n))?;
            Ok((
                received_signal_on(&shot.closed_rx, seq, &sc.grid)?,
                received_signal_on(&shot.open_rx, seq, &sc.grid)?,
            ))
        }
        None => {
            let closed = rx_signal(&solve(&sc.channel, &sc.grid)?, &sc.receiver)?;
            let open = open_loop_reference(&sc.channel, &sc.receiver, &sc.grid)?.rx;
            Ok((closed, open))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub max_abs_diff: f64,
    pub max_open: f64,
    /// `max|r_k - r_{k-1}|` against the previous value; `None` for the first.
    pub successive_diff: Option<f64>,
    pub warning: Option<String>,
}

pub fn cmd_sweep(
    loaded: &Loaded,
    param: SweepParam,
    values: &[f64],
    out_dir: &Path,
    opts: &Options,
) -> anyhow::Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(usage("sweep needs at least one value"));
    }
    let sc = &loaded.scenario;
    let k = scale(opts, &sc.channel);
    let runs = values
        .par_iter()
        .map(|&v| -> anyhow::Result<_> {
            let (s, warning) = apply_sweep(sc, param, v)?;
            let (closed, open) = closed_and_open(&s)?;
            Ok((v, warning, closed.scaled(k), open.scaled(k)))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(runs.len());
    for (i, (v, warning, closed, open)) in runs.iter().enumerate() {
        let path = out_dir.join(format!("{param}_{i:03}.csv"));
        write_with_meta(
            &path,
            &series_csv(&["t", "r", "r_open"], &[closed, open])?,
            meta("sweep", loaded, opts, json!({ "parameter": param, "value": v, "warning": warning })),
        )?;
        let successive_diff = (i > 0)
            .then(|| &runs[i - 1].2)
            .filter(|prev| prev.same_grid(closed))
            .map(|prev| prev.max_abs_diff(closed));
        rows.push(SweepRow {
            value: *v,
            max_abs_diff: closed.max_abs_diff(open),
            max_open: open.max_abs(),
            successive_diff,
            warning: warning.clone(),
        });
    }
    let mut summary = String::from("value,max_abs_diff,max_open,successive_diff\n");
    for r in &rows {
        summary.push_str(&format!(
            "{:?},{:?},{:?},{}\n",
            r.value,
            r.max_abs_diff,
            r.max_open,
            r.successive_diff.map(|d| format!("{d:?}")).unwrap_or_default()
        ));
    }
    write_with_meta(
        &out_dir.join("summary.csv"),
        &summary,
        meta("sweep", loaded, opts, json!({ "parameter": param, "rows": rows })),
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub r_eq: f64,
    pub r_eq_adjusted: Option<f64>,
    pub ones_fraction: Option<f64>,
    pub symbol_duration: f64,
    pub warnings: Vec<String>,
}

pub fn cmd_equilibrium(
    loaded: &Loaded,
    symbol_duration: Option<f64>,
    out: Option<&Path>,
    opts: &Options,
) -> anyhow::Result<EquilibriumReport> {
    let sc = &loaded.scenario;
    let t_s = match (symbol_duration, &sc.sequence) {
        (Some(t), _) => t,
        (None, Some(seq)) => seq.symbol_duration,
        (None, None) => return Err(usage("give --symbol-duration or a `sequence` section")),
    };
    let k = scale(opts, &sc.channel);
    let r_eq = equilibrium_concentration(&sc.channel, t_s)? * k;
    let ones = sc.sequence.as_ref().map(BitSequence::ones_fraction);
    let r_eq_adjusted = match ones {
        Some(p) => Some(equilibrium_with_ones_fraction(&sc.channel, t_s, p)? * k),
        None => None,
    };
    let report = EquilibriumReport {
        r_eq,
        r_eq_adjusted,
        ones_fraction: ones,
        symbol_duration: t_s,
        warnings: sc.sequence.as_ref().and_then(ones_fraction_warning).into_iter().collect(),
    };
    if let Some(path) = out {
        write_json(path, &meta("equilibrium", loaded, opts, serde_json::to_value(&report)?))?;
    }
    Ok(report)
}
