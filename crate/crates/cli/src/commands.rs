use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use ivproc::bench::{run_experiment, sweep_e7, write_summary_csv, ExperimentId, ExperimentSpec, DEFAULT_SWEEP_EDGES};
use ivproc::hawkes::{default_half_width, estimate_hawkes_cumulants_with, simulate_hawkes_with, CumulantEstimates};
use ivproc::io::{self as fio, ModelConfig};
use ivproc::lrcov::{long_run_cov_detailed, LrcovEstimate};
use ivproc::var::simulate_var_with;
use ivproc::{check_instrument, iv_estimate, EventLog, IntCov, IvProblem, NodeSet, Result, SeriesData};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::{
    usage_error, BenchCommand, BenchCommon, BenchRunArgs, BenchSweepArgs, CheckGraphArgs, Command, EstimateCovArgs,
    IvEstimateArgs, LrcovArgs, SimulateHawkesArgs, SimulateVarArgs, WindowArgs,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::SimulateVar(a) => simulate_var(a),
        Command::SimulateHawkes(a) => simulate_hawkes(a),
        Command::EstimateCov(a) => estimate_cov(a),
        Command::IvEstimate(a) => iv(a),
        Command::CheckGraph(a) => check_graph(a),
        Command::Bench(BenchCommand::Run(a)) => bench_run(a),
        Command::Bench(BenchCommand::Sweep(a)) => bench_sweep(a),
    }
}

fn simulate_var(a: SimulateVarArgs) -> Result<()> {
    let m = ModelConfig::from_file(&a.config)?.var_model()?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let x = simulate_var_with(&m, a.len, a.burn_in, Default::default(), &mut rng)?;
    fio::write_series_file(&x, &a.out)
}

fn simulate_hawkes(a: SimulateHawkesArgs) -> Result<()> {
    let m = ModelConfig::from_file(&a.config)?.hawkes_model()?;
    let burn_in = a.burn_in.unwrap_or_else(|| m.default_burn_in());
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let log = simulate_hawkes_with(&m, a.horizon, burn_in, a.max_events, &mut rng)?;
    fio::write_events_file(&log, &a.out)
}

enum Input {
    Series(SeriesData),
    Events(EventLog),
}

/// Reads the input file and rejects estimator flags of the other kind.
fn load_input(path: &Path, lrcov: &LrcovArgs, window: &WindowArgs) -> Result<Input> {
    if fio::looks_like_events(path)? {
        if lrcov.any_set() {
            usage_error("--kernel, --bandwidth, --no-demean and --no-prewhiten apply to series input only");
        }
        Ok(Input::Events(fio::read_events_file(path, window.horizon, None)?))
    } else {
        if window.any_set() {
            usage_error("--window-H, --horizon and --edge apply to event input only");
        }
        Ok(Input::Series(fio::read_series_file(path)?))
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn series_meta(est: &LrcovEstimate, lrcov: &LrcovArgs) -> Value {
    let cfg = lrcov.config();
    json!({
        "input": "series",
        "kernel": cfg.kernel,
        "bandwidth": est.bandwidth,
        "bandwidth_fallback": est.bandwidth_fallback,
        "max_lag": est.max_lag,
        "demean": cfg.demean,
        "prewhitened": est.prewhitened,
        "provenance": est.cov.provenance(),
    })
}

fn events_meta(est: &CumulantEstimates) -> Value {
    json!({
        "input": "events",
        "half_width": est.half_width,
        "horizon": est.horizon,
        "edge": est.edge,
        "lambda_hat": est.lambda_hat.as_slice(),
        "empty_processes": est.empty_processes,
        "effective_samples": est.effective_samples(),
    })
}

/// Integrated covariance and a JSON description of how it was obtained.
fn covariance(input: &Input, lrcov: &LrcovArgs, window: &WindowArgs) -> Result<(IntCov, Value)> {
    match input {
        Input::Series(x) => {
            let est = long_run_cov_detailed(x, &lrcov.config())?;
            if est.bandwidth_fallback {
                eprintln!("warning: automatic bandwidth failed, used len^(1/3) = {:.3}", est.bandwidth);
            }
            let meta = series_meta(&est, lrcov);
            Ok((est.cov, meta))
        }
        Input::Events(log) => {
            let h = window.window_h.unwrap_or_else(|| default_half_width(log));
            let edge = window.edge.map(Into::into).unwrap_or_default();
            let est = estimate_hawkes_cumulants_with(log, h, edge)?;
            for p in &est.empty_processes {
                eprintln!("warning: process {p} has no events");
            }
            Ok((est.to_intcov()?, events_meta(&est)))
        }
    }
}

fn emit(doc: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(doc).expect("JSON values always serialize");
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn estimate_cov(a: EstimateCovArgs) -> Result<()> {
    let input = load_input(&a.input, &a.lrcov, &a.window)?;
    let (c, mut doc) = covariance(&input, &a.lrcov, &a.window)?;
    doc["matrix"] = json!(rows(c.matrix()));
    emit(&doc, a.out.as_deref())
}

fn read_weight(spec: &str) -> Result<Option<DMatrix<f64>>> {
    if spec.eq_ignore_ascii_case("identity") {
        return Ok(None);
    }
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(spec)
        .map_err(ivproc::Error::from)?;
    let mut data: Vec<Vec<f64>> = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(ivproc::Error::from)?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|e| ivproc::Error::Parse(format!("weight entry `{v}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        data.push(row);
    }
    let k = data.len();
    if k == 0 || data.iter().any(|r| r.len() != k) {
        return Err(ivproc::Error::Parse(format!("weight file {spec} must hold a square matrix")));
    }
    Ok(Some(DMatrix::from_row_iterator(k, k, data.into_iter().flatten())))
}

fn node_set(v: &[usize]) -> NodeSet {
    v.iter().copied().collect()
}

fn iv(a: IvEstimateArgs) -> Result<()> {
    let mut prob = IvProblem::new(node_set(&a.instruments), node_set(&a.treatments), node_set(&a.outcomes))?;
    if let Some(w) = read_weight(&a.weight)? {
        prob = prob.with_weight(w)?;
    }
    prob.weak_z = a.weak_z;
    let input = load_input(&a.input, &a.lrcov, &a.window)?;
    let dim = match &input {
        Input::Series(x) => x.n(),
        Input::Events(log) => log.n(),
    };
    if prob.max_node() > dim {
        return Err(ivproc::Error::Domain(format!(
            "node {} requested but the input has {dim} coordinates",
            prob.max_node()
        )));
    }
    let (c, meta) = covariance(&input, &a.lrcov, &a.window)?;
    let result = iv_estimate(&c, &prob)?;
    let mut doc = serde_json::to_value(&result).expect("estimation results serialize");
    doc["instruments"] = json!(prob.iv.iter().collect::<Vec<_>>());
    doc["treatments"] = json!(prob.a.iter().collect::<Vec<_>>());
    doc["outcomes"] = json!(prob.b.iter().collect::<Vec<_>>());
    doc["weight"] = json!(prob.weight.as_ref().map(rows));
    doc["covariance"] = meta;
    emit(&doc, a.out.as_deref())
}

fn check_graph(a: CheckGraphArgs) -> Result<()> {
    let g = ModelConfig::from_file(&a.config)?.graph()?;
    let r = check_instrument(&g, &node_set(&a.instruments), &node_set(&a.treatments), &node_set(&a.outcomes))?;
    let doc = json!({
        "exogenous": r.exogenous,
        "descendant_parent": r.descendant_parent,
        "graph_valid": r.graph_valid(),
        "failed_layer": r.failed_layer(),
        "note": "the rank condition on C_AI is checked by iv-estimate",
    });
    emit(&doc, None)
}

fn spec(id: ExperimentId, c: &BenchCommon) -> Result<ExperimentSpec> {
    let mut s = ExperimentSpec::new(id, c.size, c.reps, c.seed)?;
    s.lrcov = c.lrcov.config();
    s.half_width = c.window_h;
    s.weak_z = c.weak_z;
    if id.is_hawkes() && c.lrcov.any_set() {
        usage_error("series estimator flags do not apply to H1");
    }
    if !id.is_hawkes() && c.window_h.is_some() {
        usage_error("--window-H applies to H1 only");
    }
    Ok(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn bench_run(a: BenchRunArgs) -> Result<()> {
    let report = run_experiment(&spec(a.experiment, &a.common)?)?;
    if let Some(p) = &a.out {
        report.write_reps_csv(create(p)?)?;
    }
    let summary = [report.summary()];
    if let Some(p) = &a.summary {
        write_summary_csv(&summary, create(p)?)?;
    }
    write_summary_csv(&summary, io::stdout().lock())?;
    if report.failures > 0 {
        eprintln!("warning: {} of {} replications failed", report.failures, report.reps);
    }
    Ok(())
}

fn bench_sweep(a: BenchSweepArgs) -> Result<()> {
    let edges = a.edges.unwrap_or_else(|| DEFAULT_SWEEP_EDGES.to_vec());
    let table = sweep_e7(&spec(ExperimentId::E7, &a.common)?, &edges)?;
    if let Some(p) = &a.out {
        table.write_rows_csv(create(p)?)?;
    }
    if let Some(p) = &a.bins {
        table.write_bins_csv(create(p)?)?;
    }
    let mut stdout = io::stdout().lock();
    table.write_bins_csv(&mut stdout)?;
    stdout.flush()?;
    if table.failures > 0 {
        eprintln!("warning: {} replications failed", table.failures);
    }
    Ok(())
}
