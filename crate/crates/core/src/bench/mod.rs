//! Monte-Carlo experiments: random models on fixed graph patterns, simulated,
//! estimated through the IV identities and scored against the true
//! normalized effect.

pub mod e6;
pub mod patterns;
pub mod sampler;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use e6::{simulate_e6, simulate_e6_with, E6_NOISE_SD, E6_TRUTH};
pub use sampler::{sample_experiment_params, sample_var_on_patterns, SampledModel, SamplerBounds, MAX_REJECTIONS};

use crate::error::{Error, Result};
use crate::graph::NodeSet;
use crate::hawkes::{default_half_width, simulate_hawkes_with, DEFAULT_MAX_EVENTS};
use crate::iv::{iv_estimate_events, iv_estimate_series, IvProblem};
use crate::lrcov::LrcovConfig;
use crate::var::{normalized_effect, simulate_var_with, Innovation, DEFAULT_BURN_IN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    H1,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::E1,
        ExperimentId::E2,
        ExperimentId::E3,
        ExperimentId::E4,
        ExperimentId::E5,
        ExperimentId::E6,
        ExperimentId::E7,
        ExperimentId::H1,
    ];

    pub fn is_hawkes(self) -> bool {
        self == ExperimentId::H1
    }

    pub fn problem(self) -> IvProblem {
        let (iv, a, b): (NodeSet, NodeSet, NodeSet) = match self {
            ExperimentId::E3 => ([1, 2].into(), [3, 4].into(), [5].into()),
            ExperimentId::E4 => ([1, 2].into(), [3].into(), [4].into()),
            _ => ([1].into(), [2].into(), [3].into()),
        };
        IvProblem::new(iv, a, b).expect("fixed experiment sets are valid")
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    /// Series length N, or observation horizon T for H1.
    pub size: f64,
    pub reps: usize,
    pub seed: u64,
    pub bounds: Option<SamplerBounds>,
    pub lrcov: LrcovConfig,
    /// Cumulant window half-width for H1; data-driven when unset.
    pub half_width: Option<f64>,
    /// Weak-instrument screen applied to each rep. Off by default so the
    /// MSE averages over every draw.
    pub weak_z: Option<f64>,
}

impl ExperimentSpec {
    pub fn new(id: ExperimentId, size: f64, reps: usize, seed: u64) -> Result<Self> {
        let spec = ExperimentSpec {
            id,
            size,
            reps,
            seed,
            bounds: None,
            lrcov: LrcovConfig::default(),
            half_width: None,
            weak_z: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Argument("at least one replication is required".into()));
        }
        if !(self.size.is_finite() && self.size > 0.0) {
            return Err(Error::Argument(format!("size {} must be positive", self.size)));
        }
        if !self.id.is_hawkes() && (self.size.fract() != 0.0 || self.size < 1.0) {
            return Err(Error::Argument(format!(
                "series length {} must be a positive integer",
                self.size
            )));
        }
        Ok(())
    }

    fn rep_rng(&self, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepOutcome {
    pub rep: usize,
    /// Row-major true normalized effect; empty when sampling failed.
    pub truth: Vec<f64>,
    pub estimate: Option<Vec<f64>>,
    /// Outcome self-effect `Φ_BB` for single-outcome VAR experiments.
    pub phi_bb: Option<f64>,
    pub error: Option<String>,
}

impl RepOutcome {
    pub fn squared_error(&self) -> Option<f64> {
        let est = self.estimate.as_ref()?;
        Some(est.iter().zip(&self.truth).map(|(e, t)| (e - t) * (e - t)).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub id: ExperimentId,
    pub size: f64,
    pub reps: usize,
    pub outcomes: Vec<RepOutcome>,
    /// Mean squared error over successful reps; NaN when every rep failed.
    pub mse: f64,
    pub range: (f64, f64),
    pub failures: usize,
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0, 0.0);
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn run_rep(spec: &ExperimentSpec, rep: usize) -> RepOutcome {
    let mut out = RepOutcome {
        rep,
        truth: Vec::new(),
        estimate: None,
        phi_bb: None,
        error: None,
    };
    if let Err(e) = run_rep_inner(spec, rep, &mut out) {
        out.error = Some(e.to_string());
    }
    out
}

fn run_rep_inner(spec: &ExperimentSpec, rep: usize, out: &mut RepOutcome) -> Result<()> {
    let mut rng = spec.rep_rng(rep);
    let mut prob = spec.id.problem();
    prob.weak_z = spec.weak_z.unwrap_or(0.0);
    let len = spec.size as usize;
    let result = match spec.id {
        ExperimentId::E6 => {
            out.truth = vec![E6_TRUTH];
            let x = simulate_e6_with(len, DEFAULT_BURN_IN, E6_NOISE_SD, &mut rng)?;
            iv_estimate_series(&x, &prob, &spec.lrcov)?
        }
        id => match sample_experiment_params(id, spec.bounds, &mut rng)? {
            SampledModel::Var(m) => {
                out.truth = flatten(&normalized_effect(&m, &prob.a, &prob.b)?);
                if prob.b.len() == 1 {
                    let b = prob.b.positions()[0];
                    out.phi_bb = Some(m.phi_sum()[(b, b)]);
                }
                let x = simulate_var_with(&m, len, DEFAULT_BURN_IN, Innovation::Gaussian, &mut rng)?;
                iv_estimate_series(&x, &prob, &spec.lrcov)?
            }
            SampledModel::Hawkes(m) => {
                out.truth = flatten(&crate::var::normalized_effect_from_phi(
                    m.phi_int(),
                    &prob.a,
                    &prob.b,
                )?);
                let log = simulate_hawkes_with(&m, spec.size, m.default_burn_in(), DEFAULT_MAX_EVENTS, &mut rng)?;
                let h = spec.half_width.unwrap_or_else(|| default_half_width(&log));
                iv_estimate_events(&log, &prob, h)?
            }
        },
    };
    out.estimate = Some(flatten(&result.estimate));
    Ok(())
}

/// Runs all replications, in parallel, and aggregates them in rep order so
/// the report does not depend on scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let outcomes: Vec<RepOutcome> = (0..spec.reps).into_par_iter().map(|r| run_rep(spec, r)).collect();
    let errors: Vec<f64> = outcomes.iter().filter_map(RepOutcome::squared_error).collect();
    let failures = outcomes.len() - errors.len();
    let mse = if errors.is_empty() {
        f64::NAN
    } else {
        kahan_sum(errors.iter().copied()) / errors.len() as f64
    };
    let truths = outcomes.iter().flat_map(|o| o.truth.iter().copied());
    let range = truths.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(ExperimentReport {
        id: spec.id,
        size: spec.size,
        reps: spec.reps,
        outcomes,
        mse,
        range,
        failures,
    })
}

/// One line of the Table-2-style summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub id: ExperimentId,
    #[serde(rename = "N")]
    pub size: f64,
    pub m: usize,
    #[serde(rename = "MSE")]
    pub mse: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub failures: usize,
}

impl ExperimentReport {
    pub fn summary(&self) -> SummaryRow {
        SummaryRow {
            id: self.id,
            size: self.size,
            m: self.reps,
            mse: self.mse,
            r_min: self.range.0,
            r_max: self.range.1,
            failures: self.failures,
        }
    }

    /// Per-rep CSV: `rep, truth_k…, estimate_k…, sq_err, error`.
    pub fn write_reps_csv<W: Write>(&self, w: W) -> Result<()> {
        let k = self.outcomes.iter().map(|o| o.truth.len()).max().unwrap_or(0);
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["rep".to_string()];
        header.extend((1..=k).map(|i| format!("truth_{i}")));
        header.extend((1..=k).map(|i| format!("estimate_{i}")));
        header.extend(["sq_err".into(), "error".into()]);
        wr.write_record(&header)?;
        for o in &self.outcomes {
            let mut rec = vec![o.rep.to_string()];
            let cell = |v: Option<&f64>| v.map(|x| x.to_string()).unwrap_or_default();
            rec.extend((0..k).map(|i| cell(o.truth.get(i))));
            rec.extend((0..k).map(|i| cell(o.estimate.as_ref().and_then(|e| e.get(i)))));
            rec.push(cell(o.squared_error().as_ref()));
            rec.push(o.error.clone().unwrap_or_default());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub const DEFAULT_SWEEP_EDGES: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.85];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub phi33: f64,
    pub abs_err: f64,
    pub log_abs_err: f64,
}

/// Reps with `|Φ_33|` in `(lo, hi]`, or `[lo, hi]` for the first bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub median_log_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub bins: Vec<SweepBin>,
    pub failures: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Error against the outcome self-effect for E7.
pub fn sweep_e7(spec: &ExperimentSpec, edges: &[f64]) -> Result<SweepTable> {
    if spec.id != ExperimentId::E7 {
        return Err(Error::Argument(format!("sweep requires E7, got {}", spec.id)));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Argument("bin edges must be strictly increasing, at least two".into()));
    }
    let report = run_experiment(spec)?;
    let rows: Vec<SweepRow> = report
        .outcomes
        .iter()
        .filter_map(|o| {
            let est = o.estimate.as_ref()?;
            let abs_err = (est[0] - o.truth[0]).abs();
            Some(SweepRow {
                phi33: o.phi_bb?,
                abs_err,
                log_abs_err: abs_err.ln(),
            })
        })
        .collect();
    let bins = edges
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let inside = |x: f64| (x > w[0] || (k == 0 && x >= w[0])) && x <= w[1];
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| inside(r.phi33.abs()))
                .map(|r| r.log_abs_err)
                .collect();
            SweepBin {
                lo: w[0],
                hi: w[1],
                count: vals.len(),
                median_log_abs_err: median(vals),
            }
        })
        .collect();
    Ok(SweepTable {
        rows,
        bins,
        failures: report.failures,
    })
}

impl SweepTable {
    pub fn write_rows_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_bins_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for b in &self.bins {
            wr.serialize(b)?;
        }
        wr.flush()?;
        Ok(())
    }
}
