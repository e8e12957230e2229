//! File formats: series and event CSVs, and TOML model configs.
//!
//! Floats are written with the shortest representation that parses back to
//! the same value, so a write/read round trip is exact.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::bench::{sample_experiment_params, ExperimentId, SampledModel, SamplerBounds};
use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::hawkes::{EventLog, HawkesParams};
use crate::var::{SeriesData, VarParams};

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("{what}: `{s}`: {e}")))
}

/// Header `t,x1..xn`, one row per time point.
pub fn write_series_csv<W: Write>(x: &SeriesData, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend((1..=x.n()).map(|i| format!("x{i}")));
    wr.write_record(&header)?;
    let v = x.values();
    for t in 0..x.len() {
        let mut rec = vec![t.to_string()];
        rec.extend((0..x.n()).map(|i| v[(t, i)].to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_series_csv<R: Read>(r: R) -> Result<SeriesData> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.get(0).map(str::trim) != Some("t") || header.len() < 2 {
        return Err(Error::Parse("series CSV header must be t,x1..xn".into()));
    }
    let n = header.len() - 1;
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != n + 1 {
            return Err(Error::Parse(format!("row {} has {} fields, expected {}", rows + 1, rec.len(), n + 1)));
        }
        for f in rec.iter().skip(1) {
            data.push(parse_f64(f, "series value")?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse("series CSV has no rows".into()));
    }
    SeriesData::new(DMatrix::from_row_slice(rows, n, &data))
}

/// Header `process,time`, rows sorted by time, preceded by a
/// `# horizon=T n=N` line so the window and dimension survive the trip.
pub fn write_events_csv<W: Write>(log: &EventLog, mut w: W) -> Result<()> {
    writeln!(w, "# horizon={} n={}", log.horizon(), log.n())?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["process", "time"])?;
    for (p, t) in log.merged() {
        wr.write_record([p.to_string(), t.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads an event CSV. `horizon` and `n` override the values in the
/// leading comment; without either the horizon defaults to the last event
/// time and `n` to the largest process label.
pub fn read_events_csv<R: Read>(r: R, horizon: Option<f64>, n: Option<usize>) -> Result<EventLog> {
    let mut br = BufReader::new(r);
    let mut first = String::new();
    br.read_line(&mut first)?;
    let (mut file_horizon, mut file_n) = (None, None);
    let rest: Box<dyn Read> = if let Some(meta) = first.trim().strip_prefix('#') {
        for tok in meta.split_whitespace() {
            match tok.split_once('=') {
                Some(("horizon", v)) => file_horizon = Some(parse_f64(v, "horizon")?),
                Some(("n", v)) => {
                    file_n = Some(v.parse::<usize>().map_err(|e| Error::Parse(format!("n: {e}")))?)
                }
                _ => {}
            }
        }
        Box::new(br)
    } else {
        Box::new(std::io::Cursor::new(first.into_bytes()).chain(br))
    };
    let mut rd = csv::Reader::from_reader(rest);
    let header = rd.headers()?.clone();
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["process", "time"] {
        return Err(Error::Parse("event CSV header must be process,time".into()));
    }
    let mut pairs = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Parse(format!("event row has {} fields, expected 2", rec.len())));
        }
        let p: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("process `{}`: {e}", &rec[0])))?;
        if p == 0 {
            return Err(Error::Parse("process labels are 1-based".into()));
        }
        pairs.push((p, parse_f64(&rec[1], "event time")?));
    }
    let max_p = pairs.iter().map(|&(p, _)| p).max().unwrap_or(0);
    let n = n.or(file_n).unwrap_or(max_p);
    if max_p > n {
        return Err(Error::Parse(format!("process {max_p} exceeds dimension {n}")));
    }
    let horizon = match horizon.or(file_horizon) {
        Some(h) => h,
        None => pairs.iter().map(|&(_, t)| t).fold(0.0, f64::max),
    };
    let mut events = vec![Vec::new(); n];
    for (p, t) in pairs {
        events[p - 1].push(t);
    }
    for e in &mut events {
        e.sort_by(f64::total_cmp);
    }
    EventLog::new(horizon, events)
}

pub fn read_series_file(path: &Path) -> Result<SeriesData> {
    read_series_csv(std::fs::File::open(path)?)
}

pub fn write_series_file(x: &SeriesData, path: &Path) -> Result<()> {
    write_series_csv(x, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn read_events_file(path: &Path, horizon: Option<f64>, n: Option<usize>) -> Result<EventLog> {
    read_events_csv(std::fs::File::open(path)?, horizon, n)
}

pub fn write_events_file(log: &EventLog, path: &Path) -> Result<()> {
    write_events_csv(log, std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// True when the first non-comment line is the event header.
pub fn looks_like_events(path: &Path) -> Result<bool> {
    let f = BufReader::new(std::fs::File::open(path)?);
    for line in f.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        return Ok(line.replace(' ', "") == "process,time");
    }
    Ok(false)
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Parse(format!("{what}: ragged or empty matrix")));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarSection {
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub phis: Vec<Vec<Vec<f64>>>,
    pub theta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DecaySpec {
    Common(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HawkesSection {
    pub mu: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: DecaySpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    pub bounds: Option<SamplerBounds>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub var: Option<VarSection>,
    pub hawkes: Option<HawkesSection>,
    pub graph: Option<GraphSection>,
    pub sample: Option<SampleSection>,
}

impl ModelConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(format!("model config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn sampled(&self) -> Result<Option<SampledModel>> {
        let Some(s) = &self.sample else { return Ok(None) };
        let id: ExperimentId = s.experiment.parse()?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        sample_experiment_params(id, s.bounds, &mut rng).map(Some)
    }

    /// The `[var]` model, or a draw from the `[sample]` experiment.
    pub fn var_model(&self) -> Result<VarParams> {
        if let Some(v) = &self.var {
            let phis = v
                .phis
                .iter()
                .enumerate()
                .map(|(k, m)| matrix(m, &format!("phis[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            let m = VarParams::new(phis, matrix(&v.theta, "theta")?)?;
            if v.n.is_some_and(|n| n != m.n()) || v.p.is_some_and(|p| p != m.order()) {
                return Err(Error::Domain(format!(
                    "declared n/p do not match matrices (n = {}, p = {})",
                    m.n(),
                    m.order()
                )));
            }
            return Ok(m);
        }
        match self.sampled()? {
            Some(SampledModel::Var(m)) => Ok(m),
            Some(SampledModel::Hawkes(_)) => Err(Error::Argument("sampled experiment is not a VAR model".into())),
            None => Err(Error::Argument("config has neither [var] nor [sample]".into())),
        }
    }

    /// The `[hawkes]` model, or a draw from the `[sample]` experiment.
    pub fn hawkes_model(&self) -> Result<HawkesParams> {
        if let Some(h) = &self.hawkes {
            let alpha = matrix(&h.alpha, "alpha")?;
            let beta = match &h.beta {
                DecaySpec::Common(b) => {
                    DMatrix::from_fn(alpha.nrows(), alpha.ncols(), |r, c| if alpha[(r, c)] > 0.0 { *b } else { 0.0 })
                }
                DecaySpec::Matrix(m) => matrix(m, "beta")?,
            };
            return HawkesParams::new(DVector::from_vec(h.mu.clone()), alpha, beta);
        }
        match self.sampled()? {
            Some(SampledModel::Hawkes(m)) => Ok(m),
            Some(SampledModel::Var(_)) => Err(Error::Argument("sampled experiment is not a Hawkes model".into())),
            None => Err(Error::Argument("config has neither [hawkes] nor [sample]".into())),
        }
    }

    /// The explicit `[graph]`, otherwise the graph read off the model.
    pub fn graph(&self) -> Result<CausalGraph> {
        if let Some(g) = &self.graph {
            return CausalGraph::from_edges(g.n, g.edges.iter().map(|e| (e[0], e[1])));
        }
        if self.var.is_some() {
            return Ok(crate::var::build_graph(&self.var_model()?));
        }
        if self.hawkes.is_some() {
            return Ok(self.hawkes_model()?.graph());
        }
        match self.sampled()? {
            Some(SampledModel::Var(m)) => Ok(crate::var::build_graph(&m)),
            Some(SampledModel::Hawkes(m)) => Ok(m.graph()),
            None => Err(Error::Argument("config has no graph or model".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_round_trip_is_exact() {
        let v = DMatrix::from_row_slice(3, 2, &[0.1, -2.5e-17, 1.0 / 3.0, 7.0, f64::MIN_POSITIVE, -0.0]);
        let x = SeriesData::new(v.clone()).unwrap();
        let mut buf = Vec::new();
        write_series_csv(&x, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,x1,x2\n0,"));
        let y = read_series_csv(&buf[..]).unwrap();
        assert_eq!(y.values(), &v);
    }

    #[test]
    fn events_round_trip_keeps_horizon_and_empty_processes() {
        let log = EventLog::new(5.0, vec![vec![0.5, 3.25], vec![], vec![1.0 / 7.0]]).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "process,time");
        assert!(lines[2].starts_with("3,"));
        let back = read_events_csv(&buf[..], None, None).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn events_without_comment_use_last_time() {
        let back = read_events_csv("process,time\n2,1.5\n1,2.5\n".as_bytes(), None, None).unwrap();
        assert_eq!(back.n(), 2);
        assert_eq!(back.horizon(), 2.5);
        assert_eq!(back.process(2), &[1.5]);
    }

    #[test]
    fn config_parses_var_and_graph() {
        let cfg = ModelConfig::from_toml_str(
            r#"
            [var]
            n = 2
            p = 1
            phis = [[[0.5, 0.0], [0.3, 0.2]]]
            theta = [[1.0, 0.0], [0.0, 1.0]]

            [graph]
            n = 2
            edges = [[1, 2]]
            "#,
        )
        .unwrap();
        let m = cfg.var_model().unwrap();
        assert_eq!(m.phis()[0][(1, 0)], 0.3);
        assert!(cfg.graph().unwrap().has_edge(1, 2));
        assert!(cfg.hawkes_model().is_err());
    }

    #[test]
    fn config_rejects_mismatched_order() {
        let cfg = ModelConfig::from_toml_str(
            "[var]\np = 2\nphis = [[[0.5]]]\ntheta = [[1.0]]\n",
        )
        .unwrap();
        assert!(matches!(cfg.var_model(), Err(Error::Domain(_))));
    }

    #[test]
    fn config_hawkes_common_decay() {
        let cfg = ModelConfig::from_toml_str(
            "[hawkes]\nmu = [1.0, 0.5]\nalpha = [[0.2, 0.0], [0.4, 0.1]]\nbeta = 2.0\n",
        )
        .unwrap();
        let m = cfg.hawkes_model().unwrap();
        assert_eq!(m.phi_int()[(1, 0)], 0.2);
        assert_eq!(m.beta()[(0, 1)], 0.0);
    }

    #[test]
    fn config_sample_section_is_reproducible() {
        let cfg = ModelConfig::from_toml_str("[sample]\nexperiment = \"e1\"\nseed = 9\n").unwrap();
        let a = cfg.var_model().unwrap();
        let b = cfg.var_model().unwrap();
        assert_eq!(a.phis(), b.phis());
        assert_eq!(a.phis()[0][(0, 2)], 0.0);
    }
}
