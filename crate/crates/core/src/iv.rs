//! Instrumental-process estimators on an integrated covariance matrix.
//!
//! With `I` instrumental for `A → B`, the blocks of `C` satisfy
//! `C_BI = (I − Φ_BB)⁻¹ Φ_BA C_AI`, so the normalized effect is recovered
//! through any right inverse of `C_AI`:
//!
//! * one instrument, one treatment: `C_βι / C_αι`;
//! * `|I| = |A|`: `C_BI C_AI⁻¹`;
//! * `|I| > |A|`: `C_BI W C_AIᵀ (C_AI W C_AIᵀ)⁻¹` for a positive-definite `W`.
//!
//! The formulas do not care whether `C` is a closed form or an estimate, nor
//! whether it came from a time series or a point process.

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{check_disjoint_nonempty, NodeSet};
use crate::hawkes::{estimate_hawkes_cumulants, EventLog};
use crate::linalg;
use crate::lrcov::{long_run_cov, LrcovConfig};
use crate::var::{IntCov, Provenance, SeriesData};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Minimum instrument strength `σ_min(normalized C_AI) · √(effective samples)`
/// accepted on estimated covariances.
pub const DEFAULT_WEAK_Z: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IvProblem {
    pub iv: NodeSet,
    pub a: NodeSet,
    pub b: NodeSet,
    /// `|I| × |I|` positive-definite weight; identity when absent.
    pub weight: Option<DMatrix<f64>>,
    /// Relative singular-value threshold for the rank check on `C_AI`.
    pub rank_tol: f64,
    pub weak_z: f64,
}

impl IvProblem {
    pub fn new(iv: NodeSet, a: NodeSet, b: NodeSet) -> Result<Self> {
        check_disjoint_nonempty(&iv, &a, &b)?;
        if iv.len() < a.len() {
            return Err(Error::Argument(format!(
                "{} instruments cannot identify the effect of {} treatments",
                iv.len(),
                a.len()
            )));
        }
        Ok(Self {
            iv,
            a,
            b,
            weight: None,
            rank_tol: DEFAULT_RANK_TOL,
            weak_z: DEFAULT_WEAK_Z,
        })
    }

    pub fn with_weight(mut self, w: DMatrix<f64>) -> Result<Self> {
        let k = self.iv.len();
        if w.shape() != (k, k) {
            return Err(Error::Argument(format!(
                "weight is {:?}, expected {k}x{k}",
                w.shape()
            )));
        }
        if !linalg::is_symmetric(&w, 1e-10) || w.clone().cholesky().is_none() {
            return Err(Error::Argument("weight matrix must be symmetric positive definite".into()));
        }
        self.weight = Some(w);
        Ok(self)
    }

    pub fn max_node(&self) -> usize {
        [&self.iv, &self.a, &self.b]
            .iter()
            .filter_map(|s| s.max())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ratio,
    JustIdentified,
    Overidentified,
}

/// Strength of `C_AI`, reported with every estimate and every rank failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub condition_number: f64,
    /// Smallest singular value of `C_AI` scaled by `diag(C)^{-1/2}` on both sides.
    pub normalized_sigma_min: Option<f64>,
    /// `normalized_sigma_min · √(effective samples)` for estimated covariances.
    pub strength_z: Option<f64>,
    pub rank_ok: bool,
    pub weight_condition: Option<f64>,
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "smallest singular value {:.3e}, condition number {:.3e}",
            self.sigma_min, self.condition_number
        )?;
        if let Some(s) = self.normalized_sigma_min {
            write!(f, ", normalized {s:.3e}")?;
        }
        if let Some(z) = self.strength_z {
            write!(f, ", strength z {z:.2}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationResult {
    /// `|B| × |A|` estimate of `(I − Φ_BB)⁻¹ Φ_BA`.
    #[serde(serialize_with = "serialize_rows")]
    pub estimate: DMatrix<f64>,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

fn serialize_rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

/// Computes the diagnostics and fails on rank deficiency or a weak
/// instrument.
fn diagnose(c: &IntCov, prob: &IvProblem) -> Result<Diagnostics> {
    let c_ai = c.block(&prob.a, &prob.iv)?;
    let sv = c_ai.singular_values();
    let sigma_min = sv.min();
    let sigma_max = sv.max();
    let condition_number = if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY };

    let scale = |set: &NodeSet| -> Result<Option<Vec<f64>>> {
        let d = set.iter().map(|v| c.get(v, v)).collect::<Result<Vec<_>>>()?;
        Ok(d.iter().all(|&x| x > 0.0).then(|| d.iter().map(|x| 1.0 / x.sqrt()).collect()))
    };
    let normalized_sigma_min = match (scale(&prob.a)?, scale(&prob.iv)?) {
        (Some(sa), Some(si)) => {
            let m = DMatrix::from_fn(c_ai.nrows(), c_ai.ncols(), |r, k| sa[r] * c_ai[(r, k)] * si[k]);
            Some(m.singular_values().min())
        }
        _ => None,
    };
    let strength_z = match (c.provenance(), normalized_sigma_min) {
        (Provenance::Estimated { effective_samples }, Some(s)) => Some(s * effective_samples.sqrt()),
        _ => None,
    };
    let rank_ok = sigma_max > 0.0
        && sigma_min > prob.rank_tol * sigma_max
        && normalized_sigma_min.is_none_or(|s| s > prob.rank_tol);
    let weight_condition = prob.weight.as_ref().map(linalg::condition_number);
    let diag = Diagnostics {
        sigma_min,
        sigma_max,
        condition_number,
        normalized_sigma_min,
        strength_z,
        rank_ok,
        weight_condition,
    };
    if !rank_ok {
        return Err(if prob.a.len() == 1 && prob.iv.len() == 1 {
            Error::WeakInstrument(diag)
        } else {
            Error::RankDeficient(diag)
        });
    }
    if strength_z.is_some_and(|z| z <= prob.weak_z) {
        return Err(Error::WeakInstrument(diag));
    }
    Ok(diag)
}

/// `C_βι / C_αι` for single processes.
pub fn iv_ratio(c: &IntCov, iota: usize, alpha: usize, beta: usize) -> Result<f64> {
    let prob = IvProblem::new([iota].into(), [alpha].into(), [beta].into())?;
    diagnose(c, &prob)?;
    Ok(c.get(beta, iota)? / c.get(alpha, iota)?)
}

/// `C_BI C_AI⁻¹` for `|I| = |A|`.
pub fn iv_just_identified(c: &IntCov, prob: &IvProblem) -> Result<EstimationResult> {
    if prob.iv.len() != prob.a.len() {
        return Err(Error::Argument(format!(
            "just-identified estimator needs |I| = |A|, got {} and {}",
            prob.iv.len(),
            prob.a.len()
        )));
    }
    let diagnostics = diagnose(c, prob)?;
    let c_ai = c.block(&prob.a, &prob.iv)?;
    let c_bi = c.block(&prob.b, &prob.iv)?;
    if c_ai.nrows() == 1 {
        return Ok(EstimationResult {
            estimate: c_bi / c_ai[(0, 0)],
            method: Method::Ratio,
            diagnostics,
        });
    }
    // X C_AI = C_BI  ⇔  C_AIᵀ Xᵀ = C_BIᵀ
    let xt = c_ai
        .transpose()
        .lu()
        .solve(&c_bi.transpose())
        .ok_or_else(|| Error::RankDeficient(diagnostics.clone()))?;
    Ok(EstimationResult {
        estimate: xt.transpose(),
        method: Method::JustIdentified,
        diagnostics,
    })
}

/// `C_BI W C_AIᵀ (C_AI W C_AIᵀ)⁻¹`, identity `W` by default.
pub fn iv_overidentified(c: &IntCov, prob: &IvProblem) -> Result<EstimationResult> {
    let diagnostics = diagnose(c, prob)?;
    let c_ai = c.block(&prob.a, &prob.iv)?;
    let c_bi = c.block(&prob.b, &prob.iv)?;
    let k = prob.iv.len();
    let w = prob.weight.clone().unwrap_or_else(|| DMatrix::identity(k, k));
    let wct = &w * c_ai.transpose();
    let gram = &c_ai * &wct;
    let inv = linalg::guarded_inverse(&gram, "C_AI W C_AI^T")
        .map_err(|_| Error::RankDeficient(diagnostics.clone()))?;
    Ok(EstimationResult {
        estimate: c_bi * wct * inv,
        method: Method::Overidentified,
        diagnostics,
    })
}

/// Just-identified when `|I| = |A|`, overidentified otherwise.
pub fn iv_estimate(c: &IntCov, prob: &IvProblem) -> Result<EstimationResult> {
    if prob.iv.len() == prob.a.len() {
        iv_just_identified(c, prob)
    } else {
        iv_overidentified(c, prob)
    }
}

pub fn iv_estimate_series(x: &SeriesData, prob: &IvProblem, cfg: &LrcovConfig) -> Result<EstimationResult> {
    if prob.max_node() > x.n() {
        return Err(Error::Domain(format!(
            "node {} requested but the series has {} coordinates",
            prob.max_node(),
            x.n()
        )));
    }
    let c = long_run_cov(x, cfg)?;
    iv_estimate(&c, prob)
}

pub fn iv_estimate_events(log: &EventLog, prob: &IvProblem, half_width: f64) -> Result<EstimationResult> {
    if prob.max_node() > log.n() {
        return Err(Error::Domain(format!(
            "node {} requested but the log has {} processes",
            prob.max_node(),
            log.n()
        )));
    }
    let est = estimate_hawkes_cumulants(log, half_width)?;
    iv_estimate(&est.to_intcov()?, prob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::var::{normalized_effect, var_integrated_cov, VarParams};

    /// Single-instrument model with (I, A, B, U) = (1, 2, 3, 4).
    fn single_instrument(phi32: f64, phi33: f64) -> VarParams {
        let phi = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.3, 0.0, 0.0, 0.0, //
                0.6, -0.2, 0.0, 0.5, //
                0.0, phi32, phi33, -0.4, //
                0.0, 0.0, 0.0, 0.4,
            ],
        );
        VarParams::var1(phi, DMatrix::identity(4, 4)).unwrap()
    }

    #[test]
    fn ratio_recovers_normalized_parameter() {
        let c = var_integrated_cov(&single_instrument(0.4, 0.2)).unwrap();
        let est = iv_ratio(&c, 1, 2, 3).unwrap();
        assert!((est - 0.4 / 0.8).abs() < 1e-12);
        let c = var_integrated_cov(&single_instrument(0.0, 0.2)).unwrap();
        assert!(iv_ratio(&c, 1, 2, 3).unwrap().abs() < 1e-15);
    }

    #[test]
    fn zero_instrument_covariance_is_weak() {
        // 1 does not reach 2.
        let mut phi = single_instrument(0.4, 0.2).phis()[0].clone();
        phi[(1, 0)] = 0.0;
        let c = var_integrated_cov(&VarParams::var1(phi, DMatrix::identity(4, 4)).unwrap()).unwrap();
        assert!(matches!(iv_ratio(&c, 1, 2, 3), Err(Error::WeakInstrument(_))));
    }

    #[test]
    fn just_identified_scalar_reduces_to_ratio() {
        let c = var_integrated_cov(&single_instrument(0.7, -0.3)).unwrap();
        let prob = IvProblem::new([1].into(), [2].into(), [3].into()).unwrap();
        let r = iv_just_identified(&c, &prob).unwrap();
        assert_eq!(r.method, Method::Ratio);
        assert_eq!(r.estimate[(0, 0)], iv_ratio(&c, 1, 2, 3).unwrap());
        let truth = normalized_effect(&single_instrument(0.7, -0.3), &[2].into(), &[3].into()).unwrap();
        assert!((r.estimate - truth).amax() < 1e-12);
    }

    #[test]
    fn problem_validation() {
        assert!(IvProblem::new([1].into(), [2, 3].into(), [4].into()).is_err());
        assert!(IvProblem::new([1].into(), [1].into(), [4].into()).is_err());
        let p = IvProblem::new([1, 2].into(), [3].into(), [4].into()).unwrap();
        assert!(p.clone().with_weight(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(p.clone().with_weight(DMatrix::identity(3, 3)).is_err());
        assert!(p.with_weight(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).is_ok());
    }

    #[test]
    fn missing_node_is_domain_error() {
        let c = var_integrated_cov(&single_instrument(0.4, 0.2)).unwrap();
        assert!(matches!(iv_ratio(&c, 1, 2, 7), Err(Error::Domain(_))));
    }

    #[test]
    fn square_overidentified_equals_just_identified() {
        let phi = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.2, 0.3, 0.0, 0.0, //
                0.1, -0.3, 0.0, 0.0, //
                0.5, -0.6, 0.1, 0.0, //
                0.2, 0.4, 0.0, 0.2,
            ],
        );
        let mut phi5 = DMatrix::zeros(5, 5);
        phi5.view_mut((0, 0), (4, 4)).copy_from(&phi);
        phi5[(4, 2)] = 0.7;
        phi5[(4, 3)] = -0.5;
        phi5[(4, 4)] = 0.3;
        let m = VarParams::var1(phi5, DMatrix::identity(5, 5)).unwrap();
        let c = var_integrated_cov(&m).unwrap();
        let prob = IvProblem::new([1, 2].into(), [3, 4].into(), [5].into()).unwrap();
        let just = iv_just_identified(&c, &prob).unwrap();
        let over = iv_overidentified(&c, &prob).unwrap();
        assert_eq!(just.method, Method::JustIdentified);
        assert!((just.estimate.clone() - over.estimate).amax() < 1e-12);
        let truth = normalized_effect(&m, &[3, 4].into(), &[5].into()).unwrap();
        assert!((just.estimate - truth).amax() < 1e-10);
    }
}
