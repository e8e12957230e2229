use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::patterns::{self, Pattern};
use super::ExperimentId;
use crate::error::{Error, Result};
use crate::hawkes::HawkesParams;
use crate::var::{check_stability, VarParams};

pub const MAX_REJECTIONS: usize = 100_000;

/// Uniform sampling intervals. Off-diagonal entries have magnitude in
/// `[offdiag_lo, offdiag_hi]` with a random sign; diagonal entries lie in
/// `[-diag_max, diag_max]` outside `(-diag_exclude, diag_exclude)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerBounds {
    pub offdiag_lo: f64,
    pub offdiag_hi: f64,
    pub diag_max: f64,
    pub diag_exclude: f64,
}

impl SamplerBounds {
    pub fn for_experiment(id: ExperimentId) -> Self {
        let base = SamplerBounds {
            offdiag_lo: 0.2,
            offdiag_hi: 1.0,
            diag_max: 0.5,
            diag_exclude: 1e-3,
        };
        match id {
            ExperimentId::E7 => SamplerBounds {
                diag_max: 0.85,
                ..base
            },
            // positive kernel integrals, same interval on and off the diagonal
            ExperimentId::H1 => SamplerBounds {
                offdiag_lo: 0.2,
                offdiag_hi: 0.5,
                diag_max: 0.5,
                diag_exclude: 0.2,
            },
            _ => base,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.offdiag_lo.is_finite()
            && self.offdiag_hi.is_finite()
            && self.diag_max.is_finite()
            && self.diag_exclude.is_finite()
            && 0.0 <= self.offdiag_lo
            && self.offdiag_lo <= self.offdiag_hi
            && 0.0 <= self.diag_exclude
            && self.diag_exclude < self.diag_max;
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("invalid sampler bounds {self:?}")))
        }
    }

    fn offdiag<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mag = self.offdiag_lo + (self.offdiag_hi - self.offdiag_lo) * rng.random::<f64>();
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    }

    fn diag<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let v = self.diag_max * (2.0 * rng.random::<f64>() - 1.0);
            if v.abs() >= self.diag_exclude {
                return v;
            }
        }
    }

    fn positive<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.offdiag_lo + (self.offdiag_hi - self.offdiag_lo) * rng.random::<f64>()
    }
}

#[derive(Debug, Clone)]
pub enum SampledModel {
    Var(VarParams),
    Hawkes(HawkesParams),
}

fn fill<R: Rng + ?Sized>(
    n: usize,
    free: &[(usize, usize)],
    bounds: &SamplerBounds,
    rng: &mut R,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for &(r, c) in free {
        m[(r, c)] = if r == c { bounds.diag(rng) } else { bounds.offdiag(rng) };
    }
    m
}

/// Stable VAR draw with the given lag patterns and unit innovation
/// covariance, outside any named experiment.
pub fn sample_var_on_patterns<R: Rng + ?Sized>(
    lags: &[Pattern],
    bounds: &SamplerBounds,
    rng: &mut R,
) -> Result<VarParams> {
    bounds.validate()?;
    if lags.is_empty() || lags.iter().any(|p| p.n != lags[0].n) {
        return Err(Error::Argument("lag patterns must be non-empty and share a dimension".into()));
    }
    sample_var("custom pattern", lags, bounds, |_| true, rng)
}

fn sample_var<R: Rng + ?Sized>(
    name: impl ToString,
    lags: &[Pattern],
    bounds: &SamplerBounds,
    accept: impl Fn(&[DMatrix<f64>]) -> bool,
    rng: &mut R,
) -> Result<VarParams> {
    let n = lags[0].n;
    let free: Vec<Vec<(usize, usize)>> = lags.iter().map(Pattern::free_entries).collect();
    for _ in 0..MAX_REJECTIONS {
        let phis: Vec<DMatrix<f64>> = free.iter().map(|f| fill(n, f, bounds, rng)).collect();
        if !accept(&phis) {
            continue;
        }
        let m = VarParams::new(phis, DMatrix::identity(n, n))?;
        if check_stability(&m).stable {
            return Ok(m);
        }
    }
    Err(Error::SamplerFailure {
        experiment: name.to_string(),
        attempts: MAX_REJECTIONS,
    })
}

/// Draws model parameters for an experiment. E6 has a fixed nonlinear
/// generator and no parameters to draw.
pub fn sample_experiment_params<R: Rng + ?Sized>(
    id: ExperimentId,
    bounds: Option<SamplerBounds>,
    rng: &mut R,
) -> Result<SampledModel> {
    let bounds = bounds.unwrap_or_else(|| SamplerBounds::for_experiment(id));
    bounds.validate()?;
    let any = |_: &[DMatrix<f64>]| true;
    let model = match id {
        ExperimentId::E1 | ExperimentId::E7 => {
            SampledModel::Var(sample_var(id, &[patterns::single_instrument()], &bounds, any, rng)?)
        }
        ExperimentId::E2 => SampledModel::Var(sample_var(
            id,
            &[patterns::single_instrument_feedback()],
            &bounds,
            any,
            rng,
        )?),
        ExperimentId::E3 => {
            SampledModel::Var(sample_var(id, &[patterns::two_instruments()], &bounds, any, rng)?)
        }
        ExperimentId::E4 => {
            SampledModel::Var(sample_var(id, &[patterns::overidentified()], &bounds, any, rng)?)
        }
        ExperimentId::E5 => {
            let p = patterns::single_instrument();
            let accept = |phis: &[DMatrix<f64>]| {
                let (a, b) = (phis[0][(1, 0)], phis[1][(1, 0)]);
                a + b >= 0.2 && a.signum() == b.signum()
            };
            SampledModel::Var(sample_var(id, &[p.clone(), p], &bounds, accept, rng)?)
        }
        ExperimentId::E6 => {
            return Err(Error::Argument(
                "E6 uses a fixed nonlinear generator and has no sampled parameters".into(),
            ))
        }
        ExperimentId::H1 => {
            let p = patterns::single_instrument();
            for _ in 0..MAX_REJECTIONS {
                let mut alpha = DMatrix::zeros(p.n, p.n);
                for (r, c) in p.free_entries() {
                    alpha[(r, c)] = bounds.positive(rng);
                }
                let m = HawkesParams::with_common_decay(DVector::from_element(p.n, 1.0), alpha, 1.0)?;
                if m.spectral_radius() < 1.0 - crate::var::STABILITY_MARGIN {
                    return Ok(SampledModel::Hawkes(m));
                }
            }
            return Err(Error::SamplerFailure {
                experiment: id.to_string(),
                attempts: MAX_REJECTIONS,
            });
        }
    };
    Ok(model)
}
