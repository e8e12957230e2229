//! Kernel-weighted long-run covariance: `Ĉ = Σ_{|k| ≤ L} w(k/b) Γ̂(k)`.
//!
//! Sample autocovariances use the `1/len` divisor, so Bartlett-weighted
//! estimates are positive-semidefinite. The automatic bandwidth is the
//! AR(1) plug-in rule of Andrews (1991), applied coordinate-wise with unit
//! weights. With prewhitening (Andrews and Monahan, 1992) a first-order VAR
//! is fitted by least squares, the kernel estimate is taken on its
//! residuals, and the result is recoloured with `(I − Â)⁻¹`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::var::{IntCov, Provenance, SeriesData};

/// Quadratic-spectral weights have unbounded support; lags beyond
/// `QS_LAG_CUTOFF · b` are dropped.
pub const QS_LAG_CUTOFF: f64 = 20.0;

/// Minimum series length for the automatic bandwidth.
pub const MIN_AUTO_LEN: usize = 50;

/// When the fitted prewhitening matrix has spectral radius above this
/// value its singular values are capped here, so the recolouring inverse
/// stays bounded.
pub const PREWHITEN_CAP: f64 = 0.97;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    #[default]
    Bartlett,
    Truncated,
    QuadraticSpectral,
}

impl Kernel {
    pub fn weight(self, x: f64) -> f64 {
        let ax = x.abs();
        match self {
            Kernel::Bartlett => (1.0 - ax).max(0.0),
            Kernel::Truncated => {
                if ax <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::QuadraticSpectral => {
                let z = 6.0 * PI * x / 5.0;
                if z.abs() < 1e-3 {
                    return 1.0 - z * z / 10.0;
                }
                25.0 / (12.0 * PI * PI * x * x) * (z.sin() / z - z.cos())
            }
        }
    }

    /// Largest lag with nonzero weight under bandwidth `b`.
    fn max_lag(self, b: f64) -> usize {
        match self {
            Kernel::Bartlett => {
                let l = b.floor() as usize;
                if (l as f64) == b && l > 0 {
                    l - 1
                } else {
                    l
                }
            }
            Kernel::Truncated => b.floor() as usize,
            Kernel::QuadraticSpectral => (QS_LAG_CUTOFF * b).ceil() as usize,
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bartlett" | "newey-west" => Ok(Kernel::Bartlett),
            "truncated" => Ok(Kernel::Truncated),
            "quadratic-spectral" | "qs" => Ok(Kernel::QuadraticSpectral),
            other => Err(Error::Parse(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    #[default]
    Automatic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrcovConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub demean: bool,
    pub prewhiten: bool,
}

impl Default for LrcovConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Bartlett,
            bandwidth: Bandwidth::Automatic,
            demean: true,
            prewhiten: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrcovEstimate {
    pub cov: IntCov,
    pub bandwidth: f64,
    pub max_lag: usize,
    /// Set when the automatic rule failed and `len^{1/3}` was used instead.
    pub bandwidth_fallback: bool,
    /// False when prewhitening was requested but the lag-one moment matrix
    /// was singular.
    pub prewhitened: bool,
}

fn centred_columns(x: &SeriesData, demean: bool) -> Vec<Vec<f64>> {
    (0..x.n())
        .map(|i| {
            let col = x.column(i);
            if demean {
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                col.iter().map(|v| v - mean).collect()
            } else {
                col.to_vec()
            }
        })
        .collect()
}

fn lagged_product(cols: &[Vec<f64>], lag: usize) -> DMatrix<f64> {
    let n = cols.len();
    let len = cols[0].len();
    DMatrix::from_fn(n, n, |i, j| {
        let lead = &cols[j][lag..];
        let base = &cols[i][..len - lag];
        base.iter().zip(lead).map(|(a, b)| a * b).sum::<f64>() / len as f64
    })
}

/// `Γ̂(k)_ij = (1/len) Σ_t (x_t^i − x̄^i)(x_{t+k}^j − x̄^j)`, with
/// `Γ̂(−k) = Γ̂(k)ᵀ`.
pub fn autocovariance(x: &SeriesData, lag: isize) -> Result<DMatrix<f64>> {
    let k = lag.unsigned_abs();
    if k >= x.len() {
        return Err(Error::Argument(format!(
            "lag {lag} out of range for series of length {}",
            x.len()
        )));
    }
    let g = lagged_product(&centred_columns(x, true), k);
    Ok(if lag < 0 { g.transpose() } else { g })
}

/// AR(1) plug-in bandwidth. `None` when the fit is degenerate.
pub fn automatic_bandwidth(x: &SeriesData, kernel: Kernel) -> Option<f64> {
    plug_in_bandwidth(&centred_columns(x, true), kernel)
}

fn plug_in_bandwidth(cols: &[Vec<f64>], kernel: Kernel) -> Option<f64> {
    let len = cols[0].len();
    let mut num1 = 0.0;
    let mut num2 = 0.0;
    let mut den = 0.0;
    for col in cols {
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for w in col.windows(2) {
            sxy += w[1] * w[0];
            sxx += w[0] * w[0];
        }
        if sxx <= 0.0 {
            return None;
        }
        let rho = sxy / sxx;
        if !rho.is_finite() || rho.abs() >= 1.0 {
            return None;
        }
        let sigma2 = col
            .windows(2)
            .map(|w| (w[1] - rho * w[0]).powi(2))
            .sum::<f64>()
            / (len - 1) as f64;
        let s4 = sigma2 * sigma2;
        num1 += 4.0 * rho * rho * s4 / ((1.0 - rho).powi(6) * (1.0 + rho).powi(2));
        num2 += 4.0 * rho * rho * s4 / (1.0 - rho).powi(8);
        den += s4 / (1.0 - rho).powi(4);
    }
    if den <= 0.0 {
        return None;
    }
    let n = len as f64;
    let b = match kernel {
        Kernel::Bartlett => 1.1447 * (num1 / den * n).powf(1.0 / 3.0),
        Kernel::Truncated => 0.6611 * (num2 / den * n).powf(0.2),
        Kernel::QuadraticSpectral => 1.3221 * (num2 / den * n).powf(0.2),
    };
    b.is_finite().then_some(b)
}

pub fn long_run_cov(x: &SeriesData, cfg: &LrcovConfig) -> Result<IntCov> {
    Ok(long_run_cov_detailed(x, cfg)?.cov)
}

/// Least-squares VAR(1) fit `y_t ≈ Â y_{t−1}`, adjusted towards stability
/// when it is close to a unit root. Returns `Â` and the residual columns.
fn prewhiten(cols: &[Vec<f64>]) -> Option<(DMatrix<f64>, Vec<Vec<f64>>)> {
    let n = cols.len();
    let len = cols[0].len();
    let sxx = DMatrix::from_fn(n, n, |i, j| {
        cols[i][..len - 1].iter().zip(&cols[j][..len - 1]).map(|(a, b)| a * b).sum::<f64>()
    });
    let syx = DMatrix::from_fn(n, n, |i, j| {
        cols[i][1..].iter().zip(&cols[j][..len - 1]).map(|(a, b)| a * b).sum::<f64>()
    });
    if linalg::condition_number(&sxx) > linalg::COND_LIMIT {
        return None;
    }
    let a = sxx.cholesky()?.solve(&syx.transpose()).transpose();
    let a = if linalg::spectral_radius(&a) > PREWHITEN_CAP {
        let mut svd = a.svd(true, true);
        svd.singular_values.iter_mut().for_each(|s| *s = s.min(PREWHITEN_CAP));
        svd.recompose().ok()?
    } else {
        a
    };
    let resid = (0..n)
        .map(|i| {
            (1..len)
                .map(|t| cols[i][t] - (0..n).map(|j| a[(i, j)] * cols[j][t - 1]).sum::<f64>())
                .collect()
        })
        .collect();
    Some((a, resid))
}

pub fn long_run_cov_detailed(x: &SeriesData, cfg: &LrcovConfig) -> Result<LrcovEstimate> {
    let mut cols = centred_columns(x, cfg.demean);
    let mut recolour = None;
    if cfg.prewhiten && x.len() > 2 {
        if let Some((a, resid)) = prewhiten(&cols) {
            recolour = Some(a);
            cols = resid;
        }
    }
    let len = cols[0].len();
    let (bandwidth, bandwidth_fallback) = match cfg.bandwidth {
        Bandwidth::Fixed(b) => {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::Argument(format!("bandwidth {b} must be nonnegative")));
            }
            if b >= len as f64 {
                return Err(Error::Argument(format!(
                    "bandwidth {b} must be below the series length {len}"
                )));
            }
            (b, false)
        }
        Bandwidth::Automatic => {
            if x.len() < MIN_AUTO_LEN {
                return Err(Error::Argument(format!(
                    "automatic bandwidth needs at least {MIN_AUTO_LEN} points, got {}",
                    x.len()
                )));
            }
            match plug_in_bandwidth(&cols, cfg.kernel) {
                Some(b) => (b.min((len - 1) as f64), false),
                None => ((len as f64).powf(1.0 / 3.0), true),
            }
        }
    };
    let max_lag = if bandwidth == 0.0 {
        0
    } else {
        cfg.kernel.max_lag(bandwidth).min(len - 1)
    };
    let n = x.n();
    let mut c = lagged_product(&cols, 0);
    let mut sum_w2 = 1.0;
    for k in 1..=max_lag {
        let w = cfg.kernel.weight(k as f64 / bandwidth);
        if w == 0.0 {
            continue;
        }
        let g = lagged_product(&cols, k);
        c += (&g + g.transpose()) * w;
        sum_w2 += 2.0 * w * w;
    }
    let prewhitened = recolour.is_some();
    if let Some(a) = recolour {
        let inv = (DMatrix::identity(n, n) - a)
            .try_inverse()
            .ok_or_else(|| Error::Singular("prewhitening filter I − Â".into()))?;
        c = &inv * c * inv.transpose();
        // the fitted lag-one filter enters like one more full-weight lag
        // on each side
        sum_w2 += 2.0;
    }
    let cov = IntCov::new(
        linalg::symmetrize(&c),
        Provenance::Estimated {
            effective_samples: len as f64 / sum_w2,
        },
    )?;
    Ok(LrcovEstimate {
        cov,
        bandwidth,
        max_lag,
        bandwidth_fallback,
        prewhitened,
    })
}
