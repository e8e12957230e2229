//! VAR(p) models: stability, simulation, the closed-form integrated
//! covariance and parameter normalization.
//!
//! The model is `X_t = Σ_{k=1..p} Φ_k X_{t−k} + ε_t` with `Cov(ε_t) = Θ`.
//! Its integrated covariance `C = Σ_k Cov(X_t, X_{t+k})` is
//! `(I − Φ)⁻¹ Θ (I − Φ)⁻ᵀ` with `Φ = Σ_k Φ_k`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, NodeSet};
use crate::linalg;

/// Entries with magnitude at or below this count as structural zeros.
pub const EDGE_EPS: f64 = 1e-12;

/// Stable iff the companion spectral radius is below `1 − STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

pub const DEFAULT_BURN_IN: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct VarParams {
    phis: Vec<DMatrix<f64>>,
    theta: DMatrix<f64>,
}

impl VarParams {
    /// Validates shapes and that `theta` is symmetric positive-semidefinite.
    /// Stability is not enforced here; see [`check_stability`].
    pub fn new(phis: Vec<DMatrix<f64>>, theta: DMatrix<f64>) -> Result<Self> {
        if phis.is_empty() {
            return Err(Error::Argument("VAR order must be at least 1".into()));
        }
        let n = theta.nrows();
        if !theta.is_square() || n == 0 {
            return Err(Error::Argument(format!(
                "theta is {}x{}, expected non-empty square",
                theta.nrows(),
                theta.ncols()
            )));
        }
        for (k, phi) in phis.iter().enumerate() {
            if phi.nrows() != n || phi.ncols() != n {
                return Err(Error::Argument(format!(
                    "phi_{} is {}x{}, expected {n}x{n}",
                    k + 1,
                    phi.nrows(),
                    phi.ncols()
                )));
            }
        }
        if phis.iter().flatten().chain(theta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite model parameter".into()));
        }
        linalg::psd_factor(&theta, "theta")?;
        Ok(Self { phis, theta })
    }

    pub fn var1(phi: DMatrix<f64>, theta: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![phi], theta)
    }

    pub fn n(&self) -> usize {
        self.theta.nrows()
    }

    pub fn order(&self) -> usize {
        self.phis.len()
    }

    pub fn phis(&self) -> &[DMatrix<f64>] {
        &self.phis
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    /// `Φ = Σ_k Φ_k`.
    pub fn phi_sum(&self) -> DMatrix<f64> {
        self.phis
            .iter()
            .fold(DMatrix::zeros(self.n(), self.n()), |acc, p| acc + p)
    }

    pub fn companion_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let p = self.order();
        let mut m = DMatrix::zeros(n * p, n * p);
        for (k, phi) in self.phis.iter().enumerate() {
            m.view_mut((0, k * n), (n, n)).copy_from(phi);
        }
        for k in 1..p {
            m.view_mut((k * n, (k - 1) * n), (n, n))
                .fill_with_identity();
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub spectral_radius: f64,
    pub stable: bool,
}

pub fn check_stability(m: &VarParams) -> StabilityReport {
    let spectral_radius = linalg::spectral_radius(&m.companion_matrix());
    StabilityReport {
        spectral_radius,
        stable: spectral_radius < 1.0 - STABILITY_MARGIN,
    }
}

/// Observed series; row `t` of `values` is `X_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    values: DMatrix<f64>,
}

impl SeriesData {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Argument("series must have at least one point and one coordinate".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("series contains non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Coordinate `i` (0-based) as a contiguous slice.
    pub fn column(&self, i: usize) -> &[f64] {
        let len = self.len();
        &self.values.as_slice()[i * len..(i + 1) * len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Theoretical,
    /// `effective_samples` scales the sampling noise of normalized entries:
    /// for independent coordinates, `C_ij / √(C_ii C_jj)` has variance of
    /// roughly `1 / effective_samples`.
    Estimated { effective_samples: f64 },
}

/// An integrated covariance matrix with node labels (1-based) per row/column.
#[derive(Debug, Clone, PartialEq)]
pub struct IntCov {
    c: DMatrix<f64>,
    provenance: Provenance,
    labels: Vec<usize>,
}

impl IntCov {
    pub fn new(c: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        let labels = (1..=c.nrows()).collect();
        Self::with_labels(c, provenance, labels)
    }

    pub fn with_labels(c: DMatrix<f64>, provenance: Provenance, labels: Vec<usize>) -> Result<Self> {
        if !c.is_square() || labels.len() != c.nrows() {
            return Err(Error::Argument("integrated covariance must be square with one label per row".into()));
        }
        if !linalg::is_symmetric(&c, 1e-8) {
            return Err(Error::Argument("integrated covariance is not symmetric".into()));
        }
        Ok(Self {
            c,
            provenance,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.c.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn position(&self, node: usize) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == node)
            .ok_or_else(|| Error::Domain(format!("node {node} not present in the covariance")))
    }

    pub fn get(&self, row: usize, col: usize) -> Result<f64> {
        Ok(self.c[(self.position(row)?, self.position(col)?)])
    }

    /// The block `C_{rows, cols}` for node sets given by label.
    pub fn block(&self, rows: &NodeSet, cols: &NodeSet) -> Result<DMatrix<f64>> {
        let r = rows.iter().map(|v| self.position(v)).collect::<Result<Vec<_>>>()?;
        let c = cols.iter().map(|v| self.position(v)).collect::<Result<Vec<_>>>()?;
        Ok(linalg::select(&self.c, &r, &c))
    }
}

/// `(I − Φ)⁻¹ Θ (I − Φ)⁻ᵀ`, symmetrized.
pub fn integrated_cov(phi: &DMatrix<f64>, theta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = phi.nrows();
    let r = linalg::guarded_inverse(&(DMatrix::identity(n, n) - phi), "I - Phi")?;
    Ok(linalg::symmetrize(&(&r * theta * r.transpose())))
}

pub fn var_integrated_cov(m: &VarParams) -> Result<IntCov> {
    let c = integrated_cov(&m.phi_sum(), m.theta())?;
    IntCov::new(c, Provenance::Theoretical)
}

/// The order-1 model on the stacked state `(X_t, …, X_{t−p+1})`.
pub fn companion_embed(m: &VarParams) -> VarParams {
    let n = m.n();
    let np = n * m.order();
    let mut theta = DMatrix::zeros(np, np);
    theta.view_mut((0, 0), (n, n)).copy_from(m.theta());
    VarParams {
        phis: vec![m.companion_matrix()],
        theta,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Innovation {
    #[default]
    Gaussian,
}

/// Simulates `len` points after discarding `burn_in`, from a zero state.
pub fn simulate_var(m: &VarParams, len: usize, burn_in: usize, seed: u64) -> Result<SeriesData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_var_with(m, len, burn_in, Innovation::Gaussian, &mut rng)
}

pub fn simulate_var_with<R: Rng + ?Sized>(
    m: &VarParams,
    len: usize,
    burn_in: usize,
    innovation: Innovation,
    rng: &mut R,
) -> Result<SeriesData> {
    if len == 0 {
        return Err(Error::Argument("series length must be at least 1".into()));
    }
    let stability = check_stability(m);
    if !stability.stable {
        return Err(Error::Unstable {
            spectral_radius: stability.spectral_radius,
        });
    }
    let n = m.n();
    let p = m.order();
    let factor = linalg::psd_factor(m.theta(), "theta")?;
    let phis: Vec<Vec<f64>> = m
        .phis()
        .iter()
        .map(|phi| phi.transpose().as_slice().to_vec())
        .collect();
    let fac: Vec<f64> = factor.transpose().as_slice().to_vec();

    // history[k] holds X_{t-1-k}
    let mut history = vec![vec![0.0; n]; p];
    let mut z = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut out = DMatrix::zeros(len, n);
    for t in 0..burn_in + len {
        match innovation {
            Innovation::Gaussian => z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (phi, past) in phis.iter().zip(&history) {
                let row = &phi[i * n..(i + 1) * n];
                acc += row.iter().zip(past).map(|(a, b)| a * b).sum::<f64>();
            }
            let frow = &fac[i * n..(i + 1) * n];
            acc += frow.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
            x[i] = acc;
        }
        history.rotate_right(1);
        history[0].copy_from_slice(&x);
        if t >= burn_in {
            for i in 0..n {
                out[(t - burn_in, i)] = x[i];
            }
        }
    }
    SeriesData::new(out)
}

/// Rescales to a zero-diagonal pair solving the same integrated covariance
/// equation: `Φ̄ = I − D(I − Φ)`, `Θ̄ = DΘD` with `D_ii = 1/(1 − Φ_ii)`.
pub fn normalize(phi: &DMatrix<f64>, theta: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_square_pair(phi, theta)?;
    let n = phi.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let gap = 1.0 - phi[(i, i)];
        if gap.abs() <= 1e-10 {
            return Err(Error::Singular(format!(
                "phi[{0},{0}] = 1, cannot normalize",
                i + 1
            )));
        }
        d[(i, i)] = 1.0 / gap;
    }
    let (mut phi_bar, theta_bar) = apply_scaling(phi, theta, &d);
    for i in 0..n {
        phi_bar[(i, i)] = 0.0;
    }
    Ok((phi_bar, theta_bar))
}

/// `Φ̄ = I − D(I − Φ)`, `Θ̄ = DΘD` for an arbitrary nonsingular diagonal `D`.
pub fn rescale(
    phi: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_square_pair(phi, theta)?;
    if d.nrows() != phi.nrows() || !linalg::is_diagonal(d) {
        return Err(Error::Argument("scaling matrix must be diagonal and match phi".into()));
    }
    if d.diagonal().iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::Argument("scaling matrix has a zero or non-finite diagonal entry".into()));
    }
    Ok(apply_scaling(phi, theta, d))
}

fn apply_scaling(
    phi: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = phi.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let phi_bar = &eye - d * (&eye - phi);
    let theta_bar = d * theta * d;
    (phi_bar, theta_bar)
}

fn check_square_pair(phi: &DMatrix<f64>, theta: &DMatrix<f64>) -> Result<()> {
    if !phi.is_square() || phi.shape() != theta.shape() {
        return Err(Error::Argument(format!(
            "phi {:?} and theta {:?} must be square of equal size",
            phi.shape(),
            theta.shape()
        )));
    }
    Ok(())
}

/// `(I − Φ_BB)⁻¹ Φ_BA` for a total-effect matrix `phi` (rows: targets).
pub fn normalized_effect_from_phi(phi: &DMatrix<f64>, a: &NodeSet, b: &NodeSet) -> Result<DMatrix<f64>> {
    let n = phi.nrows();
    for s in [a, b] {
        if s.is_empty() {
            return Err(Error::Argument("node set is empty".into()));
        }
        if let Some(v) = s.iter().find(|&v| v == 0 || v > n) {
            return Err(Error::Domain(format!("node {v} outside 1..={n}")));
        }
    }
    let bp = b.positions();
    let ap = a.positions();
    let phi_bb = linalg::select(phi, &bp, &bp);
    let phi_ba = linalg::select(phi, &bp, &ap);
    let eye = DMatrix::<f64>::identity(bp.len(), bp.len());
    let inv = linalg::guarded_inverse(&(eye - phi_bb), "I - Phi_BB")?;
    Ok(inv * phi_ba)
}

/// The estimand `(I − Φ_BB)⁻¹ Φ_BA` with `Φ = Σ_k Φ_k`, shape `|B| × |A|`.
pub fn normalized_effect(m: &VarParams, a: &NodeSet, b: &NodeSet) -> Result<DMatrix<f64>> {
    normalized_effect_from_phi(&m.phi_sum(), a, b)
}

/// Edge `i → j` iff some `|(Φ_k)_ji| > EDGE_EPS`, `i ≠ j`.
pub fn build_graph(m: &VarParams) -> CausalGraph {
    graph_from_matrices(m.n(), m.phis())
}

pub(crate) fn graph_from_matrices(n: usize, mats: &[DMatrix<f64>]) -> CausalGraph {
    let mut g = CausalGraph::empty(n);
    for mat in mats {
        for j in 0..n {
            for i in 0..n {
                if i != j && mat[(j, i)].abs() > EDGE_EPS {
                    g.add_edge(i + 1, j + 1).expect("indices in range");
                }
            }
        }
    }
    g
}
