//! Multivariate linear Hawkes processes with exponential kernels
//! `φ_ji(t) = α_ji e^{−β_ji t}`.
//!
//! Only the kernel integrals `Φ_ji = α_ji / β_ji` enter identification. The
//! stationary rates are `Λ = (I − Φ)⁻¹ μ` and the integrated covariance is
//! `(I − Φ)⁻¹ diag(Λ) (I − Φ)⁻ᵀ`, the same equation as for a VAR model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::linalg;
use crate::var::{self, IntCov, Provenance};

/// Default cap on the number of simulated events, burn-in included.
pub const DEFAULT_MAX_EVENTS: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct HawkesParams {
    mu: DVector<f64>,
    alpha: DMatrix<f64>,
    beta: DMatrix<f64>,
    phi_int: DMatrix<f64>,
}

impl HawkesParams {
    /// `alpha[(j, i)]` and `beta[(j, i)]` parametrize the effect of an
    /// `i`-event on the intensity of process `j`.
    pub fn new(mu: DVector<f64>, alpha: DMatrix<f64>, beta: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if n == 0 || alpha.shape() != (n, n) || beta.shape() != (n, n) {
            return Err(Error::Argument(format!(
                "mu has {n} entries but alpha is {:?} and beta is {:?}",
                alpha.shape(),
                beta.shape()
            )));
        }
        if mu.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Argument("baseline rates must be positive and finite".into()));
        }
        if alpha.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(Error::Argument("alpha must be nonnegative and finite".into()));
        }
        if beta.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
            return Err(Error::Argument("beta must be nonnegative and finite".into()));
        }
        if alpha.iter().zip(beta.iter()).any(|(&a, &b)| a > 0.0 && b <= 0.0) {
            return Err(Error::Argument("beta must be positive wherever alpha is".into()));
        }
        let phi_int = alpha.zip_map(&beta, |a, b| if a > 0.0 { a / b } else { 0.0 });
        Ok(Self {
            mu,
            alpha,
            beta,
            phi_int,
        })
    }

    /// Model with every decay rate set to `beta`.
    pub fn with_common_decay(mu: DVector<f64>, alpha: DMatrix<f64>, beta: f64) -> Result<Self> {
        let n = mu.len();
        Self::new(mu, alpha, DMatrix::from_element(n, n, beta))
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    /// Kernel integrals `Φ_ji = α_ji / β_ji`.
    pub fn phi_int(&self) -> &DMatrix<f64> {
        &self.phi_int
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.phi_int)
    }

    fn check_stable(&self) -> Result<()> {
        let rho = self.spectral_radius();
        if rho < 1.0 - var::STABILITY_MARGIN {
            Ok(())
        } else {
            Err(Error::Unstable {
                spectral_radius: rho,
            })
        }
    }

    /// Edge `i → j` iff `Φ_ji ≠ 0`.
    pub fn graph(&self) -> CausalGraph {
        var::graph_from_matrices(self.n(), std::slice::from_ref(&self.phi_int))
    }

    /// Smallest decay rate among active kernels (`None` without excitation).
    fn min_active_beta(&self) -> Option<f64> {
        self.alpha
            .iter()
            .zip(self.beta.iter())
            .filter(|(&a, _)| a > 0.0)
            .map(|(_, &b)| b)
            .reduce(f64::min)
    }

    /// Length of the prefix discarded before the returned window: `10 / min β`.
    pub fn default_burn_in(&self) -> f64 {
        self.min_active_beta().map_or(0.0, |b| 10.0 / b)
    }
}

/// Event times per process on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    horizon: f64,
    events: Vec<Vec<f64>>,
}

impl EventLog {
    pub fn new(horizon: f64, events: Vec<Vec<f64>>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Argument(format!("horizon {horizon} must be positive")));
        }
        if events.is_empty() {
            return Err(Error::Argument("event log needs at least one process".into()));
        }
        for (i, times) in events.iter().enumerate() {
            if times.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
                return Err(Error::Argument(format!(
                    "process {} has events outside [0, {horizon}]",
                    i + 1
                )));
            }
            if times.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Argument(format!(
                    "process {} event times are not strictly increasing",
                    i + 1
                )));
            }
        }
        Ok(Self { horizon, events })
    }

    pub fn n(&self) -> usize {
        self.events.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Event times of process `label` (1-based).
    pub fn process(&self, label: usize) -> &[f64] {
        &self.events[label - 1]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.events.iter().map(Vec::len).collect()
    }

    pub fn total_events(&self) -> usize {
        self.events.iter().map(Vec::len).sum()
    }

    /// All events as `(process, time)` with 1-based process labels, by time.
    pub fn merged(&self) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = self
            .events
            .iter()
            .enumerate()
            .flat_map(|(i, ts)| ts.iter().map(move |&t| (i + 1, t)))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all
    }
}

/// `Λ = (I − Φ)⁻¹ μ`.
pub fn hawkes_stationary_rates(m: &HawkesParams) -> Result<DVector<f64>> {
    m.check_stable()?;
    let n = m.n();
    let r = linalg::guarded_inverse(&(DMatrix::identity(n, n) - m.phi_int()), "I - Phi")?;
    Ok(r * m.mu())
}

pub fn hawkes_integrated_cov(m: &HawkesParams) -> Result<IntCov> {
    let lambda = hawkes_stationary_rates(m)?;
    let c = var::integrated_cov(m.phi_int(), &DMatrix::from_diagonal(&lambda))?;
    IntCov::new(c, Provenance::Theoretical)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generation {
    Finite(u32),
    /// All generations, `R = (I − Φ)⁻¹`, root included.
    Total,
}

/// `(Φ^k)_ji` is the expected number of generation-`k` `j`-events in a
/// cluster rooted at an `i`-event.
pub fn expected_offspring(m: &HawkesParams, k: Generation) -> Result<DMatrix<f64>> {
    let n = m.n();
    match k {
        Generation::Finite(k) => {
            Ok((0..k).fold(DMatrix::identity(n, n), |acc, _| m.phi_int() * acc))
        }
        Generation::Total => {
            m.check_stable()?;
            linalg::guarded_inverse(&(DMatrix::identity(n, n) - m.phi_int()), "I - Phi")
        }
    }
}

pub fn simulate_hawkes(m: &HawkesParams, horizon: f64, seed: u64) -> Result<EventLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_hawkes_with(m, horizon, m.default_burn_in(), DEFAULT_MAX_EVENTS, &mut rng)
}

/// Ogata thinning with an O(n²) exponential-decay state update per candidate.
///
/// The process starts empty at time `−burn_in`; events in the burn-in prefix
/// drive the intensity but are not returned.
pub fn simulate_hawkes_with<R: Rng + ?Sized>(
    m: &HawkesParams,
    horizon: f64,
    burn_in: f64,
    max_events: usize,
    rng: &mut R,
) -> Result<EventLog> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Argument(format!("horizon {horizon} must be positive")));
    }
    if !(burn_in >= 0.0 && burn_in.is_finite()) {
        return Err(Error::Argument(format!("burn-in {burn_in} must be nonnegative")));
    }
    m.check_stable()?;
    let n = m.n();
    let end = burn_in + horizon;
    // excitation[j * n + i]: current contribution of past i-events to λ_j
    let mut excitation = vec![0.0; n * n];
    let alpha: Vec<f64> = m.alpha().transpose().as_slice().to_vec();
    let beta: Vec<f64> = m.beta().transpose().as_slice().to_vec();
    let mu = m.mu().as_slice();
    let mut lambda = mu.to_vec();
    let mut events = vec![Vec::new(); n];
    let mut generated = 0usize;

    // `t` is the time at which `excitation` and `lambda` are current. Between
    // events every kernel decays, so the summed intensity at `t` bounds it
    // until the next accepted event.
    let mut t = 0.0;
    let mut bound: f64 = lambda.iter().sum();
    loop {
        let u: f64 = rng.random();
        let candidate = t - (1.0 - u).ln() / bound;
        if candidate > end {
            break;
        }
        let dt = candidate - t;
        t = candidate;
        let mut total = 0.0;
        for j in 0..n {
            let mut lam = mu[j];
            for i in 0..n {
                let k = j * n + i;
                if excitation[k] > 0.0 {
                    excitation[k] *= (-beta[k] * dt).exp();
                    lam += excitation[k];
                }
            }
            lambda[j] = lam;
            total += lam;
        }
        let v: f64 = rng.random::<f64>() * bound;
        if v < total {
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (j, lam) in lambda.iter().enumerate() {
                acc += lam;
                if v < acc {
                    chosen = j;
                    break;
                }
            }
            generated += 1;
            if generated > max_events {
                return Err(Error::Resource(format!(
                    "more than {max_events} events generated before time {:.3}",
                    t - burn_in
                )));
            }
            events[chosen].push(t);
            for j in 0..n {
                let k = j * n + chosen;
                excitation[k] += alpha[k];
                lambda[j] += alpha[k];
            }
            bound = lambda.iter().sum();
        } else {
            bound = total;
        }
    }
    let events = events
        .into_iter()
        .map(|ts| ts.into_iter().filter(|&s| s >= burn_in).map(|s| s - burn_in).collect())
        .collect();
    EventLog::new(horizon, events)
}

/// Conditional intensity `λ_t` computed directly from the event history.
pub fn conditional_intensity(m: &HawkesParams, log: &EventLog, t: f64) -> DVector<f64> {
    let n = m.n();
    DVector::from_fn(n, |j, _| {
        let mut lam = m.mu()[j];
        for i in 0..n {
            let (a, b) = (m.alpha()[(j, i)], m.beta()[(j, i)]);
            if a == 0.0 {
                continue;
            }
            lam += log
                .events[i]
                .iter()
                .take_while(|&&s| s < t)
                .map(|&s| a * (-b * (t - s)).exp())
                .sum::<f64>();
        }
        lam
    })
}

/// Treatment of events whose window `(t − H, t + H]` sticks out of `[0, T]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeHandling {
    /// Sum only over events with `H ≤ t ≤ T − H` and divide by `T − 2H`.
    #[default]
    Interior,
    /// Sum over every event and divide by `T`; windows are cut at the
    /// boundary. Biased by roughly `H²Λ_iΛ_j/T`.
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantEstimates {
    pub lambda_hat: DVector<f64>,
    /// Symmetrized `(Ĉ + Ĉᵀ)/2`.
    pub c_hat: DMatrix<f64>,
    pub half_width: f64,
    pub horizon: f64,
    pub edge: EdgeHandling,
    /// 1-based labels of processes without any event (their `Λ̂` is zero).
    pub empty_processes: Vec<usize>,
}

impl CumulantEstimates {
    /// Sampling noise of a normalized off-diagonal entry is about the
    /// inverse square root of the number of disjoint windows.
    pub fn effective_samples(&self) -> f64 {
        let span = match self.edge {
            EdgeHandling::Interior => self.horizon - 2.0 * self.half_width,
            EdgeHandling::Truncated => self.horizon,
        };
        span / (2.0 * self.half_width)
    }

    pub fn to_intcov(&self) -> Result<IntCov> {
        IntCov::new(
            self.c_hat.clone(),
            Provenance::Estimated {
                effective_samples: self.effective_samples(),
            },
        )
    }
}

/// Number of points of sorted `times` in `(lo, hi]`.
fn count_in(times: &[f64], lo: f64, hi: f64) -> usize {
    times.partition_point(|&s| s <= hi) - times.partition_point(|&s| s <= lo)
}

pub fn estimate_hawkes_cumulants(log: &EventLog, half_width: f64) -> Result<CumulantEstimates> {
    estimate_hawkes_cumulants_with(log, half_width, EdgeHandling::default())
}

/// First- and second-order cumulant estimators with window half-width `H`:
/// `Λ̂_i = m_i/T` and `Ĉ_ij = (1/S) Σ_k (N^j_{t_k+H} − N^j_{t_k−H} − 2HΛ̂_j)`
/// summed over the events `t_k` of process `i`, where the sum and the span
/// `S` depend on `edge`.
pub fn estimate_hawkes_cumulants_with(
    log: &EventLog,
    half_width: f64,
    edge: EdgeHandling,
) -> Result<CumulantEstimates> {
    let horizon = log.horizon();
    if !(half_width > 0.0 && half_width < horizon / 2.0) {
        return Err(Error::Argument(format!(
            "window half-width {half_width} must lie in (0, {})",
            horizon / 2.0
        )));
    }
    let n = log.n();
    let lambda_hat = DVector::from_iterator(n, log.counts().iter().map(|&m| m as f64 / horizon));
    let empty_processes = (0..n).filter(|&i| log.events[i].is_empty()).map(|i| i + 1).collect();
    let (lo, hi, span) = match edge {
        EdgeHandling::Interior => (half_width, horizon - half_width, horizon - 2.0 * half_width),
        EdgeHandling::Truncated => (f64::NEG_INFINITY, f64::INFINITY, horizon),
    };
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        let ti = &log.events[i];
        let used = &ti[ti.partition_point(|&t| t < lo)..ti.partition_point(|&t| t <= hi)];
        for j in 0..n {
            let tj = &log.events[j];
            let centre = 2.0 * half_width * lambda_hat[j];
            let sum: f64 = used
                .iter()
                .map(|&t| count_in(tj, t - half_width, t + half_width) as f64 - centre)
                .sum();
            c[(i, j)] = sum / span;
        }
    }
    Ok(CumulantEstimates {
        lambda_hat,
        c_hat: linalg::symmetrize(&c),
        half_width,
        horizon,
        edge,
        empty_processes,
    })
}

/// `T^0.4` in units of the mean pooled inter-event time, i.e.
/// `H = T · N^(−0.6)` for `N` total events, widened so a window holds at
/// least 50 expected events of the pooled process and kept below `T/2`.
///
/// Measuring in event-time units keeps the rule invariant to the time unit.
pub fn default_half_width(log: &EventLog) -> f64 {
    let horizon = log.horizon();
    let total = log.total_events() as f64;
    let h = if total > 0.0 {
        (horizon * total.powf(-0.6)).max(25.0 * horizon / total)
    } else {
        horizon.powf(0.4)
    };
    h.min(0.49 * horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(mu: f64, alpha: f64, beta: f64) -> HawkesParams {
        HawkesParams::new(
            DVector::from_element(1, mu),
            DMatrix::from_element(1, 1, alpha),
            DMatrix::from_element(1, 1, beta),
        )
        .unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        let mu = DVector::from_vec(vec![1.0, 0.0]);
        assert!(HawkesParams::with_common_decay(mu, DMatrix::zeros(2, 2), 1.0).is_err());
        let mu = DVector::from_vec(vec![1.0]);
        assert!(HawkesParams::new(mu.clone(), DMatrix::from_element(1, 1, -0.1), DMatrix::from_element(1, 1, 1.0)).is_err());
        assert!(HawkesParams::new(mu, DMatrix::from_element(1, 1, 0.1), DMatrix::from_element(1, 1, 0.0)).is_err());
    }

    #[test]
    fn stationary_rate_examples() {
        let m = HawkesParams::with_common_decay(DVector::from_vec(vec![1.0, 2.0]), DMatrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(hawkes_stationary_rates(&m).unwrap(), DVector::from_vec(vec![1.0, 2.0]));
        let m = scalar(1.0, 0.5, 1.0);
        assert!((hawkes_stationary_rates(&m).unwrap()[0] - 1.0 / (1.0 - 0.5)).abs() < 1e-14);
        let unstable = scalar(1.0, 1.5, 1.0);
        assert!(matches!(hawkes_stationary_rates(&unstable), Err(Error::Unstable { .. })));
    }

    #[test]
    fn integrated_cov_examples() {
        let m = HawkesParams::with_common_decay(DVector::from_vec(vec![1.0, 2.0]), DMatrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(hawkes_integrated_cov(&m).unwrap().matrix(), &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])));
        let m = scalar(1.0, 0.5, 1.0);
        assert!((hawkes_integrated_cov(&m).unwrap().matrix()[(0, 0)] - 2.0 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn offspring_examples() {
        let alpha = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.3, 0.1]);
        let m = HawkesParams::with_common_decay(DVector::from_vec(vec![1.0, 1.0]), alpha, 2.0).unwrap();
        assert_eq!(expected_offspring(&m, Generation::Finite(0)).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(&expected_offspring(&m, Generation::Finite(1)).unwrap(), m.phi_int());
        let r = expected_offspring(&m, Generation::Total).unwrap();
        let series = (0..200).fold(DMatrix::zeros(2, 2), |acc, k| {
            acc + expected_offspring(&m, Generation::Finite(k)).unwrap()
        });
        assert!((r - series).amax() < 1e-12);
    }

    #[test]
    fn window_counts_by_hand() {
        // Events {1,2,3} on [0,4], H = 0.5: every window holds only its own
        // event and lies inside [0,4].
        let log = EventLog::new(4.0, vec![vec![1.0, 2.0, 3.0]]).unwrap();
        let est = estimate_hawkes_cumulants_with(&log, 0.5, EdgeHandling::Truncated).unwrap();
        assert_eq!(est.lambda_hat[0], 0.75);
        assert!((est.c_hat[(0, 0)] - 3.0 * (1.0 - 2.0 * 0.5 * 0.75) / 4.0).abs() < 1e-15);
        let est = estimate_hawkes_cumulants_with(&log, 0.5, EdgeHandling::Interior).unwrap();
        assert!((est.c_hat[(0, 0)] - 3.0 * (1.0 - 2.0 * 0.5 * 0.75) / 3.0).abs() < 1e-15);

        // H = 1.5: windows around 1 and 3 hold two events, around 2 three;
        // only the window around 2 lies inside [0,4].
        let est = estimate_hawkes_cumulants_with(&log, 1.5, EdgeHandling::Truncated).unwrap();
        let expected = ((2.0 - 2.25) + (3.0 - 2.25) + (2.0 - 2.25)) / 4.0;
        assert!((est.c_hat[(0, 0)] - expected).abs() < 1e-15);
        let est = estimate_hawkes_cumulants(&log, 1.5).unwrap();
        assert!((est.c_hat[(0, 0)] - (3.0 - 2.25) / 1.0).abs() < 1e-15);
    }

    #[test]
    fn cumulants_reject_bad_window_and_flag_empty() {
        let log = EventLog::new(10.0, vec![vec![1.0], vec![]]).unwrap();
        assert!(estimate_hawkes_cumulants(&log, 0.0).is_err());
        assert!(estimate_hawkes_cumulants(&log, 5.0).is_err());
        let est = estimate_hawkes_cumulants(&log, 1.0).unwrap();
        assert_eq!(est.empty_processes, vec![2]);
        assert_eq!(est.lambda_hat[1], 0.0);
    }

    #[test]
    fn event_log_validation() {
        assert!(EventLog::new(1.0, vec![vec![0.5, 0.5]]).is_err());
        assert!(EventLog::new(1.0, vec![vec![1.5]]).is_err());
        assert!(EventLog::new(0.0, vec![vec![]]).is_err());
    }

    #[test]
    fn simulation_is_deterministic_and_within_horizon() {
        let m = scalar(1.0, 0.5, 1.0);
        let a = simulate_hawkes(&m, 200.0, 9).unwrap();
        let b = simulate_hawkes(&m, 200.0, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.process(1).iter().all(|&t| (0.0..=200.0).contains(&t)));
    }

    #[test]
    fn runaway_cap_is_a_resource_error() {
        let m = scalar(50.0, 0.9, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            simulate_hawkes_with(&m, 1000.0, 0.0, 1000, &mut rng),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn intensity_never_below_baseline() {
        let alpha = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.4, 0.2]);
        let m = HawkesParams::with_common_decay(DVector::from_vec(vec![0.5, 0.7]), alpha, 1.5).unwrap();
        let log = simulate_hawkes(&m, 100.0, 4).unwrap();
        for k in 0..200 {
            let lam = conditional_intensity(&m, &log, k as f64 * 0.5);
            assert!(lam[0] >= 0.5 && lam[1] >= 0.7);
        }
    }
}
