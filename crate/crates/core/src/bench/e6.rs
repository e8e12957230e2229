use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::var::{SeriesData, DEFAULT_BURN_IN};

pub const E6_NOISE_SD: f64 = 0.25;
pub const E6_TRUTH: f64 = 1.25;

/// Four columns in the order instrument, treatment, outcome, hidden.
pub fn simulate_e6(len: usize, seed: u64) -> Result<SeriesData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_e6_with(len, DEFAULT_BURN_IN, E6_NOISE_SD, &mut rng)
}

pub fn simulate_e6_with<R: Rng + ?Sized>(
    len: usize,
    burn_in: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<SeriesData> {
    if len == 0 {
        return Err(Error::Argument("series length must be at least 1".into()));
    }
    let normal = Normal::new(0.0, noise_sd)
        .map_err(|e| Error::Argument(format!("noise sd {noise_sd}: {e}")))?;
    let (mut xi, mut xa, mut xb, mut xu) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut out = DMatrix::zeros(len, 4);
    for t in 0..burn_in + len {
        let (ei, ea, eb, eu): (f64, f64, f64, f64) = (
            normal.sample(rng),
            normal.sample(rng),
            normal.sample(rng),
            normal.sample(rng),
        );
        let ni = -1.0 / (1.0 + xi * xi) + ei;
        let nu = xu.exp() / (1.0 + xu.exp()) + eu;
        let na = -3.0 / (1.0 + xi.exp()) - 0.5 * xa + xu * ea;
        let nb = 0.5 * xa + 0.6 * xb + xu * eb;
        (xi, xa, xb, xu) = (ni, na, nb, nu);
        if t >= burn_in {
            let r = t - burn_in;
            out[(r, 0)] = xi;
            out[(r, 1)] = xa;
            out[(r, 2)] = xb;
            out[(r, 3)] = xu;
        }
    }
    SeriesData::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_run_is_deterministic_and_settles() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = simulate_e6_with(50, 200, 0.0, &mut rng).unwrap();
        let v = x.values();
        for c in 0..4 {
            assert!((v[(49, c)] - v[(48, c)]).abs() < 1e-9);
        }
        let u = v[(0, 3)];
        assert!((u - 1.0 / (1.0 + (-u).exp())).abs() < 1e-9);
        assert!((v[(0, 2)] / v[(0, 1)] - E6_TRUTH).abs() < 1e-9);
    }
}
