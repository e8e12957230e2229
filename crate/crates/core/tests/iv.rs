use ivproc::bench::{sample_experiment_params, simulate_e6, ExperimentId, SampledModel, E6_TRUTH};
use ivproc::hawkes::default_half_width;
use ivproc::iv::{iv_just_identified, iv_overidentified, iv_ratio};
use ivproc::var::rescale;
use ivproc::{
    hawkes_integrated_cov, integrated_cov, iv_estimate, iv_estimate_events, iv_estimate_series, normalized_effect,
    simulate_hawkes, simulate_var, var_integrated_cov, Error, HawkesParams, IntCov, IvProblem, LrcovConfig,
    Method, NodeSet, Provenance, SeriesData, VarParams,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn var_draw(id: ExperimentId, seed: u64) -> VarParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match sample_experiment_params(id, None, &mut rng).unwrap() {
        SampledModel::Var(m) => m,
        SampledModel::Hawkes(_) => unreachable!(),
    }
}

fn pd(k: usize, raw: &[f64]) -> DMatrix<f64> {
    let l = DMatrix::from_fn(k, k, |i, j| raw[i * k + j]);
    &l * l.transpose() + DMatrix::identity(k, k) * 0.05
}

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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_choice_does_not_matter(seed in any::<u64>(), w1 in prop::collection::vec(-1.0f64..1.0, 4), w2 in prop::collection::vec(-1.0f64..1.0, 4)) {
        let m = var_draw(ExperimentId::E4, seed);
        let c = var_integrated_cov(&m).unwrap();
        let base = ExperimentId::E4.problem();
        let e1 = iv_overidentified(&c, &base.clone().with_weight(pd(2, &w1)).unwrap()).unwrap();
        let e2 = iv_overidentified(&c, &base.with_weight(pd(2, &w2)).unwrap()).unwrap();
        prop_assert!((e1.estimate - e2.estimate).amax() <= 1e-9);
    }

    #[test]
    fn overidentified_recovers_effect(seed in any::<u64>()) {
        let m = var_draw(ExperimentId::E4, seed);
        let prob = ExperimentId::E4.problem();
        let c = var_integrated_cov(&m).unwrap();
        let r = iv_estimate(&c, &prob).unwrap();
        prop_assert_eq!(r.method, Method::Overidentified);
        let truth = normalized_effect(&m, &prob.a, &prob.b).unwrap();
        prop_assert!((r.estimate - truth).amax() <= 1e-9);
    }

    #[test]
    fn rescaled_model_gives_identical_estimate(seed in any::<u64>(), d in prop::collection::vec(0.05f64..0.99, 4)) {
        let m = var_draw(ExperimentId::E1, seed);
        let dm = DMatrix::from_diagonal(&DVector::from_vec(d));
        let (pb, tb) = rescale(&m.phi_sum(), m.theta(), &dm).unwrap();
        let c = var_integrated_cov(&m).unwrap();
        let cb = integrated_cov(&pb, &tb).unwrap();
        prop_assert!((c.matrix() - &cb).amax() <= 1e-9 * c.matrix().amax());
        let prob = ExperimentId::E1.problem();
        let est = iv_estimate(&c, &prob).unwrap();
        prop_assert_eq!(&est, &iv_estimate(&c.clone(), &prob).unwrap());
        let eff = ivproc::var::normalized_effect_from_phi(&pb, &prob.a, &prob.b).unwrap();
        prop_assert!((est.estimate - eff).amax() <= 1e-9);
    }
}

#[test]
fn ratio_on_known_model() {
    let c = var_integrated_cov(&single_instrument(0.4, 0.2)).unwrap();
    assert!((iv_ratio(&c, 1, 2, 3).unwrap() - 0.5).abs() < 1e-12);
    let c0 = var_integrated_cov(&single_instrument(0.0, 0.2)).unwrap();
    assert!(iv_ratio(&c0, 1, 2, 3).unwrap().abs() < 1e-12);
}

#[test]
fn ratio_on_var2_uses_lag_sum() {
    let p1 = DMatrix::from_row_slice(4, 4, &[0.2, 0.0, 0.0, 0.0, 0.3, 0.1, 0.0, 0.3, 0.0, 0.3, 0.1, 0.2, 0.0, 0.0, 0.0, 0.3]);
    let p2 = DMatrix::from_row_slice(4, 4, &[0.1, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.3, 0.0, 0.0, 0.0, 0.2]);
    let m = VarParams::new(vec![p1, p2], DMatrix::identity(4, 4)).unwrap();
    let phi = m.phi_sum();
    let c = var_integrated_cov(&m).unwrap();
    let want = phi[(2, 1)] / (1.0 - phi[(2, 2)]);
    assert!((iv_ratio(&c, 1, 2, 3).unwrap() - want).abs() < 1e-12);
}

#[test]
fn one_by_one_just_identified_is_the_ratio() {
    let c = var_integrated_cov(&single_instrument(0.7, -0.3)).unwrap();
    let prob = IvProblem::new([1].into(), [2].into(), [3].into()).unwrap();
    let r = iv_just_identified(&c, &prob).unwrap();
    assert_eq!(r.method, Method::Ratio);
    assert_eq!(r.estimate[(0, 0)], iv_ratio(&c, 1, 2, 3).unwrap());
}

#[test]
fn square_overidentified_equals_just_identified() {
    let m = var_draw(ExperimentId::E3, 5);
    let c = var_integrated_cov(&m).unwrap();
    let prob = ExperimentId::E3.problem();
    let a = iv_just_identified(&c, &prob).unwrap();
    let b = iv_overidentified(&c, &prob).unwrap();
    assert!((a.estimate - b.estimate).amax() < 1e-9);
}

#[test]
fn zero_effect_gives_zero_matrix() {
    let m = var_draw(ExperimentId::E3, 8);
    let mut phi = m.phis()[0].clone();
    phi[(4, 2)] = 0.0;
    phi[(4, 3)] = 0.0;
    let m = VarParams::var1(phi, m.theta().clone()).unwrap();
    let r = iv_estimate(&var_integrated_cov(&m).unwrap(), &ExperimentId::E3.problem()).unwrap();
    assert!(r.estimate.amax() < 1e-12);
}

#[test]
fn unrelated_instrument_is_rank_failure() {
    // instrument 1 has no path to the treatment
    let c = IntCov::new(DMatrix::identity(3, 3), Provenance::Theoretical).unwrap();
    let err = iv_ratio(&c, 1, 2, 3).unwrap_err();
    assert!(matches!(err, Error::WeakInstrument(_)), "{err}");
    let c2 = IntCov::new(DMatrix::identity(6, 6), Provenance::Theoretical).unwrap();
    let err = iv_estimate(&c2, &ExperimentId::E3.problem()).unwrap_err();
    assert!(matches!(err, Error::RankDeficient(ref d) if d.sigma_min == 0.0), "{err}");
}

#[test]
fn iid_noise_trips_weak_instrument_screen() {
    let m = VarParams::var1(DMatrix::zeros(3, 3), DMatrix::identity(3, 3)).unwrap();
    let prob = IvProblem::new([1].into(), [2].into(), [3].into()).unwrap();
    let mut weak = 0;
    for seed in 0..20 {
        let x = simulate_var(&m, 10_000, 0, seed).unwrap();
        if let Err(Error::WeakInstrument(d)) = iv_estimate_series(&x, &prob, &LrcovConfig::default()) {
            assert!(d.strength_z.is_some());
            weak += 1;
        }
    }
    // |N(0,1)| ≤ 3 with probability 0.997
    assert!(weak >= 19, "{weak}/20");
}

#[test]
fn poisson_log_trips_weak_instrument_screen() {
    let m = HawkesParams::with_common_decay(DVector::from_element(3, 1.0), DMatrix::zeros(3, 3), 1.0).unwrap();
    let prob = IvProblem::new([1].into(), [2].into(), [3].into()).unwrap();
    let mut weak = 0;
    for seed in 0..10 {
        let log = simulate_hawkes(&m, 1e4, seed).unwrap();
        if matches!(iv_estimate_events(&log, &prob, default_half_width(&log)), Err(Error::WeakInstrument(_))) {
            weak += 1;
        }
    }
    assert!(weak >= 9, "{weak}/10");
}

#[test]
fn e6_single_series_near_truth() {
    let x = simulate_e6(10_000, 3).unwrap();
    let r = iv_estimate_series(&x, &ExperimentId::E6.problem(), &LrcovConfig::default()).unwrap();
    let err = (r.estimate[(0, 0)] - E6_TRUTH).powi(2);
    assert!(err < 0.2, "{}", r.estimate[(0, 0)]);
}

#[test]
fn e1_series_pipeline_converges() {
    let m = var_draw(ExperimentId::E1, 42);
    let prob = ExperimentId::E1.problem();
    let truth = normalized_effect(&m, &prob.a, &prob.b).unwrap()[(0, 0)];
    let x = simulate_var(&m, 200_000, 1000, 1).unwrap();
    let r = iv_estimate_series(&x, &prob, &LrcovConfig::default()).unwrap();
    assert!((r.estimate[(0, 0)] - truth).abs() < 0.1, "{} vs {truth}", r.estimate[(0, 0)]);
}

#[test]
fn event_estimate_matches_theoretical_shortcut() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let m = match sample_experiment_params(ExperimentId::H1, None, &mut rng).unwrap() {
        SampledModel::Hawkes(m) => m,
        SampledModel::Var(_) => unreachable!(),
    };
    let prob = ExperimentId::H1.problem();
    let theory = iv_estimate(&hawkes_integrated_cov(&m).unwrap(), &prob).unwrap().estimate[(0, 0)];
    let log = simulate_hawkes(&m, 1e5, 0).unwrap();
    let est = iv_estimate_events(&log, &prob, default_half_width(&log)).unwrap().estimate[(0, 0)];
    assert!((est / theory - 1.0).abs() < 0.1, "{est} vs {theory}");
}

#[test]
fn problem_validation() {
    let s = |v: &[usize]| v.iter().copied().collect::<NodeSet>();
    assert!(IvProblem::new(s(&[1]), s(&[2, 3]), s(&[4])).is_err());
    assert!(IvProblem::new(s(&[1]), s(&[1]), s(&[4])).is_err());
    let p = IvProblem::new(s(&[1, 2]), s(&[3]), s(&[4])).unwrap();
    assert!(p.clone().with_weight(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    assert!(p.clone().with_weight(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
    assert!(p.with_weight(DMatrix::identity(3, 3)).is_err());
    let x = SeriesData::new(DMatrix::zeros(100, 3)).unwrap();
    assert!(matches!(
        iv_estimate_series(&x, &IvProblem::new(s(&[1]), s(&[2]), s(&[4])).unwrap(), &LrcovConfig::default()),
        Err(Error::Domain(_))
    ));
}
