use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use gdas_core::gaussian::{build_ar1_model, build_model_family, dct_matrix};
use gdas_core::{condition, ConditionalState, Error, GaussianModel};

fn model_from(k: usize, entries: &[f64], mean: &[f64]) -> GaussianModel {
    let a = DMatrix::from_row_slice(k, k, &entries[..k * k]);
    let cov = &a * a.transpose() + DMatrix::identity(k, k) * 0.1;
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianModel::new(DVector::from_row_slice(&mean[..k]), cov).unwrap()
}

fn arb_model() -> impl Strategy<Value = GaussianModel> {
    (2usize..12).prop_flat_map(|k| {
        (
            Just(k),
            prop::collection::vec(-2.0f64..2.0, k * k),
            prop::collection::vec(-3.0f64..3.0, k),
        )
            .prop_map(|(k, e, m)| model_from(k, &e, &m))
    })
}

fn arb_case() -> impl Strategy<Value = (GaussianModel, Vec<usize>, Vec<f64>)> {
    arb_model().prop_flat_map(|m| {
        let k = m.dim();
        (
            Just(m),
            Just((0..k).collect::<Vec<_>>()).prop_shuffle(),
            prop::collection::vec(-4.0f64..4.0, k),
            1..=k,
        )
            .prop_map(|(m, order, vals, n)| (m, order[..n].to_vec(), vals[..n].to_vec()))
    })
}

proptest! {
    #[test]
    fn sequential_updates_match_batch((model, idx, vals) in arb_case()) {
        let mut inc = ConditionalState::prior(&model);
        for (&i, &v) in idx.iter().zip(&vals) {
            inc.observe(i, v).unwrap();
        }
        let batch = condition(&model, &idx, &vals).unwrap();
        prop_assert_eq!(inc.unknown_idx(), batch.unknown_idx());
        prop_assert!((inc.cond_mean() - batch.cond_mean()).amax() < 1e-8);
        prop_assert!((inc.cond_cov() - batch.cond_cov()).amax() < 1e-8);
    }

    #[test]
    fn total_variance_never_grows((model, idx, vals) in arb_case()) {
        let mut state = ConditionalState::prior(&model);
        let mut last = state.total_variance();
        for (&i, &v) in idx.iter().zip(&vals) {
            state.observe(i, v).unwrap();
            let now = state.total_variance();
            prop_assert!(now <= last + 1e-12 * last.max(1.0));
            last = now;
        }
    }

    #[test]
    fn covariance_ignores_observed_values((model, idx, vals) in arb_case(), shift in -5.0f64..5.0) {
        let a = condition(&model, &idx, &vals).unwrap();
        let moved: Vec<f64> = vals.iter().map(|v| v + shift).collect();
        let b = condition(&model, &idx, &moved).unwrap();
        prop_assert!((a.cond_cov() - b.cond_cov()).amax() < 1e-10);
    }

    #[test]
    fn conditional_covariance_stays_symmetric((model, idx, vals) in arb_case()) {
        let c = condition(&model, &idx, &vals).unwrap();
        let cov = c.cond_cov();
        prop_assert!((cov - cov.transpose()).amax() < 1e-10);
        for i in 0..cov.nrows() {
            prop_assert!(cov[(i, i)] >= -1e-10);
        }
    }
}

#[test]
fn bivariate_closed_form() {
    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0]);
    let model = GaussianModel::new(DVector::from_vec(vec![1.0, -1.0]), cov).unwrap();
    let c = condition(&model, &[1], &[0.5]).unwrap();
    assert_eq!(c.unknown_idx(), &[0]);
    assert_relative_eq!(c.cond_mean()[0], 1.0 + 0.8 * 1.5, epsilon = 1e-12);
    assert_relative_eq!(c.cond_cov()[(0, 0)], 2.0 - 0.64, epsilon = 1e-12);
}

#[test]
fn ar1_endpoint_conditioning() {
    let rho: f64 = 0.95;
    let model = build_ar1_model(3, rho).unwrap();
    let c = condition(&model, &[0, 2], &[model.mean()[0], model.mean()[2]]).unwrap();
    let expected = (1.0 - rho * rho) / (1.0 + rho * rho);
    assert_relative_eq!(c.cond_cov()[(0, 0)], expected, epsilon = 1e-12);
    assert_relative_eq!(c.cond_mean()[0], model.mean()[1], epsilon = 1e-12);
}

#[test]
fn observing_everything_leaves_nothing() {
    let model = build_ar1_model(6, 0.5).unwrap();
    let idx: Vec<usize> = (0..6).rev().collect();
    let c = condition(&model, &idx, &[0.0; 6]).unwrap();
    assert!(c.unknown_idx().is_empty());
    assert_eq!(c.total_variance(), 0.0);
}

#[test]
fn rejects_bad_requests() {
    let model = build_ar1_model(4, 0.9).unwrap();
    assert!(matches!(
        condition(&model, &[0, 1], &[0.0]),
        Err(Error::Dimension(_))
    ));
    assert!(matches!(
        condition(&model, &[4], &[0.0]),
        Err(Error::InvalidIndex { .. })
    ));
    assert!(matches!(
        condition(&model, &[1, 1], &[0.0, 0.0]),
        Err(Error::InvalidIndex { .. })
    ));
    let mut s = ConditionalState::prior(&model);
    s.observe(2, 0.1).unwrap();
    assert!(s.observe(2, 0.1).is_err());
}

#[test]
fn rejects_non_psd_covariance() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(GaussianModel::new(DVector::zeros(2), cov).is_err());
}

#[test]
fn family_models_share_total_variance() {
    let family = build_model_family(100, 3, 0.1).unwrap();
    for m in &family {
        assert_relative_eq!(m.cov().trace(), 100.0, max_relative = 1e-9);
    }
    let d = dct_matrix(16);
    assert!((&d * d.transpose() - DMatrix::identity(16, 16)).amax() < 1e-12);
}
