mod common;

use bham::model::{BhamModel, FORMAT_VERSION};
use bham::{BhamError, EmSettings, Family, Solver, SsPrior};
use common::*;

fn fitted(solver: Solver, family: Family) -> (BhamModel, bham::sim::SimData) {
    let d = sim(5, family, 17, 0);
    let data = d.train.to_dataset();
    let m = BhamModel::fit(&data, &cubic_specs(5), &d.train.y, family, &SsPrior::new(0.05, 1.0).unwrap(), solver, &EmSettings::default()).unwrap();
    (m, d)
}

#[test]
fn save_load_save_is_byte_identical() {
    for solver in [Solver::EmCd, Solver::EmIwls] {
        let (mut m, _) = fitted(solver, Family::GaussianIdentity);
        m.selected_s0 = Some(0.05);
        let a = m.to_json().unwrap();
        let back = BhamModel::from_json(&a).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), a);
        assert!(a.contains(&format!("\"format_version\": {FORMAT_VERSION}")));
    }
}

#[test]
fn loaded_model_predicts_identically() {
    let (m, d) = fitted(Solver::EmCd, Family::BinomialLogit);
    let back = BhamModel::from_json(&m.to_json().unwrap()).unwrap();
    let test = d.test.to_dataset();
    assert_eq!(m.predict(&test).unwrap(), back.predict(&test).unwrap());
}

#[test]
fn training_predictions_equal_fitted_values() {
    let (m, d) = fitted(Solver::EmCd, Family::GaussianIdentity);
    let data = d.train.to_dataset();
    let frame = bham::ModelFrame::from_data(&data, &cubic_specs(5)).unwrap();
    let fitted = m.fit.linear_predictor(&frame.design);
    let pred = m.predict_eta(&data).unwrap();
    for i in 0..pred.len() {
        assert!((pred[i] - fitted[i]).abs() < 1e-10);
    }
}

#[test]
fn rejects_other_versions_and_truncated_files() {
    let (m, _) = fitted(Solver::EmCd, Family::GaussianIdentity);
    let text = m.to_json().unwrap().replace(&format!("\"format_version\": {FORMAT_VERSION}"), "\"format_version\": 99");
    assert!(matches!(BhamModel::from_json(&text), Err(BhamError::ModelFormat(_))));
    assert!(BhamModel::from_json("{\"format_version\": 1}").is_err());
}

#[test]
fn curves_carry_bands_only_with_covariance() {
    let (cd, _) = fitted(Solver::EmCd, Family::GaussianIdentity);
    let (iw, _) = fitted(Solver::EmIwls, Family::GaussianIdentity);
    let x = bham::selection::grid(-2.0, 2.0, 21);
    let a = cd.curve(0, &x).unwrap();
    assert!(a.se.is_none());
    let b = iw.curve(0, &x).unwrap();
    let se = b.se.as_ref().unwrap();
    assert!(se.iter().all(|s| *s > 0.0));
    let (lo, hi) = (b.lower().unwrap(), b.upper().unwrap());
    for i in 0..x.len() {
        assert!(lo[i] < b.fit[i] && b.fit[i] < hi[i]);
    }
}
