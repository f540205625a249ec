use std::path::PathBuf;

use fuelshock_core::aids::{fit_aids, DemandData, FitOptions, PriceGrouping, RESTRICTION_TOLERANCE};
use fuelshock_core::data::{derive_activity, load_panel, write_panel, PanelSchema};
use fuelshock_core::document::TruthDocument;
use fuelshock_core::params::ParameterSet;
use fuelshock_core::synth::sample_panel;

fn sample_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/sample")
}

#[test]
fn shipped_sample_matches_generator() {
    let params = ParameterSet::builtin();
    let sample = sample_panel(&params.fleet).unwrap();
    let mut buf = Vec::new();
    write_panel(&sample.panel, &mut buf).unwrap();
    let shipped = std::fs::read(sample_dir().join("panel.csv")).unwrap();
    assert!(buf == shipped, "data/sample/panel.csv is stale; rerun the make_sample example");

    let truth = TruthDocument::from_json(&std::fs::read_to_string(sample_dir().join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth, TruthDocument::new(&sample, &params.fleet.ids()));
}

#[test]
fn shipped_sample_loads() {
    let panel = load_panel(sample_dir().join("panel.csv"), &PanelSchema::default()).unwrap();
    assert_eq!(panel.len(), 3100);
    assert_eq!(panel.groups().len(), 310);
    assert_eq!(panel.classes().len(), 10);
}

#[test]
fn sample_fit_recovers_truth() {
    let params = ParameterSet::builtin();
    let panel = load_panel(sample_dir().join("panel.csv"), &PanelSchema::default()).unwrap();
    let derived = derive_activity(&panel, &params.fleet).unwrap();
    let data = DemandData::from_panel(&derived, &params.fleet.ids(), PriceGrouping::Distinct).unwrap();
    let fit = fit_aids(&data, &FitOptions::default()).unwrap();
    assert!(fit.restriction_residuals().max() < RESTRICTION_TOLERANCE);

    let truth_doc =
        TruthDocument::from_json(&std::fs::read_to_string(sample_dir().join("truth.json")).unwrap()).unwrap();
    let truth = fit.map.reduce(&truth_doc.params().unwrap()).unwrap();
    let est = fit.free_parameters();
    let se = fit.free_standard_errors().unwrap();
    let misses = (0..est.len()).filter(|&k| (est[k] - truth[k]).abs() > 3.0 * se[k]).count();
    // 63 free parameters; about 0.2 misses expected at 3 SE.
    assert!(misses <= 2, "{misses} parameters outside 3 SE");
}
