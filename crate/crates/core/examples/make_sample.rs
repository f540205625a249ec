//! Regenerates `data/sample/panel.csv` and `data/sample/truth.json`.
//!
//! cargo run -p fuelshock-core --example make_sample

use std::fs::File;
use std::path::Path;

use fuelshock_core::data::write_panel;
use fuelshock_core::params::ParameterSet;
use fuelshock_core::synth::sample_panel;
use fuelshock_core::document::TruthDocument;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample");
    let params = ParameterSet::builtin();
    let sample = sample_panel(&params.fleet)?;
    write_panel(&sample.panel, File::create(dir.join("panel.csv"))?)?;
    let truth = TruthDocument::new(&sample, &params.fleet.ids());
    std::fs::write(dir.join("truth.json"), truth.to_json()? + "\n")?;
    println!("wrote {} rows to {}", sample.panel.len(), dir.display());
    Ok(())
}
