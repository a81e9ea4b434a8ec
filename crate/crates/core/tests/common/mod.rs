#![allow(dead_code)]

use std::path::PathBuf;

use distinct::synth::{generate_cohort, PopulationSpec};
use distinct::{Cohort, CovariateSchema};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn schema() -> CovariateSchema {
    CovariateSchema::load(fixture("schema.json")).expect("bundled schema")
}

pub fn spec(name: &str) -> PopulationSpec {
    PopulationSpec::load(fixture(name)).expect("bundled population spec")
}

/// Source and target analogues loaded through the bundled schema.
pub fn analogues(schema: &CovariateSchema) -> (Cohort, Cohort) {
    let source = generate_cohort(&spec("nlst_analogue.json"), schema).expect("source analogue");
    let target = generate_cohort(&spec("vlst_analogue.json"), schema).expect("target analogue");
    (source, target)
}
