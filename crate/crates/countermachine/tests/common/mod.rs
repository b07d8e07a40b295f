#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use countermachine::core::{LabelEncoding, MembershipFunction, Rule, TskModel, FEATURE_NAMES};

/// The observed war dyad, in canonical feature order.
pub const OBSERVED_DYAD: [f64; 7] = [0.0, 1.0, 0.4, 0.1, 0.3, 0.1, 0.6];
pub const OBSERVED_DYAD_ARG: &str = "0,1,0.4,0.1,0.3,0.1,0.6";

/// One affine rule, `0.5 - 0.6d + 0.25c - 0.3a - 0.2dem - 0.1e`, that
/// classifies the observed dyad as war (y = 0.65) and can reach y = 0 by
/// moving distance and allies alone.
pub fn war_fixture() -> TskModel {
    let mfs = (0..7)
        .map(|_| vec![MembershipFunction::new(0.5, 0.5).unwrap()])
        .collect();
    TskModel::new(
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        mfs,
        vec![Rule::new(
            vec![0; 7],
            vec![0.5, -0.6, 0.25, 0.0, -0.3, -0.2, -0.1, 0.0],
        )],
        LabelEncoding::default(),
    )
    .unwrap()
}

pub fn write_fixture(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("fixture.json");
    countermachine::model_file::save(&path, &war_fixture()).unwrap();
    path
}

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_countermachine"));
    cmd.env_remove("COUNTERMACHINE_SEED");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}
