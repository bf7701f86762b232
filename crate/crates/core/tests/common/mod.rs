#![allow(dead_code)]

use std::path::PathBuf;

use aa_weave::assembly::Assembly;
use aa_weave::manifest::{load_assembly, load_manifest, Loaded};

pub fn hospital(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/hospital")
        .join(file)
}

pub fn base() -> Assembly {
    load_assembly(&hospital("base.json")).expect("base fixture")
}

pub fn manifest(file: &str) -> Loaded {
    load_manifest(&hospital(file)).expect("manifest fixture")
}

pub mod trees;
