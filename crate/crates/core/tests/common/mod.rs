#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use lmpinfer::case::{parse_matpower_case, parse_native_case, GridCase};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> GridCase {
    let text = std::fs::read_to_string(fixture_path(name)).unwrap();
    if name.ends_with(".m") {
        parse_matpower_case(&text).unwrap()
    } else {
        parse_native_case(&text).unwrap()
    }
}

pub fn two_gen() -> GridCase {
    fixture("two_gen.json")
}

pub fn three_bus() -> GridCase {
    fixture("three_bus_congested.json")
}

pub fn case14() -> GridCase {
    fixture("case14.m")
}

pub fn case30() -> GridCase {
    fixture("case30.m")
}
