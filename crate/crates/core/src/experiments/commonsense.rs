//! Toy cars: box labels from a stubbed detector combined with default
//! reasoning about relative size.

use std::collections::BTreeMap;
use std::path::Path;

use super::{atoms_of, compile};
use crate::learn::{forward, Inputs, NetworkSet};
use crate::net::Manifest;
use crate::semantics::{map_inference, MapStrategy};
use crate::solve::SolveOptions;
use crate::Error;

pub const PROGRAM: &str = include_str!("../../../../fixtures/commonsense/program.lp");
pub const MANIFEST: &str = include_str!("../../../../fixtures/commonsense/label.toml");

/// The label bindings of the bundled manifest.
pub fn inputs() -> Result<Inputs, Error> {
    let m = Manifest::parse(MANIFEST, Path::new("."), "label.toml")?;
    Ok(BTreeMap::from([(m.name, m.data)]))
}

/// `(image, box)` pairs concluded to be toys in the most probable model.
pub fn toys() -> Result<Vec<(String, String)>, Error> {
    let gp = compile(PROGRAM)?;
    let (assign, _) = forward(&gp, &NetworkSet::default(), &inputs()?)?;
    let model = map_inference(&gp, None, &assign, MapStrategy::Optimize, &SolveOptions::default())?;
    let mut out: Vec<(String, String)> =
        atoms_of(&gp, &model, "toy").into_iter().map(|a| (a[0].clone(), a[1].clone())).collect();
    out.sort();
    Ok(out)
}
