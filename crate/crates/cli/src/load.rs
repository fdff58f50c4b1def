//! Reading programs, manifests, weights and observations from disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use neurasp::ground::{ground, ground_observation, GroundObservation, GroundProgram};
use neurasp::lang::{parse_observations, parse_program};
use neurasp::learn::{term_key, Inputs, NetworkSet};
use neurasp::net::{load_params, Binding, Manifest, Mlp, NetworkKind};
use neurasp::semantics::{OutputMatrix, ProbabilityAssignment, SemanticsError};
use neurasp::solve::{translate, OptMode, SolveOptions};

use crate::{Common, OptModeArg};

pub struct Loaded {
    pub gp: GroundProgram,
    pub nets: NetworkSet,
    pub inputs: Inputs,
}

impl Common {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_models: self.max_models,
            conflict_budget: self.conflict_budget,
            opt_mode: match self.opt_mode {
                OptModeArg::Optimal => OptMode::Optimal,
                OptModeArg::All => OptMode::All,
            },
        }
    }

    pub fn program_path(&self) -> Result<&Path> {
        self.program.as_deref().ok_or_else(|| anyhow!("--program is required"))
    }

    /// The ground program of `--program` with its networks and data
    /// bindings.
    pub fn load(&self) -> Result<Loaded> {
        let path = self.program_path()?;
        self.load_source(&read(path)?, &path.display().to_string())
    }

    pub fn load_source(&self, text: &str, origin: &str) -> Result<Loaded> {
        let program = parse_program(text).with_context(|| origin.to_string())?;
        let gp = translate(&ground(&program).with_context(|| origin.to_string())?);
        if self.dump_ground {
            eprint!("{}", gp.to_source());
        }
        let weights = self.weight_paths()?;
        let mut nets = NetworkSet::default();
        let mut inputs = Inputs::new();
        for m in &self.networks {
            let manifest = Manifest::load(m)?;
            if let NetworkKind::Mlp(spec) = &manifest.kind {
                let mlp = match weights.get(&manifest.name) {
                    Some(w) => Mlp::with_params(spec.clone(), load_params(w, spec)?)?,
                    None => Mlp::new(spec.clone(), manifest.seed)?,
                };
                nets.insert(mlp);
            }
            if inputs.insert(manifest.name.clone(), manifest.data).is_some() {
                bail!("two manifests for network {}", manifest.name);
            }
        }
        if let Some(name) = weights.keys().find(|n| nets.get(n).is_none()) {
            bail!("weights given for {name}, which has no network manifest");
        }
        Ok(Loaded { gp, nets, inputs })
    }

    fn weight_paths(&self) -> Result<BTreeMap<String, PathBuf>> {
        self.weights
            .iter()
            .map(|w| {
                let (name, path) = w.split_once('=').ok_or_else(|| anyhow!("--weights expects NAME=PATH, got {w}"))?;
                Ok((name.to_string(), PathBuf::from(path)))
            })
            .collect()
    }

    /// The observations of `--observations`; none when the flag is absent.
    pub fn observations(&self, gp: &GroundProgram) -> Result<Vec<GroundObservation>> {
        let Some(path) = &self.observations else { return Ok(Vec::new()) };
        let parsed = parse_observations(&read(path)?).with_context(|| path.display().to_string())?;
        parsed
            .iter()
            .map(|o| ground_observation(gp, o).with_context(|| path.display().to_string()))
            .collect()
    }
}

impl Loaded {
    /// Outputs of every network entry. Networks without a manifest output
    /// uniform distributions.
    pub fn assignment(&self) -> Result<ProbabilityAssignment> {
        let mut missing = Vec::new();
        let assign = ProbabilityAssignment::new(&self.gp, |_, e| {
            let name = e.network().unwrap_or_default();
            let bad = |detail: String| SemanticsError::BadMatrix { entry: name.to_string(), detail };
            let Some(data) = self.inputs.get(name) else {
                missing.push(name.to_string());
                let n = e.outcomes();
                return Ok(OutputMatrix { network: name.to_string(), rows: vec![vec![1.0 / n as f64; n]; e.events()] });
            };
            let rows = match data.get(&term_key(e)).map_err(|err| bad(err.to_string()))? {
                Binding::Probs(rows) => rows.clone(),
                Binding::Input(x) => {
                    let mlp = self.nets.get(name).ok_or_else(|| bad("no network for this input".into()))?;
                    mlp.forward(x).map_err(|err| bad(err.to_string()))?.0.rows
                }
            };
            Ok(OutputMatrix { network: name.to_string(), rows })
        })?;
        missing.sort();
        missing.dedup();
        for m in missing {
            log::warn!("network {m} has no manifest; using uniform outputs");
        }
        Ok(assign)
    }
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}
