//! Network manifests: the network's shape and the data bound to each term.
//!
//! ```toml
//! name = "digit"
//! input = 64
//! hidden = [32]
//! events = 1
//! outcomes = 10
//!
//! [data]
//! d1 = "idx:images.idx#0"
//! d2 = "vec:[0.0, 0.5, 1.0]"
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{load_idx_images, Activation, NetError, NetSpec, OutputKind};

/// What a term is bound to.
#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    /// Network input.
    Input(Vec<f64>),
    /// A fixed output matrix, used instead of running a network.
    Probs(Vec<Vec<f64>>),
}

/// The data mapping: term text to its binding.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataMap {
    map: HashMap<String, Binding>,
}

impl DataMap {
    pub fn insert(&mut self, term: &str, b: Binding) {
        self.map.insert(term.to_string(), b);
    }

    pub fn get(&self, term: &str) -> Result<&Binding, NetError> {
        self.map.get(term).ok_or_else(|| NetError::UnknownTerm(term.to_string()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkKind {
    Mlp(NetSpec),
    /// Outputs come from `probs:` bindings.
    Fixed { events: usize, outcomes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub kind: NetworkKind,
    pub labels: Option<Vec<String>>,
    pub seed: u64,
    pub data: DataMap,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    name: String,
    #[serde(default)]
    kind: Option<String>,
    input: Option<usize>,
    #[serde(default)]
    hidden: Vec<usize>,
    #[serde(default)]
    activation: Activation,
    events: usize,
    outcomes: usize,
    #[serde(default)]
    output: OutputKind,
    #[serde(default)]
    bias: Option<bool>,
    labels: Option<Vec<String>>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    data: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, NetError> {
        let text = fs::read_to_string(path).map_err(|source| NetError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::parse(&text, &base, &path.display().to_string())
    }

    /// Parses manifest text; relative data paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path, origin: &str) -> Result<Manifest, NetError> {
        let bad = |msg: String| NetError::Manifest { path: origin.to_string(), msg };
        let raw: Raw = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        let kind = match raw.kind.as_deref().unwrap_or("mlp") {
            "mlp" => {
                let input = raw.input.ok_or_else(|| bad("missing `input`".into()))?;
                NetworkKind::Mlp(NetSpec {
                    name: raw.name.clone(),
                    input,
                    hidden: raw.hidden,
                    activation: raw.activation,
                    events: raw.events,
                    outcomes: raw.outcomes,
                    output: raw.output,
                    bias: raw.bias.unwrap_or(true),
                })
            }
            "fixed" => NetworkKind::Fixed { events: raw.events, outcomes: raw.outcomes },
            other => return Err(bad(format!("unknown kind `{other}`"))),
        };
        if let Some(l) = &raw.labels {
            if l.len() != raw.outcomes {
                return Err(bad(format!("{} labels for {} outcomes", l.len(), raw.outcomes)));
            }
        }
        let mut loader = Loader { base: base.to_path_buf(), idx: HashMap::new() };
        let mut data = DataMap::default();
        for (term, spec) in &raw.data {
            let b = loader.binding(spec).map_err(|e| bad(format!("term {term}: {e}")))?;
            match (&kind, &b) {
                (NetworkKind::Mlp(s), Binding::Input(v)) if v.len() != s.input => {
                    return Err(bad(format!("term {term}: input has {} values, expected {}", v.len(), s.input)))
                }
                (NetworkKind::Fixed { events, outcomes }, Binding::Probs(rows))
                    if rows.len() != *events || rows.iter().any(|r| r.len() != *outcomes) =>
                {
                    return Err(bad(format!("term {term}: expected a {events}x{outcomes} matrix")))
                }
                (NetworkKind::Fixed { .. }, Binding::Input(_)) => {
                    return Err(bad(format!("term {term}: a fixed network needs `probs:` bindings")))
                }
                _ => {}
            }
            data.insert(term, b);
        }
        Ok(Manifest { name: raw.name, kind, labels: raw.labels, seed: raw.seed, data })
    }
}

struct Loader {
    base: PathBuf,
    idx: HashMap<PathBuf, Vec<Vec<f64>>>,
}

impl Loader {
    fn binding(&mut self, spec: &str) -> Result<Binding, String> {
        let (scheme, rest) = spec.split_once(':').ok_or("expected `scheme:value`")?;
        match scheme {
            "vec" => Ok(Binding::Input(parse_vector(rest)?)),
            "probs" => {
                let v: Vec<Vec<f64>> = serde_json_like(rest)?;
                Ok(Binding::Probs(v))
            }
            "idx" => {
                let (path, row) = rest.rsplit_once('#').ok_or("expected `idx:<path>#<row>`")?;
                let row: usize = row.trim().parse().map_err(|_| format!("bad row `{row}`"))?;
                let path = self.base.join(path.trim());
                if !self.idx.contains_key(&path) {
                    let (images, _, _) = load_idx_images(&path).map_err(|e| e.to_string())?;
                    self.idx.insert(path.clone(), images);
                }
                let images = &self.idx[&path];
                images.get(row).cloned().map(Binding::Input).ok_or(format!("row {row} beyond {} images", images.len()))
            }
            "grid" => {
                let path = self.base.join(rest.trim());
                let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let values: Result<Vec<f64>, String> = text
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<f64>().map_err(|_| format!("bad number `{s}` in {}", path.display())))
                    .collect();
                Ok(Binding::Input(values?))
            }
            other => Err(format!("unknown binding scheme `{other}`")),
        }
    }
}

fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    let inner = s.strip_prefix('[').and_then(|s| s.strip_suffix(']')).ok_or("expected `[...]`")?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<f64>().map_err(|_| format!("bad number `{x}`")))
        .collect()
}

/// Parses `[[a, b], [c, d]]`.
fn serde_json_like(s: &str) -> Result<Vec<Vec<f64>>, String> {
    let s = s.trim();
    let inner = s.strip_prefix('[').and_then(|s| s.strip_suffix(']')).ok_or("expected `[[...], ...]`")?;
    let mut rows = Vec::new();
    let mut rest = inner.trim();
    while !rest.is_empty() {
        let end = rest.find(']').ok_or("unclosed row")?;
        rows.push(parse_vector(&rest[..=end])?);
        rest = rest[end + 1..].trim_start().trim_start_matches(',').trim_start();
    }
    Ok(rows)
}
