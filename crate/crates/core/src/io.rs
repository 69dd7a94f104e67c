//! JSON model files.
//!
//! ```json
//! {
//!   "customers": ["1", "2", "3"],
//!   "servers": ["1'", "2'", "3'"],
//!   "edges": [["1", "2'"], ["1", "3'"], ["2", "1'"], ["2", "2'"], ["3", "1'"]],
//!   "mu": {"1|1'": "4/25", "1|2'": "4/25"},
//!   "priorities": {"A": [[0, 2, 1], [2, 1, 0], [1, 0, 0]], "B": [[0, 2, 1], [2, 1, 0], [1, 0, 0]]}
//! }
//! ```
//!
//! `mu` maps `"customer|server"` to a rational literal; missing pairs are
//! zero. The arrival graph defaults to the support of `mu`; `arrival_edges`
//! may be given instead of (or in addition to) `mu`. Written files always
//! carry `arrival_edges` and use `p/q` literals.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArrivalMeasure, MatchingStructure, ModelError, RawStructure};
use crate::policies::{PolicyError, Priorities};
use crate::rational::{self, ParseRationalError, Rational};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad probability for `{key}`: {source}")]
    Rational { key: String, source: ParseRationalError },
    #[error("bad mu key `{0}`; expected `customer|server`")]
    BadKey(String),
    #[error("model file needs `mu` or `arrival_edges`")]
    NoArrivals,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<u32>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub customers: Vec<String>,
    pub servers: Vec<String>,
    pub edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_edges: Option<Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<IndexMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priorities: Option<PriorityFile>,
}

/// A validated model: structure, optional measure and optional priorities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub structure: MatchingStructure,
    pub measure: Option<ArrivalMeasure>,
    pub priorities: Option<Priorities>,
}

impl Model {
    pub fn from_file(file: ModelFile) -> Result<Model, IoError> {
        let (nc, ns) = (file.customers.len(), file.servers.len());
        let measure_table = match &file.mu {
            None => None,
            Some(mu) => {
                let mut table = vec![vec![rational::zero(); ns]; nc];
                for (key, value) in mu {
                    let (c, s) = key.split_once('|').ok_or_else(|| IoError::BadKey(key.clone()))?;
                    let ci = file.customers.iter().position(|l| l == c).ok_or_else(|| IoError::BadKey(key.clone()))?;
                    let si = file.servers.iter().position(|l| l == s).ok_or_else(|| IoError::BadKey(key.clone()))?;
                    let p = rational::parse(value).map_err(|source| IoError::Rational { key: key.clone(), source })?;
                    table[ci][si] += p;
                }
                Some(table)
            }
        };
        let arrival_edges = match (&file.arrival_edges, &measure_table) {
            (Some(f), _) => f.clone(),
            (None, Some(table)) => {
                let mut f = Vec::new();
                for (c, row) in table.iter().enumerate() {
                    for (s, p) in row.iter().enumerate() {
                        if *p != rational::zero() {
                            f.push((file.customers[c].clone(), file.servers[s].clone()));
                        }
                    }
                }
                f
            }
            (None, None) => return Err(IoError::NoArrivals),
        };
        let structure = MatchingStructure::new(RawStructure {
            customers: file.customers.clone(),
            servers: file.servers.clone(),
            matching_edges: file.edges.clone(),
            arrival_edges,
        })?;
        let measure = match measure_table {
            Some(t) => Some(ArrivalMeasure::for_structure(&structure, t)?),
            None => None,
        };
        let priorities = match file.priorities {
            Some(p) => Some(Priorities::new(&structure, p.a, p.b)?),
            None => None,
        };
        Ok(Model { structure, measure, priorities })
    }

    pub fn to_file(&self) -> ModelFile {
        let st = &self.structure;
        let label = |(c, s): (usize, usize)| (st.customer_label(c).to_string(), st.server_label(s).to_string());
        let mu = self.measure.as_ref().map(|m| {
            m.support()
                .into_iter()
                .map(|(c, s)| {
                    (format!("{}|{}", st.customer_label(c), st.server_label(s)), rational::to_fraction_string(m.prob(c, s)))
                })
                .collect()
        });
        ModelFile {
            customers: st.customers().to_vec(),
            servers: st.servers().to_vec(),
            edges: st.matching_edges().into_iter().map(label).collect(),
            arrival_edges: Some(st.arrival_edges().into_iter().map(label).collect()),
            mu,
            priorities: self.priorities.as_ref().map(|p| PriorityFile { a: p.customer.clone(), b: p.server.clone() }),
        }
    }

    pub fn with_measure(&self, measure: ArrivalMeasure) -> Result<Model, IoError> {
        let structure = self.structure.with_arrivals_from(&measure)?;
        Ok(Model { structure, measure: Some(measure), priorities: self.priorities.clone() })
    }
}

pub fn parse_model(text: &str) -> Result<Model, IoError> {
    Model::from_file(serde_json::from_str(text)?)
}

pub fn load_model(path: &Path) -> Result<Model, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })?;
    parse_model(&text)
}

/// Pretty JSON with one edge, probability or priority row per line.
pub fn model_to_json(model: &Model) -> String {
    let file = model.to_file();
    let pairs = |v: &[(String, String)]| -> String {
        v.iter().map(|p| format!("    {}", j(p))).collect::<Vec<_>>().join(",\n")
    };
    let mut fields = vec![
        format!("  \"customers\": {}", j(&file.customers)),
        format!("  \"servers\": {}", j(&file.servers)),
        format!("  \"edges\": [\n{}\n  ]", pairs(&file.edges)),
    ];
    if let Some(f) = &file.arrival_edges {
        fields.push(format!("  \"arrival_edges\": [\n{}\n  ]", pairs(f)));
    }
    if let Some(mu) = &file.mu {
        let body: Vec<String> = mu.iter().map(|(k, v)| format!("    {}: {}", j(k), j(v))).collect();
        fields.push(format!("  \"mu\": {{\n{}\n  }}", body.join(",\n")));
    }
    if let Some(p) = &file.priorities {
        fields.push(format!("  \"priorities\": {{\n    \"A\": {},\n    \"B\": {}\n  }}", j(&p.a), j(&p.b)));
    }
    format!("{{\n{}\n}}\n", fields.join(",\n"))
}

fn j<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("model files serialize")
}

/// `p/q` for a measure entry; kept here so callers need not import `rational`.
pub fn format_probability(p: &Rational) -> String {
    rational::to_fraction_string(p)
}

/// Models shipped with the crate, by name.
pub fn builtin_model(name: &str) -> Option<Model> {
    let text = match name {
        "nn" => include_str!("../fixtures/nn.json"),
        "nnn" => include_str!("../fixtures/nnn.json"),
        "nn-fdiag" => include_str!("../fixtures/nn-fdiag.json"),
        "nn-fanti" => include_str!("../fixtures/nn-fanti.json"),
        "nn-counterexample" => include_str!("../fixtures/nn-counterexample.json"),
        _ => return None,
    };
    Some(parse_model(text).expect("built-in fixtures are valid"))
}

pub const BUILTIN_MODELS: [&str; 5] = ["nn", "nnn", "nn-fdiag", "nn-fanti", "nn-counterexample"];
