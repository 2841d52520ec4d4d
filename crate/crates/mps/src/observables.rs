//! Named observables: `Ex1<op>` (one-site operator on every site) and
//! `Ex2<opL><opR>=ap` (operator pair on all pairs of sites).

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use tnt_core::{Graph, C64};

use crate::basis::Basis;
use crate::expect;
use crate::state::Mps;
use crate::{Error, Result};

const NAMES: [&str; 7] = ["bdag", "id", "sz", "sp", "sm", "n", "b"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservableKind {
    Site { op: String },
    AllPairs { left: String, right: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservableSpec {
    /// Key as given, e.g. `Ex1N`.
    pub key: String,
    pub kind: ObservableKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObservableValue {
    Site(Vec<C64>),
    Pairs(Array2<C64>),
}

fn split_pair(s: &str) -> Option<(String, String)> {
    let lower = s.to_ascii_lowercase();
    NAMES.iter().find_map(|a| {
        let rest = lower.strip_prefix(a)?;
        NAMES.contains(&rest).then(|| (a.to_string(), rest.to_string()))
    })
}

impl ObservableSpec {
    pub fn parse(key: &str) -> Result<Self> {
        let unsupported = || Error::UnsupportedObservable(key.to_string());
        let kind = if let Some(op) = key.strip_prefix("Ex1") {
            let op = op.to_ascii_lowercase();
            if !NAMES.contains(&op.as_str()) {
                return Err(unsupported());
            }
            ObservableKind::Site { op }
        } else if let Some(rest) = key.strip_prefix("Ex2") {
            let (ops, scope) = rest.split_once('=').ok_or_else(unsupported)?;
            if scope != "ap" {
                return Err(unsupported());
            }
            let (left, right) = split_pair(ops).ok_or_else(unsupported)?;
            ObservableKind::AllPairs { left, right }
        } else {
            return Err(unsupported());
        };
        Ok(ObservableSpec { key: key.to_string(), kind })
    }

    /// Checks that the operators exist in `basis`.
    pub fn check(&self, basis: &Basis) -> Result<()> {
        match &self.kind {
            ObservableKind::Site { op } => basis.operator(op).map(|_| ()),
            ObservableKind::AllPairs { left, right } => basis.operator(left).and(basis.operator(right)).map(|_| ()),
        }
        .map_err(|_| Error::UnsupportedObservable(format!("{} is not defined for this basis", self.key)))
    }

    pub fn evaluate(&self, g: &Graph, psi: &Mps) -> Result<ObservableValue> {
        let basis = psi.basis;
        self.check(&basis)?;
        Ok(match &self.kind {
            ObservableKind::Site { op } => ObservableValue::Site(expect::all_sites(g, psi, &basis.operator(op)?)?),
            ObservableKind::AllPairs { left, right } => {
                ObservableValue::Pairs(expect::all_pairs(g, psi, &basis.operator(left)?, &basis.operator(right)?)?)
            }
        })
    }
}

pub fn evaluate_all(g: &Graph, psi: &Mps, specs: &[ObservableSpec]) -> Result<Vec<ObservableValue>> {
    specs.iter().map(|s| s.evaluate(g, psi)).collect()
}
