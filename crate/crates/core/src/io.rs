//! JSON formats for systems, costs and simulator classes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows};
use crate::lqg::{CostSpec, LqgSystem};
use crate::model_class::{instantiate_lowrank, Coefficients, LowRankSpec, SimulatorClass, ValidationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

impl SystemSpec {
    pub fn to_system(&self) -> Result<LqgSystem> {
        LqgSystem::new(from_rows(&self.a)?, from_rows(&self.b)?, from_rows(&self.c)?)
    }

    pub fn from_system(name: Option<String>, s: &LqgSystem) -> Self {
        Self {
            name,
            a: to_rows(&s.a),
            b: to_rows(&s.b),
            c: to_rows(&s.c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpecJson {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
}

impl CostSpecJson {
    pub fn to_cost(&self) -> Result<CostSpec> {
        CostSpec::new(from_rows(&self.q)?, from_rows(&self.r)?)
    }

    pub fn from_cost(c: &CostSpec) -> Self {
        Self {
            q: to_rows(&c.q),
            r: to_rows(&c.r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankJson {
    pub bases: Vec<SystemSpec>,
    pub bounds: Vec<(f64, f64)>,
    pub coefficients: Coefficients,
}

/// A class given either as explicit members or as a low-rank family.
/// Without a cost the identity `Q`, `R` is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    #[serde(default)]
    pub cost: Option<CostSpecJson>,
    #[serde(default)]
    pub members: Vec<SystemSpec>,
    #[serde(default)]
    pub lowrank: Option<LowRankJson>,
    /// The true system, by member name or index, or given explicitly.
    #[serde(default)]
    pub truth: Option<TruthSpec>,
    #[serde(default)]
    pub validation: Option<ValidationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthSpec {
    Index(usize),
    Name(String),
    System(SystemSpec),
}

impl ClassSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    fn dims(&self) -> Result<(usize, usize)> {
        let first = self
            .members
            .first()
            .or_else(|| self.lowrank.as_ref().and_then(|l| l.bases.first()))
            .ok_or_else(|| Error::InvalidInput("class spec has no members".into()))?
            .to_system()?;
        Ok((first.p(), first.m()))
    }

    pub fn cost(&self) -> Result<CostSpec> {
        match &self.cost {
            Some(c) => c.to_cost(),
            None => {
                let (p, m) = self.dims()?;
                Ok(CostSpec::identity(p, m))
            }
        }
    }

    pub fn candidates(&self) -> Result<Vec<(String, LqgSystem)>> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, s)| Ok((s.name.clone().unwrap_or_else(|| format!("m{i}")), s.to_system()?)))
            .collect()
    }

    pub fn build(&self) -> Result<SimulatorClass> {
        let cost = self.cost()?;
        let config = self.validation.unwrap_or_default();
        match (&self.lowrank, self.members.is_empty()) {
            (Some(lr), true) => {
                let bases = lr.bases.iter().map(SystemSpec::to_system).collect::<Result<Vec<_>>>()?;
                let spec = LowRankSpec::new(bases, lr.bounds.clone())?;
                instantiate_lowrank(&spec, &lr.coefficients, cost, config)
            }
            (None, false) => SimulatorClass::from_candidates(self.candidates()?, cost, config),
            (Some(_), false) => Err(Error::InvalidInput("give either members or lowrank, not both".into())),
            (None, true) => Err(Error::InvalidInput("class spec has no members".into())),
        }
    }

    /// The true system. A member index or name refers to the candidate list,
    /// so a truth that fails validation is still returned.
    pub fn truth_system(&self, class: &SimulatorClass) -> Result<Option<LqgSystem>> {
        let by_candidate = |idx: usize| -> Result<LqgSystem> {
            if let Some(m) = class.members.iter().find(|m| m.id == idx) {
                return Ok(m.system().clone());
            }
            if let Some(p) = class.pruned.iter().find(|p| p.id == idx) {
                return Ok(p.system.clone());
            }
            Err(Error::InvalidInput(format!("truth index {idx} out of range")))
        };
        match &self.truth {
            None => Ok(None),
            Some(TruthSpec::Index(i)) => by_candidate(*i).map(Some),
            Some(TruthSpec::Name(name)) => {
                if let Some(m) = class.members.iter().find(|m| &m.name == name) {
                    return Ok(Some(m.system().clone()));
                }
                if let Some(p) = class.pruned.iter().find(|p| &p.name == name) {
                    return Ok(Some(p.system.clone()));
                }
                Err(Error::InvalidInput(format!("no member named {name:?}")))
            }
            Some(TruthSpec::System(s)) => s.to_system().map(Some),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_spec_round_trip() {
        let json = r#"{
            "members": [
                {"name": "a", "A": [[0.5]], "B": [[1.0]], "C": [[1.0]]},
                {"name": "bad", "A": [[1.5]], "B": [[1.0]], "C": [[1.0]]}
            ],
            "truth": "a"
        }"#;
        let spec: ClassSpec = serde_json::from_str(json).unwrap();
        let class = spec.build().unwrap();
        assert_eq!(class.len(), 1);
        assert_eq!(class.pruned.len(), 1);
        assert_eq!(spec.truth_system(&class).unwrap().unwrap(), LqgSystem::scalar(0.5, 1.0, 1.0));
        let back = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ClassSpec>(&back).unwrap(), spec);
    }

    #[test]
    fn lowrank_class() {
        let json = r#"{
            "lowrank": {
                "bases": [{"A": [[1.0]], "B": [[1.0]], "C": [[1.0]]}],
                "bounds": [[0.2, 0.6]],
                "coefficients": {"grid": [3]}
            },
            "truth": 1
        }"#;
        let spec: ClassSpec = serde_json::from_str(json).unwrap();
        let class = spec.build().unwrap();
        assert_eq!(class.len(), 3);
        let truth = spec.truth_system(&class).unwrap().unwrap();
        assert!((truth.a[(0, 0)] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn mismatched_rows_rejected() {
        let s = SystemSpec {
            name: None,
            a: vec![vec![1.0, 0.0], vec![0.0]],
            b: vec![vec![1.0]],
            c: vec![vec![1.0]],
        };
        assert!(s.to_system().is_err());
    }
}
