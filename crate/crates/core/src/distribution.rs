use serde::Serialize;

use crate::error::{QcmError, Result};
use crate::tensor::{flatten, unflatten};

/// Tolerance on the total mass of a distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Negative probabilities down to this value are rounding noise and print as 0.
pub const NEGATIVE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub outcomes: Vec<String>,
}

/// Dense joint distribution over named finite variables.
///
/// The table is stored row-major over the declared variable order.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    variables: Vec<Variable>,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(variables: Vec<Variable>, probs: Vec<f64>) -> Result<Self> {
        let d = Self::unnormalized(variables, probs)?;
        if let Some((i, &p)) = d.probs.iter().enumerate().find(|(_, &p)| !(p >= -NEGATIVE_CLAMP)) {
            return Err(QcmError::InvalidDistribution(format!(
                "entry {i} is {p:e}, below zero"
            )));
        }
        let total: f64 = d.probs.iter().sum();
        if !((total - 1.0).abs() <= NORMALIZATION_TOL) {
            return Err(QcmError::InvalidDistribution(format!("total mass is {total}")));
        }
        Ok(d)
    }

    /// Builds the table without checking mass; used for weights before normalization.
    pub(crate) fn unnormalized(variables: Vec<Variable>, probs: Vec<f64>) -> Result<Self> {
        for (i, v) in variables.iter().enumerate() {
            if v.outcomes.is_empty() {
                return Err(QcmError::InvalidDistribution(format!(
                    "variable {} has no outcomes",
                    v.name
                )));
            }
            if variables[..i].iter().any(|w| w.name == v.name) {
                return Err(QcmError::InvalidDistribution(format!(
                    "variable {} declared twice",
                    v.name
                )));
            }
        }
        let size: usize = variables.iter().map(|v| v.outcomes.len()).product();
        if size != probs.len() {
            return Err(QcmError::DimensionMismatch {
                context: "distribution table".into(),
                expected: size,
                found: probs.len(),
            });
        }
        Ok(Self { variables, probs })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.outcomes.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn variable_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| QcmError::UnknownVariable(name.to_string()))
    }

    /// Outcome indices of the `flat`-th table entry.
    pub fn outcome_tuple(&self, flat: usize) -> Vec<usize> {
        unflatten(flat, &self.cardinalities())
    }

    /// Probability of a full outcome-index tuple.
    pub fn prob(&self, tuple: &[usize]) -> f64 {
        self.probs[flatten(tuple, &self.cardinalities())]
    }

    /// Probability of a full tuple given by outcome labels, in variable order.
    pub fn prob_of(&self, labels: &[&str]) -> Result<f64> {
        if labels.len() != self.variables.len() {
            return Err(QcmError::DimensionMismatch {
                context: "outcome tuple".into(),
                expected: self.variables.len(),
                found: labels.len(),
            });
        }
        let mut tuple = Vec::with_capacity(labels.len());
        for (v, label) in self.variables.iter().zip(labels) {
            let k = v.outcomes.iter().position(|o| o == label).ok_or_else(|| {
                QcmError::InvalidDistribution(format!("`{label}` is not an outcome of {}", v.name))
            })?;
            tuple.push(k);
        }
        Ok(self.prob(&tuple))
    }

    /// Marginal on the named variables, in the given order.
    pub fn marginal(&self, names: &[&str]) -> Result<Distribution> {
        let idx = names
            .iter()
            .map(|n| self.variable_index(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.marginal_indices(&idx))
    }

    pub(crate) fn marginal_indices(&self, idx: &[usize]) -> Distribution {
        let cards = self.cardinalities();
        let sub_cards: Vec<usize> = idx.iter().map(|&i| cards[i]).collect();
        let mut probs = vec![0.0; sub_cards.iter().product()];
        for (flat, &p) in self.probs.iter().enumerate() {
            let t = unflatten(flat, &cards);
            let sub: Vec<usize> = idx.iter().map(|&i| t[i]).collect();
            probs[flatten(&sub, &sub_cards)] += p;
        }
        Distribution {
            variables: idx.iter().map(|&i| self.variables[i].clone()).collect(),
            probs,
        }
    }

    /// `P(target | given = labels)` as a distribution over `target`.
    pub fn conditional(&self, target: &[&str], given: &[(&str, &str)]) -> Result<Distribution> {
        let mut names: Vec<&str> = target.to_vec();
        names.extend(given.iter().map(|(n, _)| *n));
        let joint = self.marginal(&names)?;
        let gcards: Vec<usize> = joint.cardinalities()[target.len()..].to_vec();
        let mut gtuple = Vec::new();
        for (k, (name, label)) in given.iter().enumerate() {
            let v = &joint.variables[target.len() + k];
            gtuple.push(v.outcomes.iter().position(|o| o == label).ok_or_else(|| {
                QcmError::InvalidDistribution(format!("`{label}` is not an outcome of {name}"))
            })?);
        }
        let g = flatten(&gtuple, &gcards);
        let block: usize = gcards.iter().product();
        let probs: Vec<f64> = (0..joint.probs.len() / block)
            .map(|t| joint.probs[t * block + g])
            .collect();
        let mass: f64 = probs.iter().sum();
        if !(mass > 0.0) {
            return Err(QcmError::InvalidDistribution(
                "conditioning event has probability zero".into(),
            ));
        }
        Ok(Distribution {
            variables: joint.variables[..target.len()].to_vec(),
            probs: probs.into_iter().map(|p| p / mass).collect(),
        })
    }

    /// Largest entrywise difference; infinite if the variable lists differ.
    pub fn max_abs_diff(&self, other: &Distribution) -> f64 {
        if self.variables != other.variables {
            return f64::INFINITY;
        }
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copy with rounding-noise negatives set to zero.
    pub fn clamped(&self) -> Distribution {
        Distribution {
            variables: self.variables.clone(),
            probs: self
                .probs
                .iter()
                .map(|&p| if p < 0.0 && p >= -NEGATIVE_CLAMP { 0.0 } else { p })
                .collect(),
        }
    }
}
