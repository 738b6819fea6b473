use std::collections::BTreeSet;

use crate::EstimationError;

/// A named regressor.
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column { name: name.into(), values }
    }
}

/// A categorical variable expanded into indicator columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
    /// Level left out of the expansion; the smallest level when `None`.
    pub reference: Option<String>,
}

impl Factor {
    pub fn new(name: impl Into<String>, levels: Vec<String>) -> Self {
        Factor { name: name.into(), levels, reference: None }
    }

    pub fn with_reference(mut self, level: impl Into<String>) -> Self {
        self.reference = Some(level.into());
        self
    }

    /// Indicator columns for every level except the reference.
    pub fn dummies(&self) -> Vec<Column> {
        let distinct: BTreeSet<&str> = self.levels.iter().map(String::as_str).collect();
        let reference = self
            .reference
            .as_deref()
            .filter(|r| distinct.contains(r))
            .or_else(|| distinct.iter().next().copied());
        distinct
            .iter()
            .filter(|l| Some(**l) != reference)
            .map(|l| {
                let v = self.levels.iter().map(|x| if x == l { 1.0 } else { 0.0 }).collect();
                Column::new(format!("{}={}", self.name, l), v)
            })
            .collect()
    }
}

/// Intercept, regressors, then fixed-effect indicators, in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

pub(crate) const INTERCEPT: &str = "_cons";

impl Design {
    pub fn build(n: usize, regressors: &[Column], factors: &[Factor]) -> Result<Design, EstimationError> {
        let mut names = vec![INTERCEPT.to_string()];
        let mut columns = vec![vec![1.0; n]];
        for c in regressors {
            if c.values.len() != n {
                return Err(EstimationError::DimensionMismatch { name: c.name.clone(), expected: n, got: c.values.len() });
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(EstimationError::NonFinite(c.name.clone()));
            }
            names.push(c.name.clone());
            columns.push(c.values.clone());
        }
        for f in factors {
            if f.levels.len() != n {
                return Err(EstimationError::DimensionMismatch { name: f.name.clone(), expected: n, got: f.levels.len() });
            }
            for d in f.dummies() {
                names.push(d.name);
                columns.push(d.values);
            }
        }
        Ok(Design { names, columns })
    }

    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}
