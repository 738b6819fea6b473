use serde::{Deserialize, Serialize};

use crate::units::Bps;

use super::ast::CriterionExpr;
use super::eval::{evaluate, EvalContext};
use super::parser::{parse_criterion, DslError};

/// Column of a grid row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridColumn {
    LiborSpread,
    AbrSpread,
    CommitmentFee,
    AnnualFee,
    UtilizationFee,
}

/// Spreads and fees of one grid cell; absent columns are not priced by the grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub libor_spread: Option<Bps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abr_spread: Option<Bps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commitment_fee: Option<Bps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annual_fee: Option<Bps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization_fee: Option<Bps>,
}

impl GridRow {
    pub fn get(&self, column: GridColumn) -> Option<Bps> {
        match column {
            GridColumn::LiborSpread => self.libor_spread,
            GridColumn::AbrSpread => self.abr_spread,
            GridColumn::CommitmentFee => self.commitment_fee,
            GridColumn::AnnualFee => self.annual_fee,
            GridColumn::UtilizationFee => self.utilization_fee,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("a grid needs one to three criteria, got {0}")]
    CriteriaCount(usize),
    #[error("criterion {index}: {source}")]
    Criterion { index: usize, source: DslError },
    #[error("levels for {criteria} criteria given for {levels}")]
    LevelsCount { criteria: usize, levels: usize },
    #[error("thresholds of criterion {0} must be finite and strictly increasing")]
    Thresholds(usize),
    #[error("expected {expected} cells, got {got}")]
    CellCount { expected: usize, got: usize },
}

/// Serialized form: formulas as text, thresholds per criterion, and cells as a
/// dense row-major array (the last criterion varies fastest).
#[derive(Clone, Debug, Serialize, Deserialize)]
struct GridDef {
    criteria: Vec<String>,
    levels: Vec<Vec<f64>>,
    cells: Vec<GridRow>,
}

/// A pricing grid over one to three criteria.
///
/// Criterion `i` with thresholds `[c1, .., cn]` has `n + 1` levels
/// `(-inf, c1), [c1, c2), .., [cn, +inf)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDef", into = "GridDef")]
pub struct PricingGrid {
    criteria: Vec<CriterionExpr>,
    thresholds: Vec<Vec<f64>>,
    cells: Vec<GridRow>,
}

impl PricingGrid {
    pub fn new(criteria: Vec<CriterionExpr>, thresholds: Vec<Vec<f64>>, cells: Vec<GridRow>) -> Result<Self, GridError> {
        if criteria.is_empty() || criteria.len() > 3 {
            return Err(GridError::CriteriaCount(criteria.len()));
        }
        if thresholds.len() != criteria.len() {
            return Err(GridError::LevelsCount { criteria: criteria.len(), levels: thresholds.len() });
        }
        for (i, t) in thresholds.iter().enumerate() {
            if t.iter().any(|x| !x.is_finite()) || t.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GridError::Thresholds(i));
            }
        }
        let expected: usize = thresholds.iter().map(|t| t.len() + 1).product();
        if cells.len() != expected {
            return Err(GridError::CellCount { expected, got: cells.len() });
        }
        Ok(PricingGrid { criteria, thresholds, cells })
    }

    /// Single-criterion grid from a formula.
    pub fn single(formula: &str, thresholds: Vec<f64>, cells: Vec<GridRow>) -> Result<Self, GridError> {
        let c = parse_criterion(formula).map_err(|source| GridError::Criterion { index: 0, source })?;
        Self::new(vec![c], vec![thresholds], cells)
    }

    pub fn criteria(&self) -> &[CriterionExpr] {
        &self.criteria
    }

    pub fn thresholds(&self) -> &[Vec<f64>] {
        &self.thresholds
    }

    pub fn cells(&self) -> &[GridRow] {
        &self.cells
    }

    /// Level of `value` on criterion `i`: the number of thresholds at or below it.
    pub fn level(&self, i: usize, value: f64) -> usize {
        self.thresholds[i].partition_point(|t| *t <= value)
    }

    /// Cell at a level tuple.
    pub fn cell(&self, levels: &[usize]) -> Option<&GridRow> {
        if levels.len() != self.thresholds.len() {
            return None;
        }
        let mut idx = 0;
        for (l, t) in levels.iter().zip(&self.thresholds) {
            if *l > t.len() {
                return None;
            }
            idx = idx * (t.len() + 1) + l;
        }
        self.cells.get(idx)
    }

    /// Cell for a vector of criterion values.
    pub fn lookup(&self, values: &[f64]) -> Option<&GridRow> {
        if values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let levels: Vec<usize> = values.iter().enumerate().map(|(i, v)| self.level(i, *v)).collect();
        self.cell(&levels)
    }
}

impl TryFrom<GridDef> for PricingGrid {
    type Error = GridError;

    fn try_from(def: GridDef) -> Result<Self, GridError> {
        let criteria = def
            .criteria
            .iter()
            .enumerate()
            .map(|(index, s)| parse_criterion(s).map_err(|source| GridError::Criterion { index, source }))
            .collect::<Result<Vec<_>, _>>()?;
        PricingGrid::new(criteria, def.levels, def.cells)
    }
}

impl From<PricingGrid> for GridDef {
    fn from(g: PricingGrid) -> Self {
        GridDef {
            criteria: g.criteria.iter().map(|c| c.to_string()).collect(),
            levels: g.thresholds,
            cells: g.cells,
        }
    }
}

/// Evaluates every criterion and returns the matching cell, or `None` if any
/// criterion is undefined.
pub fn resolve_grid<'g>(grid: &'g PricingGrid, ctx: &EvalContext<'_>) -> Option<&'g GridRow> {
    let values: Option<Vec<f64>> = grid.criteria.iter().map(|c| evaluate(c, ctx)).collect();
    grid.lookup(&values?)
}
