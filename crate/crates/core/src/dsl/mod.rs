//! Pricing-criterion formulas and pricing grids.
//!
//! Criteria are small arithmetic formulas over accounting mnemonics and
//! facility usage fields, e.g. `(dlcq+dlttq)/oibdpq`. A grid maps the value of
//! one to three criteria onto a row of spreads and fees.

mod ast;
mod eval;
mod grid;
mod parser;
mod schema;

pub use ast::{BinOp, CriterionExpr, Expr};
pub use eval::{evaluate, EvalContext, FacilityConstants};
pub use grid::{resolve_grid, GridColumn, GridError, GridRow, PricingGrid};
pub use parser::{parse_criterion, DslError};
pub use schema::{is_flow_variable, is_known_variable, var_kind, VarKind};

/// The bundled reference criteria, one `ID<TAB>formula` per line.
pub const REFERENCE_CRITERIA: &str = include_str!("criteria_c1.txt");

/// `(id, formula)` pairs from [`REFERENCE_CRITERIA`].
pub fn reference_criteria() -> Vec<(&'static str, &'static str)> {
    REFERENCE_CRITERIA
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('\t'))
        .map(|(id, f)| (id.trim(), f.trim()))
        .collect()
}
