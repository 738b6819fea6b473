//! Quarterly resolution of spreads and fees.

use serde::{Deserialize, Serialize};

use crate::contract::{AbrReference, BaseRateKind, BaseRateOption, Facility, LiborTenorRule, SpreadMode, SpreadSpec};
use crate::dsl::{resolve_grid, EvalContext, GridColumn, GridRow};
use crate::market::{FacilityQuarterState, RateEnvironment, Tenor};
use crate::quarter::Quarter;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LoanType {
    Libor,
    Abr,
    Fixed,
}

impl From<BaseRateKind> for LoanType {
    fn from(k: BaseRateKind) -> Self {
        match k {
            BaseRateKind::Libor => LoanType::Libor,
            BaseRateKind::Abr => LoanType::Abr,
        }
    }
}

/// Resolved pricing of one facility-quarter. Rates are annual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarterPricing {
    pub facility_id: String,
    pub quarter: Quarter,
    pub chosen_loan_type: LoanType,
    /// Base rate after any base-rate floor, percent.
    pub chosen_base_rate: f64,
    /// Full rate of the chosen loan type, percent.
    pub chosen_full_rate: f64,
    /// Full rate minus base rate, including any default margin.
    pub applicable_spread_bps: f64,
    pub commitment_fee_bps: f64,
    pub annual_fee_bps: f64,
    /// Contractual utilization fee rate, charged only while active.
    pub utilization_fee_bps: f64,
    pub utilization_fee_active: bool,
    pub default_margin_applied_bps: f64,
    pub aisd_bps: f64,
    pub aisu_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PricingError {
    #[error("pricing grid criteria are undefined")]
    GridUndefined,
    #[error("facility uses grid pricing but has no grid")]
    MissingGrid,
    #[error("grid cell has no {0:?} value")]
    MissingGridColumn(GridColumn),
    #[error("no loan type has a computable rate")]
    NoComputableRate,
}

/// Full rate of one base-rate option, after floors and any default margin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptionRate {
    pub kind: BaseRateKind,
    pub base: f64,
    pub spread_bps: f64,
    pub full: f64,
}

fn spread_value(spec: &SpreadSpec, row: Option<&GridRow>) -> Result<f64, PricingError> {
    match spec.mode {
        SpreadMode::Fixed => Ok(spec.fixed_bps.map_or(0.0, |b| b.0)),
        SpreadMode::Grid => {
            let col = spec.grid_column.expect("grid spreads name a column");
            let row = row.ok_or(PricingError::MissingGrid)?;
            row.get(col).map(|b| b.0).ok_or(PricingError::MissingGridColumn(col))
        }
    }
}

/// Base rate of an option before floors, percent.
fn raw_base_rate(o: &BaseRateOption, rates: &RateEnvironment) -> Option<f64> {
    match o.kind {
        BaseRateKind::Libor => match o.libor_tenor? {
            LiborTenorRule::M1 => rates.libor(Tenor::M1),
            LiborTenorRule::M2 => rates.libor(Tenor::M2),
            LiborTenorRule::M3 => rates.libor(Tenor::M3),
            LiborTenorRule::M6 => rates.libor(Tenor::M6),
            LiborTenorRule::BorrowerChoice => {
                Tenor::ALL.iter().filter_map(|t| rates.libor(*t)).min_by(f64::total_cmp)
            }
        },
        BaseRateKind::Abr => o
            .abr_candidates
            .iter()
            .filter_map(|c| {
                let reference = match c.reference {
                    AbrReference::Prime => Some(rates.prime),
                    AbrReference::FedFunds => Some(rates.fed_funds),
                    AbrReference::FixedPct => Some(0.0),
                    AbrReference::Libor1m => rates.libor(Tenor::M1),
                    AbrReference::Libor3m => rates.libor(Tenor::M3),
                }?;
                Some(reference + c.effective_add_on().as_pct())
            })
            .filter(|v| v.is_finite())
            .max_by(f64::total_cmp),
    }
}

fn needs_grid(f: &Facility) -> bool {
    let fs = &f.fee_schedule;
    f.base_rate_options
        .iter()
        .map(|o| &o.spread)
        .chain(fs.commitment_fee.iter())
        .chain(fs.annual_fee.iter())
        .chain(fs.utilization_fee.iter().map(|u| &u.fee))
        .any(|s| s.mode == SpreadMode::Grid)
}

/// Rate of each option that can be priced this quarter, in contract order.
pub fn option_rates(
    f: &Facility,
    row: Option<&GridRow>,
    rates: &RateEnvironment,
    margin_bps: f64,
) -> Vec<OptionRate> {
    f.base_rate_options
        .iter()
        .filter_map(|o| {
            let mut base = raw_base_rate(o, rates)?;
            if let Some(floor) = o.rate_floor {
                base = base.max(floor);
            }
            let spread = spread_value(&o.spread, row).ok()? + margin_bps;
            let mut full = base + spread / 100.0;
            if let Some(floor) = o.total_rate_floor {
                full = full.max(floor);
            }
            Some(OptionRate { kind: o.kind, base, spread_bps: (full - base) * 100.0, full })
        })
        .collect()
}

/// Cheapest option; LIBOR wins ties, then contract order.
pub fn choose(options: &[OptionRate]) -> Option<OptionRate> {
    let libor_first = options
        .iter()
        .filter(|o| o.kind == BaseRateKind::Libor)
        .chain(options.iter().filter(|o| o.kind == BaseRateKind::Abr));
    let mut best: Option<OptionRate> = None;
    for o in libor_first {
        if best.is_none_or(|b| o.full < b.full) {
            best = Some(*o);
        }
    }
    best
}

/// Resolves the loan type a cost-minimizing borrower draws, its spread, and
/// the fee rates in force for the quarter.
pub fn resolve_quarter_pricing(
    f: &Facility,
    ctx: &EvalContext<'_>,
    rates: &RateEnvironment,
    state: &FacilityQuarterState,
) -> Result<QuarterPricing, PricingError> {
    let row = if needs_grid(f) {
        let grid = f.pricing_grid.as_ref().ok_or(PricingError::MissingGrid)?;
        Some(resolve_grid(grid, ctx).ok_or(PricingError::GridUndefined)?)
    } else {
        None
    };
    let margin = if state.unwaived_default() { f.default_terms.default_margin_bps.0 } else { 0.0 };

    let (loan_type, base, full, spread) = if f.is_fixed_rate() {
        let r = f.fixed_rate_pct.unwrap_or(0.0);
        (LoanType::Fixed, r, r, 0.0)
    } else {
        let mut opts = option_rates(f, row, rates, margin);
        if margin > 0.0 && f.default_terms.restrict_to_abr && opts.iter().any(|o| o.kind == BaseRateKind::Abr) {
            opts.retain(|o| o.kind == BaseRateKind::Abr);
        }
        let c = choose(&opts).ok_or(PricingError::NoComputableRate)?;
        (c.kind.into(), c.base, c.full, c.spread_bps)
    };

    let fs = &f.fee_schedule;
    let fee = |s: Option<&SpreadSpec>| s.map_or(Ok(0.0), |s| spread_value(s, row));
    let commitment_fee_bps = fee(fs.commitment_fee.as_ref())?;
    let annual_fee_bps = fee(fs.annual_fee.as_ref())?;
    let utilization_fee_bps = fee(fs.utilization_fee.as_ref().map(|u| &u.fee))?;
    let utilization_fee_active = fs
        .utilization_fee
        .as_ref()
        .is_some_and(|u| state.outstanding_borrowings / f.commitment.0 > u.threshold);

    // The all-in drawn spread quotes the LIBOR margin, or the ABR margin when
    // LIBOR loans are not offered.
    let quoted_kind = if f.offers(BaseRateKind::Libor) { BaseRateKind::Libor } else { BaseRateKind::Abr };
    let quoted_spread = f
        .base_rate_options
        .iter()
        .filter(|o| o.kind == quoted_kind)
        .find_map(|o| spread_value(&o.spread, row).ok())
        .map_or(0.0, |s| s + margin);

    Ok(QuarterPricing {
        facility_id: f.facility_id.clone(),
        quarter: ctx.quarter,
        chosen_loan_type: loan_type,
        chosen_base_rate: base,
        chosen_full_rate: full,
        applicable_spread_bps: spread,
        commitment_fee_bps,
        annual_fee_bps,
        utilization_fee_bps,
        utilization_fee_active,
        default_margin_applied_bps: margin,
        aisd_bps: quoted_spread + annual_fee_bps + utilization_fee_bps,
        aisu_bps: commitment_fee_bps + annual_fee_bps,
    })
}
