//! Pricing, default probabilities and returns over a whole panel.

use std::collections::BTreeMap;

use creditline_core::contract::{build_loan_paths, Facility, LoanPath};
use creditline_core::dsl::{EvalContext, FacilityConstants};
use creditline_core::ingest::Panel;
use creditline_core::pricing::{resolve_quarter_pricing, PricingError, QuarterPricing};
use creditline_core::returns::{amortization_schedule, compute_return, quarterly_income, ReturnPolicy, ReturnRecord};
use creditline_core::risk::{merton_pd, MertonInputs};
use creditline_core::{FacilityQuarterState, FirmQuarter, Quarter, RateEnvironment};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::PipelineError;

pub type Key = (String, Quarter);

/// Counts of dropped observations by cause.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Exclusions(pub BTreeMap<String, usize>);

impl Exclusions {
    pub fn add(&mut self, cause: impl Into<String>) {
        *self.0.entry(cause.into()).or_insert(0) += 1;
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }
}

/// Owned, ascending firm and state histories for building evaluation contexts.
#[derive(Clone, Debug, Default)]
pub struct Histories {
    pub firms: BTreeMap<String, Vec<FirmQuarter>>,
    pub states: BTreeMap<String, Vec<FacilityQuarterState>>,
}

impl Histories {
    pub fn new(panel: &Panel) -> Self {
        let mut h = Histories::default();
        for ((id, _), fq) in &panel.firms {
            h.firms.entry(id.clone()).or_default().push(fq.clone());
        }
        for ((id, _), s) in &panel.states {
            h.states.entry(id.clone()).or_default().push(s.clone());
        }
        h
    }

    pub fn firm(&self, id: &str) -> &[FirmQuarter] {
        self.firms.get(id).map_or(&[], Vec::as_slice)
    }

    pub fn states(&self, id: &str) -> &[FacilityQuarterState] {
        self.states.get(id).map_or(&[], Vec::as_slice)
    }
}

pub fn constants(f: &Facility) -> FacilityConstants {
    FacilityConstants {
        commitment: f.commitment.0,
        has_borrowing_base: f.has_borrowing_base,
        has_lc_program: f.has_lc_program,
        origination: f.origination_quarter,
    }
}

/// Prices one facility-quarter against the borrower's and facility's histories.
pub fn price_quarter(
    f: &Facility,
    firm_history: &[FirmQuarter],
    state_history: &[FacilityQuarterState],
    state: &FacilityQuarterState,
    rates: &RateEnvironment,
) -> Result<QuarterPricing, PricingError> {
    let ctx = EvalContext::from_histories(state.quarter, firm_history, state_history, constants(f));
    resolve_quarter_pricing(f, &ctx, rates, state)
}

/// A loan path with the first quarter after it ends, if it has ended.
#[derive(Clone, Debug)]
pub struct PathInfo {
    pub path: LoanPath,
    pub termination: Option<Quarter>,
}

pub fn loan_paths(panel: &Panel) -> Result<Vec<PathInfo>, PipelineError> {
    let paths = build_loan_paths(&panel.facilities).map_err(|e| PipelineError::Validation(e.to_string()))?;
    Ok(paths
        .into_iter()
        .map(|path| {
            let termination = path
                .facilities
                .iter()
                .flat_map(|f| panel.state_history(&f.facility_id))
                .find_map(|s| s.termination_quarter);
            PathInfo { path, termination }
        })
        .collect())
}

/// One-year default probability of every firm-quarter with Merton inputs.
pub fn default_probabilities(panel: &Panel) -> BTreeMap<Key, f64> {
    panel
        .firms
        .iter()
        .filter_map(|(k, fq)| {
            let inputs = MertonInputs::from_firm(fq)?;
            merton_pd(&inputs).ok().map(|r| (k.clone(), r.pd))
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct PricedPanel {
    pub pricing: BTreeMap<Key, QuarterPricing>,
    /// Facility-quarters that could not be priced, with the reason.
    pub failures: BTreeMap<Key, String>,
}

pub fn price_panel(panel: &Panel, hist: &Histories) -> PricedPanel {
    let per_facility: Vec<Vec<(Key, Result<QuarterPricing, String>)>> = panel
        .facilities
        .par_iter()
        .map(|f| {
            let firm = hist.firm(&f.borrower_id);
            let states = hist.states(&f.facility_id);
            states
                .iter()
                .map(|s| {
                    let key = (f.facility_id.clone(), s.quarter);
                    let res = match panel.rates.get(&s.quarter) {
                        None => Err("missing rates".to_string()),
                        Some(r) => price_quarter(f, firm, states, s, r).map_err(|e| format!("pricing: {e}")),
                    };
                    (key, res)
                })
                .collect()
        })
        .collect();
    let mut out = PricedPanel::default();
    for (key, res) in per_facility.into_iter().flatten() {
        match res {
            Ok(p) => {
                out.pricing.insert(key, p);
            }
            Err(e) => {
                out.failures.insert(key, e);
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct ReturnSet {
    pub records: BTreeMap<Key, ReturnRecord>,
    /// Facility-quarters without a return, with the reason.
    pub failures: BTreeMap<Key, String>,
}

/// Returns of every priced facility-quarter under `policy`. Expected returns
/// use the borrower's default probability in the same quarter.
pub fn compute_returns(
    panel: &Panel,
    paths: &[PathInfo],
    priced: &PricedPanel,
    pds: &BTreeMap<Key, f64>,
    policy: &ReturnPolicy,
) -> ReturnSet {
    let per_path: Vec<Vec<(Key, Result<ReturnRecord, String>)>> = paths
        .par_iter()
        .map(|info| {
            let sched = amortization_schedule(&info.path, info.termination, policy.upfront_amortization);
            let mut out = Vec::new();
            for f in &info.path.facilities {
                for s in panel.state_history(&f.facility_id) {
                    let key = (f.facility_id.clone(), s.quarter);
                    let res = match (priced.pricing.get(&key), priced.failures.get(&key)) {
                        (Some(p), _) => {
                            let income = quarterly_income(p, f, s, sched.get(&f.facility_id, s.quarter));
                            let pd = pds.get(&(f.borrower_id.clone(), s.quarter)).copied();
                            compute_return(&income, s, f, policy, pd).map_err(|e| format!("returns: {e}"))
                        }
                        (None, Some(e)) => Err(e.clone()),
                        (None, None) => Err("not priced".to_string()),
                    };
                    out.push((key, res));
                }
            }
            out
        })
        .collect();
    let mut out = ReturnSet::default();
    for (key, res) in per_path.into_iter().flatten() {
        match res {
            Ok(r) => {
                out.records.insert(key, r);
            }
            Err(e) => {
                out.failures.insert(key, e);
            }
        }
    }
    out
}
