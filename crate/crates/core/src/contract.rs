//! Revolving credit facilities and their amendment chains.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dsl::{GridColumn, PricingGrid};
use crate::quarter::Quarter;
use crate::units::{Bps, Usd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BaseRateKind {
    Libor,
    Abr,
}

/// Which LIBOR tenor a LIBOR option references.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LiborTenorRule {
    #[serde(rename = "1m")]
    M1,
    #[serde(rename = "2m")]
    M2,
    #[serde(rename = "3m")]
    M3,
    #[serde(rename = "6m")]
    M6,
    /// The borrower picks among the offered tenors.
    #[serde(rename = "borrower_choice")]
    BorrowerChoice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbrReference {
    Prime,
    FedFunds,
    /// A fixed annual percentage given by the candidate's add-on.
    FixedPct,
    Libor1m,
    Libor3m,
}

/// One rate competing to be the alternate base rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbrCandidate {
    pub reference: AbrReference,
    /// Added to the reference; for `FixedPct` this is the rate itself. Fed
    /// funds defaults to 50 bps when absent, other references to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub add_on: Option<Bps>,
}

impl AbrCandidate {
    pub fn new(reference: AbrReference, add_on: f64) -> Self {
        AbrCandidate { reference, add_on: Some(Bps(add_on)) }
    }

    pub fn effective_add_on(&self) -> Bps {
        self.add_on.unwrap_or(match self.reference {
            AbrReference::FedFunds => Bps(50.0),
            _ => Bps(0.0),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadMode {
    Fixed,
    Grid,
}

/// A margin or fee rate, either fixed or read from the pricing grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadSpec {
    pub mode: SpreadMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_bps: Option<Bps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_column: Option<GridColumn>,
}

impl SpreadSpec {
    pub fn fixed(bps: f64) -> Self {
        SpreadSpec { mode: SpreadMode::Fixed, fixed_bps: Some(Bps(bps)), grid_column: None }
    }

    pub fn grid(column: GridColumn) -> Self {
        SpreadSpec { mode: SpreadMode::Grid, fixed_bps: None, grid_column: Some(column) }
    }

    fn is_consistent(&self) -> bool {
        match self.mode {
            SpreadMode::Fixed => {
                matches!(self.fixed_bps, Some(b) if b.0.is_finite()) && self.grid_column.is_none()
            }
            SpreadMode::Grid => self.fixed_bps.is_none() && self.grid_column.is_some(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseRateOption {
    pub kind: BaseRateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub libor_tenor: Option<LiborTenorRule>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub abr_candidates: Vec<AbrCandidate>,
    /// Greater-of floor on the base rate, annual percent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_floor: Option<f64>,
    /// Greater-of floor on base plus spread, annual percent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_rate_floor: Option<f64>,
    pub spread: SpreadSpec,
}

impl BaseRateOption {
    pub fn libor(tenor: LiborTenorRule, spread: SpreadSpec) -> Self {
        BaseRateOption {
            kind: BaseRateKind::Libor,
            libor_tenor: Some(tenor),
            abr_candidates: Vec::new(),
            rate_floor: None,
            total_rate_floor: None,
            spread,
        }
    }

    pub fn abr(candidates: Vec<AbrCandidate>, spread: SpreadSpec) -> Self {
        BaseRateOption {
            kind: BaseRateKind::Abr,
            libor_tenor: None,
            abr_candidates: candidates,
            rate_floor: None,
            total_rate_floor: None,
            spread,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationFee {
    pub fee: SpreadSpec,
    /// Usage-to-commitment ratio above which the fee applies.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpfrontFee {
    pub amount: Usd,
    pub paid_quarter: Quarter,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeeSchedule {
    /// Charged on the unused amount.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commitment_fee: Option<SpreadSpec>,
    /// Charged on the entire commitment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annual_fee: Option<SpreadSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization_fee: Option<UtilizationFee>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upfront_fee: Option<UpfrontFee>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DefaultTerms {
    /// Added to the spread under an unwaived technical default.
    pub default_margin_bps: Bps,
    /// Only ABR loans may be drawn under an unwaived technical default.
    #[serde(default)]
    pub restrict_to_abr: bool,
}

/// A revolving credit agreement. Amendments are separate records linked
/// through `predecessor_id`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facility {
    pub facility_id: String,
    pub borrower_id: String,
    pub lender_id: String,
    pub origination_quarter: Quarter,
    pub stated_maturity_quarter: Quarter,
    /// Contractual maturity in months when known at finer than quarter grain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maturity_months: Option<u32>,
    pub commitment: Usd,
    pub secured: bool,
    pub syndicated: bool,
    pub restructuring_purpose: bool,
    pub has_borrowing_base: bool,
    pub has_lc_program: bool,
    #[serde(default)]
    pub base_rate_options: Vec<BaseRateOption>,
    /// Annual percent rate of a fixed-rate facility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_rate_pct: Option<f64>,
    #[serde(default)]
    pub fee_schedule: FeeSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pricing_grid: Option<PricingGrid>,
    #[serde(default)]
    pub default_terms: DefaultTerms,
    pub loan_path_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predecessor_id: Option<String>,
}

impl Facility {
    /// Contractual maturity in months, from `maturity_months` or else three
    /// months per quarter between origination and stated maturity.
    pub fn maturity_in_months(&self) -> f64 {
        match self.maturity_months {
            Some(m) => f64::from(m),
            None => 3.0 * f64::from(self.origination_quarter.quarters_until(self.stated_maturity_quarter)),
        }
    }

    pub fn is_fixed_rate(&self) -> bool {
        self.base_rate_options.is_empty() && self.fixed_rate_pct.is_some()
    }

    pub fn offers(&self, kind: BaseRateKind) -> bool {
        self.base_rate_options.iter().any(|o| o.kind == kind)
    }

    fn spread_specs(&self) -> impl Iterator<Item = &SpreadSpec> {
        self.base_rate_options
            .iter()
            .map(|o| &o.spread)
            .chain(self.fee_schedule.commitment_fee.iter())
            .chain(self.fee_schedule.annual_fee.iter())
            .chain(self.fee_schedule.utilization_fee.iter().map(|u| &u.fee))
    }
}

/// Every violated facility invariant; an empty list means the facility is valid.
pub fn validate_facility(f: &Facility) -> Vec<String> {
    let mut v = Vec::new();
    let mut push = |s: &str| v.push(s.to_string());
    if !(f.commitment.0 > 0.0) {
        push("commitment > 0");
    }
    if f.stated_maturity_quarter <= f.origination_quarter {
        push("maturity after origination");
    }
    if f.maturity_months == Some(0) {
        push("maturity months > 0");
    }
    if f.base_rate_options.is_empty() {
        match f.fixed_rate_pct {
            Some(r) if r.is_finite() && r >= 0.0 => {}
            Some(_) => push("fixed rate is a nonnegative percentage"),
            None => push("base rate options present unless fixed-rate"),
        }
    } else if f.fixed_rate_pct.is_some() {
        push("fixed rate only without base rate options");
    }
    for o in &f.base_rate_options {
        match o.kind {
            BaseRateKind::Libor if o.libor_tenor.is_none() || !o.abr_candidates.is_empty() => {
                push("LIBOR option has a tenor rule and no ABR candidates")
            }
            BaseRateKind::Abr if o.abr_candidates.is_empty() || o.libor_tenor.is_some() => {
                push("ABR option has at least one candidate and no tenor rule")
            }
            _ => {}
        }
        if [o.rate_floor, o.total_rate_floor].iter().flatten().any(|x| !(*x >= 0.0)) {
            push("floors are nonnegative");
        }
    }
    for s in f.spread_specs() {
        if !s.is_consistent() {
            push("spread spec matches its mode");
        } else if s.mode == SpreadMode::Grid && f.pricing_grid.is_none() {
            push("grid-priced terms need a pricing grid");
        }
    }
    if let Some(u) = &f.fee_schedule.utilization_fee {
        if !(u.threshold > 0.0 && u.threshold <= 1.0) {
            push("utilization threshold in (0, 1]");
        }
    }
    if let Some(u) = &f.fee_schedule.upfront_fee {
        if !(u.amount.0 >= 0.0) {
            push("upfront amount >= 0");
        }
    }
    if !(f.default_terms.default_margin_bps.0 >= 0.0) {
        push("default margin >= 0");
    }
    if f.predecessor_id.as_deref() == Some(f.facility_id.as_str()) {
        push("facility is not its own predecessor");
    }
    v
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoanPathError {
    #[error("duplicate facility id {0}")]
    Duplicate(String),
    #[error("facility {facility} names unknown predecessor {predecessor}")]
    Dangling { facility: String, predecessor: String },
    #[error("predecessor cycle through facility {0}")]
    Cycle(String),
    #[error("facility {predecessor} has more than one successor ({first}, {second})")]
    Fork { predecessor: String, first: String, second: String },
    #[error("facility {facility} has loan path {found}, its chain uses {expected}")]
    PathIdMismatch { facility: String, expected: String, found: String },
    #[error("loan path {0} is split across unlinked chains")]
    SplitPath(String),
    #[error("facility {0} does not originate after its predecessor")]
    OutOfOrder(String),
}

/// An amendment chain, ordered from the original contract to the latest amendment.
#[derive(Clone, Debug, PartialEq)]
pub struct LoanPath {
    pub path_id: String,
    pub facilities: Vec<Facility>,
}

impl LoanPath {
    /// Exclusive end of facility `i`'s active interval: the successor's
    /// origination, or `termination` for the last contract (`None` = still
    /// active).
    pub fn active_end(&self, i: usize, termination: Option<Quarter>) -> Option<Quarter> {
        let succ = self.facilities.get(i + 1).map(|s| s.origination_quarter);
        match (succ, termination) {
            (Some(s), Some(t)) => Some(s.min(t)),
            (Some(s), None) => Some(s),
            (None, t) => t,
        }
    }

    /// Index of the facility active in `q`.
    pub fn active_at(&self, q: Quarter, termination: Option<Quarter>) -> Option<usize> {
        let i = self.facilities.iter().rposition(|f| f.origination_quarter <= q)?;
        match self.active_end(i, termination) {
            Some(end) if q >= end => None,
            _ => Some(i),
        }
    }

    pub fn start(&self) -> Quarter {
        self.facilities[0].origination_quarter
    }
}

/// Partitions facilities into amendment chains, ordered by path id.
pub fn build_loan_paths(facilities: &[Facility]) -> Result<Vec<LoanPath>, LoanPathError> {
    let mut by_id: BTreeMap<&str, &Facility> = BTreeMap::new();
    for f in facilities {
        if by_id.insert(&f.facility_id, f).is_some() {
            return Err(LoanPathError::Duplicate(f.facility_id.clone()));
        }
    }
    let mut successor: BTreeMap<&str, &str> = BTreeMap::new();
    for f in facilities {
        let Some(p) = f.predecessor_id.as_deref() else { continue };
        if p == f.facility_id {
            return Err(LoanPathError::Cycle(p.to_string()));
        }
        if !by_id.contains_key(p) {
            return Err(LoanPathError::Dangling { facility: f.facility_id.clone(), predecessor: p.to_string() });
        }
        if let Some(first) = successor.insert(p, &f.facility_id) {
            return Err(LoanPathError::Fork {
                predecessor: p.to_string(),
                first: first.to_string(),
                second: f.facility_id.clone(),
            });
        }
    }

    let mut paths: BTreeMap<String, LoanPath> = BTreeMap::new();
    let mut placed: BTreeSet<&str> = BTreeSet::new();
    for root in by_id.values().filter(|f| f.predecessor_id.is_none()) {
        let mut chain = vec![(*root).clone()];
        placed.insert(&root.facility_id);
        let mut cur = root.facility_id.as_str();
        while let Some(next) = successor.get(cur) {
            let f = by_id[next];
            let prev = chain.last().expect("chain starts nonempty");
            if f.loan_path_id != root.loan_path_id {
                return Err(LoanPathError::PathIdMismatch {
                    facility: f.facility_id.clone(),
                    expected: root.loan_path_id.clone(),
                    found: f.loan_path_id.clone(),
                });
            }
            if f.origination_quarter <= prev.origination_quarter {
                return Err(LoanPathError::OutOfOrder(f.facility_id.clone()));
            }
            chain.push(f.clone());
            placed.insert(next);
            cur = next;
        }
        let path = LoanPath { path_id: root.loan_path_id.clone(), facilities: chain };
        if paths.insert(root.loan_path_id.clone(), path).is_some() {
            return Err(LoanPathError::SplitPath(root.loan_path_id.clone()));
        }
    }
    // Every facility has at most one predecessor and one successor, so
    // anything unreachable from a root sits on a cycle.
    if let Some(f) = by_id.keys().find(|id| !placed.contains(*id)) {
        return Err(LoanPathError::Cycle(f.to_string()));
    }
    Ok(paths.into_values().collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dsl::{GridRow, PricingGrid};

    /// A grid-priced syndicated facility: LIBOR with borrower-chosen tenor or
    /// ABR as the greatest of prime and fed funds plus 50 bps, spreads and
    /// commitment fee from a leverage grid, a utilization fee above half usage,
    /// an upfront fee at closing and a default margin.
    pub(crate) fn grid_facility(id: &str) -> Facility {
        let row = |l: f64, a: f64, c: f64| GridRow {
            libor_spread: Some(Bps(l)),
            abr_spread: Some(Bps(a)),
            commitment_fee: Some(Bps(c)),
            ..GridRow::default()
        };
        let grid = PricingGrid::single(
            "(dlcq+dlttq)/oibdpq",
            vec![1.0, 2.0],
            vec![row(100.0, 0.0, 20.0), row(125.0, 25.0, 25.0), row(150.0, 50.0, 30.0)],
        )
        .unwrap();
        Facility {
            facility_id: id.to_string(),
            borrower_id: "TQNT".to_string(),
            lender_id: "BankA".to_string(),
            origination_quarter: Quarter::new(2005, 4),
            stated_maturity_quarter: Quarter::new(2010, 4),
            maturity_months: Some(60),
            commitment: Usd(50.0),
            secured: true,
            syndicated: true,
            restructuring_purpose: false,
            has_borrowing_base: false,
            has_lc_program: true,
            base_rate_options: vec![
                BaseRateOption::libor(LiborTenorRule::BorrowerChoice, SpreadSpec::grid(GridColumn::LiborSpread)),
                BaseRateOption::abr(
                    vec![
                        AbrCandidate { reference: AbrReference::Prime, add_on: None },
                        AbrCandidate { reference: AbrReference::FedFunds, add_on: None },
                    ],
                    SpreadSpec::grid(GridColumn::AbrSpread),
                ),
            ],
            fixed_rate_pct: None,
            fee_schedule: FeeSchedule {
                commitment_fee: Some(SpreadSpec::grid(GridColumn::CommitmentFee)),
                annual_fee: None,
                utilization_fee: Some(UtilizationFee { fee: SpreadSpec::fixed(12.5), threshold: 0.5 }),
                upfront_fee: Some(UpfrontFee { amount: Usd(0.25), paid_quarter: Quarter::new(2005, 4) }),
            },
            pricing_grid: Some(grid),
            default_terms: DefaultTerms { default_margin_bps: Bps(200.0), restrict_to_abr: false },
            loan_path_id: "P-".to_string() + id,
            predecessor_id: None,
        }
    }

    #[test]
    fn grid_facility_is_valid() {
        assert_eq!(validate_facility(&grid_facility("A")), Vec::<String>::new());
    }

    #[test]
    fn boundary_violations() {
        let mut f = grid_facility("A");
        f.commitment = Usd(0.0);
        assert_eq!(validate_facility(&f), vec!["commitment > 0"]);
        let mut f = grid_facility("A");
        f.stated_maturity_quarter = f.origination_quarter;
        assert_eq!(validate_facility(&f), vec!["maturity after origination"]);
        let mut f = grid_facility("A");
        f.pricing_grid = None;
        f.fee_schedule.utilization_fee.as_mut().unwrap().threshold = 0.0;
        let v = validate_facility(&f);
        assert!(v.contains(&"grid-priced terms need a pricing grid".to_string()));
        assert!(v.contains(&"utilization threshold in (0, 1]".to_string()));
        let mut f = grid_facility("A");
        f.base_rate_options[1].abr_candidates.clear();
        f.base_rate_options[0].rate_floor = Some(-1.0);
        assert_eq!(
            validate_facility(&f),
            vec!["floors are nonnegative", "ABR option has at least one candidate and no tenor rule"]
        );
        let mut f = grid_facility("A");
        f.base_rate_options.clear();
        assert_eq!(validate_facility(&f), vec!["base rate options present unless fixed-rate"]);
        f.fixed_rate_pct = Some(6.5);
        assert!(validate_facility(&f).is_empty());
    }

    #[test]
    fn validation_is_pure() {
        let f = grid_facility("A");
        let before = f.clone();
        assert_eq!(validate_facility(&f), validate_facility(&f));
        assert_eq!(f, before);
    }

    fn chain(ids: &[(&str, Option<&str>, i32)]) -> Vec<Facility> {
        ids.iter()
            .map(|(id, pred, q)| {
                let mut f = grid_facility(id);
                f.loan_path_id = "P".to_string();
                f.predecessor_id = pred.map(str::to_string);
                f.origination_quarter = Quarter::new(2005, 1).offset(*q);
                f
            })
            .collect()
    }

    #[test]
    fn direct_chain() {
        let fs = chain(&[("C", Some("B"), 8), ("A", None, 0), ("B", Some("A"), 4)]);
        let paths = build_loan_paths(&fs).unwrap();
        assert_eq!(paths.len(), 1);
        let ids: Vec<&str> = paths[0].facilities.iter().map(|f| f.facility_id.as_str()).collect();
        assert_eq!(ids, ["A", "B", "C"]);
        let p = &paths[0];
        assert_eq!(p.active_end(0, None), Some(Quarter::new(2006, 1)));
        assert_eq!(p.active_end(2, None), None);
        assert_eq!(p.active_end(1, Some(Quarter::new(2006, 2))), Some(Quarter::new(2006, 2)));
        assert_eq!(p.active_at(Quarter::new(2005, 4), None), Some(0));
        assert_eq!(p.active_at(Quarter::new(2006, 1), None), Some(1));
        assert_eq!(p.active_at(Quarter::new(2004, 4), None), None);
        assert_eq!(p.active_at(Quarter::new(2007, 1), Some(Quarter::new(2007, 1))), None);
    }

    #[test]
    fn path_errors() {
        let fs = chain(&[("A", Some("A"), 0)]);
        assert_eq!(build_loan_paths(&fs), Err(LoanPathError::Cycle("A".into())));
        let fs = chain(&[("A", Some("B"), 0), ("B", Some("A"), 1)]);
        assert!(matches!(build_loan_paths(&fs), Err(LoanPathError::Cycle(_))));
        let fs = chain(&[("A", Some("Z"), 0)]);
        assert!(matches!(build_loan_paths(&fs), Err(LoanPathError::Dangling { .. })));
        let fs = chain(&[("A", None, 0), ("B", Some("A"), 1), ("C", Some("A"), 2)]);
        assert!(matches!(build_loan_paths(&fs), Err(LoanPathError::Fork { .. })));
        let fs = chain(&[("A", None, 4), ("B", Some("A"), 4)]);
        assert_eq!(build_loan_paths(&fs), Err(LoanPathError::OutOfOrder("B".into())));
        let fs = chain(&[("A", None, 0), ("B", None, 4)]);
        assert_eq!(build_loan_paths(&fs), Err(LoanPathError::SplitPath("P".into())));
    }

    #[test]
    fn independent_facilities() {
        let paths = build_loan_paths(&[grid_facility("X"), grid_facility("Y")]).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths.iter().all(|p| p.facilities.len() == 1));
    }

    #[test]
    fn json_round_trip() {
        let f = grid_facility("A");
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"commitment\":\"50\""));
        let back: Facility = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
    }
}
