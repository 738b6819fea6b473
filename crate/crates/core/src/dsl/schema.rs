//! Variables a criterion may reference.

/// Where a variable's value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    /// Balance-sheet or market item on the firm quarter.
    FirmStock,
    /// Income-statement or cash-flow item on the firm quarter.
    FirmFlow,
    /// Facility usage field from the quarter-end state.
    Usage,
    /// Facility commitment amount.
    FacilityAmount,
    /// Rating ordinal, AAA = 1 .. D = 22.
    Rating,
    /// Quarters since origination.
    Elapsed,
}

const FIRM_STOCKS: &[&str] = &[
    "atq", "ltq", "actq", "lctq", "dlcq", "dlttq", "prccq", "cshoq", "ppentq", "txditcq",
    "pstkl", "cheq", "chq", "seqq", "ceqq", "txpq", "req", "intanq", "apq", "xacc", "drltq",
    "lecrq", "totsrdbt", "securedbt", "totsrsecuredbt", "ds", "dm", "cds5y",
];

const FIRM_FLOWS: &[&str] = &[
    "oibdpq", "xintq", "capxq", "ibq", "dpq", "dvq", "piq", "saleq", "xrentq", "txtq",
];

const USAGE: &[&str] = &["borr", "borrbase", "lc", "unusedav"];

pub fn var_kind(name: &str) -> Option<VarKind> {
    if FIRM_FLOWS.contains(&name) {
        Some(VarKind::FirmFlow)
    } else if FIRM_STOCKS.contains(&name) {
        Some(VarKind::FirmStock)
    } else if USAGE.contains(&name) {
        Some(VarKind::Usage)
    } else {
        match name {
            "facilityamt" => Some(VarKind::FacilityAmount),
            "spltrm" => Some(VarKind::Rating),
            "elapsedq" => Some(VarKind::Elapsed),
            _ => None,
        }
    }
}

pub fn is_known_variable(name: &str) -> bool {
    var_kind(name).is_some()
}

pub fn is_flow_variable(name: &str) -> bool {
    var_kind(name) == Some(VarKind::FirmFlow)
}
