//! Quarterly coupon income and promised and expected returns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contract::{Facility, LoanPath};
use crate::market::FacilityQuarterState;
use crate::pricing::QuarterPricing;
use crate::quarter::Quarter;

/// Credit conversion factor applied to the unused commitment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcfRule {
    /// 0.5 when the maturity exceeds 12 months, else 0.
    #[default]
    Gt12mHalfElseZero,
    /// 0.5 when the maturity exceeds 14 months, else 0.
    Gt14mHalfElseZero,
    AlwaysHalf,
}

impl CcfRule {
    pub fn factor(self, maturity_months: f64) -> f64 {
        let threshold = match self {
            CcfRule::Gt12mHalfElseZero => 12.0,
            CcfRule::Gt14mHalfElseZero => 14.0,
            CcfRule::AlwaysHalf => return 0.5,
        };
        if maturity_months > threshold {
            0.5
        } else {
            0.0
        }
    }
}

/// How an upfront fee is spread over quarters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmortizationScheme {
    /// Fee over the quarters to the stated maturity of the contract that
    /// carries it, recognized while the loan path lives, through amendments.
    #[default]
    StraightLineStatedMaturity,
    /// Fee over the quarters from settlement to the earlier of the stated
    /// maturity and the end of the loan path.
    SettleToMinMaturityOrPathEnd,
    /// Straight-line amounts recognized only while the carrying contract is
    /// neither amended nor terminated.
    WhileUnamended,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annualization {
    /// Quarterly return times four.
    #[default]
    Times4,
    /// `(1 + r)^4 - 1`.
    Geometric,
}

impl Annualization {
    pub fn apply(self, quarterly: f64) -> f64 {
        match self {
            Annualization::Times4 => 4.0 * quarterly,
            Annualization::Geometric => (1.0 + quarterly).powi(4) - 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReturnPolicy {
    pub ccf_rule: CcfRule,
    pub upfront_amortization: AmortizationScheme,
    pub annualization: Annualization,
    /// Share of the promised return paid in default.
    pub lgd_recovery_factor: f64,
    /// When false, expected returns equal promised (committed) returns.
    pub pd_markdown: bool,
    /// Subtract letters of credit from the unused commitment in the denominator.
    pub unused_excludes_lc: bool,
}

impl Default for ReturnPolicy {
    fn default() -> Self {
        ReturnPolicy {
            ccf_rule: CcfRule::default(),
            upfront_amortization: AmortizationScheme::default(),
            annualization: Annualization::default(),
            lgd_recovery_factor: 0.348,
            pd_markdown: true,
            unused_excludes_lc: false,
        }
    }
}

/// Income of one facility-quarter, USD.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IncomeComponents {
    pub spread_income: f64,
    pub commitment_fee_income: f64,
    pub annual_fee_income: f64,
    pub utilization_fee_income: f64,
    pub upfront_amortized: f64,
}

impl IncomeComponents {
    pub fn total(&self) -> f64 {
        self.spread_income
            + self.commitment_fee_income
            + self.annual_fee_income
            + self.utilization_fee_income
            + self.upfront_amortized
    }

    pub fn aisd(&self) -> f64 {
        self.spread_income + self.annual_fee_income + self.utilization_fee_income
    }

    pub fn aisu(&self) -> f64 {
        self.annual_fee_income + self.commitment_fee_income + self.upfront_amortized
    }
}

/// Returns of one facility-quarter. Return fields are quarterly fractions;
/// [`ReturnRecord::annualized`] converts them for reporting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnRecord {
    pub facility_id: String,
    pub quarter: Quarter,
    pub income: IncomeComponents,
    pub denominator: f64,
    pub promised_return: f64,
    pub promised_aisd_return: f64,
    pub promised_aisu_return: f64,
    pub pd_used: Option<f64>,
    pub expected_return: Option<f64>,
    pub expected_aisd_return: Option<f64>,
    pub expected_aisu_return: Option<f64>,
}

/// Annualized total, AISD and AISU returns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnTriple {
    pub total: f64,
    pub aisd: f64,
    pub aisu: f64,
}

impl ReturnRecord {
    pub fn annualized_promised(&self, a: Annualization) -> ReturnTriple {
        ReturnTriple {
            total: a.apply(self.promised_return),
            aisd: a.apply(self.promised_aisd_return),
            aisu: a.apply(self.promised_aisu_return),
        }
    }

    pub fn annualized_expected(&self, a: Annualization) -> Option<ReturnTriple> {
        Some(ReturnTriple {
            total: a.apply(self.expected_return?),
            aisd: a.apply(self.expected_aisd_return?),
            aisu: a.apply(self.expected_aisu_return?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReturnError {
    #[error("return denominator is zero")]
    ZeroDenominator,
    #[error("probability of default {0} outside [0, 1]")]
    InvalidPd(f64),
}

/// Unused commitment against which the commitment fee is charged: the lesser
/// of commitment and borrowing base, less borrowings and letters of credit.
pub fn available_unused(f: &Facility, state: &FacilityQuarterState) -> f64 {
    let commitment = f.commitment.0;
    let base = match state.borrowing_base {
        Some(b) if f.has_borrowing_base && b.is_finite() => b.min(commitment),
        _ => commitment,
    };
    let lc = state.letters_of_credit.filter(|v| v.is_finite()).unwrap_or(0.0);
    (base - state.outstanding_borrowings - lc).max(0.0)
}

/// Income components of a priced quarter; annual rates accrue for a quarter.
pub fn quarterly_income(
    p: &QuarterPricing,
    f: &Facility,
    state: &FacilityQuarterState,
    upfront_amortized: f64,
) -> IncomeComponents {
    let q = |bps: f64, base: f64| bps / 10_000.0 * base / 4.0;
    let out = state.outstanding_borrowings;
    IncomeComponents {
        spread_income: q(p.applicable_spread_bps, out),
        commitment_fee_income: q(p.commitment_fee_bps, available_unused(f, state)),
        annual_fee_income: q(p.annual_fee_bps, f.commitment.0),
        utilization_fee_income: if p.utilization_fee_active { q(p.utilization_fee_bps, out) } else { 0.0 },
        upfront_amortized,
    }
}

/// Upfront-fee amounts recognized per facility and quarter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AmortizationSchedule {
    pub amounts: BTreeMap<(String, Quarter), f64>,
}

impl AmortizationSchedule {
    pub fn get(&self, facility_id: &str, q: Quarter) -> f64 {
        self.amounts.get(&(facility_id.to_string(), q)).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.amounts.values().sum()
    }

    fn add(&mut self, facility_id: &str, q: Quarter, amount: f64) {
        *self.amounts.entry((facility_id.to_string(), q)).or_insert(0.0) += amount;
    }
}

/// Amortizes every upfront fee on `path`. `termination` is the first quarter
/// after the path ends, `None` while it is still alive. An empty window puts
/// the whole fee in the quarter it is paid.
pub fn amortization_schedule(
    path: &LoanPath,
    termination: Option<Quarter>,
    scheme: AmortizationScheme,
) -> AmortizationSchedule {
    let mut sched = AmortizationSchedule::default();
    for (j, f) in path.facilities.iter().enumerate() {
        let Some(fee) = &f.fee_schedule.upfront_fee else { continue };
        let amount = fee.amount.0;
        if amount == 0.0 {
            continue;
        }
        let paid = fee.paid_quarter;
        let maturity = f.stated_maturity_quarter;
        let (window_end, recognize_until) = match scheme {
            AmortizationScheme::StraightLineStatedMaturity => (maturity, termination),
            AmortizationScheme::SettleToMinMaturityOrPathEnd => {
                let end = termination.map_or(maturity, |t| t.min(maturity));
                (end, termination)
            }
            AmortizationScheme::WhileUnamended => (maturity, path.active_end(j, termination)),
        };
        let quarters = paid.quarters_until(window_end);
        if quarters <= 0 {
            let owner = path.active_at(paid, termination).map_or(j, |i| i);
            sched.add(&path.facilities[owner].facility_id, paid, amount);
            continue;
        }
        let per = amount / f64::from(quarters);
        for q in paid.range_to(window_end) {
            if recognize_until.is_some_and(|end| q >= end) {
                break;
            }
            let owner = match scheme {
                AmortizationScheme::WhileUnamended => Some(j),
                _ => path.active_at(q, termination),
            };
            if let Some(i) = owner {
                sched.add(&path.facilities[i].facility_id, q, per);
            }
        }
    }
    sched
}

/// Builds the return record: income over
/// `outstanding + ccf * (commitment - outstanding)`, with expected returns
/// marked down by `pd * (1 - recovery)`.
pub fn compute_return(
    income: &IncomeComponents,
    state: &FacilityQuarterState,
    f: &Facility,
    policy: &ReturnPolicy,
    pd: Option<f64>,
) -> Result<ReturnRecord, ReturnError> {
    if let Some(p) = pd {
        if !(0.0..=1.0).contains(&p) {
            return Err(ReturnError::InvalidPd(p));
        }
    }
    let out = state.outstanding_borrowings;
    let mut unused = f.commitment.0 - out;
    if policy.unused_excludes_lc {
        unused -= state.letters_of_credit.unwrap_or(0.0);
    }
    let denominator = out + policy.ccf_rule.factor(f.maturity_in_months()) * unused.max(0.0);
    if !(denominator > 0.0) {
        return Err(ReturnError::ZeroDenominator);
    }
    let promised_return = income.total() / denominator;
    let promised_aisd_return = income.aisd() / denominator;
    let promised_aisu_return = income.aisu() / denominator;
    let markdown = |p: f64| {
        if policy.pd_markdown {
            1.0 - p * (1.0 - policy.lgd_recovery_factor)
        } else {
            1.0
        }
    };
    Ok(ReturnRecord {
        facility_id: f.facility_id.clone(),
        quarter: state.quarter,
        income: *income,
        denominator,
        promised_return,
        promised_aisd_return,
        promised_aisu_return,
        pd_used: pd,
        expected_return: pd.map(|p| promised_return * markdown(p)),
        expected_aisd_return: pd.map(|p| promised_aisd_return * markdown(p)),
        expected_aisu_return: pd.map(|p| promised_aisu_return * markdown(p)),
    })
}

/// Annual return per bucket from `(bucket, quarter, quarterly return)`
/// observations: the cross-facility mean per quarter is compounded over the
/// bucket's quarters and restated as a geometric yearly average.
pub fn annualize_univariate(obs: &[(usize, Quarter, f64)], n_buckets: usize) -> Vec<Option<f64>> {
    let mut sums: Vec<BTreeMap<Quarter, (f64, usize)>> = vec![BTreeMap::new(); n_buckets];
    for &(b, q, r) in obs {
        if b < n_buckets && r.is_finite() {
            let e = sums[b].entry(q).or_insert((0.0, 0));
            e.0 += r;
            e.1 += 1;
        }
    }
    sums.iter()
        .map(|by_q| {
            if by_q.is_empty() {
                return None;
            }
            let growth: f64 = by_q.values().map(|(s, n)| 1.0 + s / *n as f64).product();
            Some(growth.powf(4.0 / by_q.len() as f64) - 1.0)
        })
        .collect()
}
