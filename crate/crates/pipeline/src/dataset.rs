//! The regression panel: one row per facility-quarter return.
//!
//! A row's return is earned in quarter t+1 and its risk is measured at t.
//! Firm controls are taken at t-1, facility terms at t+1.

use std::collections::{BTreeMap, BTreeSet};

use creditline_core::ingest::Panel;
use creditline_core::market::{compute_controls, ControlSet, SmoothingPolicy};
use creditline_core::returns::Annualization;
use creditline_core::{FirmQuarter, Quarter};
use creditline_econ::{increase_indicators, lender_beta};

use crate::config::{QuarterEffect, RunConfig};
use crate::engine::{Histories, ReturnSet};

/// Firm controls entering every specification (z-score is a risk measure).
pub const FIRM_CONTROLS: [&str; 11] = [
    "leverage",
    "coverage",
    "capital_expenditures",
    "net_worth",
    "current_ratio",
    "profitability",
    "size",
    "market_to_book",
    "tangibility",
    "kz_index",
    "monitoring_cost",
];

pub const FACILITY_CONTROLS: [&str; 11] = [
    "secured",
    "syndicated",
    "maturity",
    "amount",
    "purpose",
    "annual_fee",
    "commitment_fee",
    "utilization_fee",
    "upfront_fee",
    "technical_default",
    "nonzero_outstanding",
];

pub const FACTORS: [&str; 4] = ["borrower", "rating", "quarter", "lender"];

/// Return measures: total, drawn and undrawn spread.
pub const MEASURES: [&str; 3] = ["total", "aisd", "aisu"];

#[derive(Clone, Debug, PartialEq)]
pub struct RowKey {
    pub facility_id: String,
    pub borrower_id: String,
    /// Quarter t, when the expectation is formed.
    pub quarter: Quarter,
}

impl RowKey {
    pub fn return_quarter(&self) -> Quarter {
        self.quarter.next()
    }
}

/// Columnar panel. Missing values are `None`.
#[derive(Clone, Debug, Default)]
pub struct AnalysisPanel {
    pub keys: Vec<RowKey>,
    /// Why a row has no return, when it has none.
    pub status: Vec<Option<String>>,
    pub columns: BTreeMap<String, Vec<Option<f64>>>,
    pub factors: BTreeMap<String, Vec<String>>,
}

impl AnalysisPanel {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    fn push_column(&mut self, name: &str, values: Vec<Option<f64>>) {
        debug_assert_eq!(values.len(), self.keys.len());
        self.columns.insert(name.to_string(), values);
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Controls of every firm-quarter, from the contiguous history ending there.
pub fn control_table(hist: &Histories, policy: SmoothingPolicy) -> BTreeMap<(String, Quarter), ControlSet> {
    let mut out = BTreeMap::new();
    for (id, h) in &hist.firms {
        let mut run_start = 0;
        for k in 0..h.len() {
            if k > 0 && h[k].quarter != h[k - 1].quarter.next() {
                run_start = k;
            }
            // Nothing in the controls looks back further than seven quarters.
            let from = run_start.max(k.saturating_sub(7));
            if let Ok(c) = compute_controls(&h[from..=k], policy) {
                out.insert((id.clone(), h[k].quarter), c);
            }
        }
    }
    out
}

/// Market beta of every lender with at least eight paired quarters, on
/// excess returns over the quarterly T-bill rate.
pub fn lender_betas(panel: &Panel) -> BTreeMap<String, f64> {
    let mut series: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((id, q), l) in &panel.lenders {
        let Some(r) = panel.rates.get(q) else { continue };
        let rf = r.tbill_3m / 400.0;
        let e = series.entry(id.as_str()).or_default();
        e.0.push(l.stock_return - rf);
        e.1.push(r.market_index_return - rf);
    }
    series
        .into_iter()
        .filter(|(_, (l, _))| l.len() >= 8)
        .filter_map(|(id, (l, m))| lender_beta(&l, &m).ok().map(|b| (id.to_string(), b)))
        .collect()
}

/// Rating as a fixed-effect level; unrated firm-quarters share one level.
fn rating_level(fq: Option<&FirmQuarter>) -> String {
    match fq.and_then(|f| f.rating) {
        Some(r) => format!("{r:02}"),
        None => "NR".to_string(),
    }
}

fn quarter_level(effect: QuarterEffect, t: Quarter) -> String {
    match effect {
        QuarterEffect::QuarterOfYear => format!("Q{}", t.quarter_of_year()),
        QuarterEffect::Calendar => t.to_string(),
    }
}

/// Inputs shared by every variant of the panel.
pub struct DatasetInputs<'a> {
    pub panel: &'a Panel,
    pub hist: &'a Histories,
    pub betas: &'a BTreeMap<String, f64>,
}

/// Builds the panel from a return set. Rows cover every facility-quarter
/// state whose quarter lies in the run window.
pub fn build_dataset(
    inp: &DatasetInputs<'_>,
    returns: &ReturnSet,
    controls: &BTreeMap<(String, Quarter), ControlSet>,
    run: &RunConfig,
) -> AnalysisPanel {
    let panel = inp.panel;
    let mut out = AnalysisPanel::default();
    let mut cols: BTreeMap<&'static str, Vec<Option<f64>>> = BTreeMap::new();
    let push = |cols: &mut BTreeMap<&'static str, Vec<Option<f64>>>, name: &'static str, v: Option<f64>| {
        cols.entry(name).or_default().push(v.filter(|x| x.is_finite()));
    };
    let mut borrower = Vec::new();
    let mut rating = Vec::new();
    let mut quarter = Vec::new();
    let mut lender = Vec::new();
    let ann = run.policy.annualization;
    let annual = |q: Option<f64>, a: Annualization| q.map(|r| 100.0 * a.apply(r));

    for ((fid, tau), state) in &panel.states {
        if let Some((a, b)) = run.window {
            if *tau < a || *tau > b {
                continue;
            }
        }
        let f = panel.facility(fid).expect("validated panel");
        let t = tau.prev();
        let key = (fid.clone(), *tau);
        let rec = returns.records.get(&key);
        out.status.push(match rec {
            Some(_) => None,
            None => Some(returns.failures.get(&key).cloned().unwrap_or_else(|| "no return".to_string())),
        });
        out.keys.push(RowKey { facility_id: fid.clone(), borrower_id: f.borrower_id.clone(), quarter: t });

        for (m, i) in MEASURES.iter().zip(0..) {
            let exp = rec.and_then(|r| [r.expected_return, r.expected_aisd_return, r.expected_aisu_return][i]);
            let com = rec.map(|r| [r.promised_return, r.promised_aisd_return, r.promised_aisu_return][i]);
            let names: [&'static str; 3] = match *m {
                "total" => ["exp_total", "com_total", "q_exp_total"],
                "aisd" => ["exp_aisd", "com_aisd", "q_exp_aisd"],
                _ => ["exp_aisu", "com_aisu", "q_exp_aisu"],
            };
            push(&mut cols, names[0], annual(exp, ann));
            push(&mut cols, names[1], annual(com, ann));
            push(&mut cols, names[2], exp);
        }

        let firm_t = panel.firms.get(&(f.borrower_id.clone(), t));
        let risk = firm_t.and_then(|fq| fq.daily_return_stddev_12m);
        push(&mut cols, "risk", risk);
        push(&mut cols, "risk_sq", risk.map(|r| r * r));
        let ctl_t = controls.get(&(f.borrower_id.clone(), t));
        push(&mut cols, "z_score", ctl_t.and_then(|c| c.z_score));
        let ctl = controls.get(&(f.borrower_id.clone(), t.prev()));
        for name in FIRM_CONTROLS {
            push(&mut cols, name, ctl.and_then(|c| c.get(name)));
        }
        push(&mut cols, "crisis", Some(flag(run.in_crisis(t))));

        let fs = &f.fee_schedule;
        push(&mut cols, "secured", Some(flag(f.secured)));
        push(&mut cols, "syndicated", Some(flag(f.syndicated)));
        let months = f.maturity_in_months();
        push(&mut cols, "maturity", (months > 0.0).then(|| months.ln()));
        push(&mut cols, "amount", Some(f.commitment.0.ln()));
        push(&mut cols, "purpose", Some(flag(f.restructuring_purpose)));
        push(&mut cols, "annual_fee", Some(flag(fs.annual_fee.is_some())));
        push(&mut cols, "commitment_fee", Some(flag(fs.commitment_fee.is_some())));
        push(&mut cols, "utilization_fee", Some(flag(fs.utilization_fee.is_some())));
        push(&mut cols, "upfront_fee", Some(flag(fs.upfront_fee.as_ref().is_some_and(|u| u.amount.0 > 0.0))));
        push(&mut cols, "technical_default", Some(flag(state.technical_default)));
        push(&mut cols, "nonzero_outstanding", Some(flag(state.outstanding_borrowings > 0.0)));
        push(&mut cols, "usage", Some(state.outstanding_borrowings / f.commitment.0));
        push(&mut cols, "lender_beta", inp.betas.get(&f.lender_id).copied());

        borrower.push(f.borrower_id.clone());
        rating.push(rating_level(firm_t));
        quarter.push(quarter_level(run.quarter_effect, t));
        lender.push(f.lender_id.clone());
    }
    for (name, v) in cols {
        out.push_column(name, v);
    }
    out.factors.insert("borrower".into(), borrower);
    out.factors.insert("rating".into(), rating);
    out.factors.insert("quarter".into(), quarter);
    out.factors.insert("lender".into(), lender);
    add_changes(&mut out, panel);
    add_riskiest(&mut out, run);
    out
}

/// Quarter-on-quarter changes within a facility (risk changes within the
/// borrower) and their increase indicators.
fn add_changes(out: &mut AnalysisPanel, panel: &Panel) {
    let index: BTreeMap<(&str, Quarter), usize> =
        out.keys.iter().enumerate().map(|(i, k)| ((k.facility_id.as_str(), k.quarter), i)).collect();
    let prev: Vec<Option<usize>> =
        out.keys.iter().map(|k| index.get(&(k.facility_id.as_str(), k.quarter.prev())).copied()).collect();

    let risk_delta: Vec<Option<f64>> = out
        .keys
        .iter()
        .map(|k| {
            let risk_at = |q: Quarter| panel.firms.get(&(k.borrower_id.clone(), q))?.daily_return_stddev_12m;
            Some(risk_at(k.quarter)? - risk_at(k.quarter.prev())?)
        })
        .collect();
    let mut changes = vec![("risk".to_string(), risk_delta)];
    for m in MEASURES {
        let name = format!("exp_{m}");
        let col = &out.columns[&name];
        let d = prev.iter().enumerate().map(|(i, p)| Some(col[i]? - col[(*p)?]?)).collect();
        changes.push((name, d));
    }
    for (name, delta) in changes {
        let (up, large) = increase_indicators(&delta);
        let f = |v: Vec<Option<bool>>| v.into_iter().map(|b| b.map(flag)).collect();
        out.columns.insert(format!("{name}_up"), f(up));
        out.columns.insert(format!("{name}_up_large"), f(large));
        out.columns.insert(format!("{name}_delta"), delta);
    }
}

/// Indicators of borrowers whose mean risk is above the cross-firm median,
/// over all row quarters and over crisis quarters only.
fn add_riskiest(out: &mut AnalysisPanel, run: &RunConfig) {
    let risk = &out.columns["risk"];
    let mut seen = BTreeSet::new();
    let mut all: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut crisis: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (k, r) in out.keys.iter().zip(risk) {
        let Some(r) = r else { continue };
        if !seen.insert((k.borrower_id.as_str(), k.quarter)) {
            continue;
        }
        all.entry(&k.borrower_id).or_default().push(*r);
        if run.in_crisis(k.quarter) {
            crisis.entry(&k.borrower_id).or_default().push(*r);
        }
    }
    let above = |m: &BTreeMap<&str, Vec<f64>>| -> BTreeSet<String> {
        let means: Vec<(&str, f64)> =
            m.iter().map(|(id, v)| (*id, v.iter().sum::<f64>() / v.len() as f64)).collect();
        let mut sorted: Vec<f64> = means.iter().map(|x| x.1).collect();
        sorted.sort_by(f64::total_cmp);
        let median = match sorted.len() {
            0 => return BTreeSet::new(),
            n if n % 2 == 1 => sorted[n / 2],
            n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
        };
        means.into_iter().filter(|x| x.1 > median).map(|x| x.0.to_string()).collect()
    };
    let (hi_all, hi_crisis) = (above(&all), above(&crisis));
    let col = |s: &BTreeSet<String>| out.keys.iter().map(|k| Some(flag(s.contains(&k.borrower_id)))).collect();
    let a = col(&hi_all);
    let c = col(&hi_crisis);
    out.columns.insert("riskiest_all".into(), a);
    out.columns.insert("riskiest_crisis".into(), c);
}
