//! CSV renderings of estimates, univariate sorts, figures and records.

use std::collections::BTreeMap;

use creditline_core::pricing::QuarterPricing;
use creditline_core::returns::annualize_univariate;
use creditline_core::risk::normal_cdf;
use creditline_core::Quarter;
use creditline_econ::{bucketize, significance_stars, Coefficient};

use crate::dataset::{AnalysisPanel, MEASURES};
use crate::engine::{Key, ReturnSet};
use crate::models::{ModelOutcome, ModelSpec};
use crate::output::{fmt_num, fmt_opt, CsvText};

fn coefficients(o: &ModelOutcome) -> Vec<&Coefficient> {
    match (o.ols(), o.probit()) {
        (Some(r), _) => r.coefficients.iter().collect(),
        (_, Some(r)) => r.coefficients.iter().collect(),
        _ => Vec::new(),
    }
}

fn dropped(o: &ModelOutcome) -> Vec<String> {
    let all = match (o.ols(), o.probit()) {
        (Some(r), _) => &r.dropped,
        (_, Some(r)) => &r.dropped,
        _ => return Vec::new(),
    };
    all.iter().filter(|d| !d.contains('=')).cloned().collect()
}

/// Regressors as they appear in estimates, interactions last.
fn terms(spec: &ModelSpec) -> Vec<String> {
    let mut v = spec.regressors.clone();
    v.extend(spec.interactions.iter().map(|(a, b)| ModelSpec::interaction_name(a, b)));
    v
}

/// Terms by rows, one estimate/se/stars triple of columns per model, then
/// sample statistics and the fixed effects included.
pub fn coefficient_table(run_id: &str, outcomes: &[ModelOutcome]) -> Vec<u8> {
    let mut header = vec!["term".to_string()];
    for o in outcomes {
        let n = &o.spec.name;
        header.extend([format!("{n} estimate"), format!("{n} se"), format!("{n} stars")]);
    }
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvText::new(run_id, &h);

    let mut order: Vec<String> = Vec::new();
    for o in outcomes {
        for term in terms(&o.spec) {
            if !order.contains(&term) {
                order.push(term);
            }
        }
    }
    order.push("_cons".to_string());
    for term in &order {
        let mut row = vec![term.clone()];
        for o in outcomes {
            match coefficients(o).into_iter().find(|c| &c.name == term) {
                Some(c) => row.extend([fmt_num(c.estimate), fmt_num(c.se), c.stars().to_string()]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        t.row(row);
    }
    let stat = |label: &str, f: &dyn Fn(&ModelOutcome) -> String| {
        let mut row = vec![label.to_string()];
        for o in outcomes {
            row.extend([f(o), String::new(), String::new()]);
        }
        row
    };
    t.row(stat("dependent", &|o| o.spec.dependent.clone()));
    t.row(stat("N", &|o| o.rows_used.to_string()));
    t.row(stat("clusters", &|o| match (o.ols(), o.probit()) {
        (Some(r), _) => r.clusters.to_string(),
        (_, Some(r)) => r.clusters.to_string(),
        _ => String::new(),
    }));
    t.row(stat("R2", &|o| match (o.ols(), o.probit()) {
        (Some(r), _) => fmt_num(r.r_squared),
        (_, Some(r)) => fmt_num(r.pseudo_r2),
        _ => String::new(),
    }));
    for fe in ["borrower", "rating", "quarter", "lender"] {
        t.row(stat(&format!("{fe} effects"), &|o| {
            if o.spec.fixed_effects.iter().any(|f| f == fe) { "yes" } else { "no" }.to_string()
        }));
    }
    t.row(stat("dropped", &|o| dropped(o).join(" ")));
    t.row(stat("diagnostic", &|o| o.diagnostic.clone().unwrap_or_default()));
    t.into_bytes()
}

/// Key coefficient of each robustness row for the three return measures.
pub fn robustness_table(run_id: &str, rows: &[(usize, &str, &str, Vec<ModelOutcome>)]) -> Vec<u8> {
    let mut header = vec!["row".to_string(), "specification".to_string(), "key".to_string()];
    for m in MEASURES {
        header.extend([format!("{m} estimate"), format!("{m} se"), format!("{m} stars"), format!("{m} N")]);
    }
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvText::new(run_id, &h);
    for (id, label, key, outcomes) in rows {
        let mut row = vec![id.to_string(), label.to_string(), key.to_string()];
        for o in outcomes {
            match coefficients(o).into_iter().find(|c| c.name == *key) {
                Some(c) => row.extend([fmt_num(c.estimate), fmt_num(c.se), c.stars().to_string()]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
            row.push(o.rows_used.to_string());
        }
        t.row(row);
    }
    t.into_bytes()
}

/// Average marginal effect of each probit's key regressor.
pub fn probit_table(run_id: &str, outcomes: &[ModelOutcome]) -> Vec<u8> {
    let mut t = CsvText::new(
        run_id,
        &[
            "dependent", "key", "ame", "ame_se", "ame_stars", "coefficient", "coefficient_se", "prob_y1",
            "pseudo_r2", "N", "clusters", "perfectly_predicted", "diagnostic",
        ],
    );
    for o in outcomes {
        let key = o.spec.key.clone().unwrap_or_default();
        let mut row = vec![o.spec.dependent.clone(), key.clone()];
        match o.probit() {
            Some(r) => {
                match &r.ame {
                    Some(a) => {
                        let p = 2.0 * normal_cdf(-(a.estimate / a.se).abs());
                        row.extend([fmt_num(a.estimate), fmt_num(a.se), significance_stars(p).to_string()]);
                    }
                    None => row.extend(["", "", ""].map(String::from)),
                }
                let c = r.coef(&key);
                row.extend([
                    fmt_opt(c.map(|c| c.estimate)),
                    fmt_opt(c.map(|c| c.se)),
                    fmt_num(r.prob_y1),
                    fmt_num(r.pseudo_r2),
                    r.n.to_string(),
                    r.clusters.to_string(),
                    r.perfectly_predicted.to_string(),
                ]);
            }
            None => row.extend(["", "", "", "", "", "", "", "0", "", "0"].map(String::from)),
        }
        row.push(o.diagnostic.clone().unwrap_or_default());
        t.row(row);
    }
    t.into_bytes()
}

/// Rows in, rows used and excluded rows by cause, per model.
pub fn exclusions_table(run_id: &str, outcomes: &[&ModelOutcome]) -> Vec<u8> {
    let mut t = CsvText::new(run_id, &["model", "dependent", "item", "count"]);
    for o in outcomes {
        let base = [o.spec.name.clone(), o.spec.dependent.clone()];
        let mut put = |item: &str, n: usize| {
            let mut r = base.to_vec();
            r.extend([item.to_string(), n.to_string()]);
            t.row(r);
        };
        put("rows in", o.rows_in);
        put("rows used", o.rows_used);
        for (cause, n) in &o.exclusions.0 {
            put(&format!("excluded: {cause}"), *n);
        }
    }
    t.into_bytes()
}

/// Risk quintiles: mean risk and annualized expected returns per quintile.
pub fn univariate_table(run_id: &str, data: &AnalysisPanel) -> Result<Vec<u8>, creditline_econ::EstimationError> {
    let risk = data.column("risk").expect("risk column");
    let usable: Vec<usize> = (0..data.len()).filter(|&i| data.status[i].is_none() && risk[i].is_some()).collect();
    let values: Vec<f64> = usable.iter().map(|&i| risk[i].expect("filtered")).collect();
    let buckets = bucketize(&values, 5)?;
    let mut t = CsvText::new(
        run_id,
        &["quintile", "observations", "mean_risk", "expected_total", "expected_aisd", "expected_aisu"],
    );
    let mut means = Vec::new();
    for m in MEASURES {
        let col = data.column(&format!("q_exp_{m}")).expect("return column");
        let obs: Vec<(usize, Quarter, f64)> = usable
            .iter()
            .zip(&buckets)
            .filter_map(|(&i, b)| Some(((*b)?, data.keys[i].return_quarter(), col[i]?)))
            .collect();
        means.push(annualize_univariate(&obs, 5));
    }
    for b in 0..5 {
        let members: Vec<f64> =
            values.iter().zip(&buckets).filter(|(_, k)| **k == Some(b)).map(|(v, _)| *v).collect();
        let mean_risk = (!members.is_empty()).then(|| members.iter().sum::<f64>() / members.len() as f64);
        let mut row = vec![(b + 1).to_string(), members.len().to_string(), fmt_opt(mean_risk)];
        row.extend(means.iter().map(|m| fmt_opt(m[b].map(|r| 100.0 * r))));
        t.row(row);
    }
    Ok(t.into_bytes())
}

/// Quarterly mean all-in spreads drawn and undrawn, bps.
pub fn fig1(run_id: &str, pricing: &BTreeMap<Key, QuarterPricing>, window: (Quarter, Quarter)) -> Vec<u8> {
    let mut by_q: BTreeMap<Quarter, (usize, f64, f64)> = BTreeMap::new();
    for ((_, q), p) in pricing {
        if *q < window.0 || *q > window.1 {
            continue;
        }
        let e = by_q.entry(*q).or_insert((0, 0.0, 0.0));
        e.0 += 1;
        e.1 += p.aisd_bps;
        e.2 += p.aisu_bps;
    }
    let mut t = CsvText::new(run_id, &["quarter", "facilities", "mean_aisd_bps", "mean_aisu_bps"]);
    for (q, (n, d, u)) in by_q {
        let n_f = n as f64;
        t.row([q.to_string(), n.to_string(), fmt_num(d / n_f), fmt_num(u / n_f)]);
    }
    t.into_bytes()
}

/// Mean usage-to-commitment ratio by risk quartile.
pub fn fig2(run_id: &str, data: &AnalysisPanel) -> Result<Vec<u8>, creditline_econ::EstimationError> {
    let risk = data.column("risk").expect("risk column");
    let usage = data.column("usage").expect("usage column");
    let rows: Vec<(f64, f64)> = (0..data.len()).filter_map(|i| Some((risk[i]?, usage[i]?))).collect();
    let r: Vec<f64> = rows.iter().map(|x| x.0).collect();
    let buckets = bucketize(&r, 4)?;
    let mut t = CsvText::new(run_id, &["risk_quartile", "observations", "mean_risk", "mean_usage"]);
    for b in 0..4 {
        let m: Vec<&(f64, f64)> = rows.iter().zip(&buckets).filter(|(_, k)| **k == Some(b)).map(|(x, _)| x).collect();
        let n = m.len() as f64;
        let mean = |f: fn(&(f64, f64)) -> f64| (n > 0.0).then(|| m.iter().map(|x| f(x)).sum::<f64>() / n);
        t.row([(b + 1).to_string(), m.len().to_string(), fmt_opt(mean(|x| x.0)), fmt_opt(mean(|x| x.1))]);
    }
    Ok(t.into_bytes())
}

/// Mean and median default probability by quarter.
pub fn fig3(run_id: &str, pds: &BTreeMap<Key, f64>, window: (Quarter, Quarter)) -> Vec<u8> {
    let mut by_q: BTreeMap<Quarter, Vec<f64>> = BTreeMap::new();
    for ((_, q), pd) in pds {
        if *q >= window.0 && *q <= window.1 {
            by_q.entry(*q).or_default().push(*pd);
        }
    }
    let mut t = CsvText::new(run_id, &["quarter", "firms", "mean_pd", "median_pd"]);
    for (q, mut v) in by_q {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        t.row([q.to_string(), n.to_string(), fmt_num(v.iter().sum::<f64>() / n as f64), fmt_num(median)]);
    }
    t.into_bytes()
}

pub fn pricing_csv(run_id: &str, pricing: &BTreeMap<Key, QuarterPricing>) -> Vec<u8> {
    let mut t = CsvText::new(
        run_id,
        &[
            "facility_id", "quarter", "loan_type", "base_rate", "full_rate", "applicable_spread_bps",
            "commitment_fee_bps", "annual_fee_bps", "utilization_fee_bps", "utilization_fee_active",
            "default_margin_bps", "aisd_bps", "aisu_bps",
        ],
    );
    for p in pricing.values() {
        let kind = serde_json::to_value(p.chosen_loan_type).expect("enum serializes");
        t.row([
            p.facility_id.clone(),
            p.quarter.to_string(),
            kind.as_str().unwrap_or_default().to_string(),
            fmt_num(p.chosen_base_rate),
            fmt_num(p.chosen_full_rate),
            fmt_num(p.applicable_spread_bps),
            fmt_num(p.commitment_fee_bps),
            fmt_num(p.annual_fee_bps),
            fmt_num(p.utilization_fee_bps),
            u8::from(p.utilization_fee_active).to_string(),
            fmt_num(p.default_margin_applied_bps),
            fmt_num(p.aisd_bps),
            fmt_num(p.aisu_bps),
        ]);
    }
    t.into_bytes()
}

/// Every return record, quarterly fractions, plus the failures with their cause.
pub fn returns_csv(run_id: &str, returns: &ReturnSet) -> Vec<u8> {
    let mut t = CsvText::new(
        run_id,
        &[
            "facility_id", "quarter", "spread_income", "commitment_fee_income", "annual_fee_income",
            "utilization_fee_income", "upfront_amortized", "denominator", "promised_return",
            "promised_aisd_return", "promised_aisu_return", "pd_used", "expected_return", "expected_aisd_return",
            "expected_aisu_return", "status",
        ],
    );
    let mut keys: Vec<&Key> = returns.records.keys().chain(returns.failures.keys()).collect();
    keys.sort();
    for k in keys {
        let mut row = vec![k.0.clone(), k.1.to_string()];
        match returns.records.get(k) {
            Some(r) => {
                let i = &r.income;
                row.extend(
                    [
                        i.spread_income,
                        i.commitment_fee_income,
                        i.annual_fee_income,
                        i.utilization_fee_income,
                        i.upfront_amortized,
                        r.denominator,
                        r.promised_return,
                        r.promised_aisd_return,
                        r.promised_aisu_return,
                    ]
                    .map(fmt_num),
                );
                row.extend(
                    [r.pd_used, r.expected_return, r.expected_aisd_return, r.expected_aisu_return].map(fmt_opt),
                );
                row.push("ok".to_string());
            }
            None => {
                row.extend(std::iter::repeat_n(String::new(), 13));
                row.push(returns.failures[k].clone());
            }
        }
        t.row(row);
    }
    t.into_bytes()
}
