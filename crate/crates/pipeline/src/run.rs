//! End-to-end runs: pricing, returns, the regression panel, every table and
//! figure, and the manifest.

use std::collections::BTreeMap;

use creditline_core::ingest::Panel;
use creditline_core::market::{ControlSet, SmoothingPolicy};
use creditline_core::returns::{AmortizationScheme, CcfRule, ReturnPolicy};
use creditline_core::Quarter;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SyntheticConfig};
use crate::dataset::{build_dataset, control_table, lender_betas, AnalysisPanel, DatasetInputs};
use crate::engine::{
    compute_returns, default_probabilities, loan_paths, price_panel, Histories, Key, PathInfo, PricedPanel, ReturnSet,
};
use crate::error::PipelineError;
use crate::models::tables::{self, Variant};
use crate::models::{estimate, ModelOutcome, ModelSpec};
use crate::output::{sha256_hex, Bundle, CsvText};
use crate::synth::{describe, SynthDiagnostics};
use crate::tables as render;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where a panel came from, recorded so the run can be repeated.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceRecord {
    Synthetic { config: SyntheticConfig },
    Directory { path: String, checksums: BTreeMap<String, String> },
}

/// Identifier of a run: SHA-256 of the version, source and run options.
pub fn run_id(source: &SourceRecord, run: &RunConfig) -> String {
    #[derive(Serialize)]
    struct Id<'a> {
        version: &'a str,
        source: &'a SourceRecord,
        run: &'a RunConfig,
    }
    let bytes = serde_json::to_vec(&Id { version: VERSION, source, run }).expect("run record serializes");
    sha256_hex(&bytes)
}

/// Everything computed once per panel, independent of the return policy.
pub struct Prepared<'a> {
    pub panel: &'a Panel,
    pub hist: Histories,
    pub paths: Vec<PathInfo>,
    pub pds: BTreeMap<Key, f64>,
    pub priced: PricedPanel,
    pub betas: BTreeMap<String, f64>,
}

impl<'a> Prepared<'a> {
    pub fn new(panel: &'a Panel) -> Result<Self, PipelineError> {
        let hist = Histories::new(panel);
        let paths = loan_paths(panel)?;
        let pds = default_probabilities(panel);
        let priced = price_panel(panel, &hist);
        let betas = lender_betas(panel);
        Ok(Prepared { panel, hist, paths, pds, priced, betas })
    }

    pub fn returns(&self, policy: &ReturnPolicy) -> ReturnSet {
        compute_returns(self.panel, &self.paths, &self.priced, &self.pds, policy)
    }

    pub fn controls(&self, policy: SmoothingPolicy) -> BTreeMap<(String, Quarter), ControlSet> {
        control_table(&self.hist, policy)
    }

    pub fn dataset(
        &self,
        returns: &ReturnSet,
        controls: &BTreeMap<(String, Quarter), ControlSet>,
        run: &RunConfig,
    ) -> AnalysisPanel {
        let inp = DatasetInputs { panel: self.panel, hist: &self.hist, betas: &self.betas };
        build_dataset(&inp, returns, controls, run)
    }
}

/// Estimates every spec in parallel, keeping their order.
pub fn estimate_all(specs: &[ModelSpec], data: &AnalysisPanel) -> Result<Vec<ModelOutcome>, PipelineError> {
    specs.par_iter().map(|s| estimate(s, data)).collect()
}

#[derive(Clone, Debug, Serialize)]
struct ModelRecord {
    table: String,
    name: String,
    dependent: String,
    rows_in: usize,
    rows_used: usize,
    exclusions: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostic: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
struct PanelCounts {
    facilities: usize,
    firm_quarters: usize,
    facility_quarters: usize,
    priced: usize,
    returns: usize,
    orphans: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    version: String,
    run_id: String,
    source: SourceRecord,
    run: RunConfig,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    data_generating_process: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    synthetic_diagnostics: Option<SynthDiagnostics>,
    panel: PanelCounts,
    models: Vec<ModelRecord>,
    files: BTreeMap<String, String>,
}

fn record(table: &str, o: &ModelOutcome) -> ModelRecord {
    ModelRecord {
        table: table.to_string(),
        name: o.spec.name.clone(),
        dependent: o.spec.dependent.clone(),
        rows_in: o.rows_in,
        rows_used: o.rows_used,
        exclusions: o.exclusions.0.clone(),
        diagnostic: o.diagnostic.clone(),
    }
}

fn variant_policy(base: &RunConfig, v: Variant) -> (ReturnPolicy, SmoothingPolicy) {
    let mut p = base.policy;
    let mut s = base.smoothing;
    match v {
        Variant::Base => {}
        Variant::SettleToMin => p.upfront_amortization = AmortizationScheme::SettleToMinMaturityOrPathEnd,
        Variant::WhileUnamended => p.upfront_amortization = AmortizationScheme::WhileUnamended,
        Variant::Gt14m => p.ccf_rule = CcfRule::Gt14mHalfElseZero,
        Variant::AlwaysHalf => p.ccf_rule = CcfRule::AlwaysHalf,
        Variant::AnnualizedFlows => s = SmoothingPolicy::AnnualizedFlows,
    }
    (p, s)
}

/// A table that needs quantile buckets, or a commented empty table when the
/// sample is too small.
fn bucketed(
    run_id: &str,
    header: &[&str],
    res: Result<Vec<u8>, creditline_econ::EstimationError>,
) -> Vec<u8> {
    match res {
        Ok(b) => b,
        Err(e) => {
            let mut t = CsvText::new(run_id, header);
            t.comment(&format!("empty: {e}"));
            t.into_bytes()
        }
    }
}

/// Quarters covered by the run: the window if set, else the span of states.
fn span(panel: &Panel, run: &RunConfig) -> (Quarter, Quarter) {
    run.window.unwrap_or_else(|| {
        let qs = panel.states.keys().map(|k| k.1);
        let lo = qs.clone().min().unwrap_or(Quarter::from_index(0));
        let hi = qs.max().unwrap_or(Quarter::from_index(0));
        (lo, hi)
    })
}

/// Runs the full analysis on `panel` and returns the output bundle,
/// manifest included.
pub fn run_pipeline(
    panel: &Panel,
    source: SourceRecord,
    run: &RunConfig,
    synth: Option<&SynthDiagnostics>,
) -> Result<Bundle, PipelineError> {
    run.validate()?;
    let id = run_id(&source, run);
    let prep = Prepared::new(panel)?;

    let mut variants: Vec<((ReturnPolicy, SmoothingPolicy), AnalysisPanel)> = Vec::new();
    let mut returns_by_policy: Vec<(ReturnPolicy, ReturnSet)> = Vec::new();
    let mut controls: Vec<(SmoothingPolicy, BTreeMap<(String, Quarter), ControlSet>)> = Vec::new();
    let rows5 = tables::table5();
    let mut needed: Vec<(ReturnPolicy, SmoothingPolicy)> = vec![(run.policy, run.smoothing)];
    for r in &rows5 {
        let v = variant_policy(run, r.variant);
        if !needed.contains(&v) {
            needed.push(v);
        }
    }
    for (policy, smoothing) in &needed {
        let rs = match returns_by_policy.iter().position(|(p, _)| p == policy) {
            Some(i) => i,
            None => {
                returns_by_policy.push((*policy, prep.returns(policy)));
                returns_by_policy.len() - 1
            }
        };
        let cs = match controls.iter().position(|(s, _)| s == smoothing) {
            Some(i) => i,
            None => {
                controls.push((*smoothing, prep.controls(*smoothing)));
                controls.len() - 1
            }
        };
        let run_v = RunConfig { policy: *policy, smoothing: *smoothing, ..run.clone() };
        let data = prep.dataset(&returns_by_policy[rs].1, &controls[cs].1, &run_v);
        variants.push(((*policy, *smoothing), data));
    }
    let variant = |v: (ReturnPolicy, SmoothingPolicy)| -> &AnalysisPanel {
        &variants.iter().find(|(k, _)| *k == v).expect("every variant is built").1
    };
    let base = variant((run.policy, run.smoothing));
    let base_returns = &returns_by_policy[0].1;

    let t4 = estimate_all(&tables::table4(), base)?;
    let mut t5 = Vec::new();
    for r in &rows5 {
        let data = variant(variant_policy(run, r.variant));
        t5.push((r.id, r.label, r.key, estimate_all(&r.specs, data)?));
    }
    let t6a = estimate_all(&tables::table6("exp"), base)?;
    let t6b = estimate_all(&tables::table6("com"), base)?;
    let t7a = estimate_all(&tables::table7(false), base)?;
    let t7b = estimate_all(&tables::table7(true), base)?;

    let mut bundle = Bundle::default();
    let window = span(panel, run);
    bundle.add(
        "table3.csv",
        bucketed(
            &id,
            &["quintile", "observations", "mean_risk", "expected_total", "expected_aisd", "expected_aisu"],
            render::univariate_table(&id, base),
        ),
    );
    bundle.add("table4.csv", render::coefficient_table(&id, &t4));
    bundle.add("table5.csv", render::robustness_table(&id, &t5));
    bundle.add("table6_a.csv", render::coefficient_table(&id, &t6a));
    bundle.add("table6_b.csv", render::coefficient_table(&id, &t6b));
    bundle.add("table7_a.csv", render::probit_table(&id, &t7a));
    bundle.add("table7_b.csv", render::probit_table(&id, &t7b));
    bundle.add("fig1_aisd_aisu.csv", render::fig1(&id, &prep.priced.pricing, window));
    bundle.add(
        "fig2_usage_by_risk_quartile.csv",
        bucketed(&id, &["risk_quartile", "observations", "mean_risk", "mean_usage"], render::fig2(&id, base)),
    );
    bundle.add("fig3_pd_by_quarter.csv", render::fig3(&id, &prep.pds, window));
    bundle.add("pricing.csv", render::pricing_csv(&id, &prep.priced.pricing));
    bundle.add("returns.csv", render::returns_csv(&id, base_returns));

    let mut all: Vec<(&str, &ModelOutcome)> = Vec::new();
    all.extend(t4.iter().map(|o| ("table4", o)));
    for (_, _, _, os) in &t5 {
        all.extend(os.iter().map(|o| ("table5", o)));
    }
    all.extend(t6a.iter().map(|o| ("table6_a", o)));
    all.extend(t6b.iter().map(|o| ("table6_b", o)));
    all.extend(t7a.iter().map(|o| ("table7_a", o)));
    all.extend(t7b.iter().map(|o| ("table7_b", o)));
    let outcomes: Vec<&ModelOutcome> = all.iter().map(|(_, o)| *o).collect();
    bundle.add("exclusions.csv", render::exclusions_table(&id, &outcomes));

    let dgp = match &source {
        SourceRecord::Synthetic { config } => describe(config),
        SourceRecord::Directory { .. } => Vec::new(),
    };
    let manifest = Manifest {
        version: VERSION.to_string(),
        run_id: id,
        source,
        run: run.clone(),
        data_generating_process: dgp,
        synthetic_diagnostics: synth.cloned(),
        panel: PanelCounts {
            facilities: panel.facilities.len(),
            firm_quarters: panel.firms.len(),
            facility_quarters: panel.states.len(),
            priced: prep.priced.pricing.len(),
            returns: base_returns.records.len(),
            orphans: panel.orphans.clone(),
        },
        models: all.iter().map(|(t, o)| record(t, o)).collect(),
        files: bundle.checksums(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    bundle.add("manifest.json", json);
    Ok(bundle)
}
