//! Model specifications and their estimation on an [`AnalysisPanel`].

use creditline_econ::{
    interaction_column, ols_clustered, probit_clustered, Column, Factor, ProbitOptions, ProbitResult,
    RegressionResult,
};
use serde::{Deserialize, Serialize};

use crate::dataset::{AnalysisPanel, FACILITY_CONTROLS, FACTORS, FIRM_CONTROLS};
use crate::engine::Exclusions;
use crate::error::PipelineError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Ols,
    Probit,
}

fn default_cluster() -> String {
    "facility".to_string()
}

/// One regression: dependent column, regressors, fixed-effect factors,
/// cluster key and interaction pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub dependent: String,
    #[serde(default)]
    pub regressors: Vec<String>,
    #[serde(default)]
    pub fixed_effects: Vec<String>,
    /// `facility` or `borrower`.
    #[serde(default = "default_cluster")]
    pub cluster: String,
    #[serde(default)]
    pub interactions: Vec<(String, String)>,
    #[serde(default)]
    pub estimator: Estimator,
    /// Regressor whose average marginal effect a probit reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    /// 0/1 column restricting the sample to rows where it is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<String>,
}

impl ModelSpec {
    pub fn ols(name: impl Into<String>, dependent: impl Into<String>, regressors: Vec<String>) -> Self {
        ModelSpec {
            name: name.into(),
            dependent: dependent.into(),
            regressors,
            fixed_effects: FACTORS.iter().map(|s| s.to_string()).collect(),
            cluster: default_cluster(),
            interactions: Vec::new(),
            estimator: Estimator::Ols,
            key: None,
            subsample: None,
        }
    }

    /// Name of the column built for interaction `(a, b)`.
    pub fn interaction_name(a: &str, b: &str) -> String {
        format!("{a}:{b}")
    }
}

/// Adds the product of `a` and `b` as a regressor.
pub fn interaction_spec(base: &ModelSpec, a: &str, b: &str) -> ModelSpec {
    let mut s = base.clone();
    s.interactions.push((a.to_string(), b.to_string()));
    s
}

/// Risk, facility controls, firm controls and the crisis indicator.
pub fn base_regressors() -> Vec<String> {
    let mut v = vec!["risk".to_string()];
    v.extend(FACILITY_CONTROLS.iter().map(|s| s.to_string()));
    v.extend(FIRM_CONTROLS.iter().map(|s| s.to_string()));
    v.push("crisis".to_string());
    v
}

#[derive(Clone, Debug)]
pub enum Fit {
    Ols(RegressionResult),
    Probit(ProbitResult),
}

#[derive(Clone, Debug)]
pub struct ModelOutcome {
    pub spec: ModelSpec,
    pub rows_in: usize,
    pub rows_used: usize,
    pub exclusions: Exclusions,
    pub fit: Option<Fit>,
    /// Why there is no fit, when there is none.
    pub diagnostic: Option<String>,
}

impl ModelOutcome {
    pub fn ols(&self) -> Option<&RegressionResult> {
        match &self.fit {
            Some(Fit::Ols(r)) => Some(r),
            _ => None,
        }
    }

    pub fn probit(&self) -> Option<&ProbitResult> {
        match &self.fit {
            Some(Fit::Probit(r)) => Some(r),
            _ => None,
        }
    }
}

fn numeric_inputs(spec: &ModelSpec) -> Vec<&str> {
    let mut v = vec![spec.dependent.as_str()];
    v.extend(spec.regressors.iter().map(String::as_str));
    for (a, b) in &spec.interactions {
        v.push(a);
        v.push(b);
    }
    v
}

fn unknown(what: &str, name: &str, spec: &ModelSpec) -> PipelineError {
    PipelineError::Config(format!("model {}: unknown {what} {name}", spec.name))
}

/// Estimates `spec` after listwise deletion. A sample with no usable rows
/// gives an outcome without a fit and a diagnostic.
pub fn estimate(spec: &ModelSpec, data: &AnalysisPanel) -> Result<ModelOutcome, PipelineError> {
    let inputs = numeric_inputs(spec);
    let cols: Vec<&[Option<f64>]> = inputs
        .iter()
        .map(|n| data.column(n).ok_or_else(|| unknown("column", n, spec)))
        .collect::<Result<_, _>>()?;
    let subsample = match &spec.subsample {
        Some(s) => Some(data.column(s).ok_or_else(|| unknown("subsample", s, spec))?),
        None => None,
    };
    let factors: Vec<&Vec<String>> = spec
        .fixed_effects
        .iter()
        .map(|n| data.factors.get(n).ok_or_else(|| unknown("fixed effect", n, spec)))
        .collect::<Result<_, _>>()?;
    let clusters: Vec<&str> = match spec.cluster.as_str() {
        "facility" => data.keys.iter().map(|k| k.facility_id.as_str()).collect(),
        "borrower" => data.keys.iter().map(|k| k.borrower_id.as_str()).collect(),
        other => return Err(unknown("cluster key", other, spec)),
    };

    let mut exclusions = Exclusions::default();
    let mut used = Vec::new();
    for i in 0..data.len() {
        if let Some(cause) = &data.status[i] {
            exclusions.add(cause.clone());
        } else if subsample.is_some_and(|s| s[i] != Some(1.0)) {
            exclusions.add("outside subsample");
        } else if let Some(k) = cols.iter().position(|c| c[i].is_none()) {
            exclusions.add(format!("missing {}", inputs[k]));
        } else {
            used.push(i);
        }
    }
    let mut outcome = ModelOutcome {
        spec: spec.clone(),
        rows_in: data.len(),
        rows_used: used.len(),
        exclusions,
        fit: None,
        diagnostic: None,
    };
    if used.is_empty() {
        outcome.diagnostic = Some("no usable observations; table is empty".to_string());
        return Ok(outcome);
    }

    let take = |c: &[Option<f64>]| -> Vec<f64> { used.iter().map(|&i| c[i].expect("listwise deleted")).collect() };
    let y = take(cols[0]);
    let mut regressors: Vec<Column> =
        spec.regressors.iter().zip(&cols[1..]).map(|(n, c)| Column::new(n.clone(), take(c))).collect();
    let offset = 1 + spec.regressors.len();
    for (j, (a, b)) in spec.interactions.iter().enumerate() {
        let ca = Column::new(a.clone(), take(cols[offset + 2 * j]));
        let cb = Column::new(b.clone(), take(cols[offset + 2 * j + 1]));
        regressors.push(interaction_column(&ca, &cb));
    }
    let factors: Vec<Factor> = spec
        .fixed_effects
        .iter()
        .zip(&factors)
        .map(|(n, lv)| Factor::new(n.clone(), used.iter().map(|&i| lv[i].clone()).collect()))
        .collect();
    let clusters: Vec<&str> = used.iter().map(|&i| clusters[i]).collect();

    let stage = || format!("estimate {}", spec.name);
    outcome.fit = Some(match spec.estimator {
        Estimator::Ols => Fit::Ols(
            ols_clustered(&y, &regressors, &clusters, &factors)
                .map_err(|source| PipelineError::Estimation { stage: stage(), source })?,
        ),
        Estimator::Probit => {
            let options = ProbitOptions { key: spec.key.clone(), ..ProbitOptions::default() };
            Fit::Probit(
                probit_clustered(&y, &regressors, &clusters, &factors, &options)
                    .map_err(|source| PipelineError::Estimation { stage: stage(), source })?,
            )
        }
    });
    Ok(outcome)
}

/// Models of the standard tables.
pub mod tables {
    use super::*;
    use crate::dataset::MEASURES;

    /// (1) risk with fixed effects only, (2) base model, (3)-(4) AISD and AISU.
    pub fn table4() -> Vec<ModelSpec> {
        vec![
            ModelSpec::ols("(1)", "exp_total", vec!["risk".into()]),
            ModelSpec::ols("(2)", "exp_total", base_regressors()),
            ModelSpec::ols("(3)", "exp_aisd", base_regressors()),
            ModelSpec::ols("(4)", "exp_aisu", base_regressors()),
        ]
    }

    /// Which panel variant a robustness row is estimated on.
    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum Variant {
        Base,
        SettleToMin,
        WhileUnamended,
        Gt14m,
        AlwaysHalf,
        AnnualizedFlows,
    }

    pub struct RobustnessRow {
        pub id: usize,
        pub label: &'static str,
        pub variant: Variant,
        pub key: &'static str,
        /// Models for the total, AISD and AISU expected returns.
        pub specs: Vec<ModelSpec>,
    }

    fn per_measure(id: usize, f: impl Fn(&str) -> ModelSpec) -> Vec<ModelSpec> {
        MEASURES
            .iter()
            .map(|m| {
                let mut s = f(&format!("exp_{m}"));
                s.name = format!("row{id}_{m}");
                s
            })
            .collect()
    }

    pub fn table5() -> Vec<RobustnessRow> {
        let base = |dep: &str| ModelSpec::ols("", dep, base_regressors());
        let swap_risk = |dep: &str| {
            let mut s = base(dep);
            s.regressors[0] = "z_score".into();
            s
        };
        let beta = |dep: &str| {
            let mut s = base(dep);
            s.regressors.push("lender_beta".into());
            s.fixed_effects.retain(|f| f != "lender");
            s
        };
        let squared = |dep: &str| {
            let mut s = base(dep);
            s.regressors.insert(1, "risk_sq".into());
            s
        };
        let sub = |col: &'static str| {
            move |dep: &str| {
                let mut s = base(dep);
                s.subsample = Some(col.into());
                s
            }
        };
        use Variant::*;
        let rows: Vec<(&'static str, Variant, &'static str, Box<dyn Fn(&str) -> ModelSpec>)> = vec![
            ("Z-score as risk", Base, "z_score", Box::new(swap_risk)),
            ("lender beta, no lender effects", Base, "risk", Box::new(beta)),
            ("upfront fee to earlier of maturity and path end", SettleToMin, "risk", Box::new(base)),
            ("upfront fee while unamended", WhileUnamended, "risk", Box::new(base)),
            ("conversion factor 0.5 above 14 months", Gt14m, "risk", Box::new(base)),
            ("conversion factor 0.5 for all", AlwaysHalf, "risk", Box::new(base)),
            ("annualized flows", AnnualizedFlows, "risk", Box::new(base)),
            ("risk squared", Base, "risk", Box::new(squared)),
            ("riskiest firms, whole sample", Base, "risk", Box::new(sub("riskiest_all"))),
            ("riskiest firms, crisis", Base, "risk", Box::new(sub("riskiest_crisis"))),
        ];
        rows.into_iter()
            .enumerate()
            .map(|(i, (label, variant, key, f))| RobustnessRow {
                id: i + 1,
                label,
                variant,
                key,
                specs: per_measure(i + 1, f),
            })
            .collect()
    }

    /// Base model plus risk x crisis, on expected (`exp`) or committed (`com`) returns.
    pub fn table6(prefix: &str) -> Vec<ModelSpec> {
        MEASURES
            .iter()
            .map(|m| {
                let s = ModelSpec::ols(format!("{prefix}_{m}"), format!("{prefix}_{m}"), base_regressors());
                interaction_spec(&s, "risk", "crisis")
            })
            .collect()
    }

    /// Probits of return increases on risk increases; `large` uses the
    /// top-quartile indicators.
    pub fn table7(large: bool) -> Vec<ModelSpec> {
        let suffix = if large { "_up_large" } else { "_up" };
        let key = format!("risk{suffix}");
        MEASURES
            .iter()
            .map(|m| {
                let mut regressors = vec![key.clone()];
                regressors.extend(base_regressors().into_iter().skip(1));
                ModelSpec {
                    name: format!("exp_{m}{suffix}"),
                    dependent: format!("exp_{m}{suffix}"),
                    regressors,
                    fixed_effects: FACTORS.iter().map(|s| s.to_string()).collect(),
                    cluster: default_cluster(),
                    interactions: Vec::new(),
                    estimator: Estimator::Probit,
                    key: Some(key.clone()),
                    subsample: None,
                }
            })
            .collect()
    }
}
