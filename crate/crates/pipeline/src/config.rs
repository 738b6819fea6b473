//! Run and generator configuration. Every struct deserializes from partial
//! JSON, with missing fields taking their defaults.

use creditline_core::market::SmoothingPolicy;
use creditline_core::returns::ReturnPolicy;
use creditline_core::Quarter;
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

/// Log-AR(1) process of the daily stock-return standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskProcess {
    /// Cross-firm center of the daily standard deviation.
    pub mean_daily_sd: f64,
    /// Standard deviation of firm means, log scale.
    pub firm_dispersion: f64,
    pub persistence: f64,
    /// Innovation standard deviation, log scale.
    pub innovation_sd: f64,
}

impl Default for RiskProcess {
    fn default() -> Self {
        RiskProcess { mean_daily_sd: 0.025, firm_dispersion: 0.3, persistence: 0.8, innovation_sd: 0.15 }
    }
}

/// Quarters of the financial crisis in the generated fundamentals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrisisConfig {
    pub enabled: bool,
    pub start: Quarter,
    pub end: Quarter,
    /// Shift of log risk during the crisis.
    pub risk_shift: f64,
    /// Cumulative log drop of equity prices over the crisis.
    pub equity_drop: f64,
}

impl Default for CrisisConfig {
    fn default() -> Self {
        CrisisConfig {
            enabled: true,
            start: Quarter::new(2007, 4),
            end: Quarter::new(2009, 2),
            risk_shift: 0.45,
            equity_drop: 0.8,
        }
    }
}

/// Coefficients of the annualized expected return (percent) at quarter t+1
/// on quarter-t risk and the quarter-t crisis indicator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedEffects {
    pub base_return_pct: f64,
    pub risk_slope: f64,
    pub crisis_effect: f64,
    pub risk_crisis_interaction: f64,
    pub firm_effect_sd: f64,
    pub lender_effect_sd: f64,
    /// Facility-level random effect. Facilities nest inside borrowers, so
    /// borrower effects absorb part of the cluster-level variation and
    /// facility-clustered errors understate it; off by default.
    pub facility_effect_sd: f64,
    pub noise_sd: f64,
}

impl Default for PlantedEffects {
    fn default() -> Self {
        PlantedEffects {
            base_return_pct: 2.0,
            risk_slope: 7.648,
            crisis_effect: 0.4,
            risk_crisis_interaction: -14.44,
            firm_effect_sd: 0.15,
            lender_effect_sd: 0.1,
            facility_effect_sd: 0.0,
            noise_sd: 0.2,
        }
    }
}

/// Drawn share of the commitment, tied to standardized log risk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsageConfig {
    pub mean: f64,
    pub sd: f64,
    pub risk_correlation: f64,
    /// Floor on the drawn share; near-empty facilities turn fixed fees into
    /// returns no grid level can offset.
    pub min: f64,
    pub max: f64,
}

impl Default for UsageConfig {
    fn default() -> Self {
        UsageConfig { mean: 0.3, sd: 0.15, risk_correlation: 0.5, min: 0.1, max: 0.95 }
    }
}

/// Pricing grid written into every generated facility: one criterion with
/// evenly spaced cut points, LIBOR spread equal to the criterion's level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub criterion: String,
    pub step_bps: f64,
    pub max_spread_bps: f64,
    /// Commitment fee as a share of the LIBOR spread.
    pub commitment_fee_share: f64,
    /// ABR spread is the LIBOR spread less this, floored at zero.
    pub abr_discount_bps: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            criterion: "cds5y".into(),
            step_bps: 5.0,
            max_spread_bps: 2000.0,
            commitment_fee_share: 0.2,
            abr_discount_bps: 100.0,
        }
    }
}

/// Facility terms and their draw probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FacilityTerms {
    pub max_per_firm: usize,
    /// Per-quarter probability that a live contract is amended.
    pub amendment_hazard: f64,
    pub maturities_months: Vec<u32>,
    pub lender_switch_prob: f64,
    pub commitment_to_assets: (f64, f64),
    pub p_secured: f64,
    pub p_syndicated: f64,
    pub p_restructuring: f64,
    pub p_borrowing_base: f64,
    pub p_lc_program: f64,
    pub p_commitment_fee: f64,
    pub p_annual_fee: f64,
    pub annual_fee_bps: f64,
    pub p_utilization_fee: f64,
    pub utilization_fee_bps: f64,
    pub utilization_threshold: f64,
    pub p_upfront_fee: f64,
    /// Upfront fee as a fraction of the commitment.
    pub upfront_fee_rate: f64,
    pub technical_default_rate: f64,
    pub waiver_share: f64,
    pub default_margin_bps: f64,
}

impl Default for FacilityTerms {
    fn default() -> Self {
        FacilityTerms {
            max_per_firm: 6,
            amendment_hazard: 0.06,
            maturities_months: vec![12, 14, 24, 36, 48, 60],
            lender_switch_prob: 0.3,
            commitment_to_assets: (0.05, 0.2),
            p_secured: 0.5,
            p_syndicated: 0.6,
            p_restructuring: 0.15,
            p_borrowing_base: 0.3,
            p_lc_program: 0.4,
            p_commitment_fee: 0.9,
            p_annual_fee: 0.15,
            annual_fee_bps: 10.0,
            p_utilization_fee: 0.2,
            utilization_fee_bps: 12.5,
            utilization_threshold: 0.5,
            p_upfront_fee: 0.4,
            upfront_fee_rate: 0.001,
            technical_default_rate: 0.03,
            waiver_share: 0.5,
            default_margin_bps: 200.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_firms: usize,
    pub n_quarters: usize,
    pub start_quarter: Quarter,
    /// Quarters simulated before the first panel quarter so that lagged and
    /// rolling inputs exist from the start.
    pub burn_in_quarters: usize,
    pub n_lenders: usize,
    pub risk: RiskProcess,
    pub crisis: CrisisConfig,
    pub planted: PlantedEffects,
    pub usage: UsageConfig,
    pub grid: GridConfig,
    pub facilities: FacilityTerms,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            n_firms: 150,
            n_quarters: 26,
            start_quarter: Quarter::new(2006, 1),
            burn_in_quarters: 8,
            n_lenders: 12,
            risk: RiskProcess::default(),
            crisis: CrisisConfig::default(),
            planted: PlantedEffects::default(),
            usage: UsageConfig::default(),
            grid: GridConfig::default(),
            facilities: FacilityTerms::default(),
        }
    }
}

fn check(ok: bool, what: &str) -> Result<(), PipelineError> {
    if ok {
        Ok(())
    } else {
        Err(PipelineError::Config(what.to_string()))
    }
}

fn prob(p: f64, name: &str) -> Result<(), PipelineError> {
    check((0.0..=1.0).contains(&p), &format!("{name} must be a probability"))
}

impl SyntheticConfig {
    pub fn first_quarter(&self) -> Quarter {
        self.start_quarter.offset(-(self.burn_in_quarters as i32))
    }

    pub fn last_quarter(&self) -> Quarter {
        self.start_quarter.offset(self.n_quarters as i32 - 1)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        check(self.n_firms >= 2, "n_firms must be at least 2")?;
        check(self.n_quarters >= 2, "n_quarters must be at least 2")?;
        check(self.burn_in_quarters >= 8, "burn_in_quarters must be at least 8")?;
        check(self.n_lenders >= 1, "n_lenders must be positive")?;
        let r = &self.risk;
        check(r.mean_daily_sd > 0.0, "risk.mean_daily_sd must be positive")?;
        check(r.firm_dispersion >= 0.0 && r.innovation_sd >= 0.0, "risk dispersions must be nonnegative")?;
        check(r.persistence > -1.0 && r.persistence < 1.0, "risk.persistence must lie in (-1, 1)")?;
        check(r.firm_dispersion > 0.0 || r.innovation_sd > 0.0, "risk needs some variation")?;
        let c = &self.crisis;
        check(c.start <= c.end, "crisis.start must not follow crisis.end")?;
        let u = &self.usage;
        check((-1.0..=1.0).contains(&u.risk_correlation), "usage.risk_correlation must lie in [-1, 1]")?;
        check(u.sd >= 0.0 && u.mean >= 0.0 && u.min >= 0.0 && u.min < u.max && u.max <= 1.0, "usage moments out of range")?;
        check(u.sd > 0.0 || u.risk_correlation == 0.0, "usage.risk_correlation needs usage.sd > 0")?;
        let p = &self.planted;
        let sds = [p.firm_effect_sd, p.lender_effect_sd, p.facility_effect_sd, p.noise_sd];
        check(sds.iter().all(|s| *s >= 0.0), "planted standard deviations must be nonnegative")?;
        let g = &self.grid;
        check(g.step_bps > 0.0 && g.max_spread_bps >= g.step_bps, "grid step and range must be positive")?;
        check(g.commitment_fee_share >= 0.0 && g.abr_discount_bps >= 0.0, "grid fee terms must be nonnegative")?;
        let f = &self.facilities;
        check(f.max_per_firm >= 1, "facilities.max_per_firm must be positive")?;
        check(!f.maturities_months.is_empty(), "facilities.maturities_months is empty")?;
        check(f.maturities_months.iter().all(|m| *m >= 3), "maturities must be at least 3 months")?;
        let (lo, hi) = f.commitment_to_assets;
        check(lo > 0.0 && hi >= lo, "facilities.commitment_to_assets must be a positive range")?;
        check(f.utilization_threshold > 0.0 && f.utilization_threshold <= 1.0, "utilization threshold in (0, 1]")?;
        for (v, n) in [
            (f.amendment_hazard, "amendment_hazard"),
            (f.lender_switch_prob, "lender_switch_prob"),
            (f.p_secured, "p_secured"),
            (f.p_syndicated, "p_syndicated"),
            (f.p_restructuring, "p_restructuring"),
            (f.p_borrowing_base, "p_borrowing_base"),
            (f.p_lc_program, "p_lc_program"),
            (f.p_commitment_fee, "p_commitment_fee"),
            (f.p_annual_fee, "p_annual_fee"),
            (f.p_utilization_fee, "p_utilization_fee"),
            (f.p_upfront_fee, "p_upfront_fee"),
            (f.technical_default_rate, "technical_default_rate"),
            (f.waiver_share, "waiver_share"),
        ] {
            prob(v, n)?;
        }
        Ok(())
    }
}

/// How the quarter fixed effect is keyed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarterEffect {
    /// Quarter of the year, leaving the crisis indicator identified.
    #[default]
    QuarterOfYear,
    /// Calendar quarter; absorbs the crisis indicator.
    Calendar,
}

/// Options of one analysis run over a panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub policy: ReturnPolicy,
    pub smoothing: SmoothingPolicy,
    /// Quarters t whose crisis indicator is one.
    pub crisis_window: (Quarter, Quarter),
    pub quarter_effect: QuarterEffect,
    /// Inclusive range of return quarters (t+1) kept in the sample.
    pub window: Option<(Quarter, Quarter)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            policy: ReturnPolicy::default(),
            smoothing: SmoothingPolicy::default(),
            crisis_window: (Quarter::new(2007, 3), Quarter::new(2009, 1)),
            quarter_effect: QuarterEffect::default(),
            window: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        check(self.crisis_window.0 <= self.crisis_window.1, "crisis_window start follows its end")?;
        if let Some((a, b)) = self.window {
            check(a <= b, "window start follows its end")?;
        }
        let lgd = self.policy.lgd_recovery_factor;
        check((0.0..=1.0).contains(&lgd), "lgd_recovery_factor must lie in [0, 1]")
    }

    pub fn in_crisis(&self, t: Quarter) -> bool {
        self.crisis_window.0 <= t && t <= self.crisis_window.1
    }
}

/// A configuration file: synthetic generator and run options.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub synthetic: SyntheticConfig,
    pub run: RunConfig,
}

/// Overlays `over` on `base`, key by key through nested objects.
pub fn merge_json(base: &mut serde_json::Value, over: &serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let c: PipelineConfig =
            serde_json::from_str(r#"{"synthetic": {"seed": 3, "usage": {"risk_correlation": 0.2}}}"#).unwrap();
        assert_eq!(c.synthetic.seed, 3);
        assert_eq!(c.synthetic.usage.risk_correlation, 0.2);
        assert_eq!(c.synthetic.usage.mean, UsageConfig::default().mean);
        assert_eq!(c.run, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"synthetic": {"sede": 3}}"#).is_err());
    }

    #[test]
    fn correlation_out_of_range() {
        let mut c = SyntheticConfig::default();
        c.usage.risk_correlation = 1.5;
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        c.usage.risk_correlation = 0.5;
        c.usage.sd = 0.0;
        assert!(c.validate().is_err());
        assert!(SyntheticConfig::default().validate().is_ok());
    }

    #[test]
    fn merge_overrides_nested_keys() {
        let mut base = serde_json::json!({"run": {"policy": {"ccf_rule": "always_half", "pd_markdown": true}}});
        merge_json(&mut base, &serde_json::json!({"run": {"policy": {"pd_markdown": false}}}));
        assert_eq!(base["run"]["policy"]["ccf_rule"], "always_half");
        assert_eq!(base["run"]["policy"]["pd_markdown"], false);
    }
}
