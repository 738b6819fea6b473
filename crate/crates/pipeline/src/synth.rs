//! Synthetic facility-quarter panels with planted risk premia.
//!
//! Every firm draws from its own ChaCha stream, so the panel is a pure
//! function of the configuration. Stream 0 carries the rate environment and
//! the lenders.
//!
//! The pricing grid of every facility keys on the firm's CDS spread. In each
//! facility-quarter the generator picks the grid level whose engine-computed
//! expected return is closest to the planted target, so regressions of
//! realized expected returns on lagged risk see the planted coefficients up
//! to the grid's step.

use std::collections::BTreeMap;

use creditline_core::contract::{
    AbrCandidate, AbrReference, BaseRateOption, DefaultTerms, FeeSchedule, LiborTenorRule, SpreadSpec, UpfrontFee,
    UtilizationFee,
};
use creditline_core::dsl::{EvalContext, GridColumn, GridRow, PricingGrid};
use creditline_core::ingest::Panel;
use creditline_core::market::LenderQuarter;
use creditline_core::pricing::resolve_quarter_pricing;
use creditline_core::returns::{amortization_schedule, compute_return, quarterly_income, ReturnPolicy};
use creditline_core::risk::{merton_pd, MertonInputs};
use creditline_core::{Bps, Facility, FacilityQuarterState, FirmQuarter, LoanPath, Quarter, RateEnvironment, Usd};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::SyntheticConfig;
use crate::engine::constants;
use crate::error::PipelineError;

/// Firm variable the generated grids key on.
pub const KNOB: &str = "cds5y";

/// Trading days per quarter and per year.
const DAYS_PER_QUARTER: f64 = 63.0;
const DAYS_PER_YEAR: f64 = 252.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SynthDiagnostics {
    pub firm_quarters: usize,
    pub facilities: usize,
    pub facility_quarters: usize,
    /// Facility-quarters whose grid level was solved for the planted return.
    pub targeted: usize,
    /// Targets below the return at the lowest grid level.
    pub clamped_low: usize,
    /// Targets above the return at the highest grid level.
    pub clamped_high: usize,
    /// Facility-quarters without a defined expected return.
    pub untargetable: usize,
    /// Pearson correlation of usage with log risk over facility-quarters.
    pub usage_log_risk_correlation: f64,
}

#[derive(Clone, Debug)]
pub struct SyntheticBundle {
    pub panel: Panel,
    pub diagnostics: SynthDiagnostics,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn firm_id(i: usize) -> String {
    format!("B{:03}", i + 1)
}

fn lender_id(l: usize) -> String {
    format!("L{:02}", l + 1)
}

/// Human-readable description of the data-generating process, for the manifest.
pub fn describe(cfg: &SyntheticConfig) -> Vec<String> {
    let p = &cfg.planted;
    vec![
        format!(
            "log daily return sd = firm mean (center ln {}, sd {}) + AR(1) deviation (persistence {}, innovation sd {}) + crisis shift {}",
            cfg.risk.mean_daily_sd, cfg.risk.firm_dispersion, cfg.risk.persistence, cfg.risk.innovation_sd,
            if cfg.crisis.enabled { cfg.crisis.risk_shift } else { 0.0 }
        ),
        format!("crisis quarters {}..={} (enabled: {})", cfg.crisis.start, cfg.crisis.end, cfg.crisis.enabled),
        format!(
            "log price = log fundamental value + AR(1) valuation gap (persistence {VALUATION_PERSISTENCE}, quarterly shock sd = daily sd * sqrt(63), crisis drift -{} spread over the crisis)",
            if cfg.crisis.enabled { cfg.crisis.equity_drop } else { 0.0 }
        ),
        format!(
            "annualized expected return at t+1 (percent) = {} + {}*risk_t + {}*crisis_t + {}*risk_t*crisis_t + firm (sd {}) + lender (sd {}) + facility (sd {}) + noise (sd {})",
            p.base_return_pct, p.risk_slope, p.crisis_effect, p.risk_crisis_interaction, p.firm_effect_sd,
            p.lender_effect_sd, p.facility_effect_sd, p.noise_sd
        ),
        format!(
            "usage = clamp({} + {}*({}*z + sqrt(1-{}^2)*e), {}, {}), z = standardized log risk",
            cfg.usage.mean, cfg.usage.sd, cfg.usage.risk_correlation, cfg.usage.risk_correlation, cfg.usage.min, cfg.usage.max
        ),
        format!(
            "grid on {KNOB}: cut points every {} bps up to {}; LIBOR spread = level, ABR spread = level - {}, commitment fee = {} x level",
            cfg.grid.step_bps, cfg.grid.max_spread_bps, cfg.grid.abr_discount_bps, cfg.grid.commitment_fee_share
        ),
        "amounts in USD millions; expected returns targeted under the default return policy".to_string(),
    ]
}

/// Rates, market returns and lender returns, from stream 0.
struct Market {
    rates: BTreeMap<Quarter, RateEnvironment>,
    lenders: BTreeMap<(String, Quarter), LenderQuarter>,
    lender_effects: Vec<f64>,
}

fn in_window(q: Quarter, start: Quarter, end: Quarter) -> bool {
    start <= q && q <= end
}

fn generate_market(cfg: &SyntheticConfig) -> Market {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let c = &cfg.crisis;
    let crisis_len = f64::from(c.start.quarters_until(c.end) + 1);
    let mut rates = BTreeMap::new();
    for q in cfg.first_quarter().range_to(cfg.last_quarter().next()) {
        let in_crisis = c.enabled && in_window(q, c.start, c.end);
        // Policy rate: high before the crisis, easing through it, near zero after.
        let base = if !c.enabled || q < c.start {
            5.0
        } else if q > c.end {
            0.25
        } else {
            let k = f64::from(c.start.quarters_until(q) + 1);
            5.0 - 4.75 * k / crisis_len
        };
        let ff = (base + 0.05 * normal(&mut rng)).max(0.05);
        let stress = if in_crisis { 0.6 } else { 0.0 };
        let l1 = ff + 0.15 + stress;
        let market = 0.02 + 0.07 * normal(&mut rng) - if in_crisis { 0.08 } else { 0.0 };
        rates.insert(
            q,
            RateEnvironment {
                quarter: q,
                libor_1m: Some(l1),
                libor_2m: Some(l1 + 0.05),
                libor_3m: Some(l1 + 0.1),
                libor_6m: Some(l1 + 0.2),
                prime: ff + 3.0,
                fed_funds: ff,
                tbill_3m: (ff - 0.15).max(0.02),
                market_index_return: market,
            },
        );
    }
    let mut lenders = BTreeMap::new();
    let mut lender_effects = Vec::with_capacity(cfg.n_lenders);
    for l in 0..cfg.n_lenders {
        let beta = uniform(&mut rng, 0.7, 1.6);
        lender_effects.push(cfg.planted.lender_effect_sd * normal(&mut rng));
        for (q, r) in &rates {
            let rf = r.tbill_3m / 400.0;
            let ret = rf + beta * (r.market_index_return - rf) + 0.04 * normal(&mut rng);
            lenders.insert((lender_id(l), *q), LenderQuarter { lender_id: lender_id(l), quarter: *q, stock_return: ret });
        }
    }
    Market { rates, lenders, lender_effects }
}

/// One firm's fundamentals with the generator's latent state.
struct FirmDraw {
    rng: ChaCha8Rng,
    firms: Vec<FirmQuarter>,
    /// Log daily return sd per quarter, aligned with `firms`.
    log_risk: Vec<f64>,
    firm_effect: f64,
}

const VALUATION_PERSISTENCE: f64 = 0.85;

fn generate_firm(cfg: &SyntheticConfig, i: usize) -> FirmDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64 + 1);
    let r = &cfg.risk;
    let c = &cfg.crisis;
    let id = firm_id(i);

    let mu = r.mean_daily_sd.ln() + r.firm_dispersion * normal(&mut rng);
    let stationary_sd = r.innovation_sd / (1.0 - r.persistence * r.persistence).sqrt();
    let mut dev = stationary_sd * normal(&mut rng);

    let assets0 = (2000f64.ln() + normal(&mut rng)).exp();
    let debt_ratio = uniform(&mut rng, 0.15, 0.45);
    let short_share = uniform(&mut rng, 0.1, 0.4);
    let other_liab = uniform(&mut rng, 0.1, 0.25);
    let current_assets = uniform(&mut rng, 0.2, 0.5);
    let current_liab = uniform(&mut rng, 0.1, 0.3);
    let cash = uniform(&mut rng, 0.02, 0.15);
    let tangible = uniform(&mut rng, 0.2, 0.6);
    let roa = uniform(&mut rng, 0.02, 0.05);
    let turnover = uniform(&mut rng, 0.15, 0.4);
    let capex = uniform(&mut rng, 0.01, 0.03);
    let retained = uniform(&mut rng, 0.05, 0.4);
    let equity_to_assets = uniform(&mut rng, 0.5, 2.0);
    let rated = rng.random_bool(0.8);
    let rating_shift = 1.5 * normal(&mut rng);
    let firm_effect = cfg.planted.firm_effect_sd * normal(&mut rng);

    let shares = 100.0;
    // log price = fundamental value + AR(1) valuation gap
    let mut gap = 0.0;
    let crisis_len = f64::from(c.start.quarters_until(c.end) + 1);
    let mut prices: Vec<f64> = Vec::new();
    let mut firms = Vec::new();
    let mut log_risk = Vec::new();
    for (k, q) in cfg.first_quarter().range_to(cfg.last_quarter().next()).enumerate() {
        let in_crisis = c.enabled && in_window(q, c.start, c.end);
        if k > 0 {
            dev = r.persistence * dev + r.innovation_sd * normal(&mut rng);
        }
        let x = mu + dev + if in_crisis { c.risk_shift } else { 0.0 };
        let risk = x.exp();
        let z = x - mu;

        let drop = if in_crisis { c.equity_drop / crisis_len } else { 0.0 };
        if k > 0 {
            gap = VALUATION_PERSISTENCE * gap + risk * DAYS_PER_QUARTER.sqrt() * normal(&mut rng) - drop;
        }
        let fundamental = assets0 * (0.01 * k as f64).exp();
        let price = equity_to_assets * fundamental / shares * gap.exp();
        prices.push(price);

        let mut noise = |s: f64| (s * normal(&mut rng)).exp();
        let atq = fundamental * noise(0.02);
        let dr = (debt_ratio + 0.1 * z).clamp(0.05, 0.8);
        let debt = dr * atq;
        let ltq = debt + other_liab * atq;
        let oibdpq = atq * (roa - 0.01 * z) * noise(0.1);
        let dpq = 0.01 * atq;
        let xintq = 0.015 * debt * noise(0.05);
        let piq = oibdpq - dpq - xintq;
        let ibq = 0.65 * piq;
        let mut fq = FirmQuarter::new(id.clone(), q);
        for (m, v) in [
            ("atq", atq),
            ("ltq", ltq),
            ("dlcq", short_share * debt),
            ("dlttq", (1.0 - short_share) * debt),
            ("ceqq", atq - ltq),
            ("seqq", atq - ltq),
            ("pstkl", 0.0),
            ("txditcq", 0.02 * atq),
            ("actq", current_assets * atq * noise(0.05)),
            ("lctq", current_liab * atq * noise(0.05)),
            ("cheq", cash * atq * noise(0.1)),
            ("txpq", 0.01 * atq),
            ("ppentq", tangible * atq * noise(0.03)),
            ("oibdpq", oibdpq),
            ("dpq", dpq),
            ("xintq", xintq),
            ("piq", piq),
            ("ibq", ibq),
            ("saleq", turnover * atq * noise(0.05)),
            ("capxq", capex * atq * noise(0.2)),
            ("dvq", 0.2 * ibq.max(0.0)),
            ("req", retained * atq),
            ("prccq", price),
            ("cshoq", shares),
        ] {
            fq.set(m, v);
        }
        fq.daily_return_stddev_12m = Some(risk);
        fq.monthly_return_stddev_12m_annualized = Some(risk * DAYS_PER_YEAR.sqrt() * noise(0.1));
        fq.stock_return_12m = (k >= 4).then(|| price / prices[k - 4] - 1.0);
        if rated {
            let level = 11.0 + 4.0 * (x - r.mean_daily_sd.ln()) + rating_shift;
            fq.rating = Some(level.round().clamp(1.0, 21.0) as u8);
        }
        firms.push(fq);
        log_risk.push(x);
    }
    FirmDraw { rng, firms, log_risk, firm_effect }
}

/// Grid whose level L (0..=n) charges `step * L` over LIBOR; the knob value
/// `step * L` selects level L.
fn grid(cfg: &SyntheticConfig) -> Result<PricingGrid, PipelineError> {
    let g = &cfg.grid;
    let n = grid_levels(cfg);
    let thresholds = (0..n).map(|i| g.step_bps * i as f64 + g.step_bps / 2.0).collect();
    let cells = (0..=n)
        .map(|l| {
            let s = g.step_bps * l as f64;
            GridRow {
                libor_spread: Some(Bps(s)),
                abr_spread: Some(Bps((s - g.abr_discount_bps).max(0.0))),
                commitment_fee: Some(Bps(g.commitment_fee_share * s)),
                annual_fee: None,
                utilization_fee: None,
            }
        })
        .collect();
    PricingGrid::single(KNOB, thresholds, cells).map_err(|e| PipelineError::Config(format!("grid: {e}")))
}

fn grid_levels(cfg: &SyntheticConfig) -> usize {
    (cfg.grid.max_spread_bps / cfg.grid.step_bps).round() as usize
}

fn baseline_knob(cfg: &SyntheticConfig, risk: f64) -> f64 {
    let level = ((150.0 + 4000.0 * (risk - cfg.risk.mean_daily_sd)) / cfg.grid.step_bps).round();
    level.clamp(0.0, grid_levels(cfg) as f64) * cfg.grid.step_bps
}

/// Contract draws of one firm's loan path.
struct PathDraw {
    facilities: Vec<Facility>,
    termination: Option<Quarter>,
    facility_effects: Vec<f64>,
    lender_index: Vec<usize>,
}

fn maturity_quarters(months: u32) -> i32 {
    (months as i32 + 2) / 3
}

fn draw_contract(
    cfg: &SyntheticConfig,
    rng: &mut ChaCha8Rng,
    firm: &FirmDraw,
    grid: &PricingGrid,
    i: usize,
    seq: usize,
    origination: Quarter,
    lender: usize,
    predecessor: Option<String>,
) -> Facility {
    let t = &cfg.facilities;
    let months = t.maturities_months[rng.random_range(0..t.maturities_months.len())];
    let k = cfg.first_quarter().quarters_until(origination).max(0) as usize;
    let assets = firm.firms[k.min(firm.firms.len() - 1)].get("atq").unwrap_or(1000.0);
    let commitment = assets * uniform(rng, t.commitment_to_assets.0, t.commitment_to_assets.1);
    let mut fees = FeeSchedule::default();
    if rng.random_bool(t.p_commitment_fee) {
        fees.commitment_fee = Some(SpreadSpec::grid(GridColumn::CommitmentFee));
    }
    if rng.random_bool(t.p_annual_fee) {
        fees.annual_fee = Some(SpreadSpec::fixed(t.annual_fee_bps));
    }
    if rng.random_bool(t.p_utilization_fee) {
        fees.utilization_fee =
            Some(UtilizationFee { fee: SpreadSpec::fixed(t.utilization_fee_bps), threshold: t.utilization_threshold });
    }
    if rng.random_bool(t.p_upfront_fee) {
        fees.upfront_fee =
            Some(UpfrontFee { amount: Usd(t.upfront_fee_rate * commitment), paid_quarter: origination });
    }
    let id = firm_id(i);
    Facility {
        facility_id: format!("{id}-{}", seq + 1),
        borrower_id: id.clone(),
        lender_id: lender_id(lender),
        origination_quarter: origination,
        stated_maturity_quarter: origination.offset(maturity_quarters(months)),
        maturity_months: Some(months),
        commitment: Usd(commitment),
        secured: rng.random_bool(t.p_secured),
        syndicated: rng.random_bool(t.p_syndicated),
        restructuring_purpose: rng.random_bool(t.p_restructuring),
        has_borrowing_base: rng.random_bool(t.p_borrowing_base),
        has_lc_program: rng.random_bool(t.p_lc_program),
        base_rate_options: vec![
            BaseRateOption::libor(LiborTenorRule::BorrowerChoice, SpreadSpec::grid(GridColumn::LiborSpread)),
            BaseRateOption::abr(
                vec![AbrCandidate::new(AbrReference::Prime, 0.0), AbrCandidate::new(AbrReference::FedFunds, 50.0)],
                SpreadSpec::grid(GridColumn::AbrSpread),
            ),
        ],
        fixed_rate_pct: None,
        fee_schedule: fees,
        pricing_grid: Some(grid.clone()),
        default_terms: DefaultTerms {
            default_margin_bps: Bps(t.default_margin_bps),
            restrict_to_abr: rng.random_bool(0.5),
        },
        loan_path_id: id,
        predecessor_id: predecessor,
    }
}

fn generate_path(cfg: &SyntheticConfig, firm: &mut FirmDraw, grid: &PricingGrid, i: usize) -> PathDraw {
    let t = &cfg.facilities;
    let mut rng = firm.rng.clone();
    let start = cfg.start_quarter.offset(-(rng.random_range(0..=4)));
    let mut lender = rng.random_range(0..cfg.n_lenders);
    let first = draw_contract(cfg, &mut rng, firm, grid, i, 0, start, lender, None);
    let mut out = PathDraw {
        facility_effects: vec![cfg.planted.facility_effect_sd * normal(&mut rng)],
        lender_index: vec![lender],
        facilities: vec![first],
        termination: None,
    };
    let mut q = start.next();
    while q <= cfg.last_quarter() {
        let cur = out.facilities.last().expect("path is nonempty");
        let matured = q >= cur.stated_maturity_quarter;
        let amended = !matured && rng.random_bool(t.amendment_hazard);
        if matured || amended {
            if out.facilities.len() >= t.max_per_firm {
                if matured {
                    out.termination = Some(q);
                    break;
                }
            } else {
                if rng.random_bool(t.lender_switch_prob) {
                    lender = rng.random_range(0..cfg.n_lenders);
                }
                let pred = cur.facility_id.clone();
                let seq = out.facilities.len();
                let f = draw_contract(cfg, &mut rng, firm, grid, i, seq, q, lender, Some(pred));
                out.facilities.push(f);
                out.facility_effects.push(cfg.planted.facility_effect_sd * normal(&mut rng));
                out.lender_index.push(lender);
            }
        }
        q = q.next();
    }
    firm.rng = rng;
    out
}

/// Mean and standard deviation of log risk over the panel quarters.
fn log_risk_moments(cfg: &SyntheticConfig, draws: &[FirmDraw]) -> (f64, f64) {
    let skip = cfg.burn_in_quarters;
    let xs: Vec<f64> = draws.iter().flat_map(|d| d.log_risk[skip..].iter().copied()).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn generated_crisis(cfg: &SyntheticConfig, t: Quarter) -> bool {
    let c = &cfg.crisis;
    c.enabled && in_window(t, c.start.prev(), c.end.prev())
}

#[derive(Default)]
struct TargetCounts {
    targeted: usize,
    clamped_low: usize,
    clamped_high: usize,
    untargetable: usize,
}

struct FirmOutput {
    firms: Vec<FirmQuarter>,
    facilities: Vec<Facility>,
    states: Vec<FacilityQuarterState>,
    counts: TargetCounts,
    usage_pairs: Vec<(f64, f64)>,
}

/// Annualized expected return (percent) at grid level `level`, if defined.
fn expected_at_level(
    cfg: &SyntheticConfig,
    f: &Facility,
    state: &FacilityQuarterState,
    rates: &RateEnvironment,
    upfront: f64,
    pd: f64,
    level: usize,
) -> Option<f64> {
    let mut fq = FirmQuarter::new(f.borrower_id.clone(), state.quarter);
    fq.set(KNOB, cfg.grid.step_bps * level as f64);
    let ctx = EvalContext::current(Some(&fq), Some(state), constants(f), state.quarter);
    let p = resolve_quarter_pricing(f, &ctx, rates, state).ok()?;
    let income = quarterly_income(&p, f, state, upfront);
    let rec = compute_return(&income, state, f, &ReturnPolicy::default(), Some(pd)).ok()?;
    Some(400.0 * rec.expected_return?)
}

/// Grid level whose expected return is closest to `target`; the return is
/// nondecreasing in the level.
fn solve_level(n: usize, target: f64, eval: impl Fn(usize) -> Option<f64>, counts: &mut TargetCounts) -> Option<usize> {
    let lo = eval(0)?;
    let hi = eval(n)?;
    if target <= lo {
        counts.clamped_low += 1;
        return Some(0);
    }
    if target >= hi {
        counts.clamped_high += 1;
        return Some(n);
    }
    // smallest level with return >= target
    let (mut a, mut b) = (0usize, n);
    while b - a > 1 {
        let m = (a + b) / 2;
        if eval(m)? >= target {
            b = m;
        } else {
            a = m;
        }
    }
    counts.targeted += 1;
    let below = eval(a)?;
    let above = eval(b)?;
    Some(if target - below <= above - target { a } else { b })
}

fn finish_firm(
    cfg: &SyntheticConfig,
    market: &Market,
    grid: &PricingGrid,
    moments: (f64, f64),
    i: usize,
    mut draw: FirmDraw,
) -> FirmOutput {
    let path = generate_path(cfg, &mut draw, grid, i);
    let mut rng = draw.rng.clone();
    let t = &cfg.facilities;
    let u = &cfg.usage;
    let p = &cfg.planted;
    let first = cfg.first_quarter();
    let idx = |q: Quarter| first.quarters_until(q) as usize;
    let lp = LoanPath { path_id: firm_id(i), facilities: path.facilities.clone() };

    let mut states = Vec::new();
    let mut usage_pairs = Vec::new();
    for q in cfg.start_quarter.range_to(cfg.last_quarter().next()) {
        let Some(j) = lp.active_at(q, path.termination) else { continue };
        let f = &lp.facilities[j];
        let x = draw.log_risk[idx(q)];
        let z = (x - moments.0) / moments.1;
        let rho = u.risk_correlation;
        let usage = (u.mean + u.sd * (rho * z + (1.0 - rho * rho).sqrt() * normal(&mut rng))).clamp(u.min, u.max);
        let c = f.commitment.0;
        let mut s = FacilityQuarterState::new(f.facility_id.clone(), q, usage * c);
        if f.has_lc_program {
            s.letters_of_credit = Some(c * uniform(&mut rng, 0.0, 1.0 - u.max));
        }
        if f.has_borrowing_base {
            s.borrowing_base = Some(c * uniform(&mut rng, 0.8, 1.2));
        }
        let p_default = (t.technical_default_rate * (1.5 * z).exp()).min(0.5);
        s.technical_default = rng.random_bool(p_default);
        s.waiver_granted = s.technical_default && rng.random_bool(t.waiver_share);
        if j + 1 == lp.facilities.len() {
            s.termination_quarter = path.termination;
        }
        usage_pairs.push((usage, x));
        states.push((j, s));
    }

    let sched = amortization_schedule(&lp, path.termination, ReturnPolicy::default().upfront_amortization);
    let n = grid_levels(cfg);
    let mut counts = TargetCounts::default();
    let mut firms = draw.firms;
    for fq in firms.iter_mut() {
        let risk = fq.daily_return_stddev_12m.unwrap_or(cfg.risk.mean_daily_sd);
        fq.set(KNOB, baseline_knob(cfg, risk));
    }
    for (j, s) in &states {
        let f = &lp.facilities[*j];
        let tau = s.quarter;
        let prev = &firms[idx(tau) - 1];
        let risk = prev.daily_return_stddev_12m.expect("generated risk");
        let d = if generated_crisis(cfg, tau.prev()) { 1.0 } else { 0.0 };
        let target = p.base_return_pct
            + draw.firm_effect
            + market.lender_effects[path.lender_index[*j]]
            + path.facility_effects[*j]
            + p.risk_slope * risk
            + p.crisis_effect * d
            + p.risk_crisis_interaction * risk * d
            + p.noise_sd * normal(&mut rng);
        let cur = &firms[idx(tau)];
        let pd = MertonInputs::from_firm(cur).and_then(|m| merton_pd(&m).ok()).map(|r| r.pd);
        let rates = &market.rates[&tau];
        let upfront = sched.get(&f.facility_id, tau);
        let level = pd.and_then(|pd| {
            solve_level(n, target, |l| expected_at_level(cfg, f, s, rates, upfront, pd, l), &mut counts)
        });
        match level {
            Some(l) => firms[idx(tau)].set(KNOB, cfg.grid.step_bps * l as f64),
            None => counts.untargetable += 1,
        }
    }
    FirmOutput {
        firms,
        facilities: lp.facilities,
        states: states.into_iter().map(|(_, s)| s).collect(),
        counts,
        usage_pairs,
    }
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Generates a validated synthetic panel.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticBundle, PipelineError> {
    cfg.validate()?;
    let market = generate_market(cfg);
    let grid = grid(cfg)?;
    let draws: Vec<FirmDraw> = (0..cfg.n_firms).into_par_iter().map(|i| generate_firm(cfg, i)).collect();
    let moments = log_risk_moments(cfg, &draws);
    if !(moments.1 > 0.0) {
        return Err(PipelineError::Config("generated risk has no variation".into()));
    }
    let outputs: Vec<FirmOutput> = draws
        .into_par_iter()
        .enumerate()
        .map(|(i, d)| finish_firm(cfg, &market, &grid, moments, i, d))
        .collect();

    let mut panel = Panel { rates: market.rates, lenders: market.lenders, ..Panel::default() };
    let mut diag = SynthDiagnostics::default();
    let mut pairs = Vec::new();
    for o in outputs {
        diag.targeted += o.counts.targeted;
        diag.clamped_low += o.counts.clamped_low;
        diag.clamped_high += o.counts.clamped_high;
        diag.untargetable += o.counts.untargetable;
        pairs.extend(o.usage_pairs);
        for fq in o.firms {
            panel.firms.insert((fq.firm_id.clone(), fq.quarter), fq);
        }
        for s in o.states {
            panel.states.insert((s.facility_id.clone(), s.quarter), s);
        }
        panel.facilities.extend(o.facilities);
    }
    diag.firm_quarters = panel.firms.len();
    diag.facilities = panel.facilities.len();
    diag.facility_quarters = panel.states.len();
    diag.usage_log_risk_correlation = if pairs.len() > 2 { pearson(&pairs) } else { f64::NAN };
    panel.validate().map_err(|e| PipelineError::computation("generate", e))?;
    Ok(SyntheticBundle { panel, diagnostics: diag })
}
