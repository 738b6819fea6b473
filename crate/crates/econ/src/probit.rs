use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;

use crate::design::{Column, Design, Factor};
use crate::linalg::{cholesky_solve, sandwich, spd_inverse, HouseholderQr};
use crate::ols::cluster_index;
use crate::stats::Coefficient;
use crate::EstimationError;

/// Absolute standardized coefficient beyond which a non-converging fit is
/// reported as separation.
const DIVERGENCE: f64 = 8.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbitOptions {
    /// Regressor whose average marginal effect is reported.
    pub key: Option<String>,
    pub max_iterations: usize,
    /// Convergence threshold on the gradient max-norm.
    pub tolerance: f64,
    /// Drop fixed-effect levels whose rows all share one outcome, together
    /// with those rows, instead of failing.
    pub drop_perfect_predictors: bool,
}

impl Default for ProbitOptions {
    fn default() -> Self {
        ProbitOptions { key: None, max_iterations: 200, tolerance: 1e-8, drop_perfect_predictors: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalEffect {
    pub name: String,
    pub binary: bool,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbitResult {
    pub coefficients: Vec<Coefficient>,
    pub dropped: Vec<String>,
    /// Rows removed because their fixed-effect level predicts the outcome.
    pub perfectly_predicted: usize,
    pub ame: Option<MarginalEffect>,
    pub prob_y1: f64,
    pub pseudo_r2: f64,
    pub log_likelihood: f64,
    pub n: usize,
    pub clusters: usize,
    pub iterations: usize,
    pub gradient_max: f64,
    #[serde(skip)]
    pub covariance: Vec<f64>,
}

impl ProbitResult {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `Phi(u) / phi(u)` for large negative `u` by continued fraction.
fn mills_tail(u: f64) -> f64 {
    let x = -u;
    let mut acc = x;
    for k in (1..=60).rev() {
        acc = x + f64::from(k) / acc;
    }
    1.0 / acc
}

/// `ln Phi(u)` and `phi(u) / Phi(u)`, accurate far into the lower tail.
fn log_cdf_and_ratio(u: f64) -> (f64, f64) {
    if u < -10.0 {
        let r = mills_tail(u);
        (-0.5 * u * u - 0.5 * (2.0 * PI).ln() + r.ln(), 1.0 / r)
    } else {
        let c = cdf(u);
        (c.ln(), pdf(u) / c)
    }
}

/// Probit of a 0/1 outcome on an intercept, `regressors` and indicator
/// expansions of `factors`, fitted by damped Newton iterations with
/// cluster-robust covariance `H^-1 (sum_g s_g s_g') H^-1 * G/(G-1)`.
pub fn probit_clustered<K: Ord + Clone>(
    y: &[f64],
    regressors: &[Column],
    clusters: &[K],
    factors: &[Factor],
    options: &ProbitOptions,
) -> Result<ProbitResult, EstimationError> {
    let n_all = y.len();
    if clusters.len() != n_all {
        return Err(EstimationError::DimensionMismatch { name: "clusters".into(), expected: n_all, got: clusters.len() });
    }
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(EstimationError::DegenerateOutcome);
    }
    for f in factors {
        if f.levels.len() != n_all {
            return Err(EstimationError::DimensionMismatch { name: f.name.clone(), expected: n_all, got: f.levels.len() });
        }
    }

    let keep = perfect_prediction_mask(y, regressors, factors, options.drop_perfect_predictors)?;
    let rows: Vec<usize> = (0..n_all).filter(|&i| keep[i]).collect();
    let perfectly_predicted = n_all - rows.len();
    let y: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let regressors: Vec<Column> =
        regressors.iter().map(|c| Column::new(c.name.clone(), pick(&c.values, &rows, &c.name))).collect();
    let factors: Vec<Factor> = factors
        .iter()
        .map(|f| Factor {
            name: f.name.clone(),
            levels: rows.iter().map(|&i| f.levels[i].clone()).collect(),
            reference: f.reference.clone(),
        })
        .collect();
    let clusters: Vec<K> = rows.iter().map(|&i| clusters[i].clone()).collect();

    let n = y.len();
    let ones = y.iter().filter(|v| **v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(EstimationError::DegenerateOutcome);
    }
    for c in &regressors {
        check_binary_separation(&y, c)?;
    }

    let design = Design::build(n, &regressors, &factors)?;
    let qr = HouseholderQr::new(&design.columns);
    let k = qr.rank();
    if n <= k {
        return Err(EstimationError::InsufficientObservations { n, k });
    }
    let names: Vec<String> = qr.kept().iter().map(|&j| design.names[j].clone()).collect();
    let dropped: Vec<String> = qr.dropped().iter().map(|&j| design.names[j].clone()).collect();
    let mut x = vec![0.0; n * k];
    for (j, &col) in qr.kept().iter().enumerate() {
        for i in 0..n {
            x[i * k + j] = design.columns[col][i];
        }
    }
    let (cidx, g) = cluster_index(&clusters);
    if g < 2 {
        return Err(EstimationError::SingleCluster);
    }

    let fit = newton(&y, &x, k, options, &names)?;
    let beta = fit.beta;

    let mut scores = vec![0.0; g * k];
    for i in 0..n {
        let row = &x[i * k..(i + 1) * k];
        let z: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
        let q = 2.0 * y[i] - 1.0;
        let lambda = q * log_cdf_and_ratio(q * z).1;
        for j in 0..k {
            scores[cidx[i] * k + j] += lambda * row[j];
        }
    }
    let mut meat = vec![0.0; k * k];
    for s in scores.chunks(k) {
        for a in 0..k {
            for b in 0..k {
                meat[a * k + b] += s[a] * s[b];
            }
        }
    }
    let h_inv = spd_inverse(&fit.hessian, k)
        .ok_or_else(|| EstimationError::NonConvergence { iterations: fit.iterations, trace: "singular information matrix".into() })?;
    let gf = g as f64;
    let covariance: Vec<f64> = sandwich(&h_inv, &meat, k).into_iter().map(|v| v * gf / (gf - 1.0)).collect();

    let coefficients: Vec<Coefficient> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = covariance[j * k + j].max(0.0).sqrt();
            let t = beta[j] / se;
            Coefficient { name: name.clone(), estimate: beta[j], se, p_value: 2.0 * cdf(-t.abs()) }
        })
        .collect();

    let ame = match &options.key {
        None => None,
        Some(key) => {
            let j = names.iter().position(|nm| nm == key).ok_or_else(|| EstimationError::UnknownRegressor(key.clone()))?;
            Some(average_marginal_effect(&x, k, &beta, j, &covariance, key))
        }
    };

    let p = ones as f64 / n as f64;
    let ll0 = n as f64 * (p * p.ln() + (1.0 - p) * (1.0 - p).ln());
    Ok(ProbitResult {
        coefficients,
        dropped,
        perfectly_predicted,
        ame,
        prob_y1: p,
        pseudo_r2: 1.0 - fit.log_likelihood / ll0,
        log_likelihood: fit.log_likelihood,
        n,
        clusters: g,
        iterations: fit.iterations,
        gradient_max: fit.gradient_max,
        covariance,
    })
}

fn pick(values: &[f64], rows: &[usize], name: &str) -> Vec<f64> {
    if values.len() < rows.last().map_or(0, |r| r + 1) {
        // Design::build reports the mismatch.
        let _ = name;
        return values.to_vec();
    }
    rows.iter().map(|&i| values[i]).collect()
}

fn outcome_sides<'a>(y: &[f64], keep: &[bool], levels: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, (bool, bool)> {
    let mut outcomes: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
    for (i, level) in levels.enumerate() {
        if keep[i] {
            let e = outcomes.entry(level).or_insert((false, false));
            if y[i] == 1.0 {
                e.1 = true;
            } else {
                e.0 = true;
            }
        }
    }
    outcomes
}

/// Rows to keep after removing observations whose outcome is determined by
/// a fixed-effect level or by one value of a 0/1 regressor, repeated until no
/// such group remains. A 0/1 regressor that determines the outcome on both
/// of its values separates the data and is an error.
fn perfect_prediction_mask(
    y: &[f64],
    regressors: &[Column],
    factors: &[Factor],
    drop: bool,
) -> Result<Vec<bool>, EstimationError> {
    let mut keep = vec![true; y.len()];
    let binary: Vec<&Column> =
        regressors.iter().filter(|c| c.values.len() == y.len() && c.values.iter().all(|v| *v == 0.0 || *v == 1.0)).collect();
    loop {
        let mut changed = false;
        let mut groups: Vec<(String, Vec<&str>, bool)> = Vec::new();
        for f in factors {
            groups.push((f.name.clone(), f.levels.iter().map(String::as_str).collect(), true));
        }
        for c in &binary {
            let levels = c.values.iter().map(|v| if *v == 1.0 { "1" } else { "0" }).collect();
            groups.push((c.name.clone(), levels, false));
        }
        for (name, levels, is_factor) in &groups {
            let outcomes = outcome_sides(y, &keep, levels.iter().copied());
            if outcomes.len() < 2 {
                continue;
            }
            let bad: BTreeSet<&str> = outcomes.iter().filter(|(_, (z, o))| !(*z && *o)).map(|(l, _)| *l).collect();
            if bad.is_empty() {
                continue;
            }
            let label = |l: &str| if *is_factor { format!("{name}={l}") } else { name.clone() };
            if !drop || (!is_factor && bad.len() == outcomes.len()) {
                return Err(EstimationError::Separation(label(bad.iter().next().copied().unwrap_or_default())));
            }
            for (i, level) in levels.iter().enumerate() {
                if keep[i] && bad.contains(level) {
                    keep[i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(keep);
        }
    }
}

fn check_binary_separation(y: &[f64], c: &Column) -> Result<(), EstimationError> {
    if !c.values.iter().all(|v| *v == 0.0 || *v == 1.0) {
        return Ok(());
    }
    for side in [0.0, 1.0] {
        let mut seen = (false, false);
        for (v, yi) in c.values.iter().zip(y) {
            if *v == side {
                if *yi == 1.0 {
                    seen.1 = true;
                } else {
                    seen.0 = true;
                }
            }
        }
        if seen.0 != seen.1 {
            return Err(EstimationError::Separation(c.name.clone()));
        }
    }
    Ok(())
}

struct Fit {
    beta: Vec<f64>,
    hessian: Vec<f64>,
    log_likelihood: f64,
    iterations: usize,
    gradient_max: f64,
}

/// Log-likelihood, gradient and negative Hessian at `beta`.
fn evaluate(y: &[f64], x: &[f64], k: usize, beta: &[f64], with_hessian: bool) -> (f64, Vec<f64>, Vec<f64>) {
    let mut ll = 0.0;
    let mut grad = vec![0.0; k];
    let mut hess = if with_hessian { vec![0.0; k * k] } else { Vec::new() };
    for (i, yi) in y.iter().enumerate() {
        let row = &x[i * k..(i + 1) * k];
        let z: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let q = 2.0 * yi - 1.0;
        let (lc, ratio) = log_cdf_and_ratio(q * z);
        ll += lc;
        let lambda = q * ratio;
        for j in 0..k {
            grad[j] += lambda * row[j];
        }
        if with_hessian {
            let w = lambda * (lambda + z);
            for a in 0..k {
                let wa = w * row[a];
                if wa == 0.0 {
                    continue;
                }
                for b in 0..=a {
                    hess[a * k + b] += wa * row[b];
                }
            }
        }
    }
    if with_hessian {
        for a in 0..k {
            for b in 0..a {
                hess[b * k + a] = hess[a * k + b];
            }
        }
    }
    (ll, grad, hess)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn newton(y: &[f64], x: &[f64], k: usize, options: &ProbitOptions, names: &[String]) -> Result<Fit, EstimationError> {
    let mut beta = vec![0.0; k];
    let mut trace = Vec::new();
    let (mut ll, mut grad, mut hess) = evaluate(y, x, k, &beta, true);
    let mut iterations = 0;
    loop {
        let gmax = max_abs(&grad);
        trace.push(format!("{iterations}: ll={ll:.6} |g|={gmax:.3e}"));
        if gmax < options.tolerance {
            if let Some(name) = diverging(x, k, &beta, names) {
                return Err(EstimationError::Separation(name));
            }
            return Ok(Fit { beta, hessian: hess, log_likelihood: ll, iterations, gradient_max: gmax });
        }
        if iterations >= options.max_iterations {
            break;
        }
        iterations += 1;
        let Some(step) = cholesky_solve(&hess, &grad) else {
            trace.push("information matrix not positive definite".into());
            break;
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let (ll_new, _, _) = evaluate(y, x, k, &cand, false);
            // Near the optimum the ascent is below the resolution of `ll`.
            if ll_new >= ll - 1e-13 * ll.abs().max(1.0) {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(cand) = accepted else {
            // No ascent left at machine precision.
            if gmax < options.tolerance.max(1e-6) {
                return Ok(Fit { beta, hessian: hess, log_likelihood: ll, iterations, gradient_max: gmax });
            }
            trace.push("line search failed".into());
            break;
        };
        beta = cand;
        (ll, grad, hess) = evaluate(y, x, k, &beta, true);
    }

    if let Some(name) = diverging(x, k, &beta, names) {
        return Err(EstimationError::Separation(name));
    }
    Err(EstimationError::NonConvergence { iterations, trace: trace.join("; ") })
}

/// Column whose standardized coefficient has run off, the signature of a
/// likelihood maximized at infinity.
fn diverging(x: &[f64], k: usize, beta: &[f64], names: &[String]) -> Option<String> {
    let n = x.len() / k;
    let mut worst: Option<(usize, f64)> = None;
    for j in 0..k {
        let mean = (0..n).map(|i| x[i * k + j]).sum::<f64>() / n as f64;
        let sd = ((0..n).map(|i| (x[i * k + j] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd == 0.0 {
            continue;
        }
        let s = (beta[j] * sd).abs();
        if s > DIVERGENCE && worst.is_none_or(|(_, w)| s > w) {
            worst = Some((j, s));
        }
    }
    worst.map(|(j, _)| names[j].clone())
}

fn average_marginal_effect(x: &[f64], k: usize, beta: &[f64], j: usize, cov: &[f64], name: &str) -> MarginalEffect {
    let n = x.len() / k;
    let binary = (0..n).all(|i| x[i * k + j] == 0.0 || x[i * k + j] == 1.0);
    let mut effect = 0.0;
    let mut grad = vec![0.0; k];
    for i in 0..n {
        let row = &x[i * k..(i + 1) * k];
        let z: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        if binary {
            let base = z - row[j] * beta[j];
            let (z1, z0) = (base + beta[j], base);
            effect += cdf(z1) - cdf(z0);
            let (p1, p0) = (pdf(z1), pdf(z0));
            for m in 0..k {
                let (x1, x0) = if m == j { (1.0, 0.0) } else { (row[m], row[m]) };
                grad[m] += p1 * x1 - p0 * x0;
            }
        } else {
            let phi = pdf(z);
            effect += phi * beta[j];
            for m in 0..k {
                let e = if m == j { 1.0 } else { 0.0 };
                grad[m] += phi * (e - z * beta[j] * row[m]);
            }
        }
    }
    let nf = n as f64;
    effect /= nf;
    for v in &mut grad {
        *v /= nf;
    }
    let mut var = 0.0;
    for a in 0..k {
        for b in 0..k {
            var += grad[a] * cov[a * k + b] * grad[b];
        }
    }
    MarginalEffect { name: name.to_string(), binary, estimate: effect, se: var.max(0.0).sqrt() }
}
