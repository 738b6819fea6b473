use std::collections::BTreeMap;

use serde::Serialize;

use crate::design::{Column, Design, Factor};
use crate::linalg::{sandwich, HouseholderQr};
use crate::stats::{two_sided_p, Coefficient};
use crate::EstimationError;

/// Least-squares fit with cluster-robust covariance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegressionResult {
    /// Kept parameters in design order: intercept, regressors, indicators.
    pub coefficients: Vec<Coefficient>,
    /// Columns dropped as collinear with earlier ones.
    pub dropped: Vec<String>,
    pub r_squared: f64,
    pub n: usize,
    pub clusters: usize,
    pub k: usize,
    /// Cluster-robust covariance of the kept parameters, row-major.
    #[serde(skip)]
    pub covariance: Vec<f64>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Maps cluster keys to dense indices in first-seen order.
pub(crate) fn cluster_index<K: Ord>(keys: &[K]) -> (Vec<usize>, usize) {
    let mut ids: BTreeMap<&K, usize> = BTreeMap::new();
    let idx = keys
        .iter()
        .map(|k| {
            let next = ids.len();
            *ids.entry(k).or_insert(next)
        })
        .collect();
    (idx, ids.len())
}

/// OLS of `y` on an intercept, `regressors` and indicator expansions of
/// `factors`, with standard errors clustered on `clusters`.
///
/// Columns that are linear combinations of earlier ones are dropped and
/// reported. The covariance is `(X'X)^-1 (sum_g X_g'e_g e_g'X_g) (X'X)^-1`
/// scaled by `G/(G-1) * (N-1)/(N-K)`.
pub fn ols_clustered<K: Ord>(
    y: &[f64],
    regressors: &[Column],
    clusters: &[K],
    factors: &[Factor],
) -> Result<RegressionResult, EstimationError> {
    let n = y.len();
    if clusters.len() != n {
        return Err(EstimationError::DimensionMismatch { name: "clusters".into(), expected: n, got: clusters.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(EstimationError::NonFinite("dependent variable".into()));
    }
    let design = Design::build(n, regressors, factors)?;
    ols_design(y, &design, clusters)
}

pub(crate) fn ols_design<K: Ord>(y: &[f64], design: &Design, clusters: &[K]) -> Result<RegressionResult, EstimationError> {
    let n = y.len();
    let qr = HouseholderQr::new(&design.columns);
    let k = qr.rank();
    if n <= k {
        return Err(EstimationError::InsufficientObservations { n, k });
    }
    let (cidx, g) = cluster_index(clusters);
    if g < 2 {
        return Err(EstimationError::SingleCluster);
    }
    let beta = qr.solve(y);
    let kept: Vec<&Vec<f64>> = qr.kept().iter().map(|&j| &design.columns[j]).collect();
    let mut resid = y.to_vec();
    for (b, col) in beta.iter().zip(&kept) {
        for (r, x) in resid.iter_mut().zip(col.iter()) {
            *r -= b * x;
        }
    }

    let mut scores = vec![0.0; g * k];
    for (j, col) in kept.iter().enumerate() {
        for i in 0..n {
            scores[cidx[i] * k + j] += col[i] * resid[i];
        }
    }
    let mut meat = vec![0.0; k * k];
    for s in scores.chunks(k) {
        for a in 0..k {
            if s[a] == 0.0 {
                continue;
            }
            for b in 0..k {
                meat[a * k + b] += s[a] * s[b];
            }
        }
    }
    let bread = qr.xtx_inverse();
    let factor = (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64));
    let covariance: Vec<f64> = sandwich(&bread, &meat, k).into_iter().map(|v| v * factor).collect();

    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ssr: f64 = resid.iter().map(|r| r * r).sum();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN };

    let df = (g - 1) as f64;
    let coefficients = qr
        .kept()
        .iter()
        .enumerate()
        .map(|(j, &col)| {
            let se = covariance[j * k + j].max(0.0).sqrt();
            Coefficient {
                name: design.names[col].clone(),
                estimate: beta[j],
                se,
                p_value: two_sided_p(beta[j] / se, df),
            }
        })
        .collect();
    Ok(RegressionResult {
        coefficients,
        dropped: qr.dropped().iter().map(|&j| design.names[j].clone()).collect(),
        r_squared,
        n,
        clusters: g,
        k,
        covariance,
        residuals: resid,
    })
}

/// Product column `a * b`, named `a:b`.
pub fn interaction_column(a: &Column, b: &Column) -> Column {
    Column::new(
        format!("{}:{}", a.name, b.name),
        a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect(),
    )
}
