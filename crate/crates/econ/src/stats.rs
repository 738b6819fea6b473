use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::EstimationError;

/// One estimated coefficient with its inference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
}

impl Coefficient {
    pub fn t(&self) -> f64 {
        self.estimate / self.se
    }

    pub fn stars(&self) -> &'static str {
        significance_stars(self.p_value)
    }
}

/// Two-sided p-value of `t` under Student's t with `df` degrees of freedom.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    match StudentsT::new(0.0, 1.0, df) {
        Ok(d) => 2.0 * d.cdf(-t.abs()),
        Err(_) => f64::NAN,
    }
}

/// `***`, `**`, `*` at the 1%, 5% and 10% levels.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

/// Cut point at probability `prob` of the finite values: the smallest value
/// with at least `prob * n` observations at or below it.
pub fn quantile_cut(values: &[f64], prob: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let pos = (prob * v.len() as f64).ceil() as usize;
    Some(v[pos.clamp(1, v.len()) - 1])
}

/// Quantile bucket of each value, 0 = lowest. A value equal to a cut point
/// goes to the lower bucket. Non-finite values get `None`.
pub fn bucketize(values: &[f64], k: usize) -> Result<Vec<Option<usize>>, EstimationError> {
    let finite: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.len() < k {
        return Err(EstimationError::TooFewObservations { needed: k, got: finite.len() });
    }
    let mut distinct = finite.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < k {
        return Err(EstimationError::TooFewDistinct { distinct: distinct.len(), buckets: k });
    }
    let cuts: Vec<f64> = (1..k).map(|j| quantile_cut(&finite, j as f64 / k as f64).expect("nonempty")).collect();
    Ok(values
        .iter()
        .map(|v| v.is_finite().then(|| cuts.iter().filter(|c| v > c).count()))
        .collect())
}

/// Indicators of an increase (`delta > 0`) and of a large increase (`delta`
/// above the 75th percentile of all finite deltas).
pub fn increase_indicators(deltas: &[Option<f64>]) -> (Vec<Option<bool>>, Vec<Option<bool>>) {
    let finite: Vec<f64> = deltas.iter().flatten().copied().filter(|d| d.is_finite()).collect();
    let cut = quantile_cut(&finite, 0.75);
    let ok = |d: &Option<f64>| d.filter(|x| x.is_finite());
    let up = deltas.iter().map(|d| ok(d).map(|x| x > 0.0)).collect();
    let large = deltas.iter().map(|d| ok(d).and_then(|x| cut.map(|c| x > c))).collect();
    (up, large)
}

/// Slope of the simple regression of lender excess returns on market excess
/// returns.
pub fn lender_beta(lender_excess: &[f64], market_excess: &[f64]) -> Result<f64, EstimationError> {
    if lender_excess.len() != market_excess.len() {
        return Err(EstimationError::DimensionMismatch {
            name: "lender excess returns".into(),
            expected: market_excess.len(),
            got: lender_excess.len(),
        });
    }
    let n = lender_excess.len();
    if n < 8 {
        return Err(EstimationError::TooFewObservations { needed: 8, got: n });
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / n as f64;
    let (my, mx) = (mean(lender_excess), mean(market_excess));
    let sxx: f64 = market_excess.iter().map(|x| (x - mx).powi(2)).sum();
    let sq: f64 = market_excess.iter().map(|x| x * x).sum();
    if sxx <= f64::EPSILON * sq {
        return Err(EstimationError::ZeroVariance("market excess returns".into()));
    }
    let sxy: f64 = market_excess.iter().zip(lender_excess).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = bucketize(&v, 4).unwrap();
        for k in 0..4 {
            assert_eq!(b.iter().filter(|x| **x == Some(k)).count(), 25);
        }
        assert_eq!(b[24], Some(0));
        assert_eq!(b[25], Some(1));
    }

    #[test]
    fn degenerate_buckets() {
        assert!(matches!(bucketize(&[3.0; 10], 5), Err(EstimationError::TooFewDistinct { .. })));
        assert!(bucketize(&[1.0, 2.0], 5).is_err());
        let b = bucketize(&[1.0, f64::NAN, 2.0], 2).unwrap();
        assert_eq!(b, [Some(0), None, Some(1)]);
    }

    #[test]
    fn increases() {
        let d: Vec<Option<f64>> = (-4..=4).map(|i| Some(f64::from(i))).chain([None]).collect();
        let (up, large) = increase_indicators(&d);
        assert_eq!(up.iter().filter(|x| **x == Some(true)).count(), 4);
        // 75th percentile cut of -4..4 is the 7th value, 2
        assert_eq!(large.iter().filter(|x| **x == Some(true)).count(), 2);
        assert_eq!(up[9], None);
    }

    #[test]
    fn beta_identities() {
        let m: Vec<f64> = (0..12).map(|i| (f64::from(i) * 0.7).sin() * 0.1).collect();
        assert!((lender_beta(&m, &m).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(lender_beta(&[0.0; 12], &m).unwrap(), 0.0);
        assert!(matches!(lender_beta(&m, &[0.1; 12]), Err(EstimationError::ZeroVariance(_))));
        assert!(lender_beta(&m[..5], &m[..5]).is_err());
    }

    #[test]
    fn p_values_and_stars() {
        // t = 1.96 with a large df is about the 5% boundary
        let p = two_sided_p(1.959963984540054, 1e9);
        assert!((p - 0.05).abs() < 1e-6);
        assert_eq!(significance_stars(0.004), "***");
        assert_eq!(significance_stars(0.04), "**");
        assert_eq!(significance_stars(0.09), "*");
        assert_eq!(significance_stars(0.2), "");
    }
}
