//! Naive Merton distance to default.

use serde::{Deserialize, Serialize};

use crate::market::FirmQuarter;

/// Standard normal CDF, `0.5 * erfc(-x / sqrt(2))`.
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MertonInputs {
    /// Market value of equity.
    pub equity: f64,
    /// Default barrier, short-term debt plus half of long-term debt.
    pub barrier: f64,
    /// Trailing 12-month stock return.
    pub r: f64,
    /// Annualized equity volatility from monthly returns.
    pub sigma_e: f64,
}

impl MertonInputs {
    pub fn from_firm(fq: &FirmQuarter) -> Option<Self> {
        Some(MertonInputs {
            equity: fq.equity_value()?,
            barrier: fq.get("dlcq")? + 0.5 * fq.get("dlttq")?,
            r: fq.stock_return_12m.filter(|v| v.is_finite())?,
            sigma_e: fq.monthly_return_stddev_12m_annualized.filter(|v| v.is_finite())?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MertonResult {
    pub sigma_v: f64,
    /// `+inf` when the firm has no debt.
    pub dd: f64,
    pub pd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum MertonError {
    #[error("inputs must be finite with equity, barrier and volatility nonnegative")]
    InvalidInputs,
    #[error("equity plus barrier must be positive")]
    NoValue,
    #[error("asset volatility is zero with positive debt")]
    ZeroVolatility,
}

/// Default probability over a one-year horizon from the naive closed form:
/// `sigma_V = E/(E+F) sigma_E + F/(E+F) (0.05 + 0.25 sigma_E)`,
/// `DD = (ln((E+F)/F) + r - sigma_V^2/2) / sigma_V`, `PD = N(-DD)`.
pub fn merton_pd(inp: &MertonInputs) -> Result<MertonResult, MertonError> {
    let MertonInputs { equity: e, barrier: f, r, sigma_e } = *inp;
    if ![e, f, r, sigma_e].iter().all(|v| v.is_finite()) || e < 0.0 || f < 0.0 || sigma_e < 0.0 {
        return Err(MertonError::InvalidInputs);
    }
    let v = e + f;
    if !(v > 0.0) {
        return Err(MertonError::NoValue);
    }
    let sigma_v = (e / v) * sigma_e + (f / v) * (0.05 + 0.25 * sigma_e);
    if f == 0.0 {
        return Ok(MertonResult { sigma_v, dd: f64::INFINITY, pd: 0.0 });
    }
    if sigma_v == 0.0 {
        return Err(MertonError::ZeroVolatility);
    }
    let dd = ((v / f).ln() + r - 0.5 * sigma_v * sigma_v) / sigma_v;
    Ok(MertonResult { sigma_v, dd, pd: normal_cdf(-dd) })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with 40-digit arithmetic.
    const CDF_TABLE: [(f64, f64); 10] = [
        (-8.0, 6.2209605742717841235e-16),
        (-5.0, 2.8665157187919391167e-7),
        (-3.5, 0.00023262907903552503635),
        (-1.96, 0.024997895148220434137),
        (-1.0, 0.15865525393145705141),
        (0.5, 0.69146246127401310364),
        (1.0, 0.84134474606854294859),
        (1.96, 0.97500210485177956586),
        (3.0, 0.99865010196836990547),
        (6.0, 0.99999999901341235496),
    ];

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
        for (x, want) in CDF_TABLE {
            assert!((normal_cdf(x) - want).abs() <= 1e-12, "N({x})");
            assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn no_debt_means_no_default() {
        let r = merton_pd(&MertonInputs { equity: 100.0, barrier: 0.0, r: -0.5, sigma_e: 0.9 }).unwrap();
        assert_eq!(r.pd, 0.0);
        assert_eq!(r.dd, f64::INFINITY);
    }

    #[test]
    fn unit_asset_volatility() {
        // E = F gives sigma_V = 0.625 sigma_E + 0.025, so sigma_E = 1.56 gives 1.
        let r = merton_pd(&MertonInputs { equity: 50.0, barrier: 50.0, r: 0.0, sigma_e: 1.56 }).unwrap();
        assert!((r.sigma_v - 1.0).abs() < 1e-15);
        assert!((r.dd - (2f64.ln() - 0.5)).abs() < 1e-15);
        assert!((r.pd - 0.42342185176075517853).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let zero_vol = MertonInputs { equity: 0.0, barrier: 10.0, r: 0.0, sigma_e: 0.0 };
        // sigma_V = 0.05 even at zero equity volatility when F > 0
        assert!(merton_pd(&zero_vol).is_ok());
        let none = MertonInputs { equity: 0.0, barrier: 0.0, r: 0.0, sigma_e: 0.3 };
        assert_eq!(merton_pd(&none), Err(MertonError::NoValue));
        let bad = MertonInputs { equity: -1.0, barrier: 1.0, r: 0.0, sigma_e: 0.3 };
        assert_eq!(merton_pd(&bad), Err(MertonError::InvalidInputs));
    }

    #[test]
    fn more_equity_lowers_pd() {
        let mut last = 1.0;
        for e in [1.0, 5.0, 20.0, 80.0, 300.0] {
            let pd = merton_pd(&MertonInputs { equity: e, barrier: 100.0, r: 0.05, sigma_e: 0.4 }).unwrap().pd;
            assert!(pd < last);
            last = pd;
        }
    }
}
