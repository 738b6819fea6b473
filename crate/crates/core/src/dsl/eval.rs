use crate::market::{FacilityQuarterState, FirmQuarter};
use crate::quarter::Quarter;

use super::ast::{BinOp, CriterionExpr, Expr};
use super::schema::{var_kind, VarKind};

/// Facility terms a criterion can reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FacilityConstants {
    pub commitment: f64,
    pub has_borrowing_base: bool,
    pub has_lc_program: bool,
    pub origination: Quarter,
}

/// Inputs for evaluating a criterion at one quarter.
///
/// Index `k` of `firm` and `state` holds quarter `t - k`; `None` marks a
/// quarter with no record. Any reference into a missing quarter or a missing
/// field evaluates to `None`.
#[derive(Clone, Debug)]
pub struct EvalContext<'a> {
    pub quarter: Quarter,
    pub firm: [Option<&'a FirmQuarter>; 5],
    pub state: [Option<&'a FacilityQuarterState>; 5],
    pub facility: FacilityConstants,
}

impl<'a> EvalContext<'a> {
    /// Context with only the current quarter's records.
    pub fn current(
        firm: Option<&'a FirmQuarter>,
        state: Option<&'a FacilityQuarterState>,
        facility: FacilityConstants,
        quarter: Quarter,
    ) -> Self {
        EvalContext { quarter, firm: [firm, None, None, None, None], state: [state, None, None, None, None], facility }
    }

    /// Builds a context from ascending firm and state histories, picking the
    /// records whose quarters fall in `t-4..=t`.
    pub fn from_histories(
        quarter: Quarter,
        firms: &'a [FirmQuarter],
        states: &'a [FacilityQuarterState],
        facility: FacilityConstants,
    ) -> Self {
        let mut ctx = EvalContext { quarter, firm: [None; 5], state: [None; 5], facility };
        for f in firms {
            let k = f.quarter.quarters_until(quarter);
            if (0..5).contains(&k) {
                ctx.firm[k as usize] = Some(f);
            }
        }
        for s in states {
            let k = s.quarter.quarters_until(quarter);
            if (0..5).contains(&k) {
                ctx.state[k as usize] = Some(s);
            }
        }
        ctx
    }

    fn firm_field(&self, name: &str, lag: u8) -> Option<f64> {
        let fq = self.firm.get(lag as usize).copied().flatten()?;
        if let Some(v) = fq.get(name) {
            return Some(v);
        }
        match name {
            "totsrdbt" => Some(fq.get("dlcq")? + fq.get("dlttq")? - fq.get("ds")?),
            "securedbt" | "totsrsecuredbt" => fq.get("dm"),
            "xrentq" => Some(fq.get("xrent")? / 4.0),
            _ => None,
        }
    }

    fn usage_field(&self, name: &str, lag: u8) -> Option<f64> {
        let st = self.state.get(lag as usize).copied().flatten()?;
        let lc = || st.letters_of_credit.filter(|v| v.is_finite()).unwrap_or(0.0);
        let base = || {
            st.borrowing_base
                .filter(|b| b.is_finite() && self.facility.has_borrowing_base)
                .unwrap_or(self.facility.commitment)
        };
        match name {
            "borr" => Some(st.outstanding_borrowings),
            "lc" => Some(lc()),
            "borrbase" => Some(base()),
            "unusedav" => Some(st.reported_unused_available.filter(|v| v.is_finite()).unwrap_or_else(|| {
                let lc = if self.facility.has_lc_program { lc() } else { 0.0 };
                base() - st.outstanding_borrowings - lc
            })),
            _ => None,
        }
    }

    fn variable(&self, name: &str, lag: u8) -> Option<f64> {
        let v = match var_kind(name)? {
            VarKind::FirmStock | VarKind::FirmFlow => self.firm_field(name, lag),
            VarKind::Usage => self.usage_field(name, lag),
            VarKind::FacilityAmount => Some(self.facility.commitment),
            VarKind::Rating => {
                self.firm.get(lag as usize).copied().flatten()?.rating.map(f64::from)
            }
            VarKind::Elapsed => {
                Some(f64::from(self.facility.origination.quarters_until(self.quarter) - i32::from(lag)))
            }
        }?;
        v.is_finite().then_some(v)
    }
}

/// Value of `expr` in `ctx`, or `None` when an input is missing or a
/// denominator is zero.
pub fn evaluate(expr: &CriterionExpr, ctx: &EvalContext<'_>) -> Option<f64> {
    eval(&expr.expr, ctx).filter(|v| v.is_finite())
}

fn eval(e: &Expr, ctx: &EvalContext<'_>) -> Option<f64> {
    match e {
        Expr::Num(x) => Some(*x),
        Expr::Var { name, lag } => ctx.variable(name, *lag),
        Expr::Roll4(name) => (0..4).map(|k| ctx.variable(name, k)).sum(),
        Expr::Neg(x) => eval(x, ctx).map(|v| -v),
        Expr::Bin { op, lhs, rhs } => {
            let (a, b) = (eval(lhs, ctx)?, eval(rhs, ctx)?);
            let v = match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div if b == 0.0 => return None,
                BinOp::Div => a / b,
            };
            v.is_finite().then_some(v)
        }
        Expr::Min(a, b) => Some(eval(a, ctx)?.min(eval(b, ctx)?)),
        Expr::Max(a, b) => Some(eval(a, ctx)?.max(eval(b, ctx)?)),
    }
}
