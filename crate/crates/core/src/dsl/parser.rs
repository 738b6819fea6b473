use super::ast::{BinOp, CriterionExpr, Expr};
use super::schema::{is_flow_variable, is_known_variable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DslError {
    #[error("syntax error at {}: {message}", position_label(*.position, *.at_end))]
    Syntax { position: usize, at_end: bool, message: String },
    #[error("unknown identifier `{name}` at offset {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("roll4 applies to flow variables only, `{name}` at offset {position} is a stock")]
    NotAFlow { name: String, position: usize },
}

fn position_label(position: usize, at_end: bool) -> String {
    if at_end {
        "end of input".to_string()
    } else {
        format!("offset {position}")
    }
}

/// Parse a criterion formula such as `(dlcq+dlttq-min{5,chq})/oibdpq`.
///
/// Grammar: `+ - * /` with the usual precedence, unary minus, parentheses,
/// `min{a,b}` / `max{a,b}`, lagged references `var_{t-k}` with `k` in 1..=4,
/// and `roll4(var)` for four-quarter sums of flow variables.
pub fn parse_criterion(text: &str) -> Result<CriterionExpr, DslError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let expr = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(CriterionExpr { expr })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> DslError {
        DslError::Syntax {
            position: self.pos,
            at_end: self.pos >= self.src.len(),
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), DslError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        match self.peek() {
            None => Err(self.error("expected an operand")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier_expr(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, DslError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Expr::Num).map_err(|_| DslError::Syntax {
            position: start,
            at_end: false,
            message: format!("malformed number `{text}`"),
        })
    }

    fn ident(&mut self) -> (String, usize) {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii").to_string();
        (name, start)
    }

    fn identifier_expr(&mut self) -> Result<Expr, DslError> {
        let (name, start) = self.ident();
        match name.as_str() {
            "min" | "max" => {
                let close = if self.eat(b'{') {
                    b'}'
                } else if self.eat(b'(') {
                    b')'
                } else {
                    return Err(self.error(&format!("expected `{{` after {name}")));
                };
                let a = self.expr()?;
                self.expect(b',')?;
                let b = self.expr()?;
                self.expect(close)?;
                let (a, b) = (Box::new(a), Box::new(b));
                Ok(if name == "min" { Expr::Min(a, b) } else { Expr::Max(a, b) })
            }
            "roll4" => {
                self.expect(b'(')?;
                let (var, vpos) = self.ident();
                if var.is_empty() {
                    return Err(self.error("expected a variable inside roll4"));
                }
                check_known(&var, vpos)?;
                if !is_flow_variable(&var) {
                    return Err(DslError::NotAFlow { name: var, position: vpos });
                }
                self.expect(b')')?;
                Ok(Expr::Roll4(var))
            }
            _ => {
                check_known(&name, start)?;
                let lag = self.lag_suffix()?;
                Ok(Expr::Var { name, lag })
            }
        }
    }

    /// Optional `_{t-k}` directly after an identifier.
    fn lag_suffix(&mut self) -> Result<u8, DslError> {
        if self.src.get(self.pos) != Some(&b'_') {
            return Ok(0);
        }
        self.pos += 1;
        for &c in b"{t-" {
            self.expect(c)?;
        }
        self.skip_ws();
        let kpos = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let k: u8 = std::str::from_utf8(&self.src[kpos..self.pos])
            .expect("ascii")
            .parse()
            .map_err(|_| DslError::Syntax { position: kpos, at_end: kpos >= self.src.len(), message: "expected lag depth".into() })?;
        if !(1..=4).contains(&k) {
            return Err(DslError::Syntax {
                position: kpos,
                at_end: false,
                message: format!("lag depth must be 1..=4, got {k}"),
            });
        }
        self.expect(b'}')?;
        Ok(k)
    }
}

fn check_known(name: &str, position: usize) -> Result<(), DslError> {
    if is_known_variable(name) {
        Ok(())
    } else {
        Err(DslError::UnknownIdentifier { name: name.to_string(), position })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::reference_criteria;

    fn parse(s: &str) -> Expr {
        parse_criterion(s).unwrap().expr
    }

    #[test]
    fn debt_to_ebitda_shape() {
        let e = parse("(dlcq+dlttq)/oibdpq");
        let want = Expr::bin(
            BinOp::Div,
            Expr::bin(BinOp::Add, Expr::var("dlcq"), Expr::var("dlttq")),
            Expr::var("oibdpq"),
        );
        assert_eq!(e, want);
    }

    #[test]
    fn min_node() {
        assert_eq!(parse("min{5,chq}"), Expr::Min(Box::new(Expr::Num(5.0)), Box::new(Expr::var("chq"))));
    }

    #[test]
    fn truncated_input_reports_end() {
        let err = parse_criterion("((dlcq+dlttq)/").unwrap_err();
        match &err {
            DslError::Syntax { at_end, .. } => assert!(at_end),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("end of input"));
    }

    #[test]
    fn unknown_identifier() {
        let err = parse_criterion("(dlcq+foo)/oibdpq").unwrap_err();
        assert_eq!(err, DslError::UnknownIdentifier { name: "foo".into(), position: 6 });
    }

    #[test]
    fn lags_and_rolling_sums() {
        assert_eq!(parse("dlcq_{t-4}"), Expr::Var { name: "dlcq".into(), lag: 4 });
        assert!(parse_criterion("dlcq_{t-0}").is_err());
        assert!(parse_criterion("dlcq_{t-5}").is_err());
        assert_eq!(parse("roll4(oibdpq)"), Expr::Roll4("oibdpq".into()));
        assert!(matches!(parse_criterion("roll4(atq)"), Err(DslError::NotAFlow { .. })));
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(parse("1-2-3").to_string(), "1-2-3");
        assert_eq!(parse("1-(2-3)").to_string(), "1-(2-3)");
        assert_eq!(parse("-atq*2").to_string(), "-atq*2");
        assert_eq!(parse("atq*-2").to_string(), "atq*(-2)");
        assert_eq!(parse("-(atq+1)").to_string(), "-(atq+1)");
    }

    #[test]
    fn every_reference_formula_round_trips() {
        let all = reference_criteria();
        assert_eq!(all.len(), 51);
        for (id, text) in all {
            let e = parse_criterion(text).unwrap_or_else(|err| panic!("{id}: {err}"));
            let printed = e.to_string();
            assert_eq!(parse_criterion(&printed).unwrap(), e, "{id}: {printed}");
        }
    }
}
