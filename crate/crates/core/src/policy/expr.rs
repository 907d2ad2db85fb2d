//! Trigger expressions such as `(RSRP AND ULTX) OR LAT`.
//!
//! Grammar, with AND binding tighter than OR:
//!
//! ```text
//! expr := term ("OR" term)*
//! term := atom ("AND" atom)*
//! atom := "RSRP" | "ULTX" | "LAT" | "TRUE" | "FALSE" | "(" expr ")"
//! ```
//!
//! Keywords are case-insensitive.

use std::fmt;

use super::{Metric, MetricSet, PolicyError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriggerExpr {
    Metric(Metric),
    Const(bool),
    And(Box<TriggerExpr>, Box<TriggerExpr>),
    Or(Box<TriggerExpr>, Box<TriggerExpr>),
}

impl TriggerExpr {
    pub fn parse(input: &str) -> Result<Self, PolicyError> {
        let tokens = tokenize(input)?;
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
            input_len: input.len(),
        };
        let expr = p.expr()?;
        if let Some((tok, at)) = p.peek() {
            return Err(PolicyError::Parse {
                position: at,
                message: format!("unexpected {tok} after complete expression"),
            });
        }
        Ok(expr)
    }

    /// All of `metrics` joined by AND.
    pub fn all_of(metrics: MetricSet) -> Self {
        Self::fold(metrics, TriggerExpr::And)
    }

    /// Any of `metrics` joined by OR.
    pub fn any_of(metrics: MetricSet) -> Self {
        Self::fold(metrics, TriggerExpr::Or)
    }

    fn fold(metrics: MetricSet, join: fn(Box<TriggerExpr>, Box<TriggerExpr>) -> TriggerExpr) -> Self {
        let mut it = metrics.iter().map(TriggerExpr::Metric);
        let first = it.next().unwrap_or(TriggerExpr::Const(false));
        it.fold(first, |acc, m| join(Box::new(acc), Box::new(m)))
    }

    /// Metrics referenced anywhere in the expression.
    pub fn metrics(&self) -> MetricSet {
        match self {
            TriggerExpr::Metric(m) => MetricSet::from_iter([*m]),
            TriggerExpr::Const(_) => MetricSet::EMPTY,
            TriggerExpr::And(a, b) | TriggerExpr::Or(a, b) => a.metrics().union(b.metrics()),
        }
    }

    pub fn eval(&self, exceeds: &impl Fn(Metric) -> bool) -> bool {
        match self {
            TriggerExpr::Metric(m) => exceeds(*m),
            TriggerExpr::Const(c) => *c,
            TriggerExpr::And(a, b) => a.eval(exceeds) && b.eval(exceeds),
            TriggerExpr::Or(a, b) => a.eval(exceeds) || b.eval(exceeds),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent_is_and: bool) -> fmt::Result {
        match self {
            TriggerExpr::Metric(m) => f.write_str(m.as_str()),
            TriggerExpr::Const(true) => f.write_str("TRUE"),
            TriggerExpr::Const(false) => f.write_str("FALSE"),
            TriggerExpr::And(a, b) => {
                a.fmt_prec(f, true)?;
                f.write_str(" AND ")?;
                b.fmt_prec(f, true)
            }
            TriggerExpr::Or(a, b) => {
                if parent_is_and {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, false)?;
                f.write_str(" OR ")?;
                b.fmt_prec(f, false)?;
                if parent_is_and {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for TriggerExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Token {
    Metric(Metric),
    Const(bool),
    And,
    Or,
    Open,
    Close,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Metric(m) => write!(f, "'{}'", m.as_str()),
            Token::Const(c) => write!(f, "'{}'", if *c { "TRUE" } else { "FALSE" }),
            Token::And => f.write_str("'AND'"),
            Token::Or => f.write_str("'OR'"),
            Token::Open => f.write_str("'('"),
            Token::Close => f.write_str("')'"),
        }
    }
}

fn tokenize(input: &str) -> Result<Vec<(Token, usize)>, PolicyError> {
    let mut out = Vec::new();
    let bytes = input.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'(' {
            out.push((Token::Open, i));
            i += 1;
        } else if c == b')' {
            out.push((Token::Close, i));
            i += 1;
        } else if c.is_ascii_alphanumeric() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = input[start..i].to_ascii_uppercase();
            let tok = match word.as_str() {
                "AND" => Token::And,
                "OR" => Token::Or,
                "TRUE" => Token::Const(true),
                "FALSE" => Token::Const(false),
                other => match other.parse::<Metric>() {
                    Ok(m) => Token::Metric(m),
                    Err(_) => {
                        return Err(PolicyError::Parse {
                            position: start,
                            message: format!("unknown word '{}'", &input[start..i]),
                        })
                    }
                },
            };
            out.push((tok, start));
        } else {
            let ch = input[i..].chars().next().unwrap_or('?');
            return Err(PolicyError::Parse {
                position: i,
                message: format!("unexpected character '{ch}'"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [(Token, usize)],
    pos: usize,
    input_len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<(Token, usize)> {
        self.tokens.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<TriggerExpr, PolicyError> {
        let mut lhs = self.term()?;
        while let Some((Token::Or, _)) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = TriggerExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<TriggerExpr, PolicyError> {
        let mut lhs = self.atom()?;
        while let Some((Token::And, _)) = self.peek() {
            self.pos += 1;
            let rhs = self.atom()?;
            lhs = TriggerExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<TriggerExpr, PolicyError> {
        let Some((tok, at)) = self.peek() else {
            return Err(PolicyError::Parse {
                position: self.input_len,
                message: "expression ends early".into(),
            });
        };
        self.pos += 1;
        match tok {
            Token::Metric(m) => Ok(TriggerExpr::Metric(m)),
            Token::Const(c) => Ok(TriggerExpr::Const(c)),
            Token::Open => {
                let inner = self.expr()?;
                match self.peek() {
                    Some((Token::Close, _)) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(PolicyError::Parse {
                        position: at,
                        message: "unclosed '('".into(),
                    }),
                }
            }
            other => Err(PolicyError::Parse {
                position: at,
                message: format!("expected a metric or '(', found {other}"),
            }),
        }
    }
}
