//! Attack-function expressions.
//!
//! An attack function is a real function of a single sensor measurement,
//! written as a small expression language:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := power (('*' | '/') power)*
//! power   := unary ('^' integer)*
//! unary   := '-' unary | primary
//! primary := number | VAR | ('sin' | 'cos') '(' expr ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds tighter than `^`, so `-s^2` is `(-s)^2`. The grammar is
//! closed under differentiation, which is what the admissibility checks need.

mod attack;
mod parser;

use std::fmt;

pub use attack::{AttackSpec, AttackSpecError, AttackWindow, InjectionMode};
pub use parser::{parse, ParseError, MAX_DEPTH, MAX_SOURCE_LEN};

/// Abstract syntax tree of a one-variable function.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Constant(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Pow(Box<Expr>, i32),
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero at x = {x}")]
    DivisionByZero { x: f64 },
    #[error("non-finite result at x = {x}")]
    NonFinite { x: f64 },
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Constant(value)
    }

    /// Evaluates the expression at `x`.
    ///
    /// Division by an exact zero (including a zero base raised to a negative
    /// power) is an error rather than an infinity.
    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        let value = self.eval_inner(x)?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::NonFinite { x })
        }
    }

    fn eval_inner(&self, x: f64) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Constant(c) => *c,
            Expr::Var => x,
            Expr::Neg(e) => -e.eval_inner(x)?,
            Expr::Add(a, b) => a.eval_inner(x)? + b.eval_inner(x)?,
            Expr::Sub(a, b) => a.eval_inner(x)? - b.eval_inner(x)?,
            Expr::Mul(a, b) => a.eval_inner(x)? * b.eval_inner(x)?,
            Expr::Div(a, b) => {
                let num = a.eval_inner(x)?;
                let den = b.eval_inner(x)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero { x });
                }
                num / den
            }
            Expr::Sin(e) => e.eval_inner(x)?.sin(),
            Expr::Cos(e) => e.eval_inner(x)?.cos(),
            Expr::Pow(base, n) => {
                let b = base.eval_inner(x)?;
                if b == 0.0 && *n < 0 {
                    return Err(EvalError::DivisionByZero { x });
                }
                b.powi(*n)
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::NonFinite { x })
        }
    }

    /// Exact symbolic derivative with respect to the variable.
    ///
    /// The result is lightly simplified (constant folding, `0` and `1`
    /// elimination) but not put into any canonical form.
    pub fn differentiate(&self) -> Expr {
        use Expr::*;
        match self {
            Constant(_) => Constant(0.0),
            Var => Constant(1.0),
            Neg(e) => neg(e.differentiate()),
            Add(a, b) => add(a.differentiate(), b.differentiate()),
            Sub(a, b) => sub(a.differentiate(), b.differentiate()),
            Mul(a, b) => add(
                mul(a.differentiate(), b.folded()),
                mul(a.folded(), b.differentiate()),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.differentiate(), b.folded()),
                    mul(a.folded(), b.differentiate()),
                ),
                pow(b.folded(), 2),
            ),
            Sin(e) => mul(cos(e.folded()), e.differentiate()),
            Cos(e) => mul(neg(sin(e.folded())), e.differentiate()),
            Pow(base, n) => {
                if *n == 0 {
                    return Constant(0.0);
                }
                mul(
                    mul(Constant(f64::from(*n)), pow(base.folded(), n - 1)),
                    base.differentiate(),
                )
            }
        }
    }

    /// Copy of the tree with constant subexpressions folded and trivial
    /// `0`/`1` operands removed.
    pub fn folded(&self) -> Expr {
        use Expr::*;
        match self {
            Constant(_) | Var => self.clone(),
            Neg(e) => neg(e.folded()),
            Add(a, b) => add(a.folded(), b.folded()),
            Sub(a, b) => sub(a.folded(), b.folded()),
            Mul(a, b) => mul(a.folded(), b.folded()),
            Div(a, b) => div(a.folded(), b.folded()),
            Sin(e) => sin(e.folded()),
            Cos(e) => cos(e.folded()),
            Pow(base, n) => pow(base.folded(), *n),
        }
    }

    /// Height of the tree; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Constant(_) | Expr::Var => 1,
            Expr::Neg(e) | Expr::Sin(e) | Expr::Cos(e) | Expr::Pow(e, _) => 1 + e.depth(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Expr::Constant(c) => Some(*c),
            _ => None,
        }
    }

    /// Formats the expression using `var` as the variable name. The output
    /// parses back to an expression that prints identically.
    pub fn display<'a>(&'a self, var: &'a str) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, var }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Pow(..) => 3,
            Expr::Neg(..) => 4,
            Expr::Constant(c) if c.is_sign_negative() => 4,
            _ => 5,
        }
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    var: &'a str,
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self.expr, self.var)
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, var: &str, parens: bool) -> fmt::Result {
    if parens {
        f.write_str("(")?;
        write_expr(f, e, var)?;
        f.write_str(")")
    } else {
        write_expr(f, e, var)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, var: &str) -> fmt::Result {
    match e {
        Expr::Constant(c) => write!(f, "{c}"),
        Expr::Var => f.write_str(var),
        Expr::Neg(inner) => {
            f.write_str("-")?;
            write_child(f, inner, var, inner.precedence() < 4)
        }
        Expr::Sin(inner) => {
            f.write_str("sin(")?;
            write_expr(f, inner, var)?;
            f.write_str(")")
        }
        Expr::Cos(inner) => {
            f.write_str("cos(")?;
            write_expr(f, inner, var)?;
            f.write_str(")")
        }
        Expr::Pow(base, n) => {
            write_child(f, base, var, base.precedence() < 3)?;
            write!(f, "^{n}")
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            let prec = e.precedence();
            let op = match e {
                Expr::Add(..) => " + ",
                Expr::Sub(..) => " - ",
                Expr::Mul(..) => "*",
                _ => "/",
            };
            write_child(f, a, var, a.precedence() < prec)?;
            f.write_str(op)?;
            write_child(f, b, var, b.precedence() <= prec)
        }
    }
}

// Smart constructors used by `differentiate`.

fn neg(e: Expr) -> Expr {
    match e {
        Expr::Constant(c) => Expr::Constant(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_constant(), b.as_constant()) {
        (Some(x), Some(y)) => Expr::Constant(x + y),
        (Some(x), None) if x == 0.0 => b,
        (None, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_constant(), b.as_constant()) {
        (Some(x), Some(y)) => Expr::Constant(x - y),
        (Some(x), None) if x == 0.0 => neg(b),
        (None, Some(y)) if y == 0.0 => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_constant(), b.as_constant()) {
        (Some(x), Some(y)) => Expr::Constant(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Constant(0.0),
        (Some(x), None) if x == 1.0 => b,
        (None, Some(y)) if y == 1.0 => a,
        (Some(x), None) if x == -1.0 => neg(b),
        (None, Some(y)) if y == -1.0 => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_constant(), b.as_constant()) {
        (Some(x), Some(y)) if y != 0.0 => Expr::Constant(x / y),
        (Some(x), _) if x == 0.0 => Expr::Constant(0.0),
        (None, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(base: Expr, n: i32) -> Expr {
    match (base.as_constant(), n) {
        (_, 0) => Expr::Constant(1.0),
        (_, 1) => base,
        (Some(c), _) if c != 0.0 || n > 0 => Expr::Constant(c.powi(n)),
        _ => Expr::Pow(Box::new(base), n),
    }
}

fn sin(e: Expr) -> Expr {
    match e {
        Expr::Constant(c) => Expr::Constant(c.sin()),
        other => Expr::Sin(Box::new(other)),
    }
}

fn cos(e: Expr) -> Expr {
    match e {
        Expr::Constant(c) => Expr::Constant(c.cos()),
        other => Expr::Cos(Box::new(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(src: &str) -> Expr {
        parse(src, "s").unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(p("0.4*sin(s)-0.5*s").eval(0.0).unwrap(), 0.0);
        assert_eq!(p("-2*s").eval(3.0).unwrap(), -6.0);
        assert_eq!(p("1/s + 0.5").eval(2.0).unwrap(), 1.0);
    }

    #[test]
    fn eval_division_by_zero_is_an_error() {
        assert_eq!(
            p("1/s").eval(0.0),
            Err(EvalError::DivisionByZero { x: 0.0 })
        );
        assert_eq!(
            p("s^-2").eval(0.0),
            Err(EvalError::DivisionByZero { x: 0.0 })
        );
    }

    #[test]
    fn eval_overflow_is_an_error() {
        assert!(matches!(
            p("s^200").eval(1e10),
            Err(EvalError::NonFinite { .. })
        ));
    }

    #[test]
    fn derivative_examples() {
        let d = p("0.4*sin(s) - 0.5*s").differentiate();
        assert!((d.eval(0.0).unwrap() - (-0.1)).abs() < 1e-15);

        let d = p("-0.9*s").differentiate();
        assert_eq!(d, Expr::Constant(-0.9));

        let d = p("1/s + 0.5").differentiate();
        assert_eq!(d.eval(2.0).unwrap(), -0.25);
    }

    #[test]
    fn derivative_of_constant_and_zero_power() {
        assert_eq!(p("3.5").differentiate(), Expr::Constant(0.0));
        assert_eq!(p("s^0").differentiate(), Expr::Constant(0.0));
        assert_eq!(p("s^1").differentiate(), Expr::Constant(1.0));
    }

    #[test]
    fn cos_and_negative_power_derivatives() {
        let d = p("cos(2*s)").differentiate();
        let x: f64 = 0.3;
        assert!((d.eval(x).unwrap() + 2.0 * (2.0 * x).sin()).abs() < 1e-14);

        let d = p("s^-2").differentiate();
        assert!((d.eval(2.0).unwrap() + 0.25).abs() < 1e-15);
    }

    #[test]
    fn display_uses_variable_name_and_minimal_parens() {
        let e = parse("0.4*sin(dv) - 0.5*dv", "dv").unwrap();
        assert_eq!(e.display("dv").to_string(), "0.4*sin(dv) - 0.5*dv");
        assert_eq!(p("-(s + 1)").display("s").to_string(), "-(s + 1)");
        assert_eq!(p("s - (s - 1)").display("s").to_string(), "s - (s - 1)");
        assert_eq!(p("(s*2)^3").display("s").to_string(), "(s*2)^3");
        assert_eq!(p("-s^2").display("s").to_string(), "-s^2");
    }

    #[test]
    fn negative_constant_round_trips() {
        let e = Expr::Pow(Box::new(Expr::Constant(-2.0)), 2);
        let printed = e.display("s").to_string();
        let reparsed = p(&printed);
        assert_eq!(reparsed.display("s").to_string(), printed);
        assert_eq!(reparsed.eval(0.0).unwrap(), 4.0);
    }
}
