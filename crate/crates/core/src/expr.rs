//! Coefficient expression language.
//!
//! A tiny arithmetic language over the variables `theta`, `u`, `p` and
//! `lambda`, used to describe the diffusion and reaction coefficients in
//! problem files. Parsing is precedence climbing over
//! `+ - * / ^` (with `^` right associative and binding tighter than unary
//! minus), the functions `sin cos tan exp ln abs`, numeric literals and the
//! constant `pi`.
//!
//! Partial derivatives with respect to `u` and `p` are produced
//! symbolically. The only construct without a symbolic rule is a power with
//! a non-constant exponent and non-constant base; for those
//! [`Expr::derivative`] returns `None` and callers fall back to finite
//! differences.

use std::fmt;

use thiserror::Error;

/// Free variables of a coefficient expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    Theta,
    U,
    P,
    Lambda,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::Theta => "theta",
            Var::U => "u",
            Var::P => "p",
            Var::Lambda => "lambda",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Abs,
    /// Derivative of `abs`; not reachable from the parser.
    Sign,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Abs => x.abs(),
            Func::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Variable bindings for evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    pub theta: f64,
    pub u: f64,
    pub p: f64,
    pub lambda: f64,
}

impl Bindings {
    pub fn new(theta: f64, u: f64, p: f64, lambda: f64) -> Self {
        Self { theta, u, p, lambda }
    }

    fn get(&self, var: Var) -> f64 {
        match var {
            Var::Theta => self.theta,
            Var::U => self.u,
            Var::P => self.p,
            Var::Lambda => self.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdentifier { offset, .. } => {
                *offset
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero while evaluating `{expr}`")]
    DivisionByZero { expr: String },
    #[error("non-finite value while evaluating `{expr}`")]
    NonFinite { expr: String },
}

impl Expr {
    /// Evaluates with IEEE semantics: division by zero yields an infinity or NaN.
    pub fn eval(&self, b: &Bindings) -> f64 {
        match self {
            Expr::Num(x) => *x,
            Expr::Var(v) => b.get(*v),
            Expr::Neg(a) => -a.eval(b),
            Expr::Add(l, r) => l.eval(b) + r.eval(b),
            Expr::Sub(l, r) => l.eval(b) - r.eval(b),
            Expr::Mul(l, r) => l.eval(b) * r.eval(b),
            Expr::Div(l, r) => l.eval(b) / r.eval(b),
            Expr::Pow(base, exp) => {
                let x = base.eval(b);
                match exp.as_ref() {
                    Expr::Num(n) if n.fract() == 0.0 && n.abs() <= 64.0 => x.powi(*n as i32),
                    e => x.powf(e.eval(b)),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(b)),
        }
    }

    /// Like [`Expr::eval`] but reports a zero divisor or a non-finite result.
    pub fn eval_checked(&self, b: &Bindings) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(x) => *x,
            Expr::Var(v) => b.get(*v),
            Expr::Neg(a) => -a.eval_checked(b)?,
            Expr::Add(l, r) => l.eval_checked(b)? + r.eval_checked(b)?,
            Expr::Sub(l, r) => l.eval_checked(b)? - r.eval_checked(b)?,
            Expr::Mul(l, r) => l.eval_checked(b)? * r.eval_checked(b)?,
            Expr::Div(l, r) => {
                let num = l.eval_checked(b)?;
                let den = r.eval_checked(b)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero {
                        expr: self.to_string(),
                    });
                }
                num / den
            }
            Expr::Pow(..) | Expr::Call(..) => {
                // children are checked for division; the node itself may still overflow
                self.children_checked(b)?;
                self.eval(b)
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite {
                expr: self.to_string(),
            })
        }
    }

    fn children_checked(&self, b: &Bindings) -> Result<(), EvalError> {
        match self {
            Expr::Pow(l, r) => {
                l.eval_checked(b)?;
                r.eval_checked(b)?;
            }
            Expr::Call(_, a) => {
                a.eval_checked(b)?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Add(l, r)
            | Expr::Sub(l, r)
            | Expr::Mul(l, r)
            | Expr::Div(l, r)
            | Expr::Pow(l, r) => l.depends_on(var) || r.depends_on(var),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(x) if *x == 0.0)
    }

    /// Symbolic partial derivative, or `None` when no rule applies.
    pub fn derivative(&self, var: Var) -> Option<Expr> {
        if !self.depends_on(var) {
            return Some(Expr::Num(0.0));
        }
        Some(match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(v) => Expr::Num(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(var)?),
            Expr::Add(l, r) => add(l.derivative(var)?, r.derivative(var)?),
            Expr::Sub(l, r) => sub(l.derivative(var)?, r.derivative(var)?),
            Expr::Mul(l, r) => add(
                mul(l.derivative(var)?, (**r).clone()),
                mul((**l).clone(), r.derivative(var)?),
            ),
            Expr::Div(l, r) => {
                let dl = l.derivative(var)?;
                let dr = r.derivative(var)?;
                // (l' r - l r') / r^2
                div(
                    sub(mul(dl, (**r).clone()), mul((**l).clone(), dr)),
                    pow((**r).clone(), Expr::Num(2.0)),
                )
            }
            Expr::Pow(base, exp) => {
                if !exp.depends_on(var) {
                    // c * b^(c-1) * b'
                    let c = (**exp).clone();
                    let c_minus_one = sub(c.clone(), Expr::Num(1.0));
                    mul(mul(c, pow((**base).clone(), c_minus_one)), base.derivative(var)?)
                } else if !base.depends_on(var) {
                    // ln(b) * b^e * e'
                    mul(
                        mul(call(Func::Ln, (**base).clone()), self.clone()),
                        exp.derivative(var)?,
                    )
                } else {
                    return None;
                }
            }
            Expr::Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Tan => div(Expr::Num(1.0), pow(call(Func::Cos, inner), Expr::Num(2.0))),
                    Func::Exp => call(Func::Exp, inner),
                    Func::Ln => div(Expr::Num(1.0), inner),
                    Func::Abs => call(Func::Sign, inner),
                    Func::Sign => Expr::Num(0.0),
                };
                mul(outer, a.derivative(var)?)
            }
        })
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(x) => Expr::Num(-x),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(l: Expr, r: Expr) -> Expr {
    match (l, r) {
        (Expr::Num(a), Expr::Num(b)) => Expr::Num(a + b),
        (Expr::Num(z), r) if z == 0.0 => r,
        (l, Expr::Num(z)) if z == 0.0 => l,
        (l, r) => Expr::Add(Box::new(l), Box::new(r)),
    }
}

fn sub(l: Expr, r: Expr) -> Expr {
    match (l, r) {
        (Expr::Num(a), Expr::Num(b)) => Expr::Num(a - b),
        (l, Expr::Num(z)) if z == 0.0 => l,
        (Expr::Num(z), r) if z == 0.0 => neg(r),
        (l, r) => Expr::Sub(Box::new(l), Box::new(r)),
    }
}

fn mul(l: Expr, r: Expr) -> Expr {
    match (l, r) {
        (Expr::Num(a), Expr::Num(b)) => Expr::Num(a * b),
        (Expr::Num(z), _) | (_, Expr::Num(z)) if z == 0.0 => Expr::Num(0.0),
        (Expr::Num(o), r) if o == 1.0 => r,
        (l, Expr::Num(o)) if o == 1.0 => l,
        (l, r) => Expr::Mul(Box::new(l), Box::new(r)),
    }
}

fn div(l: Expr, r: Expr) -> Expr {
    match (l, r) {
        (Expr::Num(z), _) if z == 0.0 => Expr::Num(0.0),
        (l, Expr::Num(o)) if o == 1.0 => l,
        (l, r) => Expr::Div(Box::new(l), Box::new(r)),
    }
}

fn pow(base: Expr, exp: Expr) -> Expr {
    match (base, exp) {
        (_, Expr::Num(z)) if z == 0.0 => Expr::Num(1.0),
        (b, Expr::Num(o)) if o == 1.0 => b,
        (Expr::Num(a), Expr::Num(b)) => Expr::Num(a.powf(b)),
        (b, e) => Expr::Pow(Box::new(b), Box::new(e)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    match a {
        Expr::Num(x) => Expr::Num(f.apply(x)),
        a => Expr::Call(f, Box::new(a)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(l, r) => write!(f, "({l} + {r})"),
            Expr::Sub(l, r) => write!(f, "({l} - {r})"),
            Expr::Mul(l, r) => write!(f, "({l} * {r})"),
            Expr::Div(l, r) => write!(f, "({l} / {r})"),
            Expr::Pow(l, r) => write!(f, "({l} ^ {r})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next_token(&mut self) -> Result<(Token, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Token::End, start));
        };
        let tok = match c {
            b'0'..=b'9' | b'.' => {
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                    end += 1;
                }
                if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut k = end + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        end = k;
                    }
                }
                let text = &self.src[start..end];
                let value = text.parse::<f64>().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                self.pos = end;
                Token::Num(value)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                self.pos = end;
                Token::Ident(self.src[start..end].to_string())
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Token::Op(c as char)
            }
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        Ok((tok, start))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    current: Token,
    offset: usize,
}

const UNARY_PRECEDENCE: u8 = 3;

fn binary_precedence(op: char) -> Option<(u8, bool)> {
    // (precedence, right associative)
    match op {
        '+' | '-' => Some((1, false)),
        '*' | '/' => Some((2, false)),
        '^' => Some((4, true)),
        _ => None,
    }
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let (current, offset) = lexer.next_token()?;
        Ok(Self {
            lexer,
            current,
            offset,
        })
    }

    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, off) = self.lexer.next_token()?;
        self.current = tok;
        self.offset = off;
        Ok(())
    }

    fn syntax(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            offset: self.offset,
            message: message.into(),
        }
    }

    fn expression(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let Token::Op(op) = self.current else { break };
            let Some((prec, right)) = binary_precedence(op) else { break };
            if prec < min_prec {
                break;
            }
            self.bump()?;
            let next_min = if right { prec } else { prec + 1 };
            let rhs = self.expression(next_min)?;
            lhs = match op {
                '+' => Expr::Add(Box::new(lhs), Box::new(rhs)),
                '-' => Expr::Sub(Box::new(lhs), Box::new(rhs)),
                '*' => Expr::Mul(Box::new(lhs), Box::new(rhs)),
                '/' => Expr::Div(Box::new(lhs), Box::new(rhs)),
                _ => Expr::Pow(Box::new(lhs), Box::new(rhs)),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.current {
            Token::Op('-') => {
                self.bump()?;
                Ok(Expr::Neg(Box::new(self.expression(UNARY_PRECEDENCE)?)))
            }
            Token::Op('+') => {
                self.bump()?;
                self.expression(UNARY_PRECEDENCE)
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match std::mem::replace(&mut self.current, Token::End) {
            Token::Num(x) => {
                self.bump()?;
                Ok(Expr::Num(x))
            }
            Token::Ident(name) => {
                let start = self.offset;
                self.bump()?;
                if let Some(func) = Func::from_name(&name) {
                    if self.current != Token::LParen {
                        return Err(self.syntax(format!("expected `(` after `{name}`")));
                    }
                    self.bump()?;
                    let arg = self.expression(1)?;
                    self.expect_rparen()?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                match name.as_str() {
                    "theta" => Ok(Expr::Var(Var::Theta)),
                    "u" => Ok(Expr::Var(Var::U)),
                    "p" => Ok(Expr::Var(Var::P)),
                    "lambda" => Ok(Expr::Var(Var::Lambda)),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    _ => Err(ParseError::UnknownIdentifier {
                        offset: start,
                        name,
                    }),
                }
            }
            Token::LParen => {
                self.bump()?;
                let inner = self.expression(1)?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::End => Err(self.syntax("unexpected end of input")),
            tok => {
                self.current = tok;
                Err(self.syntax("expected a number, variable, function or `(`"))
            }
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if self.current == Token::RParen {
            self.bump()
        } else if self.current == Token::End {
            Err(self.syntax("unexpected end of input, expected `)`"))
        } else {
            Err(self.syntax("expected `)`"))
        }
    }
}

/// Parses a coefficient expression.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser::new(text)?;
    let expr = parser.expression(1)?;
    if parser.current != Token::End {
        return Err(parser.syntax("unexpected trailing input"));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eval_at(text: &str, theta: f64, u: f64, p: f64, lambda: f64) -> f64 {
        parse_expression(text)
            .unwrap()
            .eval(&Bindings::new(theta, u, p, lambda))
    }

    #[test]
    fn chafee_infante_reaction() {
        assert_relative_eq!(eval_at("lambda*u*(1-u^2)", 0.0, 0.5, 0.0, 2.0), 0.75);
    }

    #[test]
    fn sin_at_zero() {
        assert_eq!(eval_at("sin(theta)", 0.0, 0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn truncated_input_reports_end_offset() {
        let err = parse_expression("u*(1-").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
        assert_eq!(err.offset(), 5);
    }

    #[test]
    fn unknown_identifier() {
        let err = parse_expression("2*v + u").unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownIdentifier {
                offset: 2,
                name: "v".into()
            }
        );
    }

    #[test]
    fn precedence_and_associativity() {
        assert_relative_eq!(eval_at("2^3^2", 0.0, 0.0, 0.0, 0.0), 512.0);
        assert_relative_eq!(eval_at("-u^2", 0.0, 3.0, 0.0, 0.0), -9.0);
        assert_relative_eq!(eval_at("1-2-3", 0.0, 0.0, 0.0, 0.0), -4.0);
        assert_relative_eq!(eval_at("8/4/2", 0.0, 0.0, 0.0, 0.0), 1.0);
        assert_relative_eq!(eval_at("1+2*3", 0.0, 0.0, 0.0, 0.0), 7.0);
        assert_relative_eq!(eval_at("2e-1*10", 0.0, 0.0, 0.0, 0.0), 2.0);
        assert_relative_eq!(eval_at("cos(pi)", 0.0, 0.0, 0.0, 0.0), -1.0);
    }

    #[test]
    fn division_by_zero_is_an_evaluation_error() {
        let e = parse_expression("1/(u-1)").unwrap();
        let b = Bindings::new(0.0, 1.0, 0.0, 0.0);
        assert!(e.eval(&b).is_infinite());
        assert!(matches!(
            e.eval_checked(&b),
            Err(EvalError::DivisionByZero { .. })
        ));
    }

    #[test]
    fn trailing_garbage() {
        assert!(parse_expression("u u").is_err());
        assert!(parse_expression("sin u").is_err());
        assert!(parse_expression("(u").is_err());
        assert!(parse_expression("u $ 2").is_err());
    }

    #[test]
    fn derivatives_of_polynomials_and_trig() {
        let e = parse_expression("lambda*u*(1-u^2) + sin(theta)*p^2").unwrap();
        let du = e.derivative(Var::U).unwrap();
        let dp = e.derivative(Var::P).unwrap();
        let b = Bindings::new(0.7, 0.3, -1.2, 2.5);
        assert_relative_eq!(du.eval(&b), 2.5 * (1.0 - 3.0 * 0.09), epsilon = 1e-14);
        assert_relative_eq!(dp.eval(&b), 0.7f64.sin() * 2.0 * -1.2, epsilon = 1e-14);
    }

    #[test]
    fn variable_power_has_no_symbolic_rule() {
        let e = parse_expression("u^u").unwrap();
        assert!(e.derivative(Var::U).is_none());
        assert!(e.derivative(Var::P).unwrap().is_zero());
        let e = parse_expression("2^u").unwrap();
        let b = Bindings::new(0.0, 1.5, 0.0, 0.0);
        assert_relative_eq!(
            e.derivative(Var::U).unwrap().eval(&b),
            2f64.ln() * 2f64.powf(1.5),
            epsilon = 1e-14
        );
    }

    #[test]
    fn constant_derivative_folds_to_zero() {
        let e = parse_expression("1 + 0*u").unwrap();
        assert!(e.derivative(Var::U).unwrap().is_zero());
        assert!(parse_expression("3").unwrap().derivative(Var::P).unwrap().is_zero());
    }
}
