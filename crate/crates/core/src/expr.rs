//! Scalar arithmetic expressions over the state variables `y1..yn`.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'y' index | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | tanh | sqrt | abs
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so
//! `-2^2 == -4` and `2^3^2 == 512`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown identifier '{name}' at offset {offset}")]
    UnknownIdent { offset: usize, name: String },
    #[error("variable y{index} at offset {offset} out of range for dimension {dim}")]
    VariableOutOfRange { offset: usize, index: usize, dim: usize },
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("domain error in '{expr}': {reason}")]
    Domain { expr: String, reason: &'static str },
    #[error("point has dimension {got}, expression expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
    Abs,
}

impl Func {
    const ALL: [(&'static str, Func); 6] = [
        ("sin", Func::Sin),
        ("cos", Func::Cos),
        ("exp", Func::Exp),
        ("tanh", Func::Tanh),
        ("sqrt", Func::Sqrt),
        ("abs", Func::Abs),
    ];

    fn name(self) -> &'static str {
        Func::ALL.iter().find(|(_, f)| *f == self).unwrap().0
    }
}

/// Expression tree. Variables are zero-based (`y1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug formatting of f64 round-trips exactly
            Node::Num(x) => write!(f, "{x:?}"),
            Node::Var(i) => write!(f, "y{}", i + 1),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// A parsed expression bound to a state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    dim: usize,
    // Some(c) when the tree references no variable and evaluates cleanly
    constant: Option<f64>,
}

impl Expr {
    pub fn parse(text: &str, dim: usize) -> Result<Self, ParseError> {
        let root = Parser::new(text, dim).parse()?;
        let mut expr = Expr {
            root,
            dim,
            constant: None,
        };
        if !expr.root.uses_variables() {
            expr.constant = eval_node(&expr.root, &[]).ok();
        }
        Ok(expr)
    }

    /// A literal constant, bypassing the parser.
    pub fn constant(value: f64, dim: usize) -> Self {
        Expr {
            root: Node::Num(value),
            dim,
            constant: Some(value),
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        if point.len() != self.dim {
            return Err(EvalError::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            });
        }
        self.eval_unchecked(point)
    }

    /// Evaluation without the dimension check.
    #[inline]
    pub fn eval_unchecked(&self, point: &[f64]) -> Result<f64, EvalError> {
        match self.constant {
            Some(c) => Ok(c),
            None => eval_node(&self.root, point),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl Node {
    fn uses_variables(&self) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(_) => true,
            Node::Neg(a) | Node::Call(_, a) => a.uses_variables(),
            Node::Bin(_, a, b) => a.uses_variables() || b.uses_variables(),
        }
    }
}

fn domain(node: &Node, reason: &'static str) -> EvalError {
    EvalError::Domain {
        expr: node.to_string(),
        reason,
    }
}

fn eval_node(node: &Node, y: &[f64]) -> Result<f64, EvalError> {
    Ok(match node {
        Node::Num(x) => *x,
        Node::Var(i) => y[*i],
        Node::Neg(a) => -eval_node(a, y)?,
        Node::Bin(op, a, b) => {
            let l = eval_node(a, y)?;
            let r = eval_node(b, y)?;
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => {
                    if r == 0.0 {
                        return Err(domain(node, "division by zero"));
                    }
                    l / r
                }
                BinOp::Pow => {
                    let v = l.powf(r);
                    if v.is_nan() && !l.is_nan() && !r.is_nan() {
                        return Err(domain(node, "non-real power"));
                    }
                    v
                }
            }
        }
        Node::Call(func, a) => {
            let x = eval_node(a, y)?;
            match func {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Tanh => x.tanh(),
                Func::Abs => x.abs(),
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(domain(node, "square root of a negative number"));
                    }
                    x.sqrt()
                }
            }
        }
    })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, dim: usize) -> Self {
        Parser {
            src: text.as_bytes(),
            pos: 0,
            dim,
        }
    }

    fn parse(mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        if self.pos == self.src.len() {
            return Err(ParseError::Empty);
        }
        let node = self.expr()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.syntax("operator or end of input"));
        }
        Ok(node)
    }

    fn syntax(&self, expected: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            expected: expected.to_string(),
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

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.syntax("')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => Err(self.syntax("number, variable, function or '('")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.syntax("digits"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(self.syntax("exponent digits"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map(Node::Num).map_err(|_| ParseError::Syntax {
            offset: start,
            expected: "number".into(),
        })
    }

    fn ident(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if let Some(rest) = name.strip_prefix('y') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = rest.parse().unwrap_or(usize::MAX);
                if index == 0 || index > self.dim {
                    return Err(ParseError::VariableOutOfRange {
                        offset: start,
                        index,
                        dim: self.dim,
                    });
                }
                return Ok(Node::Var(index - 1));
            }
        }
        let Some(&(_, func)) = Func::ALL.iter().find(|(n, _)| *n == name) else {
            return Err(ParseError::UnknownIdent {
                offset: start,
                name: name.to_string(),
            });
        };
        if self.peek() != Some(b'(') {
            return Err(self.syntax("'(' after function name"));
        }
        self.pos += 1;
        let arg = self.expr()?;
        if self.peek() != Some(b')') {
            return Err(self.syntax("')'"));
        }
        self.pos += 1;
        Ok(Node::Call(func, Box::new(arg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(s: &str, y: &[f64]) -> f64 {
        Expr::parse(s, y.len().max(1)).unwrap().eval(y).unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(ev("1 - 2*y1", &[0.25]), 0.5);
        assert_eq!(ev("y1*(1-y1)", &[0.5]), 0.25);
        assert_eq!(ev("y1 + y2", &[1.5, 2.5]), 4.0);
        let e = Expr::parse("exp(0)", 0).unwrap();
        assert_eq!(e.eval(&[]).unwrap(), 1.0);
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("2+3*4", &[0.0]), 14.0);
        assert_eq!(ev("2^3^2", &[0.0]), 512.0);
        assert_eq!(ev("-2^2", &[0.0]), -4.0);
        assert_eq!(ev("2^-1", &[0.0]), 0.5);
        assert_eq!(ev("8/4/2", &[0.0]), 1.0);
        assert_eq!(ev("1-2-3", &[0.0]), -4.0);
        assert_eq!(ev(" tanh( 0 ) + abs(-3) + sqrt(16) ", &[0.0]), 7.0);
        assert_eq!(ev("1e-12 + 2.5E1 + .5", &[0.0]), 25.5 + 1e-12);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let err = Expr::parse("2*^3", 1).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { offset: 2, .. }), "{err:?}");
        assert!(matches!(
            Expr::parse("(1+2", 1).unwrap_err(),
            ParseError::Syntax { offset: 4, .. }
        ));
        assert!(matches!(
            Expr::parse("1 2", 1).unwrap_err(),
            ParseError::Syntax { offset: 2, .. }
        ));
        assert_eq!(Expr::parse("   ", 1).unwrap_err(), ParseError::Empty);
        assert!(matches!(
            Expr::parse("log(y1)", 1).unwrap_err(),
            ParseError::UnknownIdent { offset: 0, .. }
        ));
        assert!(matches!(
            Expr::parse("y1 + y3", 2).unwrap_err(),
            ParseError::VariableOutOfRange {
                offset: 5,
                index: 3,
                dim: 2
            }
        ));
        assert!(matches!(
            Expr::parse("y0", 2).unwrap_err(),
            ParseError::VariableOutOfRange { index: 0, .. }
        ));
    }

    #[test]
    fn domain_errors() {
        let e = Expr::parse("sqrt(y1)", 1).unwrap();
        let err = e.eval(&[-1.0]).unwrap_err();
        assert!(matches!(err, EvalError::Domain { ref expr, .. } if expr == "sqrt(y1)"));
        let e = Expr::parse("1/y1", 1).unwrap();
        assert!(e.eval(&[0.0]).is_err());
        assert!(Expr::parse("(-8)^0.5", 1).unwrap().eval(&[0.0]).is_err());
        assert!(matches!(
            e.eval(&[1.0, 2.0]),
            Err(EvalError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn constant_detection() {
        assert_eq!(Expr::parse("2*3", 1).unwrap().as_constant(), Some(6.0));
        assert_eq!(Expr::parse("y1", 1).unwrap().as_constant(), None);
        // a constant that fails to evaluate stays symbolic and errors at eval
        let e = Expr::parse("1/0", 1).unwrap();
        assert_eq!(e.as_constant(), None);
        assert!(e.eval(&[0.0]).is_err());
    }

    fn node_strategy(dim: usize) -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![(0.0..100.0f64).prop_map(Node::Num), (0..dim).prop_map(Node::Var),];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Node::Bin(op, Box::new(a), Box::new(b))),
                (0..6usize, inner).prop_map(|(k, a)| Node::Call(Func::ALL[k].1, Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn printed_tree_reparses_identically(node in node_strategy(3)) {
            let text = node.to_string();
            let back = Expr::parse(&text, 3).unwrap();
            prop_assert_eq!(back.root(), &node);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn binary_constants_match_host_arithmetic(
            a in -1e6..1e6f64, b in 1e-3..1e6f64, op in 0..4usize,
        ) {
            let (sym, want) = match op {
                0 => ('+', a + b),
                1 => ('-', a - b),
                2 => ('*', a * b),
                _ => ('/', a / b),
            };
            let text = format!("({a:?}) {sym} {b:?}");
            let got = Expr::parse(&text, 1).unwrap().eval(&[0.0]).unwrap();
            prop_assert!((got - want).abs() <= 1e-15 * want.abs().max(f64::MIN_POSITIVE));
        }
    }
}
