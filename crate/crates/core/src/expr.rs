//! Scalar expression language used by custom model definitions.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          // right-associative
//! primary := number | name | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x1^2` is `-(x1^2)`. Names are the
//! variables `t`, `lambda`, `x1`, `x2`, ... and the constant `pi`. Functions
//! are `tanh cosh sinh exp log sqrt abs arctan sign`, all unary. The Unicode
//! minus sign `−` is accepted as `-`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` at byte {offset} takes 1 argument, got {found}")]
    Arity {
        name: String,
        offset: usize,
        found: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    T,
    Lambda,
    /// State component, zero-based (`x1` is `X(0)`).
    X(usize),
}

impl Var {
    pub fn name(&self) -> String {
        match self {
            Var::T => "t".to_string(),
            Var::Lambda => "lambda".to_string(),
            Var::X(i) => format!("x{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Tanh,
    Cosh,
    Sinh,
    Exp,
    Log,
    Sqrt,
    Abs,
    Arctan,
    Sign,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "tanh" => Func::Tanh,
            "cosh" => Func::Cosh,
            "sinh" => Func::Sinh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "arctan" => Func::Arctan,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Func::Tanh => "tanh",
            Func::Cosh => "cosh",
            Func::Sinh => "sinh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Arctan => "arctan",
            Func::Sign => "sign",
        }
    }

    fn apply(&self, x: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Func::Tanh => x.tanh(),
            Func::Cosh => x.cosh(),
            Func::Sinh => x.sinh(),
            Func::Exp => x.exp(),
            Func::Log => {
                if x <= 0.0 {
                    return Err(EvalError::Domain(format!("log of nonpositive value {x}")));
                }
                x.ln()
            }
            Func::Sqrt => {
                if x < 0.0 {
                    return Err(EvalError::Domain(format!("sqrt of negative value {x}")));
                }
                x.sqrt()
            }
            Func::Abs => x.abs(),
            Func::Arctan => x.atan(),
            Func::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        })
    }
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
    fn symbol(&self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Values for the variables of an expression.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub t: f64,
    pub lambda: f64,
    pub x: &'a [f64],
}

/// Parsed expression tree. Immutable; evaluation is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    free: BTreeSet<Var>,
}

pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: source.len(),
    };
    let root = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(ParseError::Syntax {
            offset: tok.offset,
            message: format!("unexpected {}", tok.kind.describe()),
        });
    }
    let mut free = BTreeSet::new();
    collect_vars(&root, &mut free);
    Ok(Expr { root, free })
}

/// Evaluate with name bindings (`t`, `lambda`, `x1`, ...).
pub fn evaluate(e: &Expr, bindings: &HashMap<String, f64>) -> Result<f64, EvalError> {
    e.evaluate(bindings)
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr {
            root: Node::Const(value),
            free: BTreeSet::new(),
        }
    }

    pub fn free_variables(&self) -> &BTreeSet<Var> {
        &self.free
    }

    /// Largest state index referenced (one-based), 0 when no `x` appears.
    pub fn max_state_index(&self) -> usize {
        self.free
            .iter()
            .filter_map(|v| match v {
                Var::X(i) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn depends_on_state(&self) -> bool {
        self.max_state_index() > 0
    }

    pub fn is_zero_constant(&self) -> bool {
        matches!(self.root, Node::Const(c) if c == 0.0)
    }

    pub fn evaluate(&self, bindings: &HashMap<String, f64>) -> Result<f64, EvalError> {
        let mut x = vec![f64::NAN; self.max_state_index()];
        let lookup = |name: String| bindings.get(&name).copied().ok_or(EvalError::Unbound(name));
        let mut t = f64::NAN;
        let mut lambda = f64::NAN;
        for v in &self.free {
            match v {
                Var::T => t = lookup(v.name())?,
                Var::Lambda => lambda = lookup(v.name())?,
                Var::X(i) => x[*i] = lookup(v.name())?,
            }
        }
        self.eval(Point { t, lambda, x: &x })
    }

    pub fn eval(&self, p: Point<'_>) -> Result<f64, EvalError> {
        let v = eval_node(&self.root, &p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }
}

fn eval_node(node: &Node, p: &Point<'_>) -> Result<f64, EvalError> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var(Var::T) => p.t,
        Node::Var(Var::Lambda) => p.lambda,
        Node::Var(Var::X(i)) => {
            *p.x.get(*i)
                .ok_or_else(|| EvalError::Unbound(Var::X(*i).name()))?
        }
        Node::Neg(a) => -eval_node(a, p)?,
        Node::Call(f, a) => f.apply(eval_node(a, p)?)?,
        Node::Bin(op, a, b) => {
            let a = eval_node(a, p)?;
            let b = eval_node(b, p)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    let q = a / b;
                    if !q.is_finite() {
                        return Err(EvalError::NonFinite);
                    }
                    q
                }
                BinOp::Pow => {
                    if a < 0.0 && b.fract() != 0.0 {
                        return Err(EvalError::Domain(format!(
                            "non-integer power {b} of negative base {a}"
                        )));
                    }
                    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                        a.powi(b as i32)
                    } else {
                        a.powf(b)
                    }
                }
            }
        }
    })
}

fn collect_vars(node: &Node, out: &mut BTreeSet<Var>) {
    match node {
        Node::Const(_) => {}
        Node::Var(v) => {
            out.insert(*v);
        }
        Node::Neg(a) | Node::Call(_, a) => collect_vars(a, out),
        Node::Bin(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized form; reparses to an identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

fn write_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Const(c) => write!(f, "{c:?}"),
        Node::Var(v) => write!(f, "{}", v.name()),
        Node::Neg(a) => {
            write!(f, "(-")?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Node::Bin(op, a, b) => {
            write!(f, "(")?;
            write_node(a, f)?;
            write!(f, " {} ", op.symbol())?;
            write_node(b, f)?;
            write!(f, ")")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Op(c) => format!("operator `{c}`"),
            TokenKind::LParen => "`(`".to_string(),
            TokenKind::RParen => "`)`".to_string(),
            TokenKind::Comma => "`,`".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(offset, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let kind = match c {
            '0'..='9' | '.' => {
                let mut end = offset;
                let mut seen_exp = false;
                let mut prev = ' ';
                while let Some(&(i, ch)) = chars.peek() {
                    let take = ch.is_ascii_digit()
                        || ch == '.'
                        || (!seen_exp && (ch == 'e' || ch == 'E'))
                        || ((ch == '+' || ch == '-') && (prev == 'e' || prev == 'E'));
                    if !take {
                        break;
                    }
                    if ch == 'e' || ch == 'E' {
                        seen_exp = true;
                    }
                    prev = ch;
                    end = i + ch.len_utf8();
                    chars.next();
                }
                let text = &src[offset..end];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset,
                    message: format!("malformed number `{text}`"),
                })?;
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    offset,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = offset;
                while let Some(&(i, ch)) = chars.peek() {
                    if ch.is_ascii_alphanumeric() || ch == '_' {
                        end = i + ch.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(src[offset..end].to_string()),
                    offset,
                });
                continue;
            }
            '+' | '*' | '/' | '^' | '-' => TokenKind::Op(c),
            '\u{2212}' => TokenKind::Op('-'),
            '(' => TokenKind::LParen,
            ')' => TokenKind::RParen,
            ',' => TokenKind::Comma,
            other => {
                return Err(ParseError::Syntax {
                    offset,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        chars.next();
        tokens.push(Token { kind, offset });
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn here(&self) -> usize {
        self.peek().map(|t| t.offset).unwrap_or(self.end)
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c),
                ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let offset = self.here();
        let Some(tok) = self.next() else {
            return Err(ParseError::Syntax {
                offset,
                message: "unexpected end of input".to_string(),
            });
        };
        match tok.kind {
            TokenKind::Number(v) => Ok(Node::Const(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect_rparen(offset)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                let is_call = matches!(
                    self.peek(),
                    Some(Token {
                        kind: TokenKind::LParen,
                        ..
                    })
                );
                if is_call {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ParseError::UnknownIdentifier {
                            name,
                            offset: tok.offset,
                        });
                    };
                    self.pos += 1;
                    let mut args = Vec::new();
                    if !matches!(
                        self.peek(),
                        Some(Token {
                            kind: TokenKind::RParen,
                            ..
                        })
                    ) {
                        args.push(self.expr()?);
                        while matches!(
                            self.peek(),
                            Some(Token {
                                kind: TokenKind::Comma,
                                ..
                            })
                        ) {
                            self.pos += 1;
                            args.push(self.expr()?);
                        }
                    }
                    self.expect_rparen(offset)?;
                    if args.len() != 1 {
                        return Err(ParseError::Arity {
                            name,
                            offset: tok.offset,
                            found: args.len(),
                        });
                    }
                    return Ok(Node::Call(func, Box::new(args.pop().unwrap())));
                }
                if Func::from_name(&name).is_some() {
                    return Err(ParseError::Arity {
                        name,
                        offset: tok.offset,
                        found: 0,
                    });
                }
                variable(&name)
                    .map(Node::Var)
                    .or_else(|| (name == "pi").then_some(Node::Const(std::f64::consts::PI)))
                    .ok_or(ParseError::UnknownIdentifier {
                        name,
                        offset: tok.offset,
                    })
            }
            other => Err(ParseError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn expect_rparen(&mut self, open: usize) -> Result<(), ParseError> {
        let offset = self.here();
        match self.next() {
            Some(Token {
                kind: TokenKind::RParen,
                ..
            }) => Ok(()),
            Some(tok) => Err(ParseError::Syntax {
                offset: tok.offset,
                message: format!(
                    "expected `)` closing `(` at byte {open}, found {}",
                    tok.kind.describe()
                ),
            }),
            None => Err(ParseError::Syntax {
                offset,
                message: format!("unclosed `(` at byte {open}"),
            }),
        }
    }
}

fn variable(name: &str) -> Option<Var> {
    match name {
        "t" => Some(Var::T),
        "lambda" => Some(Var::Lambda),
        _ => {
            let digits = name.strip_prefix('x')?;
            if digits.is_empty() || digits.starts_with('0') {
                return None;
            }
            let k: usize = digits.parse().ok()?;
            Some(Var::X(k - 1))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(src: &str, t: f64, lambda: f64, x: &[f64]) -> f64 {
        parse(src).unwrap().eval(Point { t, lambda, x }).unwrap()
    }

    #[test]
    fn tanh_product_vanishes_at_origin() {
        assert_eq!(at("-tanh(t)*x1", 0.0, 0.0, &[5.0]), 0.0);
    }

    #[test]
    fn quadratic_difference() {
        let l = 0.3;
        let v = at("x1^2 - lambda^2", 0.0, l, &[2f64.sqrt() * l]);
        assert!((v - 0.09).abs() < 1e-15, "{v}");
    }

    #[test]
    fn cosh_one() {
        // cosh 1 = (e + 1/e) / 2
        let e = std::f64::consts::E;
        let oracle = (e + 1.0 / e) / 2.0;
        let v = at("cosh(t)", 1.0, 0.0, &[]);
        assert!((v - 1.5430806348).abs() < 1e-9);
        assert!((v - oracle).abs() < 1e-15);
    }

    #[test]
    fn evaluate_with_bindings() {
        let mut b = HashMap::new();
        b.insert("t".to_string(), 0.0);
        assert_eq!(evaluate(&parse("1/(1+abs(t))").unwrap(), &b).unwrap(), 1.0);
        b.insert("t".to_string(), -2.0);
        assert_eq!(evaluate(&parse("sign(t)").unwrap(), &b).unwrap(), -1.0);
        b.insert("t".to_string(), 50.0);
        let v = evaluate(&parse("arctan(tanh(t/2))").unwrap(), &b).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
    }

    #[test]
    fn unbound_variable() {
        let b = HashMap::new();
        assert_eq!(
            parse("x2 + 1").unwrap().evaluate(&b),
            Err(EvalError::Unbound("x2".into()))
        );
    }

    #[test]
    fn precedence() {
        assert_eq!(at("-2^2", 0.0, 0.0, &[]), -4.0);
        assert_eq!(at("2^3^2", 0.0, 0.0, &[]), 512.0);
        assert_eq!(at("2^-1", 0.0, 0.0, &[]), 0.5);
        assert_eq!(at("1 - 2 - 3", 0.0, 0.0, &[]), -4.0);
        assert_eq!(at("8 / 2 / 2", 0.0, 0.0, &[]), 2.0);
        assert_eq!(at("1 + 2 * 3", 0.0, 0.0, &[]), 7.0);
        assert_eq!(at("\u{2212}x1 + lambda", 0.0, 2.0, &[1.0]), 1.0);
        assert_eq!(at("2*pi", 0.0, 0.0, &[]), 2.0 * std::f64::consts::PI);
        assert_eq!(at("1.5e1 + .5", 0.0, 0.0, &[]), 15.5);
    }

    #[test]
    fn domain_errors() {
        let p = Point {
            t: -1.0,
            lambda: 0.0,
            x: &[],
        };
        for src in ["log(t)", "sqrt(t)", "t^0.5", "1/(t+1)", "exp(1000)"] {
            assert!(parse(src).unwrap().eval(p).is_err(), "{src}");
        }
        assert_eq!(parse("t^2").unwrap().eval(p).unwrap(), 1.0);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        match parse("1 + * 2") {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        match parse("x1 + foo") {
            Err(ParseError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "foo");
                assert_eq!(offset, 5);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("tanh(1, 2)"),
            Err(ParseError::Arity { found: 2, .. })
        ));
        assert!(matches!(
            parse("exp()"),
            Err(ParseError::Arity { found: 0, .. })
        ));
        assert!(matches!(parse("sqrt"), Err(ParseError::Arity { .. })));
        assert!(matches!(
            parse("bogus(1)"),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse("x0"),
            Err(ParseError::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn malformed_corpus_is_rejected() {
        let corpus = [
            "", "(", ")", "1 +", "* 1", "(1 + 2", "1 + 2)", "1 2", "tanh(", "tanh)", "1..2", "1e",
            "1e+", "x1 x2", "^2", "2^", "()", "f(,)", "sin(t)", "t $ 1", "lambda(", ",", "1,2",
            "--", "exp(1,)", "e", "1 +* 2", "@", "x", "x1(2)",
        ];
        for src in corpus {
            assert!(parse(src).is_err(), "accepted malformed input {src:?}");
        }
    }

    #[test]
    fn free_variables_are_collected() {
        let e = parse("x3 * tanh(t) + lambda").unwrap();
        let vars: Vec<_> = e.free_variables().iter().copied().collect();
        assert_eq!(vars, vec![Var::T, Var::Lambda, Var::X(2)]);
        assert_eq!(e.max_state_index(), 3);
    }

    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (0u32..100).prop_map(|v| format!("{}", v as f64 / 7.0)),
            Just("t".to_string()),
            Just("lambda".to_string()),
            Just("x1".to_string()),
            Just("x2".to_string()),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            prop_oneof![
                (
                    inner.clone(),
                    inner.clone(),
                    prop_oneof![Just('+'), Just('-'), Just('*'), Just('/')]
                )
                    .prop_map(|(a, b, op)| format!("{a} {op} {b}")),
                (inner.clone(), 0u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
                inner.clone().prop_map(|a| format!("-{a}")),
                (
                    inner,
                    prop_oneof![
                        Just("tanh"),
                        Just("cosh"),
                        Just("arctan"),
                        Just("abs"),
                        Just("sign")
                    ]
                )
                    .prop_map(|(a, f)| format!("{f}({a})")),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(src in arb_expr(), vals in proptest::collection::vec(-3.0f64..3.0, 100 * 4)) {
            let e = parse(&src).unwrap();
            let printed = e.to_string();
            let again = parse(&printed).unwrap();
            prop_assert_eq!(&e, &again);
            for chunk in vals.chunks(4) {
                let p = Point { t: chunk[0], lambda: chunk[1], x: &chunk[2..4] };
                let a = e.eval(p);
                let b = again.eval(p);
                match (a, b) {
                    (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                    (Err(_), Err(_)) => {}
                    (a, b) => prop_assert!(false, "mismatch {:?} {:?}", a, b),
                }
            }
        }

        #[test]
        fn parser_never_panics(src in "[-+*/^()., 0-9a-z\u{2212}]{0,24}") {
            let _ = parse(&src);
        }
    }
}
