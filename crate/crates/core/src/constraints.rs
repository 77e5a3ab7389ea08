//! OCL-subset constraints: parsing, binding against a model, and evaluation
//! over object snapshots and transitions.
//!
//! ```text
//! context UV inv scoreRange: self.performanceScore >= 0 and self.performanceScore <= 100
//! context UV inv uniqueId: UV.allInstances()->isUnique(uvId)
//! context UVFManager inv <<Cardinality>> managesSome: self.manages->size() >= 1
//! context UV::assignTask() pre idleBeforeTask: self.oclInState(Uncontrolled)
//! context UVFManager::assignTasks() post issued: self.tasksAssigned > self.tasksAssigned@pre
//! ```
//!
//! Logic is two-valued: reading an unset attribute makes the whole
//! constraint fail with reason `undefined` instead of propagating OCL's
//! third truth value.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SemanticType, SystemModel};

/// Tolerance used when either side of a numeric comparison is a real.
pub const REAL_TOLERANCE: f64 = 1e-9;

pub type Number = Ratio<i128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    Uniqueness,
    Cardinality,
    Value,
    Precondition,
    Postcondition,
}

impl ConstraintKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Uniqueness" => Self::Uniqueness,
            "Cardinality" => Self::Cardinality,
            "Value" => Self::Value,
            "Precondition" => Self::Precondition,
            "Postcondition" => Self::Postcondition,
            _ => return None,
        })
    }

    pub fn is_transition_scoped(self) -> bool {
        matches!(self, Self::Precondition | Self::Postcondition)
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn is_equality(self) -> bool {
        matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    /// Exact decimal value plus its source spelling.
    Number {
        value: Number,
        text: String,
    },
    Str(String),
    Bool(bool),
    /// `Type::Literal`; the qualifier is informational.
    Enum {
        qualifier: String,
        literal: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(Literal),
    Attr { name: String, at_pre: bool },
    LinkSize { role: String, at_pre: bool },
    AllSize { class: String },
    InState { path: Vec<String> },
    IsUnique { class: String, attr: String },
    Cmp { op: CmpOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
}

impl Expr {
    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Cmp { lhs, rhs, .. } | Expr::And(lhs, rhs) | Expr::Or(lhs, rhs) | Expr::Implies(lhs, rhs) => {
                lhs.walk(f);
                rhs.walk(f);
            }
            Expr::Not(e) => e.walk(f),
            _ => {}
        }
    }

    fn any(&self, pred: impl Fn(&Expr) -> bool) -> bool {
        let mut hit = false;
        self.walk(&mut |e| hit |= pred(e));
        hit
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Implies(..) => 1,
            Expr::Or(..) => 2,
            Expr::And(..) => 3,
            Expr::Not(_) => 4,
            Expr::Cmp { .. } => 5,
            _ => 6,
        }
    }
}

fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number { text, .. } => f.write_str(text),
            Literal::Str(s) => write!(f, "'{s}'"),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Enum { qualifier, literal } => write!(f, "{qualifier}::{literal}"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pre = |p: bool| if p { "@pre" } else { "" };
        match self {
            Expr::Lit(l) => write!(f, "{l}"),
            Expr::Attr { name, at_pre } => write!(f, "self.{name}{}", pre(*at_pre)),
            Expr::LinkSize { role, at_pre } => write!(f, "self.{role}{}->size()", pre(*at_pre)),
            Expr::AllSize { class } => write!(f, "{class}.allInstances()->size()"),
            Expr::InState { path } => write!(f, "self.oclInState({})", path.join(".")),
            Expr::IsUnique { class, attr } => write!(f, "{class}.allInstances()->isUnique({attr})"),
            Expr::Cmp { op, lhs, rhs } => {
                wrap(f, lhs, lhs.precedence() <= 5)?;
                write!(f, " {} ", op.symbol())?;
                wrap(f, rhs, rhs.precedence() <= 5)
            }
            Expr::Not(e) => {
                f.write_str("not ")?;
                wrap(f, e, e.precedence() < 4)
            }
            Expr::And(a, b) | Expr::Or(a, b) => {
                let (p, word) = if matches!(self, Expr::And(..)) { (3, "and") } else { (2, "or") };
                wrap(f, a, a.precedence() < p)?;
                write!(f, " {word} ")?;
                wrap(f, b, b.precedence() <= p)
            }
            Expr::Implies(a, b) => {
                wrap(f, a, a.precedence() <= 1)?;
                f.write_str(" implies ")?;
                wrap(f, b, b.precedence() < 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub name: String,
    pub kind: ConstraintKind,
    pub context: String,
    pub operation: Option<String>,
    pub expr: Expr,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "context {}", self.context)?;
        if let Some(op) = &self.operation {
            write!(f, "::{op}()")?;
        }
        let kw = match self.kind {
            ConstraintKind::Precondition => "pre",
            ConstraintKind::Postcondition => "post",
            _ => "inv",
        };
        write!(f, " {kw} {}: {}", self.name, self.expr)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.name == name)
    }

    /// Text form accepted by [`parse_constraints`].
    pub fn render(&self) -> String {
        self.constraints.iter().map(|c| format!("{c}\n")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintError {
    #[error("{line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{}", .0.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("; "))]
    Binding(Vec<BindIssue>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("constraint `{constraint}`: {message}")]
pub struct BindIssue {
    pub constraint: String,
    pub message: String,
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Ident(String),
    Num(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    line: usize,
    col: usize,
}

fn syntax<T>(line: usize, column: usize, message: impl Into<String>) -> Result<T, ConstraintError> {
    Err(ConstraintError::Syntax { line, column, message: message.into() })
}

const SYMBOLS: [&str; 17] =
    ["<<", ">>", "<>", "<=", ">=", "->", "::", "=", "<", ">", ".", "(", ")", ":", ",", "@", "-"];

fn lex(text: &str) -> Result<Vec<Token>, ConstraintError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut p = 0;
        while p < chars.len() {
            let c = chars[p];
            let (ln, col) = (i + 1, p + 1);
            if c.is_whitespace() {
                p += 1;
            } else if c == '-' && chars.get(p + 1) == Some(&'-') {
                break;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = p;
                while p < chars.len() && (chars[p].is_ascii_alphanumeric() || chars[p] == '_') {
                    p += 1;
                }
                out.push(Token { kind: TokKind::Ident(chars[start..p].iter().collect()), line: ln, col });
            } else if c.is_ascii_digit() {
                let start = p;
                while p < chars.len() && chars[p].is_ascii_digit() {
                    p += 1;
                }
                if chars.get(p) == Some(&'.') && chars.get(p + 1).is_some_and(|d| d.is_ascii_digit()) {
                    p += 1;
                    while p < chars.len() && chars[p].is_ascii_digit() {
                        p += 1;
                    }
                }
                out.push(Token { kind: TokKind::Num(chars[start..p].iter().collect()), line: ln, col });
            } else if c == '\'' {
                let Some(end) = chars[p + 1..].iter().position(|&d| d == '\'') else {
                    return syntax(ln, col, "unterminated string literal");
                };
                let s: String = chars[p + 1..p + 1 + end].iter().collect();
                out.push(Token { kind: TokKind::Str(s), line: ln, col });
                p += end + 2;
            } else {
                let rest: String = chars[p..chars.len().min(p + 2)].iter().collect();
                let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
                    return syntax(ln, col, format!("unexpected character `{c}`"));
                };
                out.push(Token { kind: TokKind::Sym(sym), line: ln, col });
                p += sym.chars().count();
            }
        }
    }
    let line = text.lines().count().max(1);
    let col = text.lines().last().map_or(0, |l| l.chars().count()) + 1;
    out.push(Token { kind: TokKind::Eof, line, col });
    Ok(out)
}

// ---------------------------------------------------------------------------
// parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    post: bool,
}

fn parse_number(text: &str) -> Option<Number> {
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    let digits = format!("{int}{frac}");
    let num: i128 = digits.parse().ok()?;
    let den = 10i128.checked_pow(u32::try_from(frac.len()).ok()?)?;
    Some(Ratio::new(num, den))
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(&self.peek().kind, TokKind::Sym(x) if *x == s)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, TokKind::Ident(x) if x == kw)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ConstraintError> {
        let t = self.peek();
        syntax(t.line, t.col, message)
    }

    fn describe(&self) -> String {
        match &self.peek().kind {
            TokKind::Ident(s) => format!("`{s}`"),
            TokKind::Num(s) => format!("`{s}`"),
            TokKind::Str(s) => format!("'{s}'"),
            TokKind::Sym(s) => format!("`{s}`"),
            TokKind::Eof => "end of input".into(),
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ConstraintError> {
        if self.at_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.fail(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> Result<String, ConstraintError> {
        match &self.peek().kind {
            TokKind::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.fail(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ConstraintError> {
        if self.at_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.fail(format!("expected `{kw}`, found {}", self.describe()))
        }
    }

    fn constraint(&mut self) -> Result<Constraint, ConstraintError> {
        let start = self.peek().clone();
        self.keyword("context")?;
        let context = self.ident()?;
        let mut operation = None;
        if self.at_sym("::") {
            self.bump();
            operation = Some(self.ident()?);
            self.expect_sym("(")?;
            while !self.at_sym(")") {
                if self.peek().kind == TokKind::Eof {
                    return self.fail("unclosed parameter list");
                }
                self.bump();
            }
            self.bump();
        }
        let kw_tok = self.peek().clone();
        let kw = self.ident()?;
        let syntactic = match kw.as_str() {
            "inv" => None,
            "pre" => Some(ConstraintKind::Precondition),
            "post" => Some(ConstraintKind::Postcondition),
            _ => return syntax(kw_tok.line, kw_tok.col, format!("expected `inv`, `pre` or `post`, found `{kw}`")),
        };
        match (&operation, syntactic) {
            (None, Some(_)) => {
                return syntax(kw_tok.line, kw_tok.col, format!("`{kw}` needs an operation context `C::op()`"))
            }
            (Some(_), None) => return syntax(kw_tok.line, kw_tok.col, "`inv` takes a class context, not an operation"),
            _ => {}
        }
        let mut declared = None;
        if self.at_sym("<<") {
            self.bump();
            let t = self.peek().clone();
            let k = self.ident()?;
            let Some(kind) = ConstraintKind::parse(&k) else {
                return syntax(t.line, t.col, format!("unknown constraint kind `{k}`"));
            };
            self.expect_sym(">>")?;
            declared = Some((kind, t));
        }
        let name = self.ident()?;
        self.expect_sym(":")?;
        self.post = syntactic == Some(ConstraintKind::Postcondition);
        let expr = self.expr()?;
        if !self.at_kw("context") && self.peek().kind != TokKind::Eof {
            return self.fail(format!("unexpected {} after expression", self.describe()));
        }
        let unique_root = matches!(expr, Expr::IsUnique { .. });
        if !unique_root && expr.any(|e| matches!(e, Expr::IsUnique { .. })) {
            return syntax(start.line, start.col, format!("`{name}`: isUnique must form the whole expression"));
        }
        let kind = match syntactic {
            Some(k) => {
                if unique_root {
                    return syntax(start.line, start.col, format!("`{name}`: isUnique is only allowed in invariants"));
                }
                k
            }
            None if unique_root => ConstraintKind::Uniqueness,
            None if expr.any(|e| matches!(e, Expr::LinkSize { .. } | Expr::AllSize { .. })) => {
                ConstraintKind::Cardinality
            }
            None => ConstraintKind::Value,
        };
        if let Some((d, t)) = declared {
            if d != kind {
                return syntax(
                    t.line,
                    t.col,
                    format!("`{name}` is declared {d} but its expression is a {kind} constraint"),
                );
            }
        }
        Ok(Constraint { name, kind, context, operation, expr })
    }

    fn expr(&mut self) -> Result<Expr, ConstraintError> {
        let lhs = self.or()?;
        if self.at_kw("implies") {
            self.bump();
            let rhs = self.expr()?;
            return Ok(Expr::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Expr, ConstraintError> {
        let mut e = self.and()?;
        while self.at_kw("or") {
            self.bump();
            e = Expr::Or(Box::new(e), Box::new(self.and()?));
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<Expr, ConstraintError> {
        let mut e = self.not()?;
        while self.at_kw("and") {
            self.bump();
            e = Expr::And(Box::new(e), Box::new(self.not()?));
        }
        Ok(e)
    }

    fn not(&mut self) -> Result<Expr, ConstraintError> {
        if self.at_kw("not") {
            self.bump();
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, ConstraintError> {
        let lhs = self.primary()?;
        let op = match &self.peek().kind {
            TokKind::Sym("=") => CmpOp::Eq,
            TokKind::Sym("<>") => CmpOp::Ne,
            TokKind::Sym("<") => CmpOp::Lt,
            TokKind::Sym("<=") => CmpOp::Le,
            TokKind::Sym(">") => CmpOp::Gt,
            TokKind::Sym(">=") => CmpOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.primary()?;
        Ok(Expr::Cmp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) })
    }

    fn number(&mut self, negative: bool) -> Result<Expr, ConstraintError> {
        let t = self.bump();
        let TokKind::Num(text) = t.kind else {
            return syntax(t.line, t.col, "expected a number");
        };
        let Some(mut value) = parse_number(&text) else {
            return syntax(t.line, t.col, format!("numeric literal `{text}` out of range"));
        };
        let mut text = text;
        if negative {
            value = -value;
            text = format!("-{text}");
        }
        Ok(Expr::Lit(Literal::Number { value, text }))
    }

    fn at_pre(&mut self) -> Result<bool, ConstraintError> {
        if !self.at_sym("@") {
            return Ok(false);
        }
        if !self.post {
            return self.fail("`@pre` is only allowed in postconditions");
        }
        self.bump();
        self.keyword("pre")?;
        Ok(true)
    }

    fn size_call(&mut self) -> Result<(), ConstraintError> {
        self.keyword("size")?;
        self.expect_sym("(")?;
        self.expect_sym(")")
    }

    fn primary(&mut self) -> Result<Expr, ConstraintError> {
        let t = self.peek().clone();
        match &t.kind {
            TokKind::Num(_) => self.number(false),
            TokKind::Sym("-") => {
                self.bump();
                if !matches!(self.peek().kind, TokKind::Num(_)) {
                    return self.fail("expected a number after `-`");
                }
                self.number(true)
            }
            TokKind::Str(s) => {
                let s = s.clone();
                self.bump();
                Ok(Expr::Lit(Literal::Str(s)))
            }
            TokKind::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            TokKind::Ident(word) => {
                let word = word.clone();
                self.bump();
                match word.as_str() {
                    "true" => return Ok(Expr::Lit(Literal::Bool(true))),
                    "false" => return Ok(Expr::Lit(Literal::Bool(false))),
                    "self" => return self.self_nav(),
                    "and" | "or" | "not" | "implies" | "context" | "inv" | "pre" | "post" => {
                        return syntax(t.line, t.col, format!("unexpected keyword `{word}`"))
                    }
                    _ => {}
                }
                if self.at_sym("::") {
                    self.bump();
                    let literal = self.ident()?;
                    return Ok(Expr::Lit(Literal::Enum { qualifier: word, literal }));
                }
                self.expect_sym(".")?;
                self.keyword("allInstances")?;
                self.expect_sym("(")?;
                self.expect_sym(")")?;
                self.expect_sym("->")?;
                if self.at_kw("isUnique") {
                    self.bump();
                    self.expect_sym("(")?;
                    let attr = self.ident()?;
                    self.expect_sym(")")?;
                    return Ok(Expr::IsUnique { class: word, attr });
                }
                self.size_call()?;
                Ok(Expr::AllSize { class: word })
            }
            _ => self.fail(format!("expected an operand, found {}", self.describe())),
        }
    }

    fn self_nav(&mut self) -> Result<Expr, ConstraintError> {
        self.expect_sym(".")?;
        let name = self.ident()?;
        if name == "oclInState" && self.at_sym("(") {
            self.bump();
            let mut path = vec![self.ident()?];
            while self.at_sym(".") || self.at_sym("::") {
                self.bump();
                path.push(self.ident()?);
            }
            self.expect_sym(")")?;
            return Ok(Expr::InState { path });
        }
        let at_pre = self.at_pre()?;
        if self.at_sym("->") {
            self.bump();
            self.size_call()?;
            return Ok(Expr::LinkSize { role: name, at_pre });
        }
        Ok(Expr::Attr { name, at_pre })
    }
}

pub fn parse_constraints(text: &str) -> Result<ConstraintSet, ConstraintError> {
    let mut p = Parser { toks: lex(text)?, pos: 0, post: false };
    let mut set = ConstraintSet::default();
    while p.peek().kind != TokKind::Eof {
        let t = p.peek().clone();
        let c = p.constraint()?;
        if set.get(&c.name).is_some() {
            return syntax(t.line, t.col, format!("duplicate constraint name `{}`", c.name));
        }
        set.constraints.push(c);
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// binding

#[derive(Debug, Clone, PartialEq)]
enum Ty {
    Num,
    Text,
    Bool,
    Enum(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundConstraints {
    pub constraints: Vec<Constraint>,
    pub model_checksum: String,
    /// class -> class followed by its ancestors
    lineage: BTreeMap<String, Vec<String>>,
}

impl BoundConstraints {
    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.name == name)
    }

    pub fn conforms(&self, class: &str, ancestor: &str) -> bool {
        match self.lineage.get(class) {
            Some(l) => l.iter().any(|c| c == ancestor),
            None => class == ancestor,
        }
    }

    /// Constraints declared directly on `class` (not inherited), in order.
    pub fn declared_on<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a Constraint> + 'a {
        self.constraints.iter().filter(move |c| c.context == class)
    }

    /// Pre/postconditions applying to `op` on an instance of `class`.
    pub fn for_operation<'a>(
        &'a self,
        class: &'a str,
        op: &'a str,
        kind: ConstraintKind,
    ) -> impl Iterator<Item = &'a Constraint> + 'a {
        self.constraints
            .iter()
            .filter(move |c| c.kind == kind && c.operation.as_deref() == Some(op) && self.conforms(class, &c.context))
    }

    pub fn as_set(&self) -> ConstraintSet {
        ConstraintSet { constraints: self.constraints.clone() }
    }
}

struct Binder<'a> {
    model: &'a SystemModel,
    constraint: &'a Constraint,
    issues: Vec<BindIssue>,
}

impl Binder<'_> {
    fn issue(&mut self, message: String) {
        self.issues.push(BindIssue { constraint: self.constraint.name.clone(), message });
    }

    fn attr_ty(&mut self, class: &str, attr: &str) -> Option<Ty> {
        match self.model.find_attribute(class, attr) {
            Some(a) => Some(match &a.ty {
                SemanticType::Integer | SemanticType::Real => Ty::Num,
                SemanticType::Id | SemanticType::String => Ty::Text,
                SemanticType::Boolean => Ty::Bool,
                SemanticType::Enum(lits) => Ty::Enum(lits.clone()),
            }),
            None => {
                self.issue(format!("unknown attribute `{attr}` on class `{class}`"));
                None
            }
        }
    }

    fn ty(&mut self, e: &Expr) -> Option<Ty> {
        let ctx = self.constraint.context.as_str();
        match e {
            Expr::Lit(Literal::Number { .. }) => Some(Ty::Num),
            Expr::Lit(Literal::Str(_)) => Some(Ty::Text),
            Expr::Lit(Literal::Bool(_)) => Some(Ty::Bool),
            Expr::Lit(Literal::Enum { literal, .. }) => Some(Ty::Enum(vec![literal.clone()])),
            Expr::Attr { name, .. } => {
                if self.model.find_attribute(ctx, name).is_none() && self.model.navigation(ctx, name).is_some() {
                    self.issue(format!("`{name}` is a navigation; use `self.{name}->size()`"));
                    return None;
                }
                self.attr_ty(ctx, name)
            }
            Expr::LinkSize { role, .. } => {
                if self.model.navigation(ctx, role).is_none() {
                    self.issue(format!("unknown navigation `{role}` from class `{ctx}`"));
                    return None;
                }
                Some(Ty::Num)
            }
            Expr::AllSize { class } => {
                if self.model.class(class).is_none() {
                    self.issue(format!("unknown class `{class}`"));
                    return None;
                }
                Some(Ty::Num)
            }
            Expr::IsUnique { class, attr } => {
                if self.model.class(class).is_none() {
                    self.issue(format!("unknown class `{class}`"));
                    return None;
                }
                self.attr_ty(class, attr)?;
                Some(Ty::Bool)
            }
            Expr::InState { path } => {
                self.check_state_path(path);
                Some(Ty::Bool)
            }
            Expr::Cmp { op, lhs, rhs } => {
                let (l, r) = (self.ty(lhs), self.ty(rhs));
                let (Some(l), Some(r)) = (l, r) else { return Some(Ty::Bool) };
                let ok = match (&l, &r) {
                    (Ty::Num, Ty::Num) => true,
                    (Ty::Text, Ty::Text) | (Ty::Bool, Ty::Bool) => op.is_equality(),
                    (Ty::Enum(a), Ty::Enum(b)) => {
                        let (decl, lit) = if a.len() == 1 && b.len() != 1 { (b, a) } else { (a, b) };
                        if let Some(bad) = lit.iter().find(|x| !decl.contains(x)) {
                            self.issue(format!("enum literal `{bad}` is not one of {}", decl.join(", ")));
                            return Some(Ty::Bool);
                        }
                        op.is_equality()
                    }
                    _ => false,
                };
                if !ok {
                    self.issue(format!("ill-typed comparison `{e}`"));
                }
                Some(Ty::Bool)
            }
            Expr::Not(x) => {
                self.boolean(x);
                Some(Ty::Bool)
            }
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => {
                self.boolean(a);
                self.boolean(b);
                Some(Ty::Bool)
            }
        }
    }

    fn boolean(&mut self, e: &Expr) {
        if let Some(t) = self.ty(e) {
            if t != Ty::Bool {
                self.issue(format!("`{e}` is not boolean"));
            }
        }
    }

    fn check_state_path(&mut self, path: &[String]) {
        let ctx = self.constraint.context.clone();
        let Some(m) = self.model.state_machine_for(&ctx) else {
            self.issue(format!("class `{ctx}` has no state machine"));
            return;
        };
        for (i, seg) in path.iter().enumerate() {
            let Some(st) = m.state(seg) else {
                self.issue(format!("unknown state `{seg}` for class `{ctx}`"));
                return;
            };
            if i > 0 && st.parent.as_deref() != Some(path[i - 1].as_str()) {
                self.issue(format!("state `{seg}` is not a substate of `{}`", path[i - 1]));
                return;
            }
        }
    }
}

pub fn bind(set: &ConstraintSet, model: &SystemModel) -> Result<BoundConstraints, ConstraintError> {
    let mut issues = Vec::new();
    for c in &set.constraints {
        let mut b = Binder { model, constraint: c, issues: Vec::new() };
        if model.class(&c.context).is_none() {
            b.issue(format!("unknown class `{}`", c.context));
        } else {
            if let Some(op) = &c.operation {
                if model.find_method(&c.context, op).is_none() {
                    b.issue(format!("unknown operation `{op}` on class `{}`", c.context));
                }
            }
            b.boolean(&c.expr);
        }
        issues.extend(b.issues);
    }
    if !issues.is_empty() {
        return Err(ConstraintError::Binding(issues));
    }
    let lineage = model.classes.iter().map(|c| (c.name.clone(), model.lineage(&c.name))).collect();
    Ok(BoundConstraints { constraints: set.constraints.clone(), model_checksum: model.checksum(), lineage })
}

// ---------------------------------------------------------------------------
// snapshots and evaluation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Str(s) => write!(f, "'{s}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub relationship: String,
    pub peer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSnapshot {
    pub class: String,
    pub id: String,
    pub attributes: BTreeMap<String, Value>,
    /// Qualified state path such as `Registered.Uncontrolled`.
    pub state: Option<String>,
    pub links: Vec<Link>,
}

impl InstanceSnapshot {
    pub fn new(class: impl Into<String>, id: impl Into<String>) -> Self {
        InstanceSnapshot {
            class: class.into(),
            id: id.into(),
            attributes: BTreeMap::new(),
            state: None,
            links: Vec::new(),
        }
    }

    pub fn with(mut self, attr: &str, v: Value) -> Self {
        self.attributes.insert(attr.to_string(), v);
        self
    }

    pub fn in_state(mut self, state: &str) -> Self {
        self.state = Some(state.to_string());
        self
    }

    pub fn linked(mut self, relationship: &str, peer: &str) -> Self {
        self.links.push(Link { relationship: relationship.into(), peer: peer.into() });
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectSnapshot {
    pub instances: Vec<InstanceSnapshot>,
}

impl ObjectSnapshot {
    pub fn instance(&self, id: &str) -> Option<&InstanceSnapshot> {
        self.instances.iter().find(|i| i.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub instance: String,
    pub operation: String,
    pub pre: ObjectSnapshot,
    pub post: ObjectSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationReason {
    False,
    Undefined,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub kind: ConstraintKind,
    /// Offending instances; a uniqueness violation lists the whole group.
    pub instances: Vec<String>,
    pub expression: String,
    /// Values read during evaluation, as (navigation, rendered value).
    pub actual: Vec<(String, String)>,
    pub reason: ViolationReason,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] on {}: {}", self.constraint, self.kind, self.instances.join(", "), self.expression)?;
        if self.reason != ViolationReason::False {
            write!(f, " ({:?})", self.reason)?;
        }
        if !self.actual.is_empty() {
            let vals: Vec<String> = self.actual.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, " with {}", vals.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum V {
    Exact(Number),
    Real(f64),
    Text(String),
    Bool(bool),
}

fn num_cmp(a: &V, b: &V) -> Option<std::cmp::Ordering> {
    use std::cmp::Ordering;
    match (a, b) {
        (V::Exact(x), V::Exact(y)) => Some(x.cmp(y)),
        _ => {
            let f = |v: &V| match v {
                V::Exact(r) => r.to_f64(),
                V::Real(r) => Some(*r),
                _ => None,
            };
            let (x, y) = (f(a)?, f(b)?);
            if (x - y).abs() <= REAL_TOLERANCE {
                Some(Ordering::Equal)
            } else {
                x.partial_cmp(&y)
            }
        }
    }
}

struct Eval<'a> {
    bound: &'a BoundConstraints,
    snap: &'a ObjectSnapshot,
    pre: Option<&'a ObjectSnapshot>,
    this: &'a str,
    reads: Vec<(String, String)>,
}

type Undef = String;

impl Eval<'_> {
    fn instance(&self, at_pre: bool) -> Result<&InstanceSnapshot, Undef> {
        let snap = if at_pre { self.pre.unwrap_or(self.snap) } else { self.snap };
        snap.instance(self.this).ok_or_else(|| format!("instance `{}` missing from snapshot", self.this))
    }

    fn val(&mut self, e: &Expr) -> Result<V, Undef> {
        match e {
            Expr::Lit(Literal::Number { value, .. }) => Ok(V::Exact(*value)),
            Expr::Lit(Literal::Str(s)) => Ok(V::Text(s.clone())),
            Expr::Lit(Literal::Bool(b)) => Ok(V::Bool(*b)),
            Expr::Lit(Literal::Enum { literal, .. }) => Ok(V::Text(literal.clone())),
            Expr::Attr { name, at_pre } => {
                let key = format!("self.{name}{}", if *at_pre { "@pre" } else { "" });
                let inst = self.instance(*at_pre)?;
                let Some(v) = inst.attributes.get(name).cloned() else {
                    self.reads.push((key.clone(), "undefined".into()));
                    return Err(format!("{key} is undefined"));
                };
                self.reads.push((key, v.to_string()));
                Ok(match v {
                    Value::Bool(b) => V::Bool(b),
                    Value::Int(i) => V::Exact(Ratio::from_integer(i128::from(i))),
                    Value::Real(r) => V::Real(r),
                    Value::Str(s) => V::Text(s),
                })
            }
            Expr::LinkSize { role, at_pre } => {
                let inst = self.instance(*at_pre)?;
                let n = inst.links.iter().filter(|l| &l.relationship == role).count();
                self.reads.push((format!("self.{role}->size()"), n.to_string()));
                Ok(V::Exact(Ratio::from_integer(n as i128)))
            }
            Expr::AllSize { class } => {
                let n = self.snap.instances.iter().filter(|i| self.bound.conforms(&i.class, class)).count();
                self.reads.push((format!("{class}.allInstances()->size()"), n.to_string()));
                Ok(V::Exact(Ratio::from_integer(n as i128)))
            }
            _ => self.truth(e).map(V::Bool),
        }
    }

    fn truth(&mut self, e: &Expr) -> Result<bool, Undef> {
        match e {
            Expr::Cmp { op, lhs, rhs } => {
                let (l, r) = (self.val(lhs), self.val(rhs));
                let (l, r) = (l?, r?);
                let ord = match (&l, &r) {
                    (V::Text(a), V::Text(b)) => Some(a.cmp(b)),
                    (V::Bool(a), V::Bool(b)) => Some(a.cmp(b)),
                    _ => num_cmp(&l, &r),
                };
                ord.map(|o| op.holds(o)).ok_or_else(|| format!("cannot compare `{e}`"))
            }
            Expr::Not(x) => self.truth(x).map(|b| !b),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => {
                let (x, y) = (self.truth(a), self.truth(b));
                let (x, y) = (x?, y?);
                Ok(match e {
                    Expr::And(..) => x && y,
                    Expr::Or(..) => x || y,
                    _ => !x || y,
                })
            }
            Expr::InState { path } => {
                let inst = self.instance(false)?;
                let Some(state) = inst.state.clone() else {
                    self.reads.push(("self.state".into(), "undefined".into()));
                    return Err("state is undefined".into());
                };
                self.reads.push(("self.state".into(), state.clone()));
                let segs: Vec<&str> = state.split('.').collect();
                Ok(segs.windows(path.len()).any(|w| w.iter().zip(path).all(|(a, b)| *a == b)))
            }
            Expr::Lit(Literal::Bool(b)) => Ok(*b),
            Expr::Attr { .. } => match self.val(e)? {
                V::Bool(b) => Ok(b),
                _ => Err(format!("`{e}` is not boolean")),
            },
            Expr::IsUnique { .. } => Err("isUnique evaluated per instance".into()),
            _ => Err(format!("`{e}` is not boolean")),
        }
    }
}

fn evaluate(
    bound: &BoundConstraints,
    c: &Constraint,
    snap: &ObjectSnapshot,
    pre: Option<&ObjectSnapshot>,
    this: &str,
) -> Option<Violation> {
    let mut ev = Eval { bound, snap, pre, this, reads: Vec::new() };
    let reason = match ev.truth(&c.expr) {
        Ok(true) => return None,
        Ok(false) => ViolationReason::False,
        Err(_) => ViolationReason::Undefined,
    };
    let mut actual = ev.reads;
    actual.sort();
    actual.dedup();
    Some(Violation {
        constraint: c.name.clone(),
        kind: c.kind,
        instances: vec![this.to_string()],
        expression: c.expr.to_string(),
        actual,
        reason,
    })
}

fn uniqueness(
    bound: &BoundConstraints,
    c: &Constraint,
    class: &str,
    attr: &str,
    snap: &ObjectSnapshot,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for inst in snap.instances.iter().filter(|i| bound.conforms(&i.class, class)) {
        match inst.attributes.get(attr) {
            Some(v) => groups.entry(v.to_string()).or_default().push(inst.id.clone()),
            None => out.push(Violation {
                constraint: c.name.clone(),
                kind: c.kind,
                instances: vec![inst.id.clone()],
                expression: c.expr.to_string(),
                actual: vec![(format!("{}.{attr}", inst.id), "undefined".into())],
                reason: ViolationReason::Undefined,
            }),
        }
    }
    for (value, mut ids) in groups {
        if ids.len() > 1 {
            ids.sort();
            out.push(Violation {
                constraint: c.name.clone(),
                kind: c.kind,
                instances: ids,
                expression: c.expr.to_string(),
                actual: vec![(attr.to_string(), value)],
                reason: ViolationReason::Duplicate,
            });
        }
    }
    out
}

/// Evaluates every invariant (uniqueness, cardinality, value). Transition
/// constraints are ignored here.
pub fn check_snapshot(bound: &BoundConstraints, snap: &ObjectSnapshot) -> Vec<Violation> {
    let mut out = Vec::new();
    for c in bound.constraints.iter().filter(|c| !c.kind.is_transition_scoped()) {
        if let Expr::IsUnique { class, attr } = &c.expr {
            out.extend(uniqueness(bound, c, class, attr, snap));
            continue;
        }
        for inst in snap.instances.iter().filter(|i| bound.conforms(&i.class, &c.context)) {
            out.extend(evaluate(bound, c, snap, None, &inst.id));
        }
    }
    out
}

/// Preconditions are evaluated on the pre snapshot; postconditions on the
/// post snapshot with `@pre` reads served from the pre snapshot.
pub fn check_transition(bound: &BoundConstraints, rec: &TransitionRecord) -> Vec<Violation> {
    let class = rec.post.instance(&rec.instance).or_else(|| rec.pre.instance(&rec.instance)).map(|i| i.class.clone());
    let Some(class) = class else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for c in bound.for_operation(&class, &rec.operation, ConstraintKind::Precondition) {
        out.extend(evaluate(bound, c, &rec.pre, None, &rec.instance));
    }
    for c in bound.for_operation(&class, &rec.operation, ConstraintKind::Postcondition) {
        out.extend(evaluate(bound, c, &rec.post, Some(&rec.pre), &rec.instance));
    }
    out
}

/// Index of constraint names by kind, for reports.
pub fn names_by_kind(set: &ConstraintSet) -> HashMap<ConstraintKind, Vec<&str>> {
    let mut m: HashMap<ConstraintKind, Vec<&str>> = HashMap::new();
    for c in &set.constraints {
        m.entry(c.kind).or_default().push(&c.name);
    }
    m
}
