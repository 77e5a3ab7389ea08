//! PlantUML-subset front end for class, state and activity diagrams.
//!
//! Accepted grammar (anything else is a positioned error):
//!
//! ```text
//! class diagram     class Name [{ ... }] | abstract class Name [{ ... }]
//!                   member:  name : Type | name(p : Type, ...) [: Ret]
//!                   arrow:   A ["card"] (--|> | *-- | o-- | --) ["card"] B [: label]
//! state diagram     title Owner
//!                   state Name [{ ... }]          (one composite level)
//!                   [*] --> Name
//!                   A --> B : event [guard] / action
//! activity diagram  |Lane|  start  stop  :action;
//!                   if (cond) then (label)  else (label)  endif
//!                   fork  fork again  end fork
//! ```
//!
//! Lines starting with `'` are comments. Hyphenated identifiers are
//! normalized (`UVF-Manager` -> `UVFManager`) and the original spelling is
//! kept as a display label on classes.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ident;
use crate::model::{
    ActivityEdge, ActivityFlow, ActivityNode, AgentClass, Attribute, Cardinality, Method, NodeKind, Parameter,
    Relationship, RelationshipKind, SemanticType, State, StateMachine, SystemModel, Transition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagramKind {
    Class,
    State,
    Activity,
}

impl fmt::Display for DiagramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagramKind::Class => "class",
            DiagramKind::State => "state",
            DiagramKind::Activity => "activity",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagramSource {
    pub kind: DiagramKind,
    pub text: String,
    pub origin: String,
}

impl DiagramSource {
    pub fn new(kind: DiagramKind, text: impl Into<String>, origin: impl Into<String>) -> Self {
        DiagramSource { kind, text: text.into(), origin: origin.into() }
    }

    pub fn inline(kind: DiagramKind, text: impl Into<String>) -> Self {
        Self::new(kind, text, "<inline>")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{origin}:{line}:{column}: {message}")]
pub struct ParseError {
    pub origin: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

type Res<T> = Result<T, ParseError>;

/// A content line with its 1-based number in the source.
#[derive(Clone, Copy)]
struct SrcLine<'a> {
    no: usize,
    text: &'a str,
}

struct Ctx<'a> {
    origin: &'a str,
}

impl Ctx<'_> {
    fn err<T>(&self, line: usize, column: usize, message: impl Into<String>) -> Res<T> {
        Err(ParseError { origin: self.origin.to_string(), line, column: column.max(1), message: message.into() })
    }

    /// Error at byte offset `at` of the line.
    fn err_at<T>(&self, l: SrcLine<'_>, at: usize, message: impl Into<String>) -> Res<T> {
        let at = at.min(l.text.len());
        let col = l.text.get(..at).map_or(at, |p| p.chars().count()) + 1;
        self.err(l.no, col, message)
    }

    /// Error pointing at the first non-blank character of the line.
    fn err_line<T>(&self, l: SrcLine<'_>, message: impl Into<String>) -> Res<T> {
        let lead = l.text.len() - l.text.trim_start().len();
        self.err_at(l, lead, message)
    }
}

/// Strips comments and the `@startuml`/`@enduml` envelope.
fn body<'a>(src: &'a DiagramSource, cx: &Ctx<'_>) -> Res<Vec<SrcLine<'a>>> {
    let mut lines = Vec::new();
    let mut started = false;
    let mut ended = false;
    let mut last = 0;
    for (i, text) in src.text.lines().enumerate() {
        let no = i + 1;
        last = no;
        let t = text.trim();
        if t.is_empty() || t.starts_with('\'') {
            continue;
        }
        let l = SrcLine { no, text };
        if ended {
            return cx.err_line(l, "content after @enduml");
        }
        if !started {
            if t == "@startuml" {
                started = true;
                continue;
            }
            return cx.err_line(l, "expected @startuml");
        }
        if t == "@enduml" {
            ended = true;
            continue;
        }
        if t.starts_with("/'") {
            return cx.err_line(l, "block comments are not supported");
        }
        lines.push(l);
    }
    if !started {
        return cx.err(last.max(1), 1, "missing @startuml");
    }
    if !ended {
        return cx.err(last.max(1), 1, "missing @enduml");
    }
    Ok(lines)
}

#[derive(Debug, Clone)]
struct Tok<'a> {
    text: &'a str,
    at: usize,
}

/// Splits on whitespace, keeping double-quoted runs as single tokens.
fn tokenize<'a>(l: SrcLine<'a>, start: usize, end: usize, cx: &Ctx<'_>) -> Res<Vec<Tok<'a>>> {
    let s = &l.text[start..end];
    let mut out = Vec::new();
    let mut it = s.char_indices().peekable();
    while let Some(&(i, c)) = it.peek() {
        if c.is_whitespace() {
            it.next();
            continue;
        }
        let begin = i;
        if c == '"' {
            it.next();
            let mut closed = None;
            for (j, d) in it.by_ref() {
                if d == '"' {
                    closed = Some(j + 1);
                    break;
                }
            }
            match closed {
                Some(stop) => out.push(Tok { text: &s[begin..stop], at: start + begin }),
                None => return cx.err_at(l, start + begin, "unterminated string"),
            }
        } else {
            let mut stop = s.len();
            while let Some(&(j, d)) = it.peek() {
                if d.is_whitespace() || d == '"' {
                    stop = j;
                    break;
                }
                it.next();
            }
            out.push(Tok { text: &s[begin..stop], at: start + begin });
        }
    }
    Ok(out)
}

fn ident_at(tok: &Tok<'_>, l: SrcLine<'_>, cx: &Ctx<'_>) -> Res<(String, Option<String>)> {
    match ident::normalize(tok.text) {
        Some(v) => Ok(v),
        None => cx.err_at(l, tok.at, format!("invalid identifier `{}`", tok.text)),
    }
}

fn find_unquoted(s: &str, needle: char) -> Option<usize> {
    let mut quoted = false;
    for (i, c) in s.char_indices() {
        match c {
            '"' => quoted = !quoted,
            c if c == needle && !quoted => return Some(i),
            _ => {}
        }
    }
    None
}

fn looks_like_arrow(t: &str) -> bool {
    t.contains("--") || t.contains("..") || t.contains("->") || t.contains("<-")
}

// ---------------------------------------------------------------------------
// class diagrams

pub fn parse_class_diagram(src: &DiagramSource) -> Res<(Vec<AgentClass>, Vec<Relationship>)> {
    let cx = Ctx { origin: &src.origin };
    if src.kind != DiagramKind::Class {
        return cx.err(1, 1, format!("expected a class diagram, got {}", src.kind));
    }
    let lines = body(src, &cx)?;
    let mut classes: Vec<AgentClass> = Vec::new();
    let mut rels: Vec<(Relationship, SrcLine<'_>, usize, usize)> = Vec::new();
    let mut open: Option<(usize, SrcLine<'_>)> = None;

    for l in lines {
        let lead = l.text.len() - l.text.trim_start().len();
        let t = l.text.trim();
        if let Some((ci, _)) = open {
            if t == "}" {
                open = None;
                continue;
            }
            parse_member(&mut classes[ci], l, lead, &cx)?;
            continue;
        }
        let toks = tokenize(l, lead, l.text.len(), &cx)?;
        let first = toks[0].text;
        if first == "class" || first == "abstract" {
            let mut i = 1;
            let is_abstract = first == "abstract";
            if is_abstract {
                match toks.get(1) {
                    Some(t) if t.text == "class" => i = 2,
                    _ => return cx.err_at(l, toks[0].at, "expected `abstract class`"),
                }
            }
            let Some(name_tok) = toks.get(i) else {
                return cx.err_line(l, "missing class name");
            };
            let (name, display) = ident_at(name_tok, l, &cx)?;
            if classes.iter().any(|c| c.name == name) {
                return cx.err_at(l, name_tok.at, format!("duplicate class `{name}`"));
            }
            let mut cls = AgentClass::new(name);
            cls.display_label = display;
            cls.is_abstract = is_abstract;
            match toks.get(i + 1) {
                None => {}
                Some(t) if t.text == "{" && toks.len() == i + 2 => open = Some((classes.len(), l)),
                Some(t) => return cx.err_at(l, t.at, format!("unexpected `{}`", t.text)),
            }
            classes.push(cls);
            continue;
        }
        // relationship
        let (arrow_part_end, label) = match find_unquoted(&l.text[lead..], ':') {
            Some(p) => {
                let raw = l.text[lead + p + 1..].trim();
                let off = lead + p + 1 + (l.text[lead + p + 1..].len() - l.text[lead + p + 1..].trim_start().len());
                let Some((lbl, _)) = ident::normalize(raw) else {
                    return cx.err_at(l, off, format!("invalid relationship label `{raw}`"));
                };
                (lead + p, Some(lbl))
            }
            None => (lead, None),
        };
        let toks = if label.is_some() { tokenize(l, lead, arrow_part_end, &cx)? } else { toks };
        let rel = parse_arrow(&toks, l, &cx)?;
        let (mut rel, src_at, dst_at) = rel;
        rel.label = label;
        rels.push((rel, l, src_at, dst_at));
    }
    if let Some((_, l)) = open {
        return cx.err_line(l, "unclosed class body");
    }
    let mut out = Vec::with_capacity(rels.len());
    for (rel, l, src_at, dst_at) in rels {
        if !classes.iter().any(|c| c.name == rel.source) {
            return cx.err_at(l, src_at, format!("unknown class `{}`", rel.source));
        }
        if !classes.iter().any(|c| c.name == rel.target) {
            return cx.err_at(l, dst_at, format!("unknown class `{}`", rel.target));
        }
        out.push(rel);
    }
    Ok((classes, out))
}

fn parse_arrow(toks: &[Tok<'_>], l: SrcLine<'_>, cx: &Ctx<'_>) -> Res<(Relationship, usize, usize)> {
    let Some(arrow_idx) = toks.iter().position(|t| !t.text.starts_with('"') && looks_like_arrow(t.text)) else {
        return cx.err_at(l, toks[0].at, format!("unrecognized statement `{}`", toks[0].text));
    };
    let arrow = &toks[arrow_idx];
    let kind = match arrow.text {
        "--|>" => RelationshipKind::Inheritance,
        "*--" => RelationshipKind::Composition,
        "o--" => RelationshipKind::Aggregation,
        "--" => RelationshipKind::Association,
        other => return cx.err_at(l, arrow.at, format!("unknown arrow token `{other}`")),
    };
    let card = |t: &Tok<'_>| -> Res<Cardinality> {
        let inner = &t.text[1..t.text.len() - 1];
        inner.parse().or_else(|e: String| cx.err_at(l, t.at + 1, e))
    };
    let (src_tok, src_card) = match arrow_idx {
        1 => (&toks[0], None),
        2 if toks[1].text.starts_with('"') => (&toks[0], Some(card(&toks[1])?)),
        0 => return cx.err_at(l, arrow.at, "arrow without source class"),
        _ => return cx.err_at(l, toks[1].at, format!("unexpected `{}`", toks[1].text)),
    };
    let rest = &toks[arrow_idx + 1..];
    let (dst_tok, dst_card) = match rest {
        [d] => (d, None),
        [c, d] if c.text.starts_with('"') => (d, Some(card(c)?)),
        [] => return cx.err_at(l, arrow.at, "arrow without target class"),
        [_, x, ..] => return cx.err_at(l, x.at, format!("unexpected `{}`", x.text)),
    };
    let (source, _) = ident_at(src_tok, l, cx)?;
    let (target, _) = ident_at(dst_tok, l, cx)?;
    if kind == RelationshipKind::Inheritance && (src_card.is_some() || dst_card.is_some()) {
        return cx.err_at(l, arrow.at, "inheritance carries no cardinalities");
    }
    let mut rel = Relationship::new(kind, source, target);
    rel.source_cardinality = src_card;
    rel.target_cardinality = dst_card;
    Ok((rel, src_tok.at, dst_tok.at))
}

fn parse_type(raw: &str, l: SrcLine<'_>, at: usize, cx: &Ctx<'_>) -> Res<SemanticType> {
    raw.parse::<SemanticType>().or_else(|e| cx.err_at(l, at, e))
}

fn offset_of(l: SrcLine<'_>, sub: &str) -> usize {
    sub.as_ptr() as usize - l.text.as_ptr() as usize
}

/// Index of the `)` closing the `(` at `open`.
fn matching_paren(t: &str, open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in t.char_indices().skip_while(|(i, _)| *i < open) {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Splits on commas outside parentheses, so `enum(A, B)` stays whole.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn parse_member(cls: &mut AgentClass, l: SrcLine<'_>, lead: usize, cx: &Ctx<'_>) -> Res<()> {
    let t = l.text[lead..].trim_end();
    let is_method = match (t.find('('), t.find(':')) {
        (Some(o), Some(c)) => o < c,
        (Some(_), None) => true,
        _ => false,
    };
    if let (true, Some(open)) = (is_method, t.find('(')) {
        let Some(close) = matching_paren(t, open) else {
            return cx.err_at(l, lead + open, "unclosed parameter list");
        };
        let name_raw = t[..open].trim();
        let Some((name, _)) = ident::normalize(name_raw) else {
            return cx.err_at(l, lead, format!("invalid method name `{name_raw}`"));
        };
        let mut parameters = Vec::new();
        let params = &t[open + 1..close];
        if !params.trim().is_empty() {
            for p in split_top_level(params) {
                let at = offset_of(l, p);
                let Some((pn, pt)) = p.split_once(':') else {
                    return cx.err_at(l, at, "parameter must be `name : Type`");
                };
                let Some((pname, _)) = ident::normalize(pn.trim()) else {
                    return cx.err_at(l, at, format!("invalid parameter name `{}`", pn.trim()));
                };
                let ty = parse_type(pt, l, offset_of(l, pt), cx)?;
                parameters.push(Parameter { name: pname, ty });
            }
        }
        let after = t[close + 1..].trim();
        let return_type = if after.is_empty() {
            None
        } else {
            let Some(r) = after.strip_prefix(':') else {
                return cx.err_at(l, offset_of(l, after), "expected `: ReturnType`");
            };
            if r.trim() == "void" {
                None
            } else {
                Some(parse_type(r, l, offset_of(l, r), cx)?)
            }
        };
        if cls.methods.iter().any(|m| m.name == name) {
            return cx.err_at(l, lead, format!("duplicate method `{name}`"));
        }
        cls.methods.push(Method { name, parameters, return_type });
        return Ok(());
    }
    let Some((n, ty)) = t.split_once(':') else {
        return cx.err_at(l, lead, format!("unrecognized member `{t}`"));
    };
    let Some((name, _)) = ident::normalize(n.trim()) else {
        return cx.err_at(l, lead, format!("invalid attribute name `{}`", n.trim()));
    };
    let ty = parse_type(ty, l, offset_of(l, ty.trim_start()), cx)?;
    if cls.attribute(&name).is_some() {
        return cx.err_at(l, lead, format!("duplicate attribute `{name}`"));
    }
    cls.attributes.push(Attribute { name, ty });
    Ok(())
}

// ---------------------------------------------------------------------------
// state diagrams

pub fn parse_state_diagram(src: &DiagramSource) -> Res<StateMachine> {
    let cx = Ctx { origin: &src.origin };
    if src.kind != DiagramKind::State {
        return cx.err(1, 1, format!("expected a state diagram, got {}", src.kind));
    }
    let lines = body(src, &cx)?;
    let mut owner: Option<String> = None;
    let mut states: Vec<State> = Vec::new();
    let mut initial: Option<String> = None;
    // (transition, line, from offset, to offset)
    let mut pending: Vec<(Transition, SrcLine<'_>, usize, usize)> = Vec::new();
    let mut initials: Vec<(Option<String>, String, SrcLine<'_>, usize)> = Vec::new();
    let mut composite: Option<(String, SrcLine<'_>)> = None;
    let mut last_line = 1;

    for l in lines {
        last_line = l.no;
        let lead = l.text.len() - l.text.trim_start().len();
        let t = l.text.trim();
        if t == "}" {
            if composite.take().is_none() {
                return cx.err_line(l, "unbalanced `}`");
            }
            continue;
        }
        if let Some(rest) = t.strip_prefix("title ") {
            if owner.is_some() {
                return cx.err_line(l, "duplicate title");
            }
            let at = offset_of(l, rest.trim());
            let Some((name, _)) = ident::normalize(rest.trim()) else {
                return cx.err_at(l, at, format!("invalid owner class `{}`", rest.trim()));
            };
            owner = Some(name);
            continue;
        }
        let (head_end, label) = match find_unquoted(&l.text[lead..], ':') {
            Some(p) => (lead + p, Some((lead + p + 1, l.text[lead + p + 1..].trim()))),
            None => (l.text.len(), None),
        };
        let toks = tokenize(l, lead, head_end, &cx)?;
        if toks[0].text == "state" {
            if label.is_some() {
                return cx.err_at(l, head_end, "state descriptions are not supported");
            }
            let Some(name_tok) = toks.get(1) else {
                return cx.err_line(l, "missing state name");
            };
            let (name, _) = ident_at(name_tok, l, &cx)?;
            if states.iter().any(|s| s.name == name) {
                return cx.err_at(l, name_tok.at, format!("duplicate state `{name}`"));
            }
            let parent = composite.as_ref().map(|(p, _)| p.clone());
            match toks.get(2) {
                None => {}
                Some(b) if b.text == "{" && toks.len() == 3 => {
                    if composite.is_some() {
                        return cx.err_at(l, toks[0].at, "nested composite beyond depth 1");
                    }
                    composite = Some((name.clone(), l));
                }
                Some(x) => return cx.err_at(l, x.at, format!("unexpected `{}`", x.text)),
            }
            states.push(State { name, parent, initial: None });
            continue;
        }
        let Some(arrow) = toks.iter().position(|t| looks_like_arrow(t.text) || t.text == "[*]") else {
            return cx.err_at(l, toks[0].at, format!("unrecognized statement `{}`", toks[0].text));
        };
        let arrow = if toks[arrow].text == "[*]" { arrow + 1 } else { arrow };
        let Some(arrow_tok) = toks.get(arrow) else {
            return cx.err_line(l, "incomplete transition");
        };
        if arrow_tok.text != "-->" {
            return cx.err_at(l, arrow_tok.at, format!("unknown arrow token `{}`", arrow_tok.text));
        }
        if arrow != 1 || toks.len() != 3 {
            let bad = if arrow != 1 { &toks[0] } else { &toks[toks.len().min(3) - 1] };
            return cx.err_at(l, bad.at, "transition must be `A --> B`");
        }
        let (from_tok, to_tok) = (&toks[0], &toks[2]);
        if to_tok.text == "[*]" {
            return cx.err_at(l, to_tok.at, "final pseudo-states are not supported");
        }
        let (to, _) = ident_at(to_tok, l, &cx)?;
        if from_tok.text == "[*]" {
            if label.is_some() {
                return cx.err_at(l, head_end, "initial arrow takes no label");
            }
            let scope = composite.as_ref().map(|(p, _)| p.clone());
            if initials.iter().any(|(s, ..)| *s == scope) {
                return cx.err_at(l, from_tok.at, "second initial state in the same scope");
            }
            initials.push((scope, to, l, to_tok.at));
            continue;
        }
        let (from, _) = ident_at(from_tok, l, &cx)?;
        let Some((label_at, label)) = label else {
            return cx.err_at(l, to_tok.at + to_tok.text.len(), "transition needs an `: event` label");
        };
        let (event, guard, action) = parse_transition_label(label, l, label_at, &cx)?;
        pending.push((Transition { from, to, event, guard, action }, l, from_tok.at, to_tok.at));
    }
    if let Some((name, l)) = composite {
        return cx.err_line(l, format!("unclosed composite state `{name}`"));
    }
    let Some(owner) = owner else {
        return cx.err(last_line, 1, "missing `title <OwnerClass>`");
    };
    let declared: HashSet<String> = states.iter().map(|s| s.name.clone()).collect();
    for (scope, target, l, at) in initials {
        if !declared.contains(&target) {
            return cx.err_at(l, at, format!("undeclared state `{target}`"));
        }
        let parent_of_target = states.iter().find(|s| s.name == target).and_then(|s| s.parent.clone());
        if parent_of_target != scope {
            return cx.err_at(l, at, format!("`{target}` is not in the scope of this initial arrow"));
        }
        match scope {
            None => initial = Some(target),
            Some(p) => {
                if let Some(s) = states.iter_mut().find(|s| s.name == p) {
                    s.initial = Some(target);
                }
            }
        }
    }
    let mut transitions = Vec::with_capacity(pending.len());
    for (tr, l, from_at, to_at) in pending {
        if !declared.contains(&tr.from) {
            return cx.err_at(l, from_at, format!("undeclared state `{}`", tr.from));
        }
        if !declared.contains(&tr.to) {
            return cx.err_at(l, to_at, format!("undeclared state `{}`", tr.to));
        }
        transitions.push(tr);
    }
    let composites: Vec<String> =
        states.iter().filter_map(|s| s.parent.clone()).collect::<HashSet<_>>().into_iter().collect();
    for c in composites {
        if states.iter().any(|s| s.name == c && s.initial.is_none()) {
            return cx.err(last_line, 1, format!("composite state `{c}` has no initial state"));
        }
    }
    let Some(initial) = initial else {
        return cx.err(last_line, 1, "missing initial state (`[*] --> State`)");
    };
    Ok(StateMachine { owner_class: owner, states, initial, transitions })
}

fn parse_transition_label(
    label: &str,
    l: SrcLine<'_>,
    at: usize,
    cx: &Ctx<'_>,
) -> Res<(String, Option<String>, Option<String>)> {
    let base = offset_of(l, label);
    let (main, action) = match label.split_once('/') {
        Some((m, a)) => {
            let a_trim = a.trim();
            let Some((act, _)) = ident::normalize(a_trim) else {
                return cx.err_at(l, offset_of(l, a_trim), format!("invalid action `{a_trim}`"));
            };
            (m, Some(act))
        }
        None => (label, None),
    };
    let (ev, guard) = match main.find('[') {
        Some(open) => {
            let Some(close) = main.find(']') else {
                return cx.err_at(l, base + open, "unclosed guard");
            };
            if !main[close + 1..].trim().is_empty() {
                return cx.err_at(l, base + close + 1, "unexpected text after guard");
            }
            let g = main[open + 1..close].trim();
            let Some((gname, _)) = ident::normalize(g) else {
                return cx.err_at(l, base + open + 1, format!("guard must name a constraint, got `{g}`"));
            };
            (&main[..open], Some(gname))
        }
        None => (main, None),
    };
    let ev = ev.trim();
    let Some((event, _)) = ident::normalize(ev) else {
        return cx.err_at(l, at.max(base), format!("invalid event `{ev}`"));
    };
    Ok((event, guard, action))
}

// ---------------------------------------------------------------------------
// activity diagrams

enum Frame<'a> {
    If { decision: String, ends: Vec<(String, Option<String>)>, saw_else: bool, line: SrcLine<'a> },
    Fork { fork: String, ends: Vec<(String, Option<String>)>, line: SrcLine<'a> },
}

struct FlowBuilder {
    flow: ActivityFlow,
    lane: Option<String>,
    frontier: Vec<(String, Option<String>)>,
    started: bool,
}

impl FlowBuilder {
    fn add(&mut self, kind: NodeKind, label: &str) -> Option<String> {
        if self.frontier.is_empty() && kind != NodeKind::Initial {
            return None;
        }
        let id = format!("n{}", self.flow.nodes.len() + 1);
        for (from, guard) in self.frontier.drain(..) {
            self.flow.edges.push(ActivityEdge { from, to: id.clone(), guard });
        }
        self.flow.nodes.push(ActivityNode {
            id: id.clone(),
            kind,
            label: label.to_string(),
            partition: self.lane.clone(),
        });
        self.frontier.push((id.clone(), None));
        Some(id)
    }
}

fn paren_label<'a>(s: &'a str, l: SrcLine<'_>, cx: &Ctx<'_>) -> Res<Option<&'a str>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        Some(inner) if !inner.contains(')') => Ok(Some(inner.trim())),
        _ => cx.err_at(l, offset_of(l, s), format!("expected `(label)`, got `{s}`")),
    }
}

pub fn parse_activity_diagram(src: &DiagramSource) -> Res<ActivityFlow> {
    let cx = Ctx { origin: &src.origin };
    if src.kind != DiagramKind::Activity {
        return cx.err(1, 1, format!("expected an activity diagram, got {}", src.kind));
    }
    let lines = body(src, &cx)?;
    let mut b = FlowBuilder { flow: ActivityFlow::default(), lane: None, frontier: Vec::new(), started: false };
    let mut stack: Vec<Frame<'_>> = Vec::new();

    for l in lines {
        let t = l.text.trim();
        let unreachable = |cx: &Ctx<'_>| cx.err_line::<()>(l, "statement is unreachable (no incoming flow)");
        if let Some(inner) = t.strip_prefix('|').and_then(|r| r.strip_suffix('|')) {
            let Some((lane, _)) = ident::normalize(inner.trim()) else {
                return cx.err_at(l, offset_of(l, inner), format!("invalid swimlane `{inner}`"));
            };
            if !b.flow.partitions.contains(&lane) {
                b.flow.partitions.push(lane.clone());
            }
            b.lane = Some(lane);
            continue;
        }
        if let Some(rest) = t.strip_prefix(':') {
            let Some(label) = rest.strip_suffix(';') else {
                return cx.err_line(l, "action must end with `;`");
            };
            let label = label.trim();
            if label.is_empty() || label.contains(';') {
                return cx.err_line(l, "invalid action label");
            }
            if b.lane.is_none() {
                return cx.err_line(l, "action outside any partition");
            }
            if b.add(NodeKind::Action, label).is_none() {
                unreachable(&cx)?;
            }
            continue;
        }
        match t {
            "start" => {
                if b.started {
                    return cx.err_line(l, "second `start`");
                }
                if !b.flow.nodes.is_empty() {
                    return cx.err_line(l, "`start` must come first");
                }
                b.started = true;
                b.add(NodeKind::Initial, "");
            }
            "stop" | "end" => {
                if b.add(NodeKind::Final, "").is_none() {
                    unreachable(&cx)?;
                }
                b.frontier.clear();
            }
            "else" => start_else(&mut b, &mut stack, None, l, &cx)?,
            "endif" | "end if" => {
                let Some(Frame::If { decision, mut ends, saw_else, .. }) = stack.pop() else {
                    return cx.err_line(l, "`endif` without matching `if`");
                };
                ends.append(&mut b.frontier);
                if !saw_else {
                    ends.push((decision, None));
                }
                b.frontier = ends;
                if !b.frontier.is_empty() {
                    b.add(NodeKind::Merge, "");
                }
            }
            "fork" => {
                let Some(fork) = b.add(NodeKind::Fork, "") else {
                    return unreachable(&cx).map(|_| unreachable!());
                };
                b.frontier = vec![(fork.clone(), None)];
                stack.push(Frame::Fork { fork, ends: Vec::new(), line: l });
            }
            "fork again" => match stack.last_mut() {
                Some(Frame::Fork { fork, ends, .. }) => {
                    ends.append(&mut b.frontier);
                    b.frontier = vec![(fork.clone(), None)];
                }
                _ => return cx.err_line(l, "`fork again` without matching `fork`"),
            },
            "end fork" => {
                let Some(Frame::Fork { mut ends, .. }) = stack.pop() else {
                    return cx.err_line(l, "`end fork` without matching `fork`");
                };
                ends.append(&mut b.frontier);
                b.frontier = ends;
                if !b.frontier.is_empty() {
                    b.add(NodeKind::Join, "");
                }
            }
            _ => {
                if let Some(rest) = t.strip_prefix("if ") {
                    let rest = rest.trim_start();
                    let Some(cond_body) = rest.strip_prefix('(') else {
                        return cx.err_at(l, offset_of(l, rest), "expected `(` after `if`");
                    };
                    let Some(close) = cond_body.find(") then") else {
                        return cx.err_at(l, offset_of(l, rest), "expected `if (cond) then`");
                    };
                    let cond = cond_body[..close].trim();
                    let guard = paren_label(&cond_body[close + ") then".len()..], l, &cx)?.map(str::to_string);
                    let Some(decision) = b.add(NodeKind::Decision, cond) else {
                        return unreachable(&cx).map(|_| unreachable!());
                    };
                    b.frontier = vec![(decision.clone(), guard)];
                    stack.push(Frame::If { decision, ends: Vec::new(), saw_else: false, line: l });
                } else if let Some(rest) = t.strip_prefix("else") {
                    if !rest.starts_with([' ', '(']) {
                        return cx.err_line(l, format!("unrecognized statement `{t}`"));
                    }
                    let label = paren_label(rest, l, &cx)?.map(str::to_string);
                    start_else(&mut b, &mut stack, label, l, &cx)?;
                } else {
                    return cx.err_line(l, format!("unrecognized statement `{t}`"));
                }
            }
        }
    }
    if let Some(frame) = stack.pop() {
        let (line, what) = match frame {
            Frame::If { line, .. } => (line, "`if` without `endif`"),
            Frame::Fork { line, .. } => (line, "`fork` without `end fork`"),
        };
        return cx.err_line(line, format!("unbalanced block: {what}"));
    }
    Ok(b.flow)
}

fn start_else<'a>(
    b: &mut FlowBuilder,
    stack: &mut [Frame<'a>],
    label: Option<String>,
    l: SrcLine<'_>,
    cx: &Ctx<'_>,
) -> Res<()> {
    match stack.last_mut() {
        Some(Frame::If { decision, ends, saw_else, .. }) if !*saw_else => {
            ends.append(&mut b.frontier);
            b.frontier = vec![(decision.clone(), label)];
            *saw_else = true;
            Ok(())
        }
        Some(Frame::If { .. }) => cx.err_line(l, "second `else` in the same `if`"),
        _ => cx.err_line(l, "`else` without matching `if`"),
    }
}

// ---------------------------------------------------------------------------
// whole models

/// Parses a set of sources into one model. Exactly one class diagram is
/// expected; state and activity diagrams may repeat.
pub fn parse_model(sources: &[DiagramSource], name: &str, version: &str) -> Res<SystemModel> {
    let mut model = SystemModel::empty(name, version);
    let mut saw_class = false;
    for src in sources {
        match src.kind {
            DiagramKind::Class => {
                if saw_class {
                    return Err(ParseError {
                        origin: src.origin.clone(),
                        line: 1,
                        column: 1,
                        message: "more than one class diagram".into(),
                    });
                }
                saw_class = true;
                let (c, r) = parse_class_diagram(src)?;
                model.classes = c;
                model.relationships = r;
            }
            DiagramKind::State => model.state_machines.push(parse_state_diagram(src)?),
            DiagramKind::Activity => model.activities.push(parse_activity_diagram(src)?),
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("activity {0}: node `{1}` is not part of a structured if/fork block")]
    Unstructured(usize, String),
}

/// Renders a model as diagram sources: one class diagram, then one state
/// diagram per machine, then one activity diagram per flow.
pub fn render_model(model: &SystemModel) -> Result<Vec<DiagramSource>, RenderError> {
    let mut out = vec![DiagramSource::new(DiagramKind::Class, render_class_diagram(model), "<rendered>")];
    for m in &model.state_machines {
        out.push(DiagramSource::new(DiagramKind::State, render_state_diagram(m), "<rendered>"));
    }
    for (i, a) in model.activities.iter().enumerate() {
        let text = render_activity_diagram(model, i, a)?;
        out.push(DiagramSource::new(DiagramKind::Activity, text, "<rendered>"));
    }
    Ok(out)
}

fn display_of<'a>(model: &'a SystemModel, name: &'a str) -> &'a str {
    model.class(name).map_or(name, |c| c.display_name())
}

pub fn render_class_diagram(model: &SystemModel) -> String {
    let mut s = String::from("@startuml\n");
    for c in &model.classes {
        let kw = if c.is_abstract { "abstract class" } else { "class" };
        if c.attributes.is_empty() && c.methods.is_empty() {
            s += &format!("{kw} {}\n", c.display_name());
            continue;
        }
        s += &format!("{kw} {} {{\n", c.display_name());
        for a in &c.attributes {
            s += &format!("  {} : {}\n", a.name, a.ty);
        }
        for m in &c.methods {
            let params: Vec<String> = m.parameters.iter().map(|p| format!("{} : {}", p.name, p.ty)).collect();
            s += &format!("  {}({})", m.name, params.join(", "));
            if let Some(r) = &m.return_type {
                s += &format!(" : {r}");
            }
            s.push('\n');
        }
        s += "}\n";
    }
    for r in &model.relationships {
        let arrow = match r.kind {
            RelationshipKind::Inheritance => "--|>",
            RelationshipKind::Composition => "*--",
            RelationshipKind::Aggregation => "o--",
            RelationshipKind::Association => "--",
        };
        s += display_of(model, &r.source);
        if let Some(c) = r.source_cardinality {
            s += &format!(" \"{c}\"");
        }
        s += &format!(" {arrow}");
        if let Some(c) = r.target_cardinality {
            s += &format!(" \"{c}\"");
        }
        s += &format!(" {}", display_of(model, &r.target));
        if let Some(label) = &r.label {
            s += &format!(" : {label}");
        }
        s.push('\n');
    }
    s += "@enduml\n";
    s
}

pub fn render_state_diagram(m: &StateMachine) -> String {
    let mut s = format!("@startuml\ntitle {}\n[*] --> {}\n", m.owner_class, m.initial);
    for st in m.states.iter().filter(|st| st.parent.is_none()) {
        if m.is_composite(&st.name) {
            s += &format!("state {} {{\n", st.name);
            if let Some(init) = &st.initial {
                s += &format!("  [*] --> {init}\n");
            }
            for child in m.children(&st.name) {
                s += &format!("  state {}\n", child.name);
            }
            s += "}\n";
        } else {
            s += &format!("state {}\n", st.name);
        }
    }
    for t in &m.transitions {
        s += &format!("{} --> {} : {}", t.from, t.to, t.event);
        if let Some(g) = &t.guard {
            s += &format!(" [{g}]");
        }
        if let Some(a) = &t.action {
            s += &format!(" / {a}");
        }
        s.push('\n');
    }
    s += "@enduml\n";
    s
}

struct ActivityWriter<'a> {
    model: &'a SystemModel,
    flow: &'a ActivityFlow,
    index: usize,
    order: HashMap<&'a str, usize>,
    succ: HashMap<&'a str, Vec<(&'a str, Option<&'a str>)>>,
    lane: Option<&'a str>,
    out: String,
}

impl<'a> ActivityWriter<'a> {
    fn node(&self, id: &str) -> Result<&'a ActivityNode, RenderError> {
        self.flow.node(id).ok_or_else(|| RenderError::Unstructured(self.index, id.to_string()))
    }

    fn switch_lane(&mut self, node: &'a ActivityNode) {
        if let Some(p) = node.partition.as_deref() {
            if self.lane != Some(p) {
                self.out += &format!("|{}|\n", display_of(self.model, p));
                self.lane = Some(p);
            }
        }
    }

    fn next(&self, id: &str) -> Result<Option<&'a str>, RenderError> {
        match self.succ.get(id).map(Vec::as_slice) {
            None | Some([]) => Ok(None),
            Some([(n, _)]) => Ok(Some(n)),
            Some(_) => Err(RenderError::Unstructured(self.index, id.to_string())),
        }
    }

    fn branches(&self, id: &str) -> Vec<(&'a str, Option<&'a str>)> {
        let mut v = self.succ.get(id).cloned().unwrap_or_default();
        v.sort_by_key(|(t, _)| self.order.get(t).copied().unwrap_or(usize::MAX));
        v
    }

    /// Emits a sequence and returns the merge/join node closing it, if any.
    fn seq(&mut self, mut cur: Option<&'a str>, depth: usize) -> Result<Option<&'a str>, RenderError> {
        while let Some(id) = cur {
            let node = self.node(id)?;
            match node.kind {
                NodeKind::Merge | NodeKind::Join => {
                    if depth == 0 {
                        return Err(RenderError::Unstructured(self.index, id.to_string()));
                    }
                    return Ok(Some(id));
                }
                NodeKind::Initial => {
                    self.switch_lane(node);
                    self.out += "start\n";
                    cur = self.next(id)?;
                }
                NodeKind::Final => {
                    self.switch_lane(node);
                    self.out += "stop\n";
                    return Ok(None);
                }
                NodeKind::Action => {
                    self.switch_lane(node);
                    self.out += &format!(":{};\n", node.label);
                    cur = self.next(id)?;
                }
                NodeKind::Decision | NodeKind::Fork => {
                    self.switch_lane(node);
                    let is_if = node.kind == NodeKind::Decision;
                    let branches = self.branches(id);
                    if branches.is_empty() || (is_if && branches.len() > 2) {
                        return Err(RenderError::Unstructured(self.index, id.to_string()));
                    }
                    let mut closings = Vec::new();
                    for (i, (target, guard)) in branches.iter().enumerate() {
                        let g = guard.map(|g| format!(" ({g})")).unwrap_or_default();
                        self.out += &match (is_if, i) {
                            (true, 0) => format!("if ({}) then{g}\n", node.label),
                            (true, _) => format!("else{g}\n"),
                            (false, 0) => "fork\n".to_string(),
                            (false, _) => "fork again\n".to_string(),
                        };
                        closings.push(self.seq(Some(target), depth + 1)?);
                    }
                    let mut reached = closings.iter().flatten().copied();
                    let close = reached.next();
                    if reached.any(|c| Some(c) != close) {
                        return Err(RenderError::Unstructured(self.index, id.to_string()));
                    }
                    let want = if is_if { NodeKind::Merge } else { NodeKind::Join };
                    if let Some(c) = close {
                        let cn = self.node(c)?;
                        if cn.kind != want {
                            return Err(RenderError::Unstructured(self.index, c.to_string()));
                        }
                        self.switch_lane(cn);
                    } else if !is_if {
                        return Err(RenderError::Unstructured(self.index, id.to_string()));
                    }
                    if is_if && branches.len() == 1 {
                        // a lone branch means the implicit else went nowhere
                        return Err(RenderError::Unstructured(self.index, id.to_string()));
                    }
                    self.out += if is_if { "endif\n" } else { "end fork\n" };
                    cur = match close {
                        Some(c) => self.next(c)?,
                        None => return Ok(None),
                    };
                }
            }
        }
        Ok(None)
    }
}

pub fn render_activity_diagram(model: &SystemModel, index: usize, flow: &ActivityFlow) -> Result<String, RenderError> {
    let mut succ: HashMap<&str, Vec<(&str, Option<&str>)>> = HashMap::new();
    for e in &flow.edges {
        succ.entry(e.from.as_str()).or_default().push((e.to.as_str(), e.guard.as_deref()));
    }
    let order = flow.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut w = ActivityWriter { model, flow, index, order, succ, lane: None, out: String::from("@startuml\n") };
    for p in &flow.partitions {
        w.out += &format!("|{}|\n", display_of(model, p));
        w.lane = Some(p.as_str());
    }
    if let Some(init) = flow.initial() {
        w.seq(Some(init.id.as_str()), 0)?;
    } else if let Some(first) = flow.nodes.first() {
        return Err(RenderError::Unstructured(index, first.id.clone()));
    }
    w.out += "@enduml\n";
    Ok(w.out)
}
