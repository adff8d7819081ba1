//! Regular expressions with capture groups and greedy/lazy quantifiers.

mod js;
mod smt;

use std::fmt::{self, Write as _};

use crate::charset::{Alphabet, CharSet};

pub use js::parse_js;
pub use smt::parse_smt_regex;

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegexError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unsupported feature at offset {pos}: {feature}")]
    Unsupported { pos: usize, feature: String },
    #[error("character {0:?} is not in the alphabet")]
    OutsideAlphabet(char),
}

/// Concrete syntax accepted by [`parse_regex`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Syntax {
    Js,
    Smt,
}

/// Parses `text` in the given syntax over `alphabet`.
pub fn parse_regex(text: &str, syntax: Syntax, alphabet: &Alphabet) -> Result<Regex, RegexError> {
    match syntax {
        Syntax::Js => parse_js(text, alphabet),
        Syntax::Smt => {
            let sexps = crate::sexpr::parse_all(text).map_err(|e| RegexError::Syntax {
                pos: e.pos,
                msg: e.msg,
            })?;
            if sexps.len() != 1 {
                return Err(RegexError::Syntax { pos: 0, msg: "expected exactly one term".into() });
            }
            parse_smt_regex(&sexps[0], alphabet)
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Regex {
    pub id: NodeId,
    pub kind: RegexKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RegexKind {
    Empty,
    Epsilon,
    Class(CharSet),
    Union(Box<Regex>, Box<Regex>),
    Concat(Box<Regex>, Box<Regex>),
    Optional(Box<Regex>, bool),
    Star(Box<Regex>, bool),
    Plus(Box<Regex>, bool),
    Loop(Box<Regex>, u32, u32, bool),
    Group(Box<Regex>, u32),
}

use RegexKind as K;

impl Regex {
    fn mk(kind: RegexKind) -> Regex {
        Regex { id: 0, kind }
    }

    pub fn empty() -> Regex {
        Regex::mk(K::Empty)
    }
    pub fn epsilon() -> Regex {
        Regex::mk(K::Epsilon)
    }
    pub fn class(s: CharSet) -> Regex {
        if s.is_empty() {
            Regex::empty()
        } else {
            Regex::mk(K::Class(s))
        }
    }
    pub fn char(c: char) -> Regex {
        Regex::class(CharSet::single(c))
    }
    pub fn union(a: Regex, b: Regex) -> Regex {
        Regex::mk(K::Union(Box::new(a), Box::new(b)))
    }
    pub fn concat(a: Regex, b: Regex) -> Regex {
        Regex::mk(K::Concat(Box::new(a), Box::new(b)))
    }
    pub fn optional(a: Regex, lazy: bool) -> Regex {
        Regex::mk(K::Optional(Box::new(a), lazy))
    }
    pub fn star(a: Regex, lazy: bool) -> Regex {
        Regex::mk(K::Star(Box::new(a), lazy))
    }
    pub fn plus(a: Regex, lazy: bool) -> Regex {
        Regex::mk(K::Plus(Box::new(a), lazy))
    }
    pub fn repeat(a: Regex, m1: u32, m2: u32, lazy: bool) -> Regex {
        assert!(m1 <= m2, "loop bounds out of order");
        Regex::mk(K::Loop(Box::new(a), m1, m2, lazy))
    }
    pub fn group(a: Regex, index: u32) -> Regex {
        Regex::mk(K::Group(Box::new(a), index))
    }

    /// Literal word; `""` gives ε.
    pub fn literal(s: &str) -> Regex {
        s.chars().map(Regex::char).reduce(Regex::concat).unwrap_or_else(Regex::epsilon)
    }

    /// Left-associated concatenation of `parts`; ε when empty.
    pub fn concat_all<I: IntoIterator<Item = Regex>>(parts: I) -> Regex {
        parts.into_iter().reduce(Regex::concat).unwrap_or_else(Regex::epsilon)
    }

    /// Assigns node ids in pre-order starting at 0.
    pub fn numbered(mut self) -> Regex {
        let mut next = 0;
        self.renumber(&mut next);
        self
    }

    fn renumber(&mut self, next: &mut NodeId) {
        self.id = *next;
        *next += 1;
        for c in self.children_mut() {
            c.renumber(next);
        }
    }

    pub fn children(&self) -> Vec<&Regex> {
        match &self.kind {
            K::Empty | K::Epsilon | K::Class(_) => vec![],
            K::Union(a, b) | K::Concat(a, b) => vec![a, b],
            K::Optional(a, _) | K::Star(a, _) | K::Plus(a, _) | K::Loop(a, ..) | K::Group(a, _) => vec![a],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut Regex> {
        match &mut self.kind {
            K::Empty | K::Epsilon | K::Class(_) => vec![],
            K::Union(a, b) | K::Concat(a, b) => vec![a, b],
            K::Optional(a, _) | K::Star(a, _) | K::Plus(a, _) | K::Loop(a, ..) | K::Group(a, _) => vec![a],
        }
    }

    /// All nodes in pre-order.
    pub fn subexpressions(&self) -> Vec<(NodeId, &Regex)> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(r) = stack.pop() {
            out.push((r.id, r));
            for c in r.children().into_iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Highest capture-group index, 0 if there are none.
    pub fn group_count(&self) -> u32 {
        self.subexpressions()
            .iter()
            .filter_map(|(_, r)| match r.kind {
                K::Group(_, i) => Some(i),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Group `i`, or the whole expression for `i = 0`.
    pub fn group_subexpr(&self, i: u32) -> Option<&Regex> {
        if i == 0 {
            return Some(self);
        }
        self.subexpressions().into_iter().map(|(_, r)| r).find(|r| matches!(r.kind, K::Group(_, j) if j == i))
    }

    /// Rewrites bounded repetitions so every remaining `Loop` has `1 <= m1 < m2`.
    pub fn desugar_loop(&self) -> Regex {
        self.desugar().numbered()
    }

    fn desugar(&self) -> Regex {
        let kind = match &self.kind {
            K::Loop(e, m1, m2, lazy) => {
                let body = e.desugar();
                return expand_loop(body, *m1, *m2, *lazy);
            }
            K::Empty => K::Empty,
            K::Epsilon => K::Epsilon,
            K::Class(c) => K::Class(c.clone()),
            K::Union(a, b) => K::Union(Box::new(a.desugar()), Box::new(b.desugar())),
            K::Concat(a, b) => K::Concat(Box::new(a.desugar()), Box::new(b.desugar())),
            K::Optional(a, l) => K::Optional(Box::new(a.desugar()), *l),
            K::Star(a, l) => K::Star(Box::new(a.desugar()), *l),
            K::Plus(a, l) => K::Plus(Box::new(a.desugar()), *l),
            K::Group(a, i) => K::Group(Box::new(a.desugar()), *i),
        };
        Regex::mk(kind)
    }

    /// Same expression with every capture index raised by `k`, renumbered.
    pub fn shift_groups(&self, k: u32) -> Regex {
        fn go(r: &mut Regex, k: u32) {
            if let K::Group(_, i) = &mut r.kind {
                *i += k;
            }
            for c in r.children_mut() {
                go(c, k);
            }
        }
        let mut r = self.clone();
        go(&mut r, k);
        r.numbered()
    }

    pub fn has_loops(&self) -> bool {
        self.subexpressions().iter().any(|(_, r)| matches!(r.kind, K::Loop(..)))
    }

    /// Whether ε belongs to the classical language.
    pub fn nullable(&self) -> bool {
        match &self.kind {
            K::Empty | K::Class(_) => false,
            K::Epsilon | K::Optional(..) | K::Star(..) => true,
            K::Union(a, b) => a.nullable() || b.nullable(),
            K::Concat(a, b) => a.nullable() && b.nullable(),
            K::Plus(a, _) | K::Group(a, _) => a.nullable(),
            K::Loop(a, m1, _, _) => *m1 == 0 || a.nullable(),
        }
    }

    /// Every character set occurring in the expression.
    pub fn classes(&self) -> Vec<&CharSet> {
        self.subexpressions()
            .into_iter()
            .filter_map(|(_, r)| match &r.kind {
                K::Class(c) => Some(c),
                _ => None,
            })
            .collect()
    }

    /// Prints in the JS-like syntax; `parse_js` of the result gives back `self`.
    pub fn to_js(&self) -> String {
        let mut s = String::new();
        self.print(&mut s, Prec::Union);
        s
    }

    fn print(&self, out: &mut String, ctx: Prec) {
        let own = self.prec();
        let wrap = own < ctx;
        if wrap {
            out.push_str("(?:");
        }
        match &self.kind {
            K::Empty => out.push_str("[]"),
            K::Epsilon => out.push_str("(?:)"),
            K::Class(c) => print_class(c, out),
            K::Union(a, b) => {
                a.print(out, Prec::Union);
                out.push('|');
                b.print(out, Prec::Concat);
            }
            K::Concat(a, b) => {
                a.print(out, Prec::Concat);
                b.print(out, Prec::Quant);
            }
            K::Optional(a, l) | K::Star(a, l) | K::Plus(a, l) | K::Loop(a, _, _, l) => {
                a.print(out, Prec::Atom);
                match &self.kind {
                    K::Optional(..) => out.push('?'),
                    K::Star(..) => out.push('*'),
                    K::Plus(..) => out.push('+'),
                    K::Loop(_, m1, m2, _) => {
                        let _ = write!(out, "{{{m1},{m2}}}");
                    }
                    _ => unreachable!(),
                }
                if *l {
                    out.push('?');
                }
            }
            K::Group(a, _) => {
                out.push('(');
                a.print(out, Prec::Union);
                out.push(')');
            }
        }
        if wrap {
            out.push(')');
        }
    }

    fn prec(&self) -> Prec {
        match &self.kind {
            K::Union(..) => Prec::Union,
            K::Concat(..) => Prec::Concat,
            K::Optional(..) | K::Star(..) | K::Plus(..) | K::Loop(..) => Prec::Quant,
            _ => Prec::Atom,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Union,
    Concat,
    Quant,
    Atom,
}

fn expand_loop(body: Regex, m1: u32, m2: u32, lazy: bool) -> Regex {
    if m2 == 0 {
        Regex::epsilon()
    } else if m1 == m2 {
        Regex::concat_all(std::iter::repeat_n(body, m1 as usize))
    } else if m1 == 0 {
        Regex::optional(expand_loop(body, 1, m2, lazy), lazy)
    } else {
        Regex::repeat(body, m1, m2, lazy)
    }
}

fn push_escaped(c: u32, out: &mut String, in_class: bool) {
    let meta: &str = if in_class { "\\]^-[" } else { "\\^$.|?*+()[]{}/" };
    match char::from_u32(c) {
        Some(ch) if (' '..='~').contains(&ch) => {
            if meta.contains(ch) {
                out.push('\\');
            }
            out.push(ch);
        }
        _ if c <= 0xffff => {
            let _ = write!(out, "\\u{c:04X}");
        }
        _ => {
            let _ = write!(out, "\\u{{{c:X}}}");
        }
    }
}

fn print_class(c: &CharSet, out: &mut String) {
    if c.len() == 1 {
        push_escaped(c.min().unwrap(), out, false);
        return;
    }
    out.push('[');
    for &(a, b) in c.ranges() {
        push_escaped(a, out, true);
        if b > a {
            if b > a + 1 {
                out.push('-');
            }
            push_escaped(b, out, true);
        }
    }
    out.push(']');
}

impl fmt::Debug for Regex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/{}/", self.to_js())
    }
}

impl fmt::Display for Regex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_js())
    }
}

/// Classical (priority-free) membership by dynamic programming over spans.
/// Used as an independent reference matcher in tests.
pub fn classical_match(e: &Regex, w: &[char]) -> bool {
    fn spans(e: &Regex, w: &[char], i: usize) -> Vec<usize> {
        // All j >= i such that w[i..j] is in L(e).
        let mut r: Vec<usize> = match &e.kind {
            K::Empty => vec![],
            K::Epsilon => vec![i],
            K::Class(c) => {
                if i < w.len() && c.contains_char(w[i]) {
                    vec![i + 1]
                } else {
                    vec![]
                }
            }
            K::Union(a, b) => {
                let mut v = spans(a, w, i);
                v.extend(spans(b, w, i));
                v
            }
            K::Concat(a, b) => spans(a, w, i).into_iter().flat_map(|j| spans(b, w, j)).collect(),
            K::Group(a, _) => spans(a, w, i),
            K::Optional(a, _) => {
                let mut v = spans(a, w, i);
                v.push(i);
                v
            }
            K::Star(a, _) => star_spans(a, w, i),
            K::Plus(a, _) => spans(a, w, i).into_iter().flat_map(|j| star_spans(a, w, j)).collect(),
            K::Loop(a, m1, m2, _) => {
                let mut cur = vec![i];
                let mut acc = vec![];
                for k in 0..=*m2 {
                    if k >= *m1 {
                        acc.extend(cur.iter().copied());
                    }
                    if k == *m2 {
                        break;
                    }
                    let mut nxt: Vec<usize> = cur.iter().flat_map(|&j| spans(a, w, j)).collect();
                    nxt.sort_unstable();
                    nxt.dedup();
                    cur = nxt;
                }
                acc
            }
        };
        r.sort_unstable();
        r.dedup();
        r
    }
    fn star_spans(a: &Regex, w: &[char], i: usize) -> Vec<usize> {
        let mut seen = vec![false; w.len() + 1];
        let mut stack = vec![i];
        seen[i] = true;
        while let Some(j) = stack.pop() {
            for k in spans(a, w, j) {
                if !seen[k] {
                    seen[k] = true;
                    stack.push(k);
                }
            }
        }
        (0..=w.len()).filter(|&j| seen[j]).collect()
    }
    spans(e, w, 0).contains(&w.len())
}
