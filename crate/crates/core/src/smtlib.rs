//! SMT-LIB scripts over strings with capture groups, lazy quantifiers and
//! the `str.replace_cg`, `str.replace_cg_all` and `str.extract` operators.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::calculus::{Formula, Function, Lang, Limits, Model, Outcome, Solver, Verdict};
use crate::charset::{Alphabet, MARK_CLOSE, MARK_OPEN};
use crate::regex::{parse_smt_regex, Regex, RegexError};
use crate::sexpr::{parse_all, quote, Sexp};
use crate::strfun::{RepSeg, Replacement, StrFun};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub pos: usize,
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.msg)
    }
}

impl std::error::Error for ParseError {}

fn locate(text: &str, pos: usize, msg: impl Into<String>) -> ParseError {
    let before = &text[..pos.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    ParseError { pos, line, col, msg: msg.into() }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StrTerm {
    Var(String),
    Lit(String),
    Concat(Vec<StrTerm>),
    App(StrFun, Box<StrTerm>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoolTerm {
    True,
    False,
    InRe(StrTerm, Regex),
    Eq(StrTerm, StrTerm),
    Not(Box<BoolTerm>),
    And(Vec<BoolTerm>),
    Or(Vec<BoolTerm>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    DeclareFun(String),
    DefineFun(String, StrTerm),
    Assert(BoolTerm),
    CheckSat,
    GetModel,
    Push(u32),
    Pop(u32),
    SetOption(String, String),
    /// `set-logic`, `set-info` and `exit`, accepted and ignored.
    Ignored,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Script {
    pub commands: Vec<Command>,
}

impl Script {
    pub fn check_sat_count(&self) -> usize {
        self.commands.iter().filter(|c| **c == Command::CheckSat).count()
    }
}

struct Parser<'a> {
    text: &'a str,
    sigma: &'a Alphabet,
    /// Declared or defined names, one frame per open `push`.
    scopes: Vec<Vec<String>>,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn err(&self, s: &Sexp, msg: impl Into<String>) -> ParseError {
        locate(self.text, s.pos(), msg)
    }

    fn regex_err(&self, s: &Sexp, e: RegexError) -> ParseError {
        let pos = match &e {
            RegexError::Syntax { pos, .. } | RegexError::Unsupported { pos, .. } => *pos,
            RegexError::OutsideAlphabet(_) => s.pos(),
        };
        locate(self.text, pos, e.to_string())
    }

    fn known(&self, x: &str) -> bool {
        self.scopes.iter().any(|f| f.iter().any(|y| y == x))
    }

    fn bind(&mut self, s: &Sexp, x: &str) -> PResult<()> {
        if self.known(x) {
            return Err(self.err(s, format!("'{x}' is already declared")));
        }
        self.scopes.last_mut().unwrap().push(x.to_string());
        Ok(())
    }

    fn command(&mut self, s: &Sexp) -> PResult<Vec<Command>> {
        let items = s.as_list().ok_or_else(|| self.err(s, "expected a command"))?;
        let head = items.first().and_then(Sexp::as_symbol).ok_or_else(|| self.err(s, "expected a command name"))?;
        let args = &items[1..];
        let arity = |n: usize| -> PResult<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(locate(self.text, s.pos(), format!("{head} expects {n} argument(s)")))
            }
        };
        Ok(vec![match head {
            "declare-fun" => {
                arity(3)?;
                let name = args[0].as_symbol().ok_or_else(|| self.err(&args[0], "expected a name"))?;
                if args[1].as_list().is_none_or(|l| !l.is_empty()) {
                    return Err(self.err(&args[1], "only constants are supported"));
                }
                self.sort(&args[2])?;
                self.bind(&args[0], name)?;
                Command::DeclareFun(name.to_string())
            }
            "declare-const" => {
                arity(2)?;
                let name = args[0].as_symbol().ok_or_else(|| self.err(&args[0], "expected a name"))?;
                self.sort(&args[1])?;
                self.bind(&args[0], name)?;
                Command::DeclareFun(name.to_string())
            }
            "define-fun" => {
                arity(4)?;
                let name = args[0].as_symbol().ok_or_else(|| self.err(&args[0], "expected a name"))?;
                if args[1].as_list().is_none_or(|l| !l.is_empty()) {
                    return Err(self.err(&args[1], "only constants are supported"));
                }
                self.sort(&args[2])?;
                let body = self.str_term(&args[3])?;
                self.bind(&args[0], name)?;
                Command::DefineFun(name.to_string(), body)
            }
            "assert" => {
                arity(1)?;
                Command::Assert(self.bool_term(&args[0])?)
            }
            "check-sat" => {
                arity(0)?;
                Command::CheckSat
            }
            "get-model" => {
                arity(0)?;
                Command::GetModel
            }
            "push" | "pop" => {
                let n = match args {
                    [] => 1,
                    [Sexp::Num(n, _)] => u32::try_from(*n).map_err(|_| self.err(&args[0], "level too large"))?,
                    _ => return Err(self.err(s, format!("{head} expects a numeral"))),
                };
                if head == "push" {
                    for _ in 0..n {
                        self.scopes.push(Vec::new());
                    }
                    Command::Push(n)
                } else {
                    if n as usize >= self.scopes.len() {
                        return Err(self.err(s, "pop below the outermost level"));
                    }
                    self.scopes.truncate(self.scopes.len() - n as usize);
                    Command::Pop(n)
                }
            }
            "set-option" => {
                let key = args.first().and_then(Sexp::as_symbol).ok_or_else(|| self.err(s, "expected an option"))?;
                let val = args.get(1).map(|v| v.to_string()).unwrap_or_default();
                Command::SetOption(key.to_string(), val)
            }
            "set-logic" | "set-info" | "exit" => Command::Ignored,
            other => return Err(self.err(&items[0], format!("unsupported command '{other}'"))),
        }])
    }

    fn sort(&self, s: &Sexp) -> PResult<()> {
        if s.is_symbol("String") {
            Ok(())
        } else {
            Err(self.err(s, "only the sort String is supported"))
        }
    }

    fn literal(&self, s: &Sexp, v: &str) -> PResult<String> {
        if v.contains([MARK_OPEN, MARK_CLOSE]) {
            return Err(self.err(s, "string literal contains a reserved marker character"));
        }
        if let Some(c) = v.chars().find(|&c| !self.sigma.contains(c)) {
            return Err(self.err(s, format!("character {c:?} is not in the alphabet")));
        }
        Ok(v.to_string())
    }

    fn regex(&self, s: &Sexp) -> PResult<Regex> {
        parse_smt_regex(s, self.sigma).map_err(|e| self.regex_err(s, e))
    }

    /// A replacement built from `re.++`, `str.to.re` and `(_ re.reference i)`.
    fn replacement(&self, s: &Sexp, groups: u32) -> PResult<Replacement> {
        let mut segs = Vec::new();
        self.rep_parts(s, &mut segs)?;
        let rep = Replacement(segs);
        if rep.max_group() > groups {
            return Err(self.err(s, format!("reference to group {} of a pattern with {groups}", rep.max_group())));
        }
        Ok(rep)
    }

    fn rep_parts(&self, s: &Sexp, out: &mut Vec<RepSeg>) -> PResult<()> {
        match s {
            Sexp::Str(v, _) => {
                let v = self.literal(s, v)?;
                if !v.is_empty() {
                    out.push(RepSeg::Lit(v));
                }
                Ok(())
            }
            Sexp::List(items, _) => match items.as_slice() {
                [h, rest @ ..] if h.is_symbol("re.++") => rest.iter().try_for_each(|r| self.rep_parts(r, out)),
                [h, a] if h.is_symbol("str.to.re") || h.is_symbol("str.to_re") => self.rep_parts(a, out),
                [u, r, Sexp::Num(i, _)] if u.is_symbol("_") && r.is_symbol("re.reference") => {
                    let i = u32::try_from(*i).map_err(|_| self.err(s, "reference too large"))?;
                    out.push(if i == 0 { RepSeg::WholeMatch } else { RepSeg::Group(i) });
                    Ok(())
                }
                _ => Err(self.err(s, "replacements may only use re.++, str.to.re and re.reference")),
            },
            _ => Err(self.err(s, "expected a replacement term")),
        }
    }

    fn str_term(&self, s: &Sexp) -> PResult<StrTerm> {
        match s {
            Sexp::Symbol(x, _) => {
                if self.known(x) {
                    Ok(StrTerm::Var(x.clone()))
                } else {
                    Err(self.err(s, format!("unknown symbol '{x}'")))
                }
            }
            Sexp::Str(v, _) => Ok(StrTerm::Lit(self.literal(s, v)?)),
            Sexp::Num(..) => Err(self.err(s, "expected a string term")),
            Sexp::List(items, _) => {
                let Some(head) = items.first() else { return Err(self.err(s, "empty application")) };
                let args = &items[1..];
                if let Some(idx) = head.as_list() {
                    // ((_ str.extract i) e t)
                    return match (idx, args) {
                        ([u, n, Sexp::Num(i, _)], [e, t]) if u.is_symbol("_") && n.is_symbol("str.extract") => {
                            let e = self.regex(e)?;
                            let i = u32::try_from(*i).map_err(|_| self.err(s, "index too large"))?;
                            if i > e.group_count() {
                                return Err(self.err(s, format!("extract of group {i} from a pattern with {}", e.group_count())));
                            }
                            Ok(StrTerm::App(StrFun::Extract(i, e), Box::new(self.str_term(t)?)))
                        }
                        _ => Err(self.err(head, "unknown indexed string operator")),
                    };
                }
                let name = head.as_symbol().ok_or_else(|| self.err(head, "expected an operator"))?;
                match (name, args) {
                    ("str.++", _) => Ok(StrTerm::Concat(args.iter().map(|a| self.str_term(a)).collect::<PResult<_>>()?)),
                    ("str.replace_cg" | "str.replace_cg_all", [t, p, r]) => {
                        let pat = self.regex(p)?;
                        let rep = self.replacement(r, pat.group_count())?;
                        let f = if name == "str.replace_cg" { StrFun::Replace(pat, rep) } else { StrFun::ReplaceAll(pat, rep) };
                        Ok(StrTerm::App(f, Box::new(self.str_term(t)?)))
                    }
                    ("str.replace_re" | "str.replace_re_all", [t, p, r]) => {
                        let pat = self.regex(p)?;
                        let Sexp::Str(v, _) = r else { return Err(self.err(r, "expected a string literal")) };
                        let rep = Replacement::literal(&self.literal(r, v)?);
                        let f = if name == "str.replace_re" { StrFun::Replace(pat, rep) } else { StrFun::ReplaceAll(pat, rep) };
                        Ok(StrTerm::App(f, Box::new(self.str_term(t)?)))
                    }
                    ("str.replace_cg" | "str.replace_cg_all" | "str.replace_re" | "str.replace_re_all", _) => {
                        Err(self.err(s, format!("{name} expects 3 arguments")))
                    }
                    _ => Err(self.err(head, format!("unsupported string operator '{name}'"))),
                }
            }
        }
    }

    fn bool_term(&self, s: &Sexp) -> PResult<BoolTerm> {
        match s {
            Sexp::Symbol(x, _) if x == "true" => Ok(BoolTerm::True),
            Sexp::Symbol(x, _) if x == "false" => Ok(BoolTerm::False),
            Sexp::List(items, _) if !items.is_empty() => {
                let name = items[0].as_symbol().ok_or_else(|| self.err(&items[0], "expected an operator"))?;
                let args = &items[1..];
                match (name, args) {
                    ("str.in.re" | "str.in_re", [t, e]) => Ok(BoolTerm::InRe(self.str_term(t)?, self.regex(e)?)),
                    ("=", [a, b]) => Ok(BoolTerm::Eq(self.str_term(a)?, self.str_term(b)?)),
                    ("distinct", [a, b]) => {
                        Ok(BoolTerm::Not(Box::new(BoolTerm::Eq(self.str_term(a)?, self.str_term(b)?))))
                    }
                    ("not", [a]) => Ok(BoolTerm::Not(Box::new(self.bool_term(a)?))),
                    ("and", _) => Ok(BoolTerm::And(args.iter().map(|a| self.bool_term(a)).collect::<PResult<_>>()?)),
                    ("or", _) => Ok(BoolTerm::Or(args.iter().map(|a| self.bool_term(a)).collect::<PResult<_>>()?)),
                    ("=>", [a, b]) => {
                        Ok(BoolTerm::Or(vec![BoolTerm::Not(Box::new(self.bool_term(a)?)), self.bool_term(b)?]))
                    }
                    _ => Err(self.err(s, format!("unsupported or ill-formed '{name}'"))),
                }
            }
            _ => Err(self.err(s, "expected a Boolean term")),
        }
    }
}

/// Parses a script; regexes and string literals are checked against `sigma`.
pub fn parse_script(text: &str, sigma: &Alphabet) -> Result<Script, ParseError> {
    let sexps = parse_all(text).map_err(|e| locate(text, e.pos, e.msg))?;
    let mut p = Parser { text, sigma, scopes: vec![Vec::new()] };
    let mut commands = Vec::new();
    for s in &sexps {
        commands.extend(p.command(s)?);
    }
    Ok(Script { commands })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("get-model without a preceding satisfiable check-sat")]
    NoModel,
    #[error("{0}")]
    Compile(String),
}

#[derive(Clone, Debug, Default)]
pub struct Options {
    pub timeout: Option<Duration>,
    pub dump_proof: bool,
    pub dump_model: bool,
}

/// Assertion stack and solver state of one script.
pub struct Session {
    sigma: Alphabet,
    opts: Options,
    decls: Vec<String>,
    defs: Vec<(String, StrTerm)>,
    assertions: Vec<BoolTerm>,
    frames: Vec<(usize, usize, usize)>,
    model: Option<Model>,
    funs: HashMap<StrFun, Arc<Function>>,
}

impl Session {
    pub fn new(sigma: Alphabet, opts: Options) -> Session {
        Session {
            sigma,
            opts,
            decls: Vec::new(),
            defs: Vec::new(),
            assertions: Vec::new(),
            frames: Vec::new(),
            model: None,
            funs: HashMap::new(),
        }
    }

    pub fn assertions(&self) -> &[BoolTerm] {
        &self.assertions
    }

    /// Declared and defined names in declaration order.
    pub fn names(&self) -> Vec<String> {
        self.decls.clone()
    }

    /// Executes one command and returns the lines it prints.
    pub fn run(&mut self, cmd: &Command) -> Result<Vec<String>, ExecError> {
        let mut out = Vec::new();
        match cmd {
            Command::DeclareFun(x) => self.decls.push(x.clone()),
            Command::DefineFun(x, t) => {
                self.decls.push(x.clone());
                self.defs.push((x.clone(), t.clone()));
            }
            Command::Assert(b) => self.assertions.push(b.clone()),
            Command::Push(n) => {
                for _ in 0..*n {
                    self.frames.push((self.decls.len(), self.defs.len(), self.assertions.len()));
                }
            }
            Command::Pop(n) => {
                for _ in 0..*n {
                    if let Some((d, f, a)) = self.frames.pop() {
                        self.decls.truncate(d);
                        self.defs.truncate(f);
                        self.assertions.truncate(a);
                    }
                }
                self.model = None;
            }
            Command::CheckSat => {
                let outcome = self.check_sat()?;
                out.push(outcome.verdict.name().to_string());
                if let Verdict::Unknown(r) = &outcome.verdict {
                    out.push(format!("; reason: {r}"));
                }
                if self.opts.dump_proof {
                    out.extend(outcome.proof.render().lines().map(|l| format!("; {l}")));
                }
                self.model = match outcome.verdict {
                    Verdict::Sat(m) => Some(m),
                    _ => None,
                };
                if self.opts.dump_model {
                    if let Some(m) = &self.model {
                        out.push(render_model(m, &self.decls));
                    }
                }
            }
            Command::GetModel => {
                let m = self.model.as_ref().ok_or(ExecError::NoModel)?;
                out.push(render_model(m, &self.decls));
            }
            Command::SetOption(k, v) => {
                if k == ":timeout" {
                    if let Ok(ms) = v.parse::<u64>() {
                        self.opts.timeout = Some(Duration::from_millis(ms));
                    }
                }
            }
            Command::Ignored => {}
        }
        Ok(out)
    }

    fn function(&mut self, f: &StrFun) -> Result<Arc<Function>, ExecError> {
        if let Some(g) = self.funs.get(f) {
            return Ok(g.clone());
        }
        let g = Arc::new(Function::compile(f, &self.sigma).map_err(|e| ExecError::Compile(e.to_string()))?);
        self.funs.insert(f.clone(), g.clone());
        Ok(g)
    }

    /// The conjunction of the definitions and the current assertions.
    pub fn formula(&mut self) -> Result<Formula, ExecError> {
        let mut b = Builder { parts: Vec::new(), n: 0 };
        for (x, t) in self.defs.clone() {
            let v = self.flatten(&mut b, &t)?;
            b.parts.push(Formula::eq(&x, &v));
        }
        let mut top = Vec::new();
        for a in self.assertions.clone() {
            top.push(self.boolean(&mut b, &a)?);
        }
        let mut parts = b.parts;
        parts.extend(top);
        Ok(Formula::And(parts))
    }

    pub fn check_sat(&mut self) -> Result<Outcome, ExecError> {
        let phi = self.formula()?;
        let limits = Limits { deadline: self.opts.timeout.map(|t| Instant::now() + t), ..Limits::default() };
        let mut out = Solver::new(self.sigma.clone()).with_limits(limits).solve(&phi);
        if let Verdict::Sat(m) = &mut out.verdict {
            for x in &self.decls {
                m.entry(x.clone()).or_insert_with(|| Some(String::new()));
            }
        }
        Ok(out)
    }

    /// Evaluates the current assertions directly on the terms, with the
    /// defined names computed from their bodies.
    pub fn satisfied_by(&mut self, m: &Model) -> Result<bool, ExecError> {
        let mut m = m.clone();
        for (x, t) in self.defs.clone() {
            match self.eval_str(&m, &t)? {
                Some(v) if m.get(&x).is_none_or(|old| *old == v) => {
                    m.insert(x, v);
                }
                _ => return Ok(false),
            }
        }
        for a in self.assertions.clone() {
            if !self.eval_bool(&m, &a)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `None` when some function is undefined on its argument.
    fn eval_str(&mut self, m: &Model, t: &StrTerm) -> Result<Option<Option<String>>, ExecError> {
        Ok(match t {
            StrTerm::Var(x) => Some(m.get(x).cloned().unwrap_or(Some(String::new()))),
            StrTerm::Lit(s) => Some(Some(s.clone())),
            StrTerm::Concat(ts) => {
                let mut acc = String::new();
                for t in ts {
                    match self.eval_str(m, t)? {
                        Some(v) => acc.push_str(v.as_deref().unwrap_or("")),
                        None => return Ok(None),
                    }
                }
                Some(Some(acc))
            }
            StrTerm::App(f, t) => {
                let Some(x) = self.eval_str(m, t)? else { return Ok(None) };
                match self.function(f)?.apply(x.as_deref()) {
                    crate::psst::Output::Undefined => None,
                    crate::psst::Output::Null => Some(None),
                    crate::psst::Output::Value(v) => Some(Some(v)),
                }
            }
        })
    }

    fn eval_bool(&mut self, m: &Model, t: &BoolTerm) -> Result<bool, ExecError> {
        Ok(match t {
            BoolTerm::True => true,
            BoolTerm::False => false,
            BoolTerm::InRe(s, e) => match self.eval_str(m, s)? {
                Some(Some(v)) => Lang::from_regex(e).fa.accepts(&v),
                _ => false,
            },
            BoolTerm::Eq(a, b) => match (self.eval_str(m, a)?, self.eval_str(m, b)?) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            },
            BoolTerm::Not(a) => !self.eval_bool(m, a)?,
            BoolTerm::And(xs) => {
                for x in xs {
                    if !self.eval_bool(m, x)? {
                        return Ok(false);
                    }
                }
                true
            }
            BoolTerm::Or(xs) => {
                for x in xs {
                    if self.eval_bool(m, x)? {
                        return Ok(true);
                    }
                }
                false
            }
        })
    }

    fn flatten(&mut self, b: &mut Builder, t: &StrTerm) -> Result<String, ExecError> {
        Ok(match t {
            StrTerm::Var(x) => x.clone(),
            StrTerm::Lit(s) => {
                let v = b.fresh();
                b.parts.push(Formula::member(&v, Lang::literal(s)));
                v
            }
            StrTerm::Concat(ts) => {
                if ts.is_empty() {
                    return self.flatten(b, &StrTerm::Lit(String::new()));
                }
                let mut acc = self.flatten(b, &ts[0])?;
                for t in &ts[1..] {
                    let r = self.flatten(b, t)?;
                    let z = b.fresh();
                    b.parts.push(Formula::concat(&z, &acc, &r));
                    acc = z;
                }
                acc
            }
            StrTerm::App(f, t) => {
                let x = self.flatten(b, t)?;
                let g = self.function(f)?;
                let y = b.fresh();
                b.parts.push(Formula::app(&y, &g, &x));
                y
            }
        })
    }

    fn boolean(&mut self, b: &mut Builder, t: &BoolTerm) -> Result<Formula, ExecError> {
        Ok(match t {
            BoolTerm::True => Formula::And(vec![]),
            BoolTerm::False => Formula::Or(vec![]),
            BoolTerm::InRe(s, e) => {
                let x = self.flatten(b, s)?;
                Formula::member(&x, Lang::from_regex(e))
            }
            BoolTerm::Eq(l, r) => {
                let x = self.flatten(b, l)?;
                let y = self.flatten(b, r)?;
                Formula::eq(&x, &y)
            }
            BoolTerm::Not(a) => Formula::not(self.boolean(b, a)?),
            BoolTerm::And(xs) => Formula::And(xs.iter().map(|x| self.boolean(b, x)).collect::<Result<_, _>>()?),
            BoolTerm::Or(xs) => Formula::Or(xs.iter().map(|x| self.boolean(b, x)).collect::<Result<_, _>>()?),
        })
    }
}

/// Subterms become fresh variables defined at the top level, so an assertion
/// mentioning `f(x)` also asserts that `f` is defined on `x`.
struct Builder {
    parts: Vec<Formula>,
    n: usize,
}

impl Builder {
    fn fresh(&mut self) -> String {
        self.n += 1;
        format!("#s{}", self.n)
    }
}

/// `(model (define-fun x () String "..") ..)`; a null value is printed as
/// the empty string with a trailing comment.
pub fn render_model(m: &Model, names: &[String]) -> String {
    let mut out = String::from("(model");
    for x in names {
        let v = m.get(x).cloned().unwrap_or(Some(String::new()));
        match v {
            Some(s) => out.push_str(&format!("\n  (define-fun {x} () String {})", quote(&s))),
            None => out.push_str(&format!("\n  (define-fun {x} () String \"\") ; null")),
        }
    }
    out.push_str("\n)");
    out
}

/// Reads back the output of [`render_model`].
pub fn parse_model(text: &str) -> Result<Model, ParseError> {
    let sexps = parse_all(text).map_err(|e| locate(text, e.pos, e.msg))?;
    let mut m = Model::new();
    let mut defs: Vec<&Sexp> = Vec::new();
    for s in &sexps {
        match s.as_list() {
            Some([h, rest @ ..]) if h.is_symbol("model") => defs.extend(rest),
            _ => defs.push(s),
        }
    }
    for d in defs {
        match d.as_list() {
            Some([h, Sexp::Symbol(x, _), _, _, Sexp::Str(v, _)]) if h.is_symbol("define-fun") => {
                m.insert(x.clone(), Some(v.clone()));
            }
            _ => return Err(locate(text, d.pos(), "expected (define-fun x () String \"...\")")),
        }
    }
    Ok(m)
}

/// Runs every command, collecting the printed lines.
pub fn execute(script: &Script, sigma: &Alphabet, opts: Options) -> Result<Vec<String>, ExecError> {
    let mut s = Session::new(sigma.clone(), opts);
    let mut out = Vec::new();
    for c in &script.commands {
        out.extend(s.run(c)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
        use proptest::prelude::*;

    fn ascii() -> Alphabet {
        Alphabet::ascii()
    }

    fn run(text: &str) -> Vec<String> {
        execute(&parse_script(text, &ascii()).unwrap(), &ascii(), Options::default()).unwrap()
    }

    fn verdicts(lines: &[String]) -> Vec<&str> {
        lines.iter().map(String::as_str).filter(|l| ["sat", "unsat", "unknown"].contains(l)).collect()
    }

    const SWAP: &str = r#"
        (declare-fun v () String)
        (declare-fun w () String)
        (assert (= w (str.replace_cg_all v
              (re.++ ((_ re.capture 1) (re.+ (re.union (re.range "A" "Z") (re.range "a" "z"))))
                     (str.to.re " ")
                     ((_ re.capture 2) (re.+ (re.union (re.range "A" "Z") (re.range "a" "z")))))
              (re.++ (_ re.reference 2) (str.to.re " ") (_ re.reference 1)))))
    "#;

    #[test]
    fn empty_script() {
        assert_eq!(parse_script("", &ascii()).unwrap(), Script::default());
        assert!(run("").is_empty());
    }

    #[test]
    fn trivial_membership() {
        let out = run("(declare-fun x () String)(assert (str.in.re x re.all))(check-sat)(get-model)");
        assert_eq!(out[0], "sat");
        assert_eq!(parse_model(&out[1]).unwrap()["x"].as_deref(), Some(""));
    }

    #[test]
    fn name_swap_parses() {
        let s = parse_script(SWAP, &ascii()).unwrap();
        let Command::Assert(BoolTerm::Eq(_, StrTerm::App(StrFun::ReplaceAll(p, r), _))) = &s.commands[2] else {
            panic!()
        };
        assert_eq!(p.group_count(), 2);
        assert_eq!(r.0.iter().filter(|s| matches!(s, RepSeg::Group(_))).count(), 2);
    }

    #[test]
    fn name_swap_model() {
        let text = format!("{SWAP}(assert (str.in.re w (str.to.re \"Knuth Don\")))(check-sat)(get-model)");
        let out = run(&text);
        assert_eq!(out[0], "sat");
        let m = parse_model(&out[1]).unwrap();
        assert_eq!(m["v"].as_deref(), Some("Don Knuth"));
    }

    #[test]
    fn harness_with_three_queries() {
        let text = r#"
            (declare-fun x () String)
            (define-fun y () String (str.replace_cg_all x ((_ re.capture 1) (re.+ (str.to.re "a"))) (str.to.re "b")))
            (push 1)
            (assert (str.in.re x (re.++ re.all (re.+ (str.to.re "a")) re.all)))
            (assert (str.in.re y (re.++ re.all (str.to.re "a") re.all)))
            (check-sat)
            (pop 1) (push 1)
            (assert (str.in.re x (re.++ re.all (re.+ (str.to.re "a")) re.all)))
            (assert (not (str.in.re y (re.++ re.all (str.to.re "a") re.all))))
            (check-sat) (get-model)
            (pop 1) (push 1)
            (assert (not (str.in.re x (re.++ re.all (re.+ (str.to.re "a")) re.all))))
            (check-sat) (get-model)
            (pop 1)
        "#;
        let s = parse_script(text, &ascii()).unwrap();
        assert_eq!(s.check_sat_count(), 3);
        let out = execute(&s, &ascii(), Options::default()).unwrap();
        assert_eq!(verdicts(&out), ["unsat", "sat", "sat"]);
        let m = parse_model(&out[2]).unwrap();
        assert!(m["x"].as_deref().unwrap().contains('a'));
        assert!(!m["y"].as_deref().unwrap().contains('a'));
    }

    #[test]
    fn extract_operator() {
        let text = r#"
            (declare-fun x () String)
            (declare-fun y () String)
            (assert (= y ((_ str.extract 1)
                (re.++ (re.*? re.allchar) ((_ re.capture 1) (re.+ (re.range "a" "z"))) re.all) x)))
            (assert (str.in.re x (str.to.re "AB cd ef")))
            (check-sat) (get-model)
        "#;
        let out = run(text);
        assert_eq!(out[0], "sat");
        assert_eq!(parse_model(&out[1]).unwrap()["y"].as_deref(), Some("cd"));
    }

    #[test]
    fn parse_errors() {
        let bad = [
            "(assert (str.in.re x re.all))",
            "(declare-fun x () Int)",
            "(declare-fun x () String)(assert (str.in.re x (re.foo)))",
            "(declare-fun x () String)(assert (= x (str.replace_cg x (str.to.re \"a\") (_ re.reference 1))))",
            "(declare-fun x () String)(assert (= x \"\u{e000}\"))",
            "(pop 1)",
            "(check-sat",
            "(declare-fun x () String)(declare-fun x () String)",
        ];
        for b in bad {
            assert!(parse_script(b, &ascii()).is_err(), "{b}");
        }
        let e = parse_script("(declare-fun x () String)\n  (assert (str.in.re y re.all))", &ascii()).unwrap_err();
        assert_eq!((e.line, e.col), (2, 22));
    }

    #[test]
    fn get_model_needs_sat() {
        let s = parse_script("(declare-fun x () String)(assert (str.in.re x re.none))(check-sat)(get-model)", &ascii())
            .unwrap();
        assert_eq!(execute(&s, &ascii(), Options::default()), Err(ExecError::NoModel));
    }

    #[test]
    fn scoped_declarations() {
        let ok = "(push 1)(declare-fun x () String)(pop 1)(declare-fun x () String)";
        assert!(parse_script(ok, &ascii()).is_ok());
        let bad = "(push 1)(declare-fun x () String)(pop 1)(assert (str.in.re x re.all))";
        assert!(parse_script(bad, &ascii()).is_err());
    }

    #[test]
    fn timeout_gives_unknown() {
        let s = parse_script(SWAP, &ascii()).unwrap();
        let mut sess = Session::new(ascii(), Options { timeout: Some(Duration::ZERO), ..Options::default() });
        for c in &s.commands {
            sess.run(c).unwrap();
        }
        let out = sess.run(&Command::CheckSat).unwrap();
        assert_eq!(out, ["unknown", "; reason: timeout"]);
    }

    #[test]
    fn printed_models_satisfy_the_assertions() {
        let text = r#"
            (declare-fun a () String)
            (declare-fun b () String)
            (define-fun c () String (str.replace_cg_all b (re.+ (str.to.re "y")) (str.to.re "z")))
            (assert (str.in.re (str.++ a "-" b) (re.++ (re.+ (str.to.re "x")) (str.to.re "-") (re.* (str.to.re "y")))))
            (assert (not (= a b)))
            (assert (or (str.in.re c (str.to.re "z")) (str.in.re a (str.to.re "xxx"))))
            (check-sat)
        "#;
        let s = parse_script(text, &ascii()).unwrap();
        let mut sess = Session::new(ascii(), Options { dump_model: true, ..Options::default() });
        let mut out = Vec::new();
        for c in &s.commands {
            out.extend(sess.run(c).unwrap());
        }
        assert_eq!(out[0], "sat");
        let m = parse_model(&out[1]).unwrap();
        assert!(sess.satisfied_by(&m).unwrap());
        let mut wrong = m.clone();
        wrong.insert("b".into(), m.get("a").cloned().flatten());
        assert!(!sess.satisfied_by(&wrong).unwrap());
    }

    #[derive(Clone, Debug)]
    enum Op {
        Push,
        Pop,
        Assert(u8),
    }

    proptest! {
        #[test]
        fn push_pop_restores_assertions(ops in prop::collection::vec(
            prop_oneof![Just(Op::Push), Just(Op::Pop), (0u8..5).prop_map(Op::Assert)], 0..30)) {
            let mut sess = Session::new(ascii(), Options::default());
            sess.run(&Command::DeclareFun("x".into())).unwrap();
            let mut stack: Vec<Vec<BoolTerm>> = Vec::new();
            for op in ops {
                match op {
                    Op::Push => {
                        stack.push(sess.assertions().to_vec());
                        sess.run(&Command::Push(1)).unwrap();
                    }
                    Op::Pop => {
                        if let Some(saved) = stack.pop() {
                            sess.run(&Command::Pop(1)).unwrap();
                            prop_assert_eq!(sess.assertions(), saved.as_slice());
                        }
                    }
                    Op::Assert(k) => {
                        let t = BoolTerm::InRe(StrTerm::Var("x".into()), Regex::literal(&k.to_string()));
                        sess.run(&Command::Assert(t)).unwrap();
                    }
                }
            }
        }
    }
}
