//! One-sided sequent calculus over string constraints and the decision
//! procedure for straight-line formulas.
//!
//! Phase 1 pushes negations to atoms and splits the formula into sequents.
//! Phase 2 propagates membership constraints backwards through the defining
//! equations, closing a branch as soon as some variable has an empty
//! language. Phase 3 picks a witness for every input variable, evaluates the
//! defined variables forward and checks every atom, cutting the input space
//! when the check fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use crate::charset::{minterms, Alphabet, CharSet};
use crate::fa::{concat_image, concat_preimage, Fa};
use crate::preimage::{preimage, Budget, Mode, PreimageError};
use crate::psst::{Output, Psst};
use crate::regex::Regex;
use crate::strfun::{run_pipeline, to_pipeline, Stage, StrFun, StrFunError};

const MAX_LABEL: usize = 96;
const SUBSUME_STATES: usize = 48;
const MAX_SEQUENTS: usize = 4096;

fn short(label: String) -> String {
    if label.chars().count() <= MAX_LABEL {
        return label;
    }
    let mut s: String = label.chars().take(MAX_LABEL - 1).collect();
    s.push('…');
    s
}

/// A regular constraint. `null_ok` additionally admits the null value.
#[derive(Clone, Debug)]
pub struct Lang {
    pub fa: Fa,
    pub null_ok: bool,
    pub label: String,
}

impl Lang {
    pub fn new(fa: Fa, label: impl Into<String>) -> Lang {
        Lang { fa, null_ok: false, label: short(label.into()) }
    }

    pub fn from_regex(e: &Regex) -> Lang {
        Lang::new(Fa::from_regex(e), format!("/{}/", e.to_js()))
    }

    pub fn literal(w: &str) -> Lang {
        Lang::new(Fa::literal(w), format!("{w:?}"))
    }

    pub fn universal(sigma: &Alphabet) -> Lang {
        Lang::new(Fa::universal(&sigma.any()), "Σ*")
    }

    pub fn empty() -> Lang {
        Lang::new(Fa::empty(), "∅")
    }

    pub fn with_null(mut self, null_ok: bool) -> Lang {
        self.null_ok = null_ok;
        self
    }

    pub fn contains(&self, v: Option<&str>) -> bool {
        match v {
            None => self.null_ok,
            Some(w) => self.fa.accepts(w),
        }
    }

    /// Complement with respect to `Σ* ∪ {null}`.
    pub fn complement(&self, sigma: &Alphabet) -> Lang {
        Lang {
            fa: self.fa.complement(&sigma.any()).trim(),
            null_ok: !self.null_ok,
            label: short(format!("({})ᶜ", self.label)),
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.null_ok && self.fa.is_empty()
    }

    /// The only admitted value, if there is exactly one.
    pub fn singleton(&self) -> Option<Option<String>> {
        match (self.null_ok, self.fa.is_empty()) {
            (true, true) => Some(None),
            (false, false) => self.fa.singleton().map(Some),
            _ => None,
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.null_ok {
            write!(f, "{} ∪ {{null}}", self.label)
        } else {
            f.write_str(&self.label)
        }
    }
}

/// A string function given as a chain of transducers.
#[derive(Debug)]
pub struct Function {
    pub label: String,
    pub stages: Vec<Stage>,
}

impl Function {
    pub fn compile(f: &StrFun, sigma: &Alphabet) -> Result<Function, StrFunError> {
        Ok(Function { label: f.to_string(), stages: to_pipeline(f, sigma)? })
    }

    pub fn from_psst(label: impl Into<String>, psst: Psst) -> Function {
        let label = label.into();
        Function { label: label.clone(), stages: vec![Stage { label, psst }] }
    }

    /// Undefined on the null value.
    pub fn apply(&self, x: Option<&str>) -> Output {
        match x {
            None => Output::Undefined,
            Some(w) => run_pipeline(&self.stages, w),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Atom {
    VarEq(String, String),
    /// `z = x · y`; a null operand reads as the empty string.
    ConcatEq(String, String, String),
    /// `y = f(x)`.
    FunEq(String, Arc<Function>, String),
    Member(String, Lang),
    VarNeq(String, String),
}

impl Atom {
    fn vars(&self) -> Vec<&str> {
        match self {
            Atom::VarEq(x, y) | Atom::VarNeq(x, y) => vec![x, y],
            Atom::ConcatEq(z, x, y) => vec![z, x, y],
            Atom::FunEq(y, _, x) => vec![y, x],
            Atom::Member(x, _) => vec![x],
        }
    }

    fn rename(&self, r: &impl Fn(&str) -> String) -> Atom {
        match self {
            Atom::VarEq(x, y) => Atom::VarEq(r(x), r(y)),
            Atom::VarNeq(x, y) => Atom::VarNeq(r(x), r(y)),
            Atom::ConcatEq(z, x, y) => Atom::ConcatEq(r(z), r(x), r(y)),
            Atom::FunEq(y, f, x) => Atom::FunEq(r(y), f.clone(), r(x)),
            Atom::Member(x, l) => Atom::Member(r(x), l.clone()),
        }
    }

    /// Direct evaluation under `m`; unassigned variables make the atom false.
    pub fn eval(&self, m: &Model) -> bool {
        let get = |x: &str| m.get(x).map(|v| v.as_deref());
        match self {
            Atom::VarEq(x, y) => matches!((get(x), get(y)), (Some(a), Some(b)) if a == b),
            Atom::VarNeq(x, y) => matches!((get(x), get(y)), (Some(a), Some(b)) if a != b),
            Atom::ConcatEq(z, x, y) => match (get(z), get(x), get(y)) {
                (Some(Some(z)), Some(x), Some(y)) => {
                    let (x, y) = (x.unwrap_or(""), y.unwrap_or(""));
                    z.len() == x.len() + y.len() && z.starts_with(x) && z.ends_with(y)
                }
                _ => false,
            },
            Atom::FunEq(y, f, x) => match (get(y), get(x)) {
                (Some(y), Some(x)) => match f.apply(x) {
                    Output::Undefined => false,
                    Output::Null => y.is_none(),
                    Output::Value(v) => y == Some(v.as_str()),
                },
                _ => false,
            },
            Atom::Member(x, l) => get(x).is_some_and(|v| l.contains(v)),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::VarEq(x, y) => write!(f, "{x} = {y}"),
            Atom::VarNeq(x, y) => write!(f, "{x} ≠ {y}"),
            Atom::ConcatEq(z, x, y) => write!(f, "{z} = {x}·{y}"),
            Atom::FunEq(y, g, x) => write!(f, "{y} = {}({x})", g.label),
            Atom::Member(x, l) => write!(f, "{x} ∈ {l}"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Formula {
    Atom(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn member(x: &str, l: Lang) -> Formula {
        Formula::Atom(Atom::Member(x.into(), l))
    }

    pub fn not_member(x: &str, l: Lang) -> Formula {
        Formula::not(Formula::member(x, l))
    }

    pub fn eq(x: &str, y: &str) -> Formula {
        Formula::Atom(Atom::VarEq(x.into(), y.into()))
    }

    pub fn concat(z: &str, x: &str, y: &str) -> Formula {
        Formula::Atom(Atom::ConcatEq(z.into(), x.into(), y.into()))
    }

    pub fn app(y: &str, f: &Arc<Function>, x: &str) -> Formula {
        Formula::Atom(Atom::FunEq(y.into(), f.clone(), x.into()))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn eval(&self, m: &Model) -> bool {
        match self {
            Formula::Atom(a) => a.eval(m),
            Formula::Not(f) => !f.eval(m),
            Formula::And(fs) => fs.iter().all(|f| f.eval(m)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval(m)),
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Atom(a) => out.extend(a.vars().into_iter().map(String::from)),
            Formula::Not(f) => f.collect_vars(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_vars(out)),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, fs: &[Formula], op: &str| {
            if fs.is_empty() {
                return f.write_str(if op == " ∧ " { "⊤" } else { "⊥" });
            }
            f.write_str("(")?;
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    f.write_str(op)?;
                }
                write!(f, "{g}")?;
            }
            f.write_str(")")
        };
        match self {
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(g) => write!(f, "¬{g}"),
            Formula::And(fs) => join(f, fs, " ∧ "),
            Formula::Or(fs) => join(f, fs, " ∨ "),
        }
    }
}

/// Values of string variables; `None` is the null value.
pub type Model = BTreeMap<String, Option<String>>;

/// The independent check run on every satisfiable answer.
pub fn verify_model(phi: &Formula, m: &Model) -> bool {
    phi.vars().iter().all(|x| m.contains_key(x)) && phi.eval(m)
}

/// Negation-free conjunction of atoms with the memberships kept per variable.
#[derive(Clone, Debug, Default)]
pub struct Sequent {
    pub atoms: Vec<Atom>,
    pub mem: BTreeMap<String, Vec<Lang>>,
}

impl Sequent {
    pub fn push(&mut self, a: Atom) {
        match a {
            Atom::Member(x, l) => self.add_member(&x, l),
            other => self.atoms.push(other),
        }
    }

    pub fn add_member(&mut self, x: &str, l: Lang) {
        self.mem.entry(x.to_string()).or_default().push(l);
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.mem.keys().cloned().collect();
        for a in &self.atoms {
            out.extend(a.vars().into_iter().map(String::from));
        }
        out
    }

    /// The single membership of `x` after housekeeping.
    fn lang(&self, x: &str) -> Option<&Lang> {
        self.mem.get(x).and_then(|ls| ls.first())
    }

    fn all_atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        let mems = self.mem.iter().flat_map(|(x, ls)| ls.iter().map(move |l| Atom::Member(x.clone(), l.clone())));
        self.atoms.iter().cloned().chain(mems)
    }

    fn holds(&self, m: &Model) -> bool {
        self.all_atoms().all(|a| a.eval(m))
    }
}

impl fmt::Display for Sequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for a in self.all_atoms() {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{a}")?;
        }
        if first {
            f.write_str("∅")?;
        }
        Ok(())
    }
}

/// Side condition of a rule instance, kept so that a proof can be re-checked.
#[derive(Clone, Debug)]
pub enum Check {
    /// The languages have an empty intersection.
    Close { langs: Vec<Lang> },
    /// `result = f⁻¹(target)`.
    Preimage { f: Arc<Function>, target: Lang, result: Lang },
    /// `target = ⋃ left·right` over the splits.
    Splits { target: Fa, splits: Vec<(Fa, Fa)> },
    /// `result = left · right`.
    Image { left: Fa, right: Fa, result: Fa },
}

#[derive(Clone, Debug)]
pub struct ProofNode {
    pub rule: String,
    pub sequent: String,
    pub check: Option<Check>,
    pub children: Vec<ProofNode>,
}

impl ProofNode {
    fn new(rule: impl Into<String>, sequent: impl fmt::Display) -> ProofNode {
        ProofNode { rule: rule.into(), sequent: sequent.to_string(), check: None, children: Vec::new() }
    }

    fn with_check(mut self, c: Check) -> ProofNode {
        self.check = Some(c);
        self
    }

    fn with_child(mut self, c: ProofNode) -> ProofNode {
        self.children.push(c);
        self
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(ProofNode::size).sum::<usize>()
    }

    pub fn count_rule(&self, rule: &str) -> usize {
        let here = self.rule.split(", ").filter(|r| *r == rule).count();
        here + self.children.iter().map(|c| c.count_rule(rule)).sum::<usize>()
    }

    /// One line per node, children indented below their parent.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(0, &mut out);
        out
    }

    fn render_into(&self, depth: usize, out: &mut String) {
        out.push_str(&"  ".repeat(depth));
        out.push_str(&format!("[{}] {}\n", self.rule, self.sequent));
        for c in &self.children {
            c.render_into(depth + 1, out);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Sat(Model),
    Unsat,
    Unknown(String),
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Sat(_) => "sat",
            Verdict::Unsat => "unsat",
            Verdict::Unknown(_) => "unknown",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub verdict: Verdict,
    pub proof: ProofNode,
}

#[derive(Clone, Copy, Debug)]
pub struct Limits {
    pub deadline: Option<Instant>,
    pub max_preimage_states: usize,
    /// Total number of Cut applications per query.
    pub max_cuts: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { deadline: None, max_preimage_states: 2_000_000, max_cuts: 64 }
    }
}

/// The defining equations are cyclic or define a variable twice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NotSl {
    pub reason: String,
}

/// Indices of the defining atoms of `s`, ordered so that every variable is
/// defined before it is used.
pub fn check_straightline(s: &Sequent) -> Result<Vec<usize>, NotSl> {
    let mut def: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, a) in s.atoms.iter().enumerate() {
        let lhs = match a {
            Atom::ConcatEq(z, ..) | Atom::FunEq(z, ..) | Atom::VarEq(z, _) => z.as_str(),
            _ => continue,
        };
        if def.insert(lhs, i).is_some() {
            return Err(NotSl { reason: format!("{lhs} is defined twice") });
        }
    }
    let args = |i: usize| -> Vec<&str> {
        match &s.atoms[i] {
            Atom::ConcatEq(_, x, y) => vec![x, y],
            Atom::FunEq(_, _, x) | Atom::VarEq(_, x) => vec![x],
            _ => vec![],
        }
    };
    // 0 unvisited, 1 on the stack, 2 done
    let mut mark = vec![0u8; s.atoms.len()];
    let mut order = Vec::new();
    fn visit<'a>(
        i: usize,
        def: &BTreeMap<&'a str, usize>,
        args: &dyn Fn(usize) -> Vec<&'a str>,
        mark: &mut [u8],
        order: &mut Vec<usize>,
        path: &mut Vec<&'a str>,
    ) -> Result<(), NotSl> {
        match mark[i] {
            2 => return Ok(()),
            1 => return Err(NotSl { reason: format!("cyclic definitions through {}", path.join(", ")) }),
            _ => {}
        }
        mark[i] = 1;
        for x in args(i) {
            if let Some(&j) = def.get(x) {
                path.push(x);
                visit(j, def, args, mark, order, path)?;
                path.pop();
            }
        }
        mark[i] = 2;
        order.push(i);
        Ok(())
    }
    for &i in def.values() {
        visit(i, &def, &args, &mut mark, &mut order, &mut Vec::new())?;
    }
    Ok(order)
}

/// Phase 1 with the default solver settings.
pub fn normalize_boolean(phi: &Formula, sigma: &Alphabet) -> Result<Vec<Sequent>, String> {
    Solver::new(sigma.clone()).normalize(phi, &mut Fresh::default())
}

#[derive(Default)]
pub struct Fresh(usize);

impl Fresh {
    fn next(&mut self) -> String {
        self.0 += 1;
        format!("#{}", self.0)
    }
}

/// Whether a variable was introduced by the solver.
pub fn is_internal(x: &str) -> bool {
    x.starts_with('#')
}

enum Stop {
    Unknown(String),
}

impl From<PreimageError> for Stop {
    fn from(e: PreimageError) -> Stop {
        match e {
            PreimageError::Timeout => Stop::Unknown("timeout".into()),
            other => Stop::Unknown(other.to_string()),
        }
    }
}

pub struct Solver {
    pub sigma: Alphabet,
    pub limits: Limits,
}

struct Run {
    cuts: usize,
}

type Branch = (Verdict, ProofNode);

impl Solver {
    pub fn new(sigma: Alphabet) -> Solver {
        Solver { sigma, limits: Limits::default() }
    }

    pub fn with_limits(mut self, limits: Limits) -> Solver {
        self.limits = limits;
        self
    }

    fn budget(&self) -> Budget {
        Budget { max_states: self.limits.max_preimage_states, deadline: self.limits.deadline }
    }

    fn timed_out(&self) -> bool {
        self.limits.deadline.is_some_and(|d| Instant::now() >= d)
    }

    pub fn solve(&self, phi: &Formula) -> Outcome {
        let mut fresh = Fresh::default();
        let seqs = match self.normalize(phi, &mut fresh) {
            Ok(s) => s,
            Err(reason) => {
                return Outcome { verdict: Verdict::Unknown(reason), proof: ProofNode::new("∧*, ∨*", phi) };
            }
        };
        let mut root = ProofNode::new("∧*, ∨*", phi);
        let mut unknown = None;
        let mut run = Run { cuts: 0 };
        for s in seqs {
            let (v, node) = self.prove(s, &mut run);
            root.children.push(node);
            match v {
                Verdict::Sat(mut m) => {
                    for x in phi.vars() {
                        m.entry(x).or_insert_with(|| Some(String::new()));
                    }
                    if !verify_model(phi, &m) {
                        return Outcome {
                            verdict: Verdict::Unknown("model failed verification".into()),
                            proof: root,
                        };
                    }
                    m.retain(|x, _| !is_internal(x));
                    return Outcome { verdict: Verdict::Sat(m), proof: root };
                }
                Verdict::Unknown(r) => {
                    if r == "timeout" {
                        return Outcome { verdict: Verdict::Unknown(r), proof: root };
                    }
                    unknown.get_or_insert(r);
                }
                Verdict::Unsat => {}
            }
        }
        let verdict = unknown.map_or(Verdict::Unsat, Verdict::Unknown);
        Outcome { verdict, proof: root }
    }

    /// Negation normal form, then one sequent per disjunct.
    pub fn normalize(&self, phi: &Formula, fresh: &mut Fresh) -> Result<Vec<Sequent>, String> {
        let dnf = self.dnf(phi, false, fresh)?;
        Ok(dnf
            .into_iter()
            .map(|atoms| {
                let mut s = Sequent::default();
                for a in atoms {
                    s.push(a);
                }
                s
            })
            .collect())
    }

    fn dnf(&self, phi: &Formula, neg: bool, fresh: &mut Fresh) -> Result<Vec<Vec<Atom>>, String> {
        let product = |parts: Vec<Vec<Vec<Atom>>>| -> Result<Vec<Vec<Atom>>, String> {
            let mut acc: Vec<Vec<Atom>> = vec![vec![]];
            for p in parts {
                let mut next = Vec::new();
                for a in &acc {
                    for b in &p {
                        next.push(a.iter().chain(b).cloned().collect());
                    }
                }
                if next.len() > MAX_SEQUENTS {
                    return Err("too many disjuncts".into());
                }
                acc = next;
            }
            Ok(acc)
        };
        match (phi, neg) {
            (Formula::Not(f), n) => self.dnf(f, !n, fresh),
            (Formula::And(fs), false) | (Formula::Or(fs), true) => {
                let parts = fs.iter().map(|f| self.dnf(f, neg, fresh)).collect::<Result<Vec<_>, _>>()?;
                product(parts)
            }
            (Formula::Or(fs), false) | (Formula::And(fs), true) => {
                let mut out = Vec::new();
                for f in fs {
                    out.extend(self.dnf(f, neg, fresh)?);
                    if out.len() > MAX_SEQUENTS {
                        return Err("too many disjuncts".into());
                    }
                }
                Ok(out)
            }
            (Formula::Atom(a), false) => Ok(vec![self.split_chain(a, fresh)]),
            (Formula::Atom(a), true) => self.negate(a, fresh),
        }
    }

    /// Splits a multi-stage function into single-stage links through fresh variables.
    fn split_chain(&self, a: &Atom, fresh: &mut Fresh) -> Vec<Atom> {
        let Atom::FunEq(y, f, x) = a else { return vec![a.clone()] };
        if f.stages.len() <= 1 {
            return vec![a.clone()];
        }
        let mut out = Vec::new();
        let mut cur = x.clone();
        for (i, st) in f.stages.iter().enumerate() {
            let next = if i + 1 == f.stages.len() { y.clone() } else { fresh.next() };
            let g = Arc::new(Function::from_psst(format!("{}#{}", f.label, i + 1), st.psst.clone()));
            out.push(Atom::FunEq(next.clone(), g, cur));
            cur = next;
        }
        out
    }

    fn negate(&self, a: &Atom, fresh: &mut Fresh) -> Result<Vec<Vec<Atom>>, String> {
        Ok(match a {
            Atom::Member(x, l) => vec![vec![Atom::Member(x.clone(), l.complement(&self.sigma))]],
            Atom::VarEq(x, y) => vec![vec![Atom::VarNeq(x.clone(), y.clone())]],
            Atom::VarNeq(x, y) => vec![vec![Atom::VarEq(x.clone(), y.clone())]],
            Atom::ConcatEq(z, x, y) => {
                let w = fresh.next();
                vec![vec![Atom::ConcatEq(w.clone(), x.clone(), y.clone()), Atom::VarNeq(z.clone(), w)]]
            }
            Atom::FunEq(y, f, x) => {
                // Either f(x) is defined and differs from y, or x lies outside the domain.
                let w = fresh.next();
                let mut defined = self.split_chain(&Atom::FunEq(w.clone(), f.clone(), x.clone()), fresh);
                defined.push(Atom::VarNeq(y.clone(), w));
                let dom = self.domain(f).map_err(|Stop::Unknown(r)| r)?;
                vec![defined, vec![Atom::Member(x.clone(), dom.complement(&self.sigma).with_null(false))]]
            }
        })
    }

    /// Inputs on which `f` is defined.
    fn domain(&self, f: &Function) -> Result<Lang, Stop> {
        let mut target = Fa::universal(&CharSet::range(0, 0x10ffff));
        let mut null_ok = true;
        for st in f.stages.iter().rev() {
            target = preimage(&st.psst, &target, null_ok, Mode::Auto, self.budget())?;
            null_ok = false;
        }
        Ok(Lang::new(target, format!("dom({})", f.label)))
    }

    fn prove(&self, mut s: Sequent, run: &mut Run) -> Branch {
        let before = s.to_string();
        let aliases = substitute(&mut s);
        let wrap = |(v, child): Branch, aliases: &[(String, String)]| -> Branch {
            let v = match v {
                Verdict::Sat(mut m) => {
                    for (a, r) in aliases {
                        let val = m.get(r).cloned().unwrap_or(Some(String::new()));
                        m.insert(a.clone(), val);
                    }
                    Verdict::Sat(m)
                }
                other => other,
            };
            if aliases.is_empty() {
                (v, child)
            } else {
                (v, ProofNode::new("=-Prop", &before).with_child(child))
            }
        };
        match check_straightline(&s) {
            Ok(order) => {
                let todo: Vec<usize> = order.into_iter().rev().collect();
                wrap(self.explore(s, &todo, run), &aliases)
            }
            Err(_) => wrap(self.prove_cyclic(s, run), &aliases),
        }
    }

    /// Outside the straight-line fragment: one round of forward propagation
    /// and backward propagation through every function, then the usual search.
    fn prove_cyclic(&self, mut s: Sequent, run: &mut Run) -> Branch {
        let start = ProofNode::new("Fwd-Prop", &s);
        let mut checks = Vec::new();
        for a in s.atoms.clone() {
            match a {
                Atom::ConcatEq(z, x, y) if s.mem.contains_key(&x) || s.mem.contains_key(&y) => {
                    let l = self.joint(&s, &x);
                    let r = self.joint(&s, &y);
                    let left = nullable_as_eps(&l);
                    let right = nullable_as_eps(&r);
                    let img = concat_image(&left, &right).trim();
                    checks.push(Check::Image { left, right, result: img.clone() });
                    s.add_member(&z, Lang::new(img, format!("{}·{}", l.label, r.label)));
                }
                Atom::FunEq(y, f, x) => {
                    if let Some(Some(Some(w))) = s.mem.get(&x).map(|ls| joint_of(ls).singleton()) {
                        let l = match f.apply(Some(&w)) {
                            Output::Undefined => Lang::empty(),
                            Output::Null => Lang::empty().with_null(true),
                            Output::Value(v) => Lang::literal(&v),
                        };
                        s.add_member(&y, l);
                    }
                }
                _ => {}
            }
        }
        let mut node = start;
        if let Some(c) = checks.into_iter().next() {
            node = node.with_check(c);
        }
        let (closed, hk) = self.housekeeping(&mut s);
        if let Some(n) = closed {
            return (Verdict::Unsat, node.with_child(n));
        }
        let mut chain = vec![node];
        if let Some(n) = hk {
            chain.push(n);
        }
        for a in s.atoms.clone() {
            if let Atom::FunEq(y, f, x) = a {
                let here = ProofNode::new("Bwd-Prop", &s);
                match self.bwd_fun(&mut s, &y, &f, &x) {
                    Ok(c) => chain.push(here.with_check(c)),
                    Err(Stop::Unknown(r)) => return finish(chain, (Verdict::Unknown(r), ProofNode::new("Stop", &s))),
                }
            }
        }
        let todo: Vec<usize> =
            s.atoms.iter().enumerate().filter(|(_, a)| matches!(a, Atom::ConcatEq(..))).map(|(i, _)| i).collect();
        let tail = self.explore(s, &todo, run);
        finish(chain, tail)
    }

    fn joint(&self, s: &Sequent, x: &str) -> Lang {
        match s.mem.get(x) {
            Some(ls) if !ls.is_empty() => joint_of(ls),
            _ => Lang::universal(&self.sigma),
        }
    }

    /// Intersect, Subsume, Close and the disequality rules, to a fixpoint.
    /// Returns the closing node, if any, and a node naming the rules applied.
    fn housekeeping(&self, s: &mut Sequent) -> (Option<ProofNode>, Option<ProofNode>) {
        let before = s.to_string();
        let mut rules: Vec<&str> = Vec::new();
        for (x, ls) in s.mem.iter_mut() {
            let _ = x;
            if ls.len() > 1 {
                let originals = ls.clone();
                let kept = subsume(ls, &self.sigma);
                if kept.len() < ls.len() {
                    rules.push("Subsume");
                }
                let j = joint_of(&kept);
                if kept.len() > 1 {
                    rules.push("Intersect");
                }
                *ls = vec![j];
                if ls[0].is_empty() {
                    let node = ProofNode::new("Close", &before).with_check(Check::Close { langs: originals });
                    return (Some(node), None);
                }
            } else if ls.len() == 1 && ls[0].is_empty() {
                let node = ProofNode::new("Close", &before).with_check(Check::Close { langs: ls.clone() });
                return (Some(node), None);
            }
        }
        let mut keep = Vec::new();
        for a in std::mem::take(&mut s.atoms) {
            if let Atom::VarNeq(x, y) = &a {
                if x == y {
                    return (Some(ProofNode::new("Close", &before)), None);
                }
                let (lx, ly) = (s.lang(x), s.lang(y));
                if let (Some(lx), Some(ly)) = (lx, ly) {
                    if !(lx.null_ok && ly.null_ok) && lx.fa.intersect(&ly.fa).is_empty() {
                        rules.push("≠-Subsume");
                        continue;
                    }
                    if let (Some(a), Some(b)) = (lx.singleton(), ly.singleton()) {
                        if a == b {
                            return (Some(ProofNode::new("≠-Prop-Elim, Close", &before)), None);
                        }
                        rules.push("≠-Prop-Elim");
                        continue;
                    }
                }
            }
            keep.push(a);
        }
        s.atoms = keep;
        if rules.is_empty() {
            (None, None)
        } else {
            rules.dedup();
            (None, Some(ProofNode::new(rules.join(", "), &before)))
        }
    }

    /// Adds `x ∈ f⁻¹(L(y))`; without a constraint on `y` this is the domain of `f`.
    fn bwd_fun(&self, s: &mut Sequent, y: &str, f: &Arc<Function>, x: &str) -> Result<Check, Stop> {
        let target = match s.mem.get(y) {
            Some(ls) if !ls.is_empty() => joint_of(ls),
            _ => Lang::new(Fa::universal(&CharSet::range(0, 0x10ffff)), "Σ*").with_null(true),
        };
        let mut cur = target.fa.clone();
        let mut null_ok = target.null_ok;
        for st in f.stages.iter().rev() {
            cur = preimage(&st.psst, &cur, null_ok, Mode::Auto, self.budget())?;
            null_ok = false;
        }
        let result = Lang::new(cur, format!("{}⁻¹({})", f.label, target.label));
        s.add_member(x, result.clone());
        Ok(Check::Preimage { f: f.clone(), target, result })
    }

    fn explore(&self, mut s: Sequent, todo: &[usize], run: &mut Run) -> Branch {
        if self.timed_out() {
            return (Verdict::Unknown("timeout".into()), ProofNode::new("Stop", &s));
        }
        let (closed, hk) = self.housekeeping(&mut s);
        if let Some(n) = closed {
            return (Verdict::Unsat, n);
        }
        let prefix: Vec<ProofNode> = hk.into_iter().collect();
        let Some((&i, rest)) = todo.split_first() else {
            return finish(prefix, self.phase3(s, run));
        };
        let tail = match s.atoms[i].clone() {
            Atom::FunEq(y, f, x) => {
                let here = ProofNode::new("Bwd-Prop", &s);
                match self.bwd_fun(&mut s, &y, &f, &x) {
                    Ok(c) => {
                        let (v, child) = self.explore(s, rest, run);
                        (v, here.with_check(c).with_child(child))
                    }
                    Err(Stop::Unknown(r)) => (Verdict::Unknown(r), here),
                }
            }
            Atom::ConcatEq(z, x, y) => match s.lang(&z).cloned() {
                None => self.explore(s, rest, run),
                Some(l) => {
                    let splits = concat_preimage(&l.fa);
                    let mut node = ProofNode::new("Bwd-Prop", &s)
                        .with_check(Check::Splits { target: l.fa.clone(), splits: splits.clone() });
                    let mut verdict = Verdict::Unsat;
                    for (b, c) in splits {
                        let mut child = s.clone();
                        let bl = Lang { null_ok: b.accepts(""), ..Lang::new(b, format!("{}[..]", l.label)) };
                        let cl = Lang { null_ok: c.accepts(""), ..Lang::new(c, format!("{}[..]", l.label)) };
                        child.add_member(&x, bl);
                        child.add_member(&y, cl);
                        let (v, n) = self.explore(child, rest, run);
                        node.children.push(n);
                        match v {
                            Verdict::Sat(_) => {
                                verdict = v;
                                break;
                            }
                            Verdict::Unknown(ref r) if r == "timeout" => {
                                verdict = v;
                                break;
                            }
                            Verdict::Unknown(_) => verdict = v,
                            Verdict::Unsat => {}
                        }
                    }
                    (verdict, node)
                }
            },
            _ => self.explore(s, rest, run),
        };
        finish(prefix, tail)
    }

    /// Witnesses for the inputs, forward evaluation, and Cut on failure.
    fn phase3(&self, s: Sequent, run: &mut Run) -> Branch {
        let defined: BTreeSet<&str> = s
            .atoms
            .iter()
            .filter_map(|a| match a {
                Atom::ConcatEq(z, ..) | Atom::FunEq(z, ..) | Atom::VarEq(z, _) => Some(z.as_str()),
                _ => None,
            })
            .collect();
        let universe = Fa::universal(&self.sigma.any());
        let mut model = Model::new();
        let mut inputs = Vec::new();
        for x in s.vars() {
            if defined.contains(x.as_str()) {
                continue;
            }
            let fa = match s.lang(&x) {
                Some(l) => l.fa.intersect(&universe),
                None => universe.clone(),
            };
            match fa.witness() {
                Some(w) => {
                    model.insert(x.clone(), Some(w.clone()));
                    inputs.push((x, w));
                }
                None => {
                    // Inputs range over Σ*, never over the null value.
                    let langs = s.mem.get(&x).map_or_else(Vec::new, |ls| {
                        ls.iter().map(|l| l.clone().with_null(false)).chain([Lang::universal(&self.sigma)]).collect()
                    });
                    return (Verdict::Unsat, ProofNode::new("Close", &s).with_check(Check::Close { langs }));
                }
            }
        }
        let mut progress = true;
        while progress {
            progress = false;
            for a in &s.atoms {
                let (z, val) = match a {
                    Atom::ConcatEq(z, x, y) if !model.contains_key(z) => match (model.get(x), model.get(y)) {
                        (Some(x), Some(y)) => {
                            let v = format!("{}{}", x.as_deref().unwrap_or(""), y.as_deref().unwrap_or(""));
                            (z, Some(Some(v)))
                        }
                        _ => continue,
                    },
                    Atom::FunEq(z, f, x) if !model.contains_key(z) => match model.get(x) {
                        Some(v) => match f.apply(v.as_deref()) {
                            Output::Undefined => (z, None),
                            Output::Null => (z, Some(None)),
                            Output::Value(w) => (z, Some(Some(w))),
                        },
                        None => continue,
                    },
                    Atom::VarEq(z, x) if !model.contains_key(z) => match model.get(x) {
                        Some(v) => (z, Some(v.clone())),
                        None => continue,
                    },
                    _ => continue,
                };
                match val {
                    Some(v) => {
                        model.insert(z.clone(), v);
                        progress = true;
                    }
                    None => {
                        // Undefined: this choice of inputs fails.
                        progress = false;
                        model.insert(z.clone(), Some(String::new()));
                        break;
                    }
                }
            }
        }
        let unresolved: Vec<String> = s.vars().into_iter().filter(|x| !model.contains_key(x)).collect();
        if !unresolved.is_empty() {
            let reason = format!("not straight-line: cannot ground {}", unresolved.join(", "));
            return (Verdict::Unknown(reason), ProofNode::new("Stop", &s));
        }
        if s.holds(&model) {
            return (Verdict::Sat(model), ProofNode::new("Fwd-Prop-Elim, Open", &s));
        }
        if inputs.is_empty() {
            return (Verdict::Unsat, ProofNode::new("Fwd-Prop-Elim, Close", &s));
        }
        if run.cuts >= self.limits.max_cuts {
            return (Verdict::Unknown("cut limit reached".into()), ProofNode::new("Stop", &s));
        }
        run.cuts += 1;
        let mut node = ProofNode::new("Cut", &s);
        let mut verdict = Verdict::Unsat;
        for (x, w) in inputs {
            let mut child = s.clone();
            child.add_member(&x, Lang::literal(&w).complement(&self.sigma).with_null(false));
            let (v, n) = self.explore(child, &[], run);
            node.children.push(n);
            match v {
                Verdict::Sat(_) => {
                    verdict = v;
                    break;
                }
                Verdict::Unknown(_) => {
                    verdict = v;
                    break;
                }
                Verdict::Unsat => {}
            }
        }
        (verdict, node)
    }
}

/// Puts `tail` below a linear chain of nodes.
fn finish(chain: Vec<ProofNode>, tail: Branch) -> Branch {
    let (v, mut node) = tail;
    for n in chain.into_iter().rev() {
        node = n.with_child(node);
    }
    (v, node)
}

fn nullable_as_eps(l: &Lang) -> Fa {
    if l.null_ok {
        l.fa.union(&Fa::epsilon())
    } else {
        l.fa.clone()
    }
}

fn joint_of(ls: &[Lang]) -> Lang {
    if ls.len() == 1 {
        return ls[0].clone();
    }
    let fas: Vec<&Fa> = ls.iter().map(|l| &l.fa).collect();
    let label = ls.iter().map(|l| l.label.as_str()).collect::<Vec<_>>().join(" ∩ ");
    Lang { fa: Fa::product(&fas).trim(), null_ok: ls.iter().all(|l| l.null_ok), label: short(label) }
}

/// Drops memberships implied by another one, comparing small automata only.
fn subsume(ls: &[Lang], sigma: &Alphabet) -> Vec<Lang> {
    let mut kept: Vec<Lang> = Vec::new();
    let small = |l: &Lang| l.fa.num_states() <= SUBSUME_STATES;
    let hull = |a: &Lang, b: &Lang| sigma.any().union(&a.fa.alphabet_hull()).union(&b.fa.alphabet_hull());
    let implies =
        |a: &Lang, b: &Lang| small(a) && small(b) && (!a.null_ok || b.null_ok) && a.fa.is_subset_of(&b.fa, &hull(a, b));
    for l in ls {
        if kept.iter().any(|k| implies(k, l)) {
            continue;
        }
        kept.retain(|k| !implies(l, k));
        kept.push(l.clone());
    }
    kept
}

/// Eliminates `x = y` atoms by renaming; returns `(alias, representative)` pairs.
fn substitute(s: &mut Sequent) -> Vec<(String, String)> {
    let mut parent: BTreeMap<String, String> = BTreeMap::new();
    fn find(p: &BTreeMap<String, String>, x: &str) -> String {
        let mut cur = x.to_string();
        while let Some(n) = p.get(&cur) {
            cur = n.clone();
        }
        cur
    }
    let better = |a: &str, b: &str| (is_internal(a), a) < (is_internal(b), b);
    let mut rest = Vec::new();
    for a in std::mem::take(&mut s.atoms) {
        match a {
            Atom::VarEq(x, y) => {
                let (rx, ry) = (find(&parent, &x), find(&parent, &y));
                if rx != ry {
                    if better(&rx, &ry) {
                        parent.insert(ry, rx);
                    } else {
                        parent.insert(rx, ry);
                    }
                }
            }
            other => rest.push(other),
        }
    }
    let aliases: Vec<(String, String)> = parent.keys().map(|a| (a.clone(), find(&parent, a))).collect();
    let r = |x: &str| find(&parent, x);
    s.atoms = rest.iter().map(|a| a.rename(&r)).collect();
    let mut mem: BTreeMap<String, Vec<Lang>> = BTreeMap::new();
    for (x, ls) in std::mem::take(&mut s.mem) {
        mem.entry(r(&x)).or_default().extend(ls);
    }
    s.mem = mem;
    aliases
}

fn sample_chars<'a>(sigma: &Alphabet, labels: impl IntoIterator<Item = &'a CharSet>) -> Vec<char> {
    let mut reps: Vec<char> = minterms(&sigma.any(), labels).iter().filter_map(CharSet::min_char).collect();
    reps.sort_unstable();
    reps.truncate(6);
    reps
}

fn words(chars: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for &c in chars {
                let mut v = w.clone();
                v.push(c);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Re-checks the side condition of every rule instance that carries one,
/// exhaustively for emptiness and on short sample words otherwise. Returns
/// the number of checks performed.
pub fn audit(proof: &ProofNode, sigma: &Alphabet) -> Result<usize, String> {
    let mut n = 0;
    if let Some(c) = &proof.check {
        n += 1;
        match c {
            Check::Close { langs } => {
                if !langs.is_empty() && !joint_of(langs).is_empty() {
                    return Err(format!("Close on a satisfiable sequent: {}", proof.sequent));
                }
            }
            Check::Preimage { f, target, result } => {
                let labels: Vec<CharSet> = f
                    .stages
                    .iter()
                    .flat_map(|s| s.psst.labels().cloned().collect::<Vec<_>>())
                    .chain(target.fa.labels().cloned())
                    .collect();
                for w in words(&sample_chars(sigma, &labels), 3) {
                    let expect = match f.apply(Some(&w)) {
                        Output::Undefined => false,
                        Output::Null => target.null_ok,
                        Output::Value(v) => target.fa.accepts(&v),
                    };
                    if result.fa.accepts(&w) != expect {
                        return Err(format!("pre-image wrong on {w:?} at {}", proof.sequent));
                    }
                }
            }
            Check::Splits { target, splits } => {
                let labels: Vec<CharSet> = target.labels().cloned().collect();
                for w in words(&sample_chars(sigma, &labels), 4) {
                    let cs: Vec<char> = w.chars().collect();
                    let covered = (0..=cs.len()).any(|k| {
                        let (l, r): (String, String) = (cs[..k].iter().collect(), cs[k..].iter().collect());
                        splits.iter().any(|(b, c)| b.accepts(&l) && c.accepts(&r))
                    });
                    if covered != target.accepts(&w) {
                        return Err(format!("concatenation split wrong on {w:?} at {}", proof.sequent));
                    }
                }
            }
            Check::Image { left, right, result } => {
                let labels: Vec<CharSet> = left.labels().chain(right.labels()).cloned().collect();
                for w in words(&sample_chars(sigma, &labels), 4) {
                    let cs: Vec<char> = w.chars().collect();
                    let expect = (0..=cs.len()).any(|k| {
                        let (l, r): (String, String) = (cs[..k].iter().collect(), cs[k..].iter().collect());
                        left.accepts(&l) && right.accepts(&r)
                    });
                    if expect != result.accepts(&w) {
                        return Err(format!("image wrong on {w:?} at {}", proof.sequent));
                    }
                }
            }
        }
    }
    for c in &proof.children {
        n += audit(c, sigma)?;
    }
    Ok(n)
}
