//! Regex to PSST compilation with split final states.
//!
//! Every fragment keeps two final sets: `f1` is reached only by runs that
//! consumed nothing, `f2` only by runs that consumed at least one letter.
//! Each subexpression owns a variable holding its latest match; capture
//! groups are keyed by their index so duplicated bodies share them.

use std::collections::HashMap;

use crate::psst::{Assign, Psst, StateId, Sym, VarId, Word};
use crate::regex::{NodeId, Regex, RegexKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitFinalPsst {
    pub psst: Psst,
    pub f1: Vec<StateId>,
    pub f2: Vec<StateId>,
}

impl SplitFinalPsst {
    fn empty_like(num_vars: &[String]) -> SplitFinalPsst {
        let psst = Psst { states: Vec::new(), init: 0, var_names: num_vars.to_vec() };
        SplitFinalPsst { psst, f1: Vec::new(), f2: Vec::new() }
    }

    pub fn init(&self) -> StateId {
        self.psst.init
    }

    pub fn finals(&self) -> impl Iterator<Item = StateId> + '_ {
        self.f1.iter().chain(&self.f2).copied()
    }

    /// Copies all states of `other` in, returning the offset of its ids.
    fn absorb(&mut self, other: &SplitFinalPsst) -> usize {
        let off = self.psst.states.len();
        for s in &other.psst.states {
            let mut s = s.clone();
            for e in &mut s.letters {
                e.target += off;
            }
            for e in s.p1.iter_mut().chain(s.p2.iter_mut()) {
                e.target += off;
            }
            self.psst.states.push(s);
        }
        off
    }

    /// Attaches the output word `out` to every final state.
    pub fn to_output_psst(&self, out: Word) -> Psst {
        let mut t = self.psst.clone();
        for q in self.finals() {
            t.set_output(q, Some(out.clone()));
        }
        t
    }

    /// Drops the variables not in `keep` (their updates vanish).
    pub fn project(&self, keep: &[VarId]) -> SplitFinalPsst {
        let mut out = self.clone();
        for s in &mut out.psst.states {
            let edges = s.letters.iter_mut().map(|e| &mut e.assign).chain(s.p1.iter_mut().map(|e| &mut e.assign));
            let edges: Vec<&mut Assign> = edges.chain(s.p2.iter_mut().map(|e| &mut e.assign)).collect();
            for a in edges {
                a.0.retain(|(x, _)| keep.contains(x));
            }
        }
        out
    }

    fn suffix_names(&mut self, from: usize, suffix: &str) {
        for s in &mut self.psst.states[from..] {
            s.name.push_str(suffix);
        }
    }

    fn for_each_assign(&mut self, mut f: impl FnMut(&mut Assign, bool)) {
        for s in &mut self.psst.states {
            for e in &mut s.letters {
                f(&mut e.assign, true);
            }
            for e in s.p1.iter_mut().chain(s.p2.iter_mut()) {
                f(&mut e.assign, false);
            }
        }
    }

    /// `x := x·ℓ` on every letter transition.
    fn append_on_letters(&mut self, x: VarId) {
        self.for_each_assign(|a, letter| {
            if letter {
                a.set(x, vec![Sym::Var(x), Sym::Input]);
            }
        });
    }
}

fn reset(vars: &[VarId]) -> Assign {
    Assign(vars.iter().map(|&x| (x, vec![Sym::Null])).collect())
}

fn set_eps(x: Option<VarId>) -> Assign {
    match x {
        Some(x) => Assign::identity().with(x, vec![]),
        None => Assign::identity(),
    }
}

/// How a concatenation treats the variables of its right operand.
#[derive(Clone, Copy, PartialEq, Eq)]
enum ConcatMode {
    /// Reset them to null on entry.
    Reset,
    /// Leave them alone; the right operand resets when an iteration starts.
    Shared,
}

/// `t1 · t2`, duplicating `t2` when both operands can accept ε-runs.
fn concat(t1: &SplitFinalPsst, t2: &SplitFinalPsst, x2: &[VarId], mode: ConcatMode) -> SplitFinalPsst {
    let two = !t1.f1.is_empty() && !t2.f1.is_empty();
    let mut out = t1.clone();
    let a = out.absorb(t2);
    let b = if two {
        let b = out.absorb(t2);
        out.suffix_names(b, "'");
        Some(b)
    } else {
        None
    };
    let entry = if mode == ConcatMode::Reset { reset(x2) } else { Assign::identity() };
    for &f in &t1.f1 {
        out.psst.add_p1(f, a + t2.init(), entry.clone());
    }
    for &f in &t1.f2 {
        out.psst.add_p1(f, b.unwrap_or(a) + t2.init(), entry.clone());
    }
    match b {
        Some(b) => {
            out.f1 = t2.f1.iter().map(|q| q + a).collect();
            out.f2 = t2.f2.iter().map(|q| q + a).chain(t2.finals().map(|q| q + b)).collect();
        }
        None => {
            out.f1 = Vec::new();
            out.f2 = t2.finals().map(|q| q + a).collect();
        }
    }
    out
}

/// Result of compiling a regex: the split-final PSST plus the variable map.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub t: SplitFinalPsst,
    /// Variable holding the whole match.
    pub root_var: VarId,
    vars: HashMap<VarKey, VarId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum VarKey {
    Node(NodeId),
    Group(u32),
}

impl Compiled {
    /// Variable of capture group `i`; the whole match for `i = 0`.
    pub fn group_var(&self, i: u32) -> Option<VarId> {
        if i == 0 {
            Some(self.root_var)
        } else {
            self.vars.get(&VarKey::Group(i)).copied()
        }
    }

    pub fn node_var(&self, id: NodeId) -> Option<VarId> {
        self.vars.get(&VarKey::Node(id)).copied()
    }
}

struct Compiler {
    vars: HashMap<VarKey, VarId>,
    names: Vec<String>,
}

impl Compiler {
    fn key(e: &Regex) -> VarKey {
        match e.kind {
            RegexKind::Group(_, i) => VarKey::Group(i),
            _ => VarKey::Node(e.id),
        }
    }

    fn var(&self, e: &Regex) -> VarId {
        self.vars[&Compiler::key(e)]
    }

    /// Variables of every node below and including `e`.
    fn vars_of(&self, e: &Regex) -> Vec<VarId> {
        let mut v: Vec<VarId> = e.subexpressions().into_iter().map(|(_, r)| self.var(r)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn blank(&self) -> SplitFinalPsst {
        SplitFinalPsst::empty_like(&self.names)
    }

    /// New initial state with a single highest-priority ε-edge into `inner`,
    /// and `x` tracking every letter consumed.
    fn wrap(&self, inner: SplitFinalPsst, x: VarId, tag: &str) -> SplitFinalPsst {
        let mut out = self.blank();
        let q0 = out.psst.add_state(format!("q0[{tag}]"));
        let off = out.absorb(&inner);
        out.psst.add_p1(q0, off + inner.init(), set_eps(Some(x)));
        out.psst.init = q0;
        out.f1 = inner.f1.iter().map(|q| q + off).collect();
        out.f2 = inner.f2.iter().map(|q| q + off).collect();
        out.append_on_letters(x);
        out
    }

    fn compile(&self, e: &Regex) -> SplitFinalPsst {
        let x = self.var(e);
        let tag = format!("e{}", e.id);
        match &e.kind {
            RegexKind::Empty => {
                let mut t = self.blank();
                t.psst.init = t.psst.add_state(format!("q0[{tag}]"));
                t
            }
            RegexKind::Epsilon => {
                let mut t = self.blank();
                let q0 = t.psst.add_state(format!("q0[{tag}]"));
                let f = t.psst.add_state(format!("f[{tag}]"));
                t.psst.add_p1(q0, f, set_eps(Some(x)));
                t.psst.init = q0;
                t.f1 = vec![f];
                t
            }
            RegexKind::Class(c) => {
                let mut t = self.blank();
                let q0 = t.psst.add_state(format!("q0[{tag}]"));
                let q1 = t.psst.add_state(format!("q1[{tag}]"));
                let f = t.psst.add_state(format!("f[{tag}]"));
                t.psst.add_p1(q0, q1, set_eps(Some(x)));
                t.psst.add_letter(q1, c.clone(), f, Assign::identity().with(x, vec![Sym::Var(x), Sym::Input]));
                t.psst.init = q0;
                t.f2 = vec![f];
                t
            }
            RegexKind::Group(e1, _) => {
                let mut t = self.compile(e1);
                let x1 = self.var(e1);
                t.for_each_assign(|a, _| {
                    if let Some(w) = a.get(x1).cloned() {
                        let w = w.into_iter().map(|s| if s == Sym::Var(x1) { Sym::Var(x) } else { s }).collect();
                        a.set(x, w);
                    }
                });
                t
            }
            RegexKind::Union(e1, e2) => {
                let (t1, t2) = (self.compile(e1), self.compile(e2));
                let mut t = self.blank();
                let q0 = t.psst.add_state(format!("q0[{tag}]"));
                let a = t.absorb(&t1);
                let b = t.absorb(&t2);
                t.psst.add_p1(q0, a + t1.init(), set_eps(Some(x)));
                t.psst.add_p2(q0, b + t2.init(), set_eps(Some(x)));
                t.psst.init = q0;
                t.f1 = t1.f1.iter().map(|q| q + a).chain(t2.f1.iter().map(|q| q + b)).collect();
                t.f2 = t1.f2.iter().map(|q| q + a).chain(t2.f2.iter().map(|q| q + b)).collect();
                t.append_on_letters(x);
                t
            }
            RegexKind::Concat(e1, e2) => {
                let c = concat(&self.compile(e1), &self.compile(e2), &self.vars_of(e2), ConcatMode::Reset);
                self.wrap(c, x, &tag)
            }
            RegexKind::Optional(e1, lazy) => {
                let t1 = self.compile(e1);
                let mut t = self.blank();
                let q0 = t.psst.add_state(format!("q0[{tag}]"));
                let fe = t.psst.add_state(format!("fε[{tag}]"));
                let a = t.absorb(&t1);
                let body = (a + t1.init(), set_eps(Some(x)));
                let skip = (fe, set_eps(Some(x)));
                let order = if *lazy { [skip, body] } else { [body, skip] };
                for (to, asg) in order {
                    t.psst.add_p1(q0, to, asg);
                }
                t.psst.init = q0;
                t.f1 = vec![fe];
                t.f2 = t1.f2.iter().map(|q| q + a).collect();
                t.append_on_letters(x);
                t
            }
            RegexKind::Star(e1, lazy) => {
                
                self.star(e1, *lazy, Some(x), false, &tag)
            }
            RegexKind::Plus(e1, lazy) => {
                let t1 = self.compile(e1);
                let rest = self.star(e1, *lazy, None, true, &format!("{tag}*"));
                let c = concat(&t1, &rest, &self.vars_of(e1), ConcatMode::Shared);
                self.wrap(c, x, &tag)
            }
            RegexKind::Loop(e1, m1, m2, lazy) => {
                let core = self.loop_core(e1, *m1, *m2, *lazy, &tag);
                self.wrap(core, x, &tag)
            }
        }
    }

    /// Star of `e1`. With `reset_on_entry` the first iteration also resets
    /// the body's variables, which matters when they are shared with a
    /// preceding copy of the body.
    fn star(&self, e1: &Regex, lazy: bool, x: Option<VarId>, reset_on_entry: bool, tag: &str) -> SplitFinalPsst {
        let t1 = self.compile(e1);
        let x1 = self.vars_of(e1);
        let mut t = self.blank();
        let q0 = t.psst.add_state(format!("q0[{tag}]"));
        let fe1 = t.psst.add_state(format!("f1[{tag}]"));
        let fe2 = t.psst.add_state(format!("f2[{tag}]"));
        let a = t.absorb(&t1);
        let body = a + t1.init();
        let mut enter = set_eps(x);
        if reset_on_entry {
            enter.0.extend(reset(&x1).0);
        }
        let order = if lazy { [(fe1, set_eps(x)), (body, enter)] } else { [(body, enter), (fe1, set_eps(x))] };
        for (to, asg) in order {
            t.psst.add_p1(q0, to, asg);
        }
        for &f in &t1.f1 {
            t.psst.add_p1(f + a, body, reset(&x1));
        }
        for &f in &t1.f2 {
            let order = if lazy {
                [(fe2, Assign::identity()), (body, reset(&x1))]
            } else {
                [(body, reset(&x1)), (fe2, Assign::identity())]
            };
            for (to, asg) in order {
                t.psst.add_p1(f + a, to, asg);
            }
        }
        t.psst.init = q0;
        t.f1 = vec![fe1];
        t.f2 = vec![fe2];
        if let Some(x) = x {
            t.append_on_letters(x);
        }
        t
    }

    /// Bounded repetition without the node's own variable.
    fn loop_core(&self, e1: &Regex, m1: u32, m2: u32, lazy: bool, tag: &str) -> SplitFinalPsst {
        if m2 == 0 {
            let mut t = self.blank();
            let q0 = t.psst.add_state(format!("q0[{tag}]"));
            let f = t.psst.add_state(format!("f[{tag}]"));
            t.psst.add_p1(q0, f, Assign::identity());
            t.psst.init = q0;
            t.f1 = vec![f];
            return t;
        }
        if m1 == 0 {
            // e{0,m} behaves as (?:e{1,m})? with the same laziness.
            let inner = self.loop_core(e1, 1, m2, lazy, tag);
            let mut t = self.blank();
            let q0 = t.psst.add_state(format!("q0?[{tag}]"));
            let fe = t.psst.add_state(format!("fε[{tag}]"));
            let a = t.absorb(&inner);
            let order = if lazy { [fe, a + inner.init()] } else { [a + inner.init(), fe] };
            for to in order {
                t.psst.add_p1(q0, to, Assign::identity());
            }
            t.psst.init = q0;
            t.f1 = vec![fe];
            t.f2 = inner.f2.iter().map(|q| q + a).collect();
            return t;
        }
        let x1 = self.vars_of(e1);
        let body = self.compile(e1);
        let mut head = body.clone();
        for _ in 1..m1 {
            head = concat(&head, &body, &x1, ConcatMode::Reset);
        }
        if m1 == m2 {
            return head;
        }
        let tail = self.loop_tail(&body, &x1, (m2 - m1) as usize, lazy, tag);
        concat(&head, &tail, &x1, ConcatMode::Shared)
    }

    /// Up to `k` further non-empty iterations of `body`.
    fn loop_tail(&self, body: &SplitFinalPsst, x1: &[VarId], k: usize, lazy: bool, tag: &str) -> SplitFinalPsst {
        let mut t = self.blank();
        let q0 = t.psst.add_state(format!("q0'[{tag}]"));
        let f0 = t.psst.add_state(format!("f'0[{tag}]"));
        let f1 = t.psst.add_state(format!("f'1[{tag}]"));
        let offs: Vec<usize> = (0..k)
            .map(|i| {
                let o = t.absorb(body);
                t.suffix_names(o, &format!("({})", i + 1));
                o
            })
            .collect();
        let first = (offs[0] + body.init(), reset(x1));
        let order = if lazy { [(f0, Assign::identity()), first] } else { [first, (f0, Assign::identity())] };
        for (to, asg) in order {
            t.psst.add_p1(q0, to, asg);
        }
        for (i, &o) in offs.iter().enumerate() {
            for &f in &body.f2 {
                let done = (f1, Assign::identity());
                if i + 1 < k {
                    let next = (offs[i + 1] + body.init(), reset(x1));
                    let order = if lazy { [done, next] } else { [next, done] };
                    for (to, asg) in order {
                        t.psst.add_p1(f + o, to, asg);
                    }
                } else {
                    t.psst.add_p1(f + o, done.0, done.1);
                }
            }
        }
        t.psst.init = q0;
        t.f1 = vec![f0];
        t.f2 = vec![f1];
        t
    }
}

/// Compiles `e` (node ids as assigned by `Regex::numbered`).
pub fn compile(e: &Regex) -> Compiled {
    let mut vars = HashMap::new();
    let mut names = Vec::new();
    for (_, r) in e.subexpressions() {
        let key = Compiler::key(r);
        if let std::collections::hash_map::Entry::Vacant(slot) = vars.entry(key) {
            slot.insert(names.len());
            names.push(match key {
                VarKey::Node(id) => format!("x{id}"),
                VarKey::Group(i) => format!("g{i}"),
            });
        }
    }
    let c = Compiler { vars, names };
    let t = c.compile(e);
    let root_var = c.var(e);
    Compiled { t, root_var, vars: c.vars }
}

/// PSST mapping each word of `L(e)` to itself (the whole match).
pub fn whole_match_psst(e: &Regex) -> Psst {
    let c = compile(e);
    c.t.to_output_psst(vec![Sym::Var(c.root_var)]).prune_vars()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charset::Alphabet;
    use crate::fa::Fa;
    use crate::psst::Output;
    use crate::regex::parse_js;
    use proptest::prelude::*;

    fn re(s: &str) -> Regex {
        parse_js(s, &Alphabet::ascii()).unwrap()
    }

    fn group(s: &str, i: u32, w: &str) -> Output {
        let e = re(s);
        let c = compile(&e);
        let t = c.t.to_output_psst(vec![Sym::Var(c.group_var(i).unwrap())]);
        t.validate().unwrap();
        t.run(w).output
    }

    fn val(s: &str) -> Output {
        Output::Value(s.into())
    }

    #[test]
    fn a_plus_structure() {
        let c = compile(&re("a+"));
        let t = &c.t;
        // q0[a+], T_a (3 states), one copy of T^-_{a*} (3 + 3 states).
        assert_eq!(t.psst.num_states(), 10);
        assert!(t.f1.is_empty());
        assert_eq!(t.f2.len(), 2);
        let init = &t.psst.states[t.init()];
        assert!(init.letters.is_empty() && init.p2.is_empty() && init.p1.len() == 1);
        for q in t.finals() {
            let s = &t.psst.states[q];
            assert!(s.letters.is_empty() && s.p1.is_empty() && s.p2.is_empty());
        }
        let into_init = t.psst.transitions().filter(|(_, _, to, _)| *to == t.init()).count();
        assert_eq!(into_init, 0);
    }

    #[test]
    fn lazy_star_inside_greedy_star() {
        assert_eq!(group("(a*?)*", 0, "aaa"), val("aaa"));
        assert_eq!(group("(a*?)*", 1, "aaa"), val("a"));
        assert_eq!(group("(a*?)*", 1, ""), Output::Null);
    }

    #[test]
    fn decimal_groups() {
        assert_eq!(group(r"(\d+)(\d*)", 1, "2050"), val("2050"));
        assert_eq!(group(r"(\d+)(\d*)", 2, "2050"), val(""));
        assert_eq!(group(r"(\d+)\.?(\d*)", 1, "02.50"), val("02"));
        assert_eq!(group(r"(\d+)\.?(\d*)", 2, "02.50"), val("50"));
        assert_eq!(group(r"(\d+)(\d*)", 1, "20a"), Output::Undefined);
    }

    #[test]
    fn greedy_and_lazy_diverge() {
        assert_eq!(group("(a*)a*", 1, "aaa"), val("aaa"));
        assert_eq!(group("(a*?)a*", 1, "aaa"), val(""));
        assert_eq!(group("(a?)a*", 1, "aa"), val("a"));
        assert_eq!(group("(a??)a*", 1, "aa"), val(""));
        assert_eq!(group("(a{1,3})a*", 1, "aaaa"), val("aaa"));
        assert_eq!(group("(a{1,3}?)a*", 1, "aaaa"), val("a"));
        assert_eq!(group("(a+?)a*", 1, "aaaa"), val("a"));
    }

    #[test]
    fn star_resets_inner_groups() {
        assert_eq!(group("((a)|b)*", 2, "ab"), Output::Null);
        assert_eq!(group("((a)|b)*", 1, "ab"), val("b"));
        assert_eq!(group("((a)|b)*", 2, "ba"), val("a"));
    }

    #[test]
    fn repeated_groups_keep_last_iteration() {
        assert_eq!(group("(a)+", 1, "a"), val("a"));
        assert_eq!(group("(a|b)+", 1, "ab"), val("b"));
        assert_eq!(group("(a){1,2}", 1, "a"), val("a"));
        assert_eq!(group("(a|b){2,3}", 1, "ab"), val("b"));
        assert_eq!(group("((a)|b){2}", 2, "ab"), Output::Null);
        assert_eq!(group("((a)|b){1,2}", 2, "ab"), Output::Null);
        assert_eq!(group("(a){0,2}", 1, ""), Output::Null);
    }

    #[test]
    fn union_and_optional_null_groups() {
        assert_eq!(group("(a)|b", 1, "b"), Output::Null);
        assert_eq!(group("(?:(a+)|(a*))", 2, "aa"), Output::Null);
        assert_eq!(group("(a)?", 1, ""), Output::Null);
    }

    #[test]
    fn split_final_invariant() {
        for s in ["a*", "(a|)*", "a?b*", "(a*?)*", "a{1,2}", "a{0,2}?", "(?:)", "a+|b*"] {
            let c = compile(&re(s));
            let mut t = c.t.psst.clone();
            for &q in &c.t.f1 {
                t.set_output(q, Some(vec![Sym::Char('1')]));
            }
            for &q in &c.t.f2 {
                t.set_output(q, Some(vec![Sym::Char('2')]));
            }
            for w in ["", "a", "aa", "ab", "b"] {
                match t.run(w).output {
                    Output::Value(v) => assert_eq!(v == "1", w.is_empty(), "{s} on {w:?}"),
                    Output::Undefined => {}
                    Output::Null => unreachable!(),
                }
            }
        }
    }

    #[test]
    fn copy_free_growth_is_linear() {
        let sizes: Vec<usize> = (1..6).map(|n| compile(&re(&"(?:a|b)".repeat(n))).t.psst.num_states()).collect();
        let diffs: Vec<usize> = sizes.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(diffs.iter().all(|&d| d == diffs[0]), "{sizes:?}");
    }

    pub(crate) fn words(max: usize) -> Vec<String> {
        crate::fa::tests::words(&['a', 'b'], max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(150))]

        #[test]
        fn domain_is_classical_language(r in crate::regex::tests::arb_regex()) {
            let fa = Fa::from_regex(&r);
            let t = whole_match_psst(&r);
            for w in words(5) {
                let out = t.apply(&w);
                prop_assert_eq!(out.is_defined(), fa.accepts(&w), "{} on {:?}", r.to_js(), w);
                if out.is_defined() {
                    prop_assert_eq!(out, Output::Value(w.clone()));
                }
            }
        }
    }
}
