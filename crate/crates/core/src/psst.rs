//! Prioritized streaming string transducers and their run semantics.
//!
//! Transitions out of a state are kept in priority order: the ε-edges of
//! `p1`, then the letter edges, then the ε-edges of `p2`. A run may not
//! repeat an ε-edge between two letters. The accepting run is the first
//! accepting leaf of a depth-first search in that order, where continuing
//! with ε-edges outranks stopping.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::{self, Write as _};

use crate::charset::CharSet;

pub type StateId = usize;
pub type VarId = usize;

/// One symbol of an assignment right-hand side or output word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sym {
    Var(VarId),
    Char(char),
    /// The letter read by the current transition.
    Input,
    Null,
}

pub type Word = Vec<Sym>;

/// Sparse variable update; variables not listed keep their value.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assign(pub Vec<(VarId, Word)>);

impl Assign {
    pub fn identity() -> Assign {
        Assign(Vec::new())
    }

    pub fn get(&self, x: VarId) -> Option<&Word> {
        self.0.iter().find(|(v, _)| *v == x).map(|(_, w)| w)
    }

    /// Sets (or overrides) the right-hand side of `x`.
    pub fn set(&mut self, x: VarId, w: Word) {
        match self.0.iter_mut().find(|(v, _)| *v == x) {
            Some(slot) => slot.1 = w,
            None => self.0.push((x, w)),
        }
    }

    pub fn with(mut self, x: VarId, w: Word) -> Assign {
        self.set(x, w);
        self
    }

    /// Right-hand side of `x`, identity included.
    pub fn rhs(&self, x: VarId) -> Word {
        self.get(x).cloned().unwrap_or_else(|| vec![Sym::Var(x)])
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|(x, w)| w.len() == 1 && w[0] == Sym::Var(*x))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LetterEdge {
    pub label: CharSet,
    pub target: StateId,
    pub assign: Assign,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpsEdge {
    pub target: StateId,
    pub assign: Assign,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PState {
    pub name: String,
    pub letters: Vec<LetterEdge>,
    pub p1: Vec<EpsEdge>,
    pub p2: Vec<EpsEdge>,
    pub out: Option<Word>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Psst {
    pub states: Vec<PState>,
    pub init: StateId,
    pub var_names: Vec<String>,
}

/// Output of a transducer on one input.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Output {
    /// No accepting run.
    Undefined,
    /// Accepting run whose output is the null value.
    Null,
    Value(String),
}

impl Output {
    pub fn value(&self) -> Option<&str> {
        match self {
            Output::Value(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        !matches!(self, Output::Undefined)
    }

    /// The output as a nullable string, `None` when undefined.
    pub fn as_nullable(&self) -> Option<Option<&str>> {
        match self {
            Output::Undefined => None,
            Output::Null => Some(None),
            Output::Value(s) => Some(Some(s)),
        }
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Output::Undefined => write!(f, "undefined"),
            Output::Null => write!(f, "⊥"),
            Output::Value(s) => write!(f, "{s:?}"),
        }
    }
}

/// How a step leaves its source state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepKind {
    P1(usize),
    Letter(usize, char),
    P2(usize),
}

impl StepKind {
    /// Smaller rank means higher priority among siblings.
    fn rank(self) -> (u8, usize) {
        match self {
            StepKind::P1(i) => (0, i),
            StepKind::Letter(j, _) => (1, j),
            StepKind::P2(k) => (2, k),
        }
    }

    pub fn is_eps(self) -> bool {
        !matches!(self, StepKind::Letter(..))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Step {
    pub from: StateId,
    pub to: StateId,
    pub kind: StepKind,
}

pub type Trace = Vec<Step>;

/// Priority comparison of two runs on the same input: `Greater` means `a`
/// has higher priority than `b`.
pub fn compare_priority(a: &[Step], b: &[Step]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return y.kind.rank().cmp(&x.kind.rank());
        }
    }
    a.len().cmp(&b.len())
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Remember failed `(state, position, Λ)` nodes. Sound, since the
    /// subtree below a node does not depend on variable values.
    pub memo: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunResult {
    pub output: Output,
    pub trace: Trace,
    /// Longest path length seen during the search.
    pub max_depth: usize,
    /// Search nodes visited.
    pub visited: usize,
}

pub type Valuation = Vec<Option<String>>;

/// Evaluates `w` under the null rule: `[Null]` is null, `[Var(y)]` copies
/// `y` (null included), and otherwise null contributes the empty string.
pub fn eval_word(w: &[Sym], vals: &[Option<String>], input: Option<char>) -> Option<String> {
    match w {
        [Sym::Null] => return None,
        [Sym::Var(y)] => return vals[*y].clone(),
        _ => {}
    }
    let mut s = String::new();
    for sym in w {
        match sym {
            Sym::Var(y) => {
                if let Some(v) = &vals[*y] {
                    s.push_str(v);
                }
            }
            Sym::Char(c) => s.push(*c),
            Sym::Input => s.push(input.expect("input symbol on an ε-transition")),
            Sym::Null => {}
        }
    }
    Some(s)
}

/// Simultaneous update of all variables.
pub fn apply_assign(a: &Assign, vals: &mut Valuation, input: Option<char>) {
    let updates: Vec<(VarId, Option<String>)> = a.0.iter().map(|(x, w)| (*x, eval_word(w, vals, input))).collect();
    for (x, v) in updates {
        vals[x] = v;
    }
}

fn fmt_word(w: &[Sym], names: &[String]) -> String {
    if w.is_empty() {
        return "ε".into();
    }
    w.iter()
        .map(|s| match s {
            Sym::Var(x) => names.get(*x).cloned().unwrap_or_else(|| format!("v{x}")),
            Sym::Char(c) => format!("{c:?}"),
            Sym::Input => "ℓ".into(),
            Sym::Null => "⊥".into(),
        })
        .collect::<Vec<_>>()
        .join("·")
}

impl Psst {
    pub fn new(num_vars: usize) -> Psst {
        Psst { states: Vec::new(), init: 0, var_names: (0..num_vars).map(|i| format!("x{i}")).collect() }
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> VarId {
        self.var_names.push(name.into());
        self.var_names.len() - 1
    }

    pub fn add_state(&mut self, name: impl Into<String>) -> StateId {
        self.states.push(PState { name: name.into(), ..PState::default() });
        self.states.len() - 1
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn add_letter(&mut self, from: StateId, label: CharSet, to: StateId, assign: Assign) {
        self.states[from].letters.push(LetterEdge { label, target: to, assign });
    }

    pub fn add_p1(&mut self, from: StateId, to: StateId, assign: Assign) {
        self.states[from].p1.push(EpsEdge { target: to, assign });
    }

    pub fn add_p2(&mut self, from: StateId, to: StateId, assign: Assign) {
        self.states[from].p2.push(EpsEdge { target: to, assign });
    }

    pub fn set_output(&mut self, q: StateId, w: Option<Word>) {
        self.states[q].out = w;
    }

    /// Number of transitions.
    pub fn num_transitions(&self) -> usize {
        self.states.iter().map(|s| s.letters.len() + s.p1.len() + s.p2.len()).sum()
    }

    /// Total length of all assignment right-hand sides, identity included.
    pub fn size(&self) -> usize {
        let n = self.num_vars();
        self.transitions().map(|(_, _, _, a)| (0..n).map(|x| a.rhs(x).len()).sum::<usize>()).sum()
    }

    /// Upper bound on the number of transitions in any run on a word of
    /// length `n`: at most every ε-edge once per gap between letters.
    pub fn run_length_bound(&self, n: usize) -> usize {
        (n + 1) * self.num_transitions().max(1)
    }

    /// Every transition as `(source, kind, target, assignment)`; letter
    /// transitions report the label's least character.
    pub fn transitions(&self) -> impl Iterator<Item = (StateId, StepKind, StateId, &Assign)> + '_ {
        self.states.iter().enumerate().flat_map(|(q, s)| {
            let p1 = s.p1.iter().enumerate().map(move |(i, e)| (q, StepKind::P1(i), e.target, &e.assign));
            let l = s.letters.iter().enumerate().map(move |(j, e)| {
                (q, StepKind::Letter(j, e.label.min_char().unwrap_or('\0')), e.target, &e.assign)
            });
            let p2 = s.p2.iter().enumerate().map(move |(k, e)| (q, StepKind::P2(k), e.target, &e.assign));
            p1.chain(l).chain(p2)
        })
    }

    /// Structural sanity: targets in range, P1/P2 targets distinct and disjoint.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.num_states();
        let nv = self.num_vars();
        if self.init >= n {
            return Err("initial state out of range".into());
        }
        for (q, s) in self.states.iter().enumerate() {
            let mut seen = HashSet::new();
            for e in s.p1.iter().chain(&s.p2) {
                if e.target >= n {
                    return Err(format!("state {q}: ε-target out of range"));
                }
                if !seen.insert(e.target) {
                    return Err(format!("state {q}: repeated ε-target {}", e.target));
                }
            }
            for e in &s.letters {
                if e.target >= n {
                    return Err(format!("state {q}: letter target out of range"));
                }
                if e.assign.0.iter().any(|(x, _)| *x >= nv) {
                    return Err(format!("state {q}: assignment to unknown variable"));
                }
            }
            for e in s.p1.iter().chain(&s.p2) {
                if e.assign.0.iter().flat_map(|(_, w)| w).any(|s| *s == Sym::Input) {
                    return Err(format!("state {q}: input symbol on an ε-transition"));
                }
            }
        }
        Ok(())
    }

    /// Each variable occurs at most once across the right-hand sides of
    /// every transition (identity updates count), and at most once in
    /// every output word.
    pub fn check_copyless(&self) -> bool {
        let n = self.num_vars();
        let mut count = vec![0usize; n];
        for (_, _, _, a) in self.transitions() {
            count.iter_mut().for_each(|c| *c = 0);
            for x in 0..n {
                if a.get(x).is_none() {
                    count[x] += 1;
                }
            }
            for (_, w) in &a.0 {
                for s in w {
                    if let Sym::Var(y) = s {
                        count[*y] += 1;
                    }
                }
            }
            if count.iter().any(|&c| c > 1) {
                return false;
            }
        }
        self.states.iter().filter_map(|s| s.out.as_ref()).all(|w| {
            let mut seen = HashSet::new();
            w.iter().all(|s| !matches!(s, Sym::Var(y) if !seen.insert(*y)))
        })
    }

    fn children(&self, q: StateId, pos: usize, input: &[char], lambda: &[(StateId, StateId)]) -> Vec<Step> {
        let s = &self.states[q];
        let mut out = Vec::new();
        for (i, e) in s.p1.iter().enumerate() {
            if !lambda.contains(&(q, e.target)) {
                out.push(Step { from: q, to: e.target, kind: StepKind::P1(i) });
            }
        }
        if let Some(&c) = input.get(pos) {
            for (j, e) in s.letters.iter().enumerate() {
                if e.label.contains_char(c) {
                    out.push(Step { from: q, to: e.target, kind: StepKind::Letter(j, c) });
                }
            }
        }
        for (k, e) in s.p2.iter().enumerate() {
            if !lambda.contains(&(q, e.target)) {
                out.push(Step { from: q, to: e.target, kind: StepKind::P2(k) });
            }
        }
        out
    }

    /// Depth-first search over runs in priority order, calling `on_accept`
    /// for every accepting run until it returns `false`.
    fn search(&self, w: &str, opts: RunOptions, mut on_accept: impl FnMut(&[Step]) -> bool) -> (usize, usize) {
        struct Frame {
            q: StateId,
            pos: usize,
            lambda: Vec<(StateId, StateId)>,
            children: Vec<Step>,
            next: usize,
            found: bool,
        }
        let input: Vec<char> = w.chars().collect();
        let bound = self.run_length_bound(input.len());
        let mut failed: HashSet<(StateId, usize, Vec<(StateId, StateId)>)> = HashSet::new();
        let mut path: Vec<Step> = Vec::new();
        let root_children = self.children(self.init, 0, &input, &[]);
        let mut stack = vec![Frame { q: self.init, pos: 0, lambda: Vec::new(), children: root_children, next: 0, found: false }];
        let (mut max_depth, mut visited) = (0usize, 1usize);
        while let Some(top) = stack.last_mut() {
            if top.next < top.children.len() {
                let step = top.children[top.next];
                top.next += 1;
                let (pos, lambda) = if step.kind.is_eps() {
                    let mut l = top.lambda.clone();
                    l.push((step.from, step.to));
                    l.sort_unstable();
                    (top.pos, l)
                } else {
                    (top.pos + 1, Vec::new())
                };
                if opts.memo && failed.contains(&(step.to, pos, lambda.clone())) {
                    continue;
                }
                path.push(step);
                max_depth = max_depth.max(path.len());
                assert!(path.len() <= bound, "run exceeds the length bound {bound}");
                visited += 1;
                let children = self.children(step.to, pos, &input, &lambda);
                stack.push(Frame { q: step.to, pos, lambda, children, next: 0, found: false });
                continue;
            }
            // All extensions explored: this node itself may end a run.
            let frame = stack.pop().unwrap();
            let mut found = frame.found;
            if frame.pos == input.len() && self.states[frame.q].out.is_some() {
                found = true;
                if !on_accept(&path) {
                    return (max_depth, visited);
                }
            }
            if !found && opts.memo {
                failed.insert((frame.q, frame.pos, frame.lambda));
            }
            if let Some(parent) = stack.last_mut() {
                parent.found |= found;
            }
            path.pop();
        }
        (max_depth, visited)
    }

    /// The output of the transducer on `w` along with its accepting run.
    pub fn run(&self, w: &str) -> RunResult {
        self.run_with(w, RunOptions::default())
    }

    pub fn run_with(&self, w: &str, opts: RunOptions) -> RunResult {
        let mut best: Option<Trace> = None;
        let (max_depth, visited) = self.search(w, opts, |p| {
            best = Some(p.to_vec());
            false
        });
        match best {
            None => RunResult { output: Output::Undefined, trace: Vec::new(), max_depth, visited },
            Some(trace) => RunResult { output: self.eval_trace(&trace), trace, max_depth, visited },
        }
    }

    /// Shorthand for `run(w).output`, with failure memoization.
    pub fn apply(&self, w: &str) -> Output {
        self.run_with(w, RunOptions { memo: true }).output
    }

    /// Accepting runs in decreasing priority, at most `limit`.
    pub fn enumerate_runs(&self, w: &str, limit: usize) -> Vec<Trace> {
        let mut out = Vec::new();
        if limit == 0 {
            return out;
        }
        self.search(w, RunOptions::default(), |p| {
            out.push(p.to_vec());
            out.len() < limit
        });
        out
    }

    /// Variable values at the end of `trace`, starting from all-null.
    pub fn valuation_after(&self, trace: &[Step]) -> Valuation {
        let mut vals: Valuation = vec![None; self.num_vars()];
        for st in trace {
            let (assign, input) = self.step_assign(st);
            apply_assign(assign, &mut vals, input);
        }
        vals
    }

    fn step_assign(&self, st: &Step) -> (&Assign, Option<char>) {
        let s = &self.states[st.from];
        match st.kind {
            StepKind::P1(i) => (&s.p1[i].assign, None),
            StepKind::P2(k) => (&s.p2[k].assign, None),
            StepKind::Letter(j, c) => (&s.letters[j].assign, Some(c)),
        }
    }

    /// Output of an accepting run.
    pub fn eval_trace(&self, trace: &[Step]) -> Output {
        let vals = self.valuation_after(trace);
        let end = trace.last().map_or(self.init, |s| s.to);
        match &self.states[end].out {
            None => Output::Undefined,
            Some(w) => match eval_word(w, &vals, None) {
                None => Output::Null,
                Some(s) => Output::Value(s),
            },
        }
    }

    fn fmt_assign(&self, a: &Assign) -> String {
        a.0.iter()
            .filter(|(x, w)| !(w.len() == 1 && w[0] == Sym::Var(*x)))
            .map(|(x, w)| format!("{}:={}", self.var_names[*x], fmt_word(w, &self.var_names)))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// One line per step: `q --a[x:=x·ℓ]--> q'`.
    pub fn dump_trace(&self, trace: &[Step]) -> String {
        let mut s = String::new();
        for st in trace {
            let (a, input) = self.step_assign(st);
            let letter = input.map_or("ε".to_string(), |c| c.to_string());
            let _ = writeln!(
                s,
                "{} --{}[{}]--> {}",
                self.states[st.from].name,
                letter,
                self.fmt_assign(a),
                self.states[st.to].name
            );
        }
        s
    }

    /// The transducer as text, one transition per line in priority order.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "init {}", self.states[self.init].name);
        for (q, st) in self.states.iter().enumerate() {
            for e in &st.p1 {
                let _ = writeln!(s, "{} --ε1[{}]--> {}", st.name, self.fmt_assign(&e.assign), self.states[e.target].name);
            }
            for e in &st.letters {
                let _ = writeln!(s, "{} --{}[{}]--> {}", st.name, e.label, self.fmt_assign(&e.assign), self.states[e.target].name);
            }
            for e in &st.p2 {
                let _ = writeln!(s, "{} --ε2[{}]--> {}", st.name, self.fmt_assign(&e.assign), self.states[e.target].name);
            }
            if let Some(w) = &self.states[q].out {
                let _ = writeln!(s, "out {} = {}", st.name, fmt_word(w, &self.var_names));
            }
        }
        s
    }

    /// All letter labels.
    pub fn labels(&self) -> impl Iterator<Item = &CharSet> + '_ {
        self.states.iter().flat_map(|s| s.letters.iter().map(|e| &e.label))
    }

    /// Characters appearing as constants in assignments or outputs.
    pub fn output_constants(&self) -> CharSet {
        let mut cs = Vec::new();
        let words = self
            .transitions()
            .flat_map(|(_, _, _, a)| a.0.iter().map(|(_, w)| w))
            .chain(self.states.iter().filter_map(|s| s.out.as_ref()));
        for w in words {
            for s in w {
                if let Sym::Char(c) = s {
                    cs.push(*c);
                }
            }
        }
        CharSet::from_chars(cs)
    }

    /// Single-variable transducer copying its input: `x := x·ℓ` on `sigma`.
    pub fn identity(sigma: &CharSet) -> Psst {
        let mut t = Psst::new(0);
        let x = t.add_var("x");
        let q0 = t.add_state("id0");
        let q = t.add_state("id");
        t.add_p1(q0, q, Assign::identity().with(x, vec![]));
        t.add_letter(q, sigma.clone(), q, Assign::identity().with(x, vec![Sym::Var(x), Sym::Input]));
        t.set_output(q, Some(vec![Sym::Var(x)]));
        t.init = q0;
        t
    }

    /// Reversal: `x := ℓ·x` on `sigma`.
    pub fn reverse(sigma: &CharSet) -> Psst {
        let mut t = Psst::identity(sigma);
        t.states[1].letters[0].assign = Assign::identity().with(0, vec![Sym::Input, Sym::Var(0)]);
        t.states[0].name = "rev0".into();
        t.states[1].name = "rev".into();
        t
    }

    /// Removes variables that never influence an output, renumbering the rest.
    pub fn prune_vars(&self) -> Psst {
        let n = self.num_vars();
        let mut live = vec![false; n];
        let mut stack: Vec<VarId> = Vec::new();
        let mark = |w: &Word, live: &mut Vec<bool>, stack: &mut Vec<VarId>| {
            for s in w {
                if let Sym::Var(y) = s {
                    if !live[*y] {
                        live[*y] = true;
                        stack.push(*y);
                    }
                }
            }
        };
        for s in &self.states {
            if let Some(w) = &s.out {
                mark(w, &mut live, &mut stack);
            }
        }
        while let Some(x) = stack.pop() {
            let rhs: Vec<Word> = self.transitions().filter_map(|(_, _, _, a)| a.get(x).cloned()).collect();
            for w in &rhs {
                mark(w, &mut live, &mut stack);
            }
        }
        let mut map = vec![usize::MAX; n];
        let mut names = Vec::new();
        for x in 0..n {
            if live[x] {
                map[x] = names.len();
                names.push(self.var_names[x].clone());
            }
        }
        let rename_word = |w: &Word| -> Word {
            w.iter().map(|s| if let Sym::Var(y) = s { Sym::Var(map[*y]) } else { *s }).collect()
        };
        let rename = |a: &Assign| -> Assign {
            Assign(a.0.iter().filter(|(x, _)| live[*x]).map(|(x, w)| (map[*x], rename_word(w))).collect())
        };
        let states = self
            .states
            .iter()
            .map(|s| PState {
                name: s.name.clone(),
                letters: s
                    .letters
                    .iter()
                    .map(|e| LetterEdge { label: e.label.clone(), target: e.target, assign: rename(&e.assign) })
                    .collect(),
                p1: s.p1.iter().map(|e| EpsEdge { target: e.target, assign: rename(&e.assign) }).collect(),
                p2: s.p2.iter().map(|e| EpsEdge { target: e.target, assign: rename(&e.assign) }).collect(),
                out: s.out.as_ref().map(rename_word),
            })
            .collect();
        Psst { states, init: self.init, var_names: names }
    }
}
