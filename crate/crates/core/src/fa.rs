//! Nondeterministic finite automata over interval-labelled edges.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use crate::charset::{minterms, CharSet};
use crate::regex::{Regex, RegexKind};

pub type StateId = usize;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Fa {
    init: StateId,
    finals: Vec<bool>,
    eps: Vec<Vec<StateId>>,
    edges: Vec<Vec<(CharSet, StateId)>>,
}

impl Fa {
    /// One non-final initial state and nothing else.
    pub fn new() -> Fa {
        let mut fa = Fa::default();
        fa.add_state();
        fa
    }

    pub fn empty() -> Fa {
        Fa::new()
    }

    pub fn epsilon() -> Fa {
        let mut fa = Fa::new();
        fa.set_final(0, true);
        fa
    }

    /// Σ* for the given alphabet.
    pub fn universal(sigma: &CharSet) -> Fa {
        let mut fa = Fa::epsilon();
        if !sigma.is_empty() {
            fa.add_edge(0, sigma.clone(), 0);
        }
        fa
    }

    pub fn literal(w: &str) -> Fa {
        let mut fa = Fa::new();
        let mut cur = 0;
        for c in w.chars() {
            let n = fa.add_state();
            fa.add_edge(cur, CharSet::single(c), n);
            cur = n;
        }
        fa.set_final(cur, true);
        fa
    }

    pub fn add_state(&mut self) -> StateId {
        self.finals.push(false);
        self.eps.push(Vec::new());
        self.edges.push(Vec::new());
        self.finals.len() - 1
    }

    pub fn add_edge(&mut self, from: StateId, label: CharSet, to: StateId) {
        if !label.is_empty() {
            self.edges[from].push((label, to));
        }
    }

    pub fn add_eps(&mut self, from: StateId, to: StateId) {
        if !self.eps[from].contains(&to) {
            self.eps[from].push(to);
        }
    }

    pub fn set_final(&mut self, q: StateId, f: bool) {
        self.finals[q] = f;
    }

    pub fn set_initial(&mut self, q: StateId) {
        self.init = q;
    }

    pub fn num_states(&self) -> usize {
        self.finals.len()
    }

    pub fn initial(&self) -> StateId {
        self.init
    }

    pub fn is_final(&self, q: StateId) -> bool {
        self.finals[q]
    }

    pub fn finals(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.num_states()).filter(|&q| self.finals[q])
    }

    pub fn edges(&self, q: StateId) -> &[(CharSet, StateId)] {
        &self.edges[q]
    }

    pub fn eps_edges(&self, q: StateId) -> &[StateId] {
        &self.eps[q]
    }

    pub fn num_transitions(&self) -> usize {
        self.edges.iter().map(Vec::len).sum::<usize>() + self.eps.iter().map(Vec::len).sum::<usize>()
    }

    pub fn has_eps(&self) -> bool {
        self.eps.iter().any(|v| !v.is_empty())
    }

    /// All edge labels.
    pub fn labels(&self) -> impl Iterator<Item = &CharSet> + '_ {
        self.edges.iter().flat_map(|v| v.iter().map(|(l, _)| l))
    }

    /// Copies all states of `other` into `self`, returning the id offset.
    fn absorb(&mut self, other: &Fa) -> usize {
        let off = self.num_states();
        for q in 0..other.num_states() {
            self.add_state();
            self.finals[off + q] = other.finals[q];
        }
        for q in 0..other.num_states() {
            for &t in &other.eps[q] {
                self.eps[off + q].push(off + t);
            }
            for (l, t) in &other.edges[q] {
                self.edges[off + q].push((l.clone(), off + t));
            }
        }
        off
    }

    /// Classical language of `e`; priorities and groups are ignored.
    pub fn from_regex(e: &Regex) -> Fa {
        let mut fa = Fa::default();
        let (s, f) = thompson(&mut fa, e);
        fa.init = s;
        fa.finals[f] = true;
        fa
    }

    pub fn eps_closure(&self, seeds: impl IntoIterator<Item = StateId>) -> Vec<StateId> {
        let mut seen = vec![false; self.num_states()];
        let mut stack: Vec<StateId> = Vec::new();
        for q in seeds {
            if !seen[q] {
                seen[q] = true;
                stack.push(q);
            }
        }
        while let Some(q) = stack.pop() {
            for &t in &self.eps[q] {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        (0..self.num_states()).filter(|&q| seen[q]).collect()
    }

    fn step(&self, set: &[StateId], c: u32) -> Vec<StateId> {
        let mut out: Vec<StateId> = set
            .iter()
            .flat_map(|&q| self.edges[q].iter().filter(|(l, _)| l.contains(c)).map(|(_, t)| *t))
            .collect();
        out.sort_unstable();
        out.dedup();
        self.eps_closure(out)
    }

    pub fn accepts(&self, w: &str) -> bool {
        self.accepts_chars(w.chars())
    }

    pub fn accepts_chars(&self, w: impl IntoIterator<Item = char>) -> bool {
        let mut cur = self.eps_closure([self.init]);
        for c in w {
            if cur.is_empty() {
                return false;
            }
            cur = self.step(&cur, c as u32);
        }
        cur.iter().any(|&q| self.finals[q])
    }

    /// Equivalent automaton without ε-edges (same state ids).
    pub fn remove_eps(&self) -> Fa {
        if !self.has_eps() {
            return self.clone();
        }
        let n = self.num_states();
        let mut out = Fa { init: self.init, finals: vec![false; n], eps: vec![Vec::new(); n], edges: vec![Vec::new(); n] };
        for q in 0..n {
            for p in self.eps_closure([q]) {
                if self.finals[p] {
                    out.finals[q] = true;
                }
                for (l, t) in &self.edges[p] {
                    out.edges[q].push((l.clone(), *t));
                }
            }
        }
        out
    }

    /// Keeps only states that are reachable and co-reachable; the result is
    /// a single non-final state when the language is empty.
    pub fn trim(&self) -> Fa {
        let n = self.num_states();
        let fwd = self.reachable();
        let mut rev: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for q in 0..n {
            for &t in &self.eps[q] {
                rev[t].push(q);
            }
            for (_, t) in &self.edges[q] {
                rev[*t].push(q);
            }
        }
        let mut bwd = vec![false; n];
        let mut stack: Vec<StateId> = (0..n).filter(|&q| self.finals[q]).collect();
        for &q in &stack {
            bwd[q] = true;
        }
        while let Some(q) = stack.pop() {
            for &p in &rev[q] {
                if !bwd[p] {
                    bwd[p] = true;
                    stack.push(p);
                }
            }
        }
        if !bwd[self.init] {
            return Fa::empty();
        }
        let keep: Vec<bool> = (0..n).map(|q| fwd[q] && bwd[q]).collect();
        let mut map = vec![usize::MAX; n];
        let mut out = Fa::default();
        for q in 0..n {
            if keep[q] {
                map[q] = out.add_state();
                out.finals[map[q]] = self.finals[q];
            }
        }
        for q in 0..n {
            if !keep[q] {
                continue;
            }
            for &t in &self.eps[q] {
                if keep[t] {
                    out.eps[map[q]].push(map[t]);
                }
            }
            for (l, t) in &self.edges[q] {
                if keep[*t] {
                    out.edges[map[q]].push((l.clone(), map[*t]));
                }
            }
        }
        out.init = map[self.init];
        out
    }

    fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut stack = vec![self.init];
        seen[self.init] = true;
        while let Some(q) = stack.pop() {
            let succ = self.eps[q].iter().copied().chain(self.edges[q].iter().map(|(_, t)| *t));
            for t in succ {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen
    }

    pub fn is_empty(&self) -> bool {
        let seen = self.reachable();
        !(0..self.num_states()).any(|q| seen[q] && self.finals[q])
    }

    /// Shortest accepted word, lexicographically least among the shortest.
    pub fn witness(&self) -> Option<String> {
        let fa = self.remove_eps();
        let n = fa.num_states();
        let all = CharSet::from_ranges(fa.labels().flat_map(|l| l.ranges().iter().copied()));
        let blocks = minterms(&all, fa.labels());
        let reps: Vec<char> = blocks.iter().filter_map(|b| b.min_char()).collect();
        let mut prev: Vec<Option<(StateId, char)>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([fa.init]);
        seen[fa.init] = true;
        while let Some(q) = queue.pop_front() {
            if fa.finals[q] {
                let mut w = Vec::new();
                let mut cur = q;
                while let Some((p, c)) = prev[cur] {
                    w.push(c);
                    cur = p;
                }
                return Some(w.into_iter().rev().collect());
            }
            for &c in &reps {
                for (l, t) in &fa.edges[q] {
                    if l.contains_char(c) && !seen[*t] {
                        seen[*t] = true;
                        prev[*t] = Some((q, c));
                        queue.push_back(*t);
                    }
                }
            }
        }
        None
    }

    /// Intersection of all automata, exploring only reachable state tuples.
    pub fn product(parts: &[&Fa]) -> Fa {
        assert!(!parts.is_empty(), "product of no automata");
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let parts: Vec<Fa> = parts.iter().map(|a| a.remove_eps()).collect();
        let mut out = Fa::default();
        let mut ids: HashMap<Vec<StateId>, StateId> = HashMap::new();
        let start: Vec<StateId> = parts.iter().map(|a| a.init).collect();
        let mut queue = VecDeque::new();
        ids.insert(start.clone(), out.add_state());
        queue.push_back(start);
        while let Some(tuple) = queue.pop_front() {
            let id = ids[&tuple];
            out.finals[id] = tuple.iter().zip(&parts).all(|(&q, a)| a.finals[q]);
            // Extend partial tuples one component at a time.
            let mut partial: Vec<(CharSet, Vec<StateId>)> = vec![(CharSet::range(0, u32::MAX), Vec::new())];
            for (k, a) in parts.iter().enumerate() {
                let mut next = Vec::new();
                for (lab, prefix) in &partial {
                    for (l, t) in &a.edges[tuple[k]] {
                        let m = lab.intersect(l);
                        if !m.is_empty() {
                            let mut p = prefix.clone();
                            p.push(*t);
                            next.push((m, p));
                        }
                    }
                }
                partial = next;
                if partial.is_empty() {
                    break;
                }
            }
            for (lab, target) in partial {
                let tid = match ids.get(&target) {
                    Some(&t) => t,
                    None => {
                        let t = out.add_state();
                        ids.insert(target.clone(), t);
                        queue.push_back(target);
                        t
                    }
                };
                out.edges[id].push((lab, tid));
            }
        }
        out
    }

    pub fn intersect(&self, other: &Fa) -> Fa {
        Fa::product(&[self, other])
    }

    /// Subset construction over the minterms of `sigma` and the labels; the
    /// result is complete over `sigma`.
    pub fn determinize(&self, sigma: &CharSet) -> Fa {
        let fa = self.remove_eps();
        let blocks = minterms(sigma, fa.labels());
        let mut out = Fa::default();
        let mut ids: HashMap<Vec<StateId>, StateId> = HashMap::new();
        let start = vec![fa.init];
        ids.insert(start.clone(), out.add_state());
        let mut queue = VecDeque::from([start]);
        while let Some(set) = queue.pop_front() {
            let id = ids[&set];
            out.finals[id] = set.iter().any(|&q| fa.finals[q]);
            let mut by_target: Vec<(Vec<StateId>, CharSet)> = Vec::new();
            for b in &blocks {
                let c = b.min().unwrap();
                let mut t: Vec<StateId> = set
                    .iter()
                    .flat_map(|&q| fa.edges[q].iter().filter(|(l, _)| l.contains(c)).map(|(_, t)| *t))
                    .collect();
                t.sort_unstable();
                t.dedup();
                match by_target.iter_mut().find(|(s, _)| *s == t) {
                    Some((_, lab)) => *lab = lab.union(b),
                    None => by_target.push((t, b.clone())),
                }
            }
            for (t, lab) in by_target {
                let tid = match ids.get(&t) {
                    Some(&x) => x,
                    None => {
                        let x = out.add_state();
                        ids.insert(t.clone(), x);
                        queue.push_back(t);
                        x
                    }
                };
                out.edges[id].push((lab, tid));
            }
        }
        out
    }

    /// Minimal deterministic automaton (partial: the dead state is trimmed).
    pub fn minimize(&self) -> Fa {
        let hull = self.alphabet_hull();
        let d = self.determinize(&hull);
        let n = d.num_states();
        let blocks = minterms(&hull, d.labels());
        let reps: Vec<u32> = blocks.iter().filter_map(|b| b.min()).collect();
        let succ: Vec<Vec<Option<StateId>>> = (0..n)
            .map(|q| reps.iter().map(|&c| d.edges[q].iter().find(|(l, _)| l.contains(c)).map(|(_, t)| *t)).collect())
            .collect();
        let mut class: Vec<usize> = d.finals.iter().map(|&f| f as usize).collect();
        let mut count = 0;
        loop {
            let mut ids: HashMap<(usize, Vec<Option<usize>>), usize> = HashMap::new();
            let next: Vec<usize> = (0..n)
                .map(|q| {
                    let sig = (class[q], succ[q].iter().map(|t| t.map(|t| class[t])).collect());
                    let k = ids.len();
                    *ids.entry(sig).or_insert(k)
                })
                .collect();
            let c = ids.len();
            class = next;
            if c == count {
                break;
            }
            count = c;
        }
        let mut out = Fa::default();
        for _ in 0..count {
            out.add_state();
        }
        let mut done = vec![false; count];
        for q in 0..n {
            let k = class[q];
            out.finals[k] = d.finals[q];
            if done[k] {
                continue;
            }
            done[k] = true;
            for (l, t) in &d.edges[q] {
                out.edges[k].push((l.clone(), class[*t]));
            }
        }
        out.init = class[d.init];
        out.trim()
    }

    /// [`Fa::minimize`] when the automaton has at most `limit` states.
    pub fn simplify(&self, limit: usize) -> Fa {
        if self.num_states() <= limit {
            self.minimize()
        } else {
            self.trim()
        }
    }

    /// Σ* minus the language, relative to `sigma`.
    pub fn complement(&self, sigma: &CharSet) -> Fa {
        let mut d = self.determinize(sigma);
        for f in d.finals.iter_mut() {
            *f = !*f;
        }
        d
    }

    /// `L(self) ⊆ L(other)` over `sigma`.
    pub fn is_subset_of(&self, other: &Fa, sigma: &CharSet) -> bool {
        self.intersect(&other.complement(sigma)).is_empty()
    }

    pub fn equivalent(&self, other: &Fa, sigma: &CharSet) -> bool {
        self.is_subset_of(other, sigma) && other.is_subset_of(self, sigma)
    }

    pub fn concat(&self, other: &Fa) -> Fa {
        let mut out = self.clone();
        let off = out.absorb(other);
        for q in 0..self.num_states() {
            if self.finals[q] {
                out.finals[q] = false;
                out.add_eps(q, off + other.init);
            }
        }
        out
    }

    pub fn union(&self, other: &Fa) -> Fa {
        let mut out = Fa::new();
        let a = out.absorb(self);
        let b = out.absorb(other);
        out.add_eps(0, a + self.init);
        out.add_eps(0, b + other.init);
        out
    }

    /// Same automaton with `q` as the only final state.
    pub fn with_only_final(&self, q: StateId) -> Fa {
        let mut out = self.clone();
        out.finals.iter_mut().for_each(|f| *f = false);
        out.finals[q] = true;
        out
    }

    /// Same automaton started at `q`.
    pub fn with_initial(&self, q: StateId) -> Fa {
        let mut out = self.clone();
        out.init = q;
        out
    }

    /// The language is exactly one word.
    pub fn singleton(&self) -> Option<String> {
        let w = self.witness()?;
        let mut rest = self.intersect(&Fa::literal(&w).complement(&self.alphabet_hull()));
        rest = rest.trim();
        rest.is_empty().then_some(w)
    }

    /// Union of all labels.
    pub fn alphabet_hull(&self) -> CharSet {
        CharSet::from_ranges(self.labels().flat_map(|l| l.ranges().iter().copied()))
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph fa {\n  rankdir=LR;\n  start [shape=point];\n");
        for q in 0..self.num_states() {
            let shape = if self.finals[q] { "doublecircle" } else { "circle" };
            let _ = writeln!(s, "  q{q} [shape={shape}];");
        }
        let _ = writeln!(s, "  start -> q{};", self.init);
        for q in 0..self.num_states() {
            for t in &self.eps[q] {
                let _ = writeln!(s, "  q{q} -> q{t} [label=\"ε\"];");
            }
            for (l, t) in &self.edges[q] {
                let lab = l.to_string().replace('\\', "\\\\").replace('"', "\\\"");
                let _ = writeln!(s, "  q{q} -> q{t} [label=\"{lab}\"];");
            }
        }
        s.push_str("}\n");
        s
    }
}

fn thompson(fa: &mut Fa, e: &Regex) -> (StateId, StateId) {
    let s = fa.add_state();
    let f = fa.add_state();
    match &e.kind {
        RegexKind::Empty => {}
        RegexKind::Epsilon => fa.add_eps(s, f),
        RegexKind::Class(c) => fa.add_edge(s, c.clone(), f),
        RegexKind::Union(a, b) => {
            for x in [a, b] {
                let (xs, xf) = thompson(fa, x);
                fa.add_eps(s, xs);
                fa.add_eps(xf, f);
            }
        }
        RegexKind::Concat(a, b) => {
            let (as_, af) = thompson(fa, a);
            let (bs, bf) = thompson(fa, b);
            fa.add_eps(s, as_);
            fa.add_eps(af, bs);
            fa.add_eps(bf, f);
        }
        RegexKind::Group(a, _) => {
            let (xs, xf) = thompson(fa, a);
            fa.add_eps(s, xs);
            fa.add_eps(xf, f);
        }
        RegexKind::Optional(a, _) => {
            let (xs, xf) = thompson(fa, a);
            fa.add_eps(s, xs);
            fa.add_eps(xf, f);
            fa.add_eps(s, f);
        }
        RegexKind::Star(a, _) | RegexKind::Plus(a, _) => {
            let (xs, xf) = thompson(fa, a);
            fa.add_eps(s, xs);
            fa.add_eps(xf, xs);
            fa.add_eps(xf, f);
            if matches!(e.kind, RegexKind::Star(..)) {
                fa.add_eps(s, f);
            }
        }
        RegexKind::Loop(a, m1, m2, _) => {
            let mut cur = s;
            for k in 0..*m2 {
                if k >= *m1 {
                    fa.add_eps(cur, f);
                }
                let (xs, xf) = thompson(fa, a);
                fa.add_eps(cur, xs);
                cur = xf;
            }
            fa.add_eps(cur, f);
        }
    }
    (s, f)
}

/// Splits `L(a)` into the recognizable union `⋃_q L(B_q) × L(C_q)` of
/// all `(u, v)` with `uv ∈ L(a)`, one pair per state of the ε-free automaton.
pub fn concat_preimage(a: &Fa) -> Vec<(Fa, Fa)> {
    let fa = a.remove_eps().trim();
    if fa.is_empty() {
        return Vec::new();
    }
    (0..fa.num_states()).map(|q| (fa.with_only_final(q).trim(), fa.with_initial(q).trim())).collect()
}

/// `L(b) · L(c)`.
pub fn concat_image(b: &Fa, c: &Fa) -> Fa {
    b.concat(c)
}
