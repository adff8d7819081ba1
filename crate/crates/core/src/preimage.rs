//! Pre-images of regular languages under PSSTs.
//!
//! A state of the pre-image automaton is `(q, ρ, Λ, S, L)`:
//! `q` is the current PSST state, `ρ` abstracts each variable by how its
//! value moves the target automaton, `Λ` holds the ε-edges used since the
//! last letter and `S` the PSST states of strictly higher-priority runs at
//! the current position. `L` holds the states left through a P2 edge, whose
//! letter edges outrank that edge but only matter once a letter is read.
//! An input is accepted when the guessed run ends in a state with an output,
//! no higher-priority run can still accept, and the run cannot be extended
//! by ε-edges to another accepting state (a longer run outranks its prefix).

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;
use std::time::Instant;

use fixedbitset::FixedBitSet;

use crate::charset::{minterms, CharSet};
use crate::fa::Fa;
use crate::psst::{Assign, Psst, StateId, Sym, VarId, Word};

pub use crate::fa::{concat_image, concat_preimage};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PreimageError {
    #[error("the transducer is not copyless")]
    NotCopyless,
    #[error("pre-image exceeded {0} states")]
    TooManyStates(usize),
    #[error("pre-image construction timed out")]
    Timeout,
}

const DETERMINIZE_LIMIT: usize = 400;

/// Limits on one construction.
#[derive(Clone, Copy, Debug)]
pub struct Budget {
    pub max_states: usize,
    pub deadline: Option<Instant>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_states: 2_000_000, deadline: None }
    }
}

/// Which variable abstraction to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// One relation over target states per variable.
    General,
    /// One guessed pair of target states per variable; needs a copyless PSST.
    Copyless,
    /// `Copyless` when the transducer allows it, `General` otherwise.
    Auto,
}

/// `{ w : t(w) ∈ L(a) }`. A null output is never in `L(a)`.
pub fn psst_preimage(t: &Psst, a: &Fa) -> Fa {
    preimage(t, a, false, Mode::General, Budget::default()).expect("unbounded construction")
}

/// As [`psst_preimage`], using the single-pair abstraction.
pub fn psst_preimage_copyless(t: &Psst, a: &Fa) -> Result<Fa, PreimageError> {
    preimage(t, a, false, Mode::Copyless, Budget::default())
}

/// `{ w : t(w) ∈ L(a) }`, plus the inputs with a null output when `null_ok`.
pub fn preimage(t: &Psst, a: &Fa, null_ok: bool, mode: Mode, budget: Budget) -> Result<Fa, PreimageError> {
    let copyless = match mode {
        Mode::General => false,
        Mode::Copyless => {
            if !t.check_copyless() {
                return Err(PreimageError::NotCopyless);
            }
            true
        }
        Mode::Auto => t.check_copyless(),
    };
    let ctx = Ctx::new(t, a, null_ok);
    if copyless {
        build(&ctx, &Pairs, budget, false)
    } else {
        build(&ctx, &Relations, budget, false)
    }
}

/// Relation between states of the target automaton: `rows[p]` is the set
/// of states reachable from `p` by reading the abstracted word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Rel(Vec<FixedBitSet>);

impl Rel {
    fn identity(n: usize) -> Rel {
        Rel((0..n)
            .map(|p| {
                let mut b = FixedBitSet::with_capacity(n);
                b.insert(p);
                b
            })
            .collect())
    }

    fn then(&self, other: &Rel) -> Rel {
        let n = self.0.len();
        Rel(self
            .0
            .iter()
            .map(|row| {
                let mut out = FixedBitSet::with_capacity(n);
                for j in row.ones() {
                    out.union_with(&other.0[j]);
                }
                out
            })
            .collect())
    }
}

struct Ctx<'a> {
    t: &'a Psst,
    /// Target automaton without ε-edges.
    a: Fa,
    null_ok: bool,
    blocks: Vec<CharSet>,
    /// Letter relation of the target automaton, per block.
    block_rel: Vec<Rel>,
    /// Relations of characters written as constants.
    const_rel: HashMap<char, Rel>,
    /// Full ε-closure of each PSST state.
    closure: Vec<FixedBitSet>,
    has_out: FixedBitSet,
    /// Target states at which the value of each variable may begin and
    /// still take part in an accepted output.
    starts: Vec<FixedBitSet>,
}

impl<'a> Ctx<'a> {
    fn new(t: &'a Psst, a: &Fa, null_ok: bool) -> Ctx<'a> {
        // Deterministic targets keep the relations small.
        let a = a.simplify(DETERMINIZE_LIMIT).remove_eps();
        let universe = t.labels().fold(CharSet::empty(), |u, l| u.union(l));
        let blocks = minterms(&universe, t.labels().chain(a.labels()));
        let rel_of = |c: char| {
            let n = a.num_states();
            Rel((0..n)
                .map(|p| {
                    let mut b = FixedBitSet::with_capacity(n);
                    for (l, q) in a.edges(p) {
                        if l.contains_char(c) {
                            b.insert(*q);
                        }
                    }
                    b
                })
                .collect())
        };
        let block_rel = blocks.iter().map(|b| rel_of(b.min_char().unwrap())).collect();
        let const_rel = t.output_constants().iter().filter_map(char::from_u32).map(|c| (c, rel_of(c))).collect();
        let n = t.num_states();
        let mut has_out = FixedBitSet::with_capacity(n);
        for (q, s) in t.states.iter().enumerate() {
            has_out.set(q, s.out.is_some());
        }
        let starts = start_states(t, &a);
        let mut ctx =
            Ctx { t, a, null_ok, blocks, block_rel, const_rel, closure: Vec::new(), has_out, starts };
        ctx.closure = (0..n).map(|q| ctx.reach([q], &[])).collect();
        ctx
    }

    fn num_target_states(&self) -> usize {
        self.a.num_states()
    }

    fn eps_succ(&self, q: StateId) -> impl Iterator<Item = StateId> + '_ {
        let s = &self.t.states[q];
        s.p1.iter().chain(&s.p2).map(|e| e.target)
    }

    /// States reachable from `seeds` by ε-edges outside `lambda`.
    fn reach(&self, seeds: impl IntoIterator<Item = StateId>, lambda: &[(StateId, StateId)]) -> FixedBitSet {
        let mut seen = FixedBitSet::with_capacity(self.t.num_states());
        let mut stack = Vec::new();
        for q in seeds {
            if !seen.put(q) {
                stack.push(q);
            }
        }
        while let Some(q) = stack.pop() {
            for p in self.eps_succ(q) {
                if !lambda.contains(&(q, p)) && !seen.put(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// Letter successors of `set` on block `b`, ε-closed.
    fn letter_image(&self, set: &FixedBitSet, b: usize) -> FixedBitSet {
        let c = self.blocks[b].min_char().unwrap();
        let mut out = FixedBitSet::with_capacity(self.t.num_states());
        for q in set.ones() {
            for e in &self.t.states[q].letters {
                if e.label.contains_char(c) {
                    out.union_with(&self.closure[e.target]);
                }
            }
        }
        out
    }
}

/// A value that opens an output word must begin at the initial target
/// state, and one that opens an assignment begins wherever the assigned
/// variable does. Anywhere else it may begin at any state.
fn start_states(t: &Psst, a: &Fa) -> Vec<FixedBitSet> {
    let n = a.num_states();
    let mut all = FixedBitSet::with_capacity(n);
    all.insert_range(..);
    let mut starts = vec![FixedBitSet::with_capacity(n); t.num_vars()];
    let mut flows = Vec::new();
    let mut note = |starts: &mut Vec<FixedBitSet>, into: Option<VarId>, w: &Word| {
        for (i, s) in w.iter().enumerate() {
            let Sym::Var(x) = *s else { continue };
            match (i, into) {
                (0, None) => starts[x].insert(a.initial()),
                (0, Some(z)) if z == x => {}
                (0, Some(z)) => flows.push((x, z)),
                _ => starts[x].union_with(&all),
            }
        }
    };
    for s in &t.states {
        if let Some(w) = &s.out {
            note(&mut starts, None, w);
        }
    }
    for (_, _, _, assign) in t.transitions() {
        for (z, w) in &assign.0 {
            note(&mut starts, Some(*z), w);
        }
    }
    let mut changed = true;
    while changed {
        changed = false;
        for &(x, z) in &flows {
            if !starts[z].is_subset(&starts[x]) {
                let add = starts[z].clone();
                starts[x].union_with(&add);
                changed = true;
            }
        }
    }
    starts
}

/// The value abstraction of a variable.
trait Domain {
    type V: Clone + Eq + Hash;
    fn null(&self) -> Self::V;
    /// Abstract values of `w`; several when the domain guesses.
    fn eval(&self, ctx: &Ctx, w: &[Sym], rho: &[Self::V], block: Option<usize>) -> Vec<Self::V>;
    fn is_null(&self, v: &Self::V) -> bool;
    /// Whether a non-null value is accepted by the target automaton.
    fn accepts(&self, ctx: &Ctx, v: &Self::V) -> bool;
    /// Collapses values of `x` that can never contribute to acceptance.
    fn restrict(&self, _ctx: &Ctx, _x: VarId, v: Self::V) -> Self::V {
        v
    }
}

struct Relations;

impl Domain for Relations {
    /// `None` is the null value.
    type V = Option<Rel>;

    fn null(&self) -> Self::V {
        None
    }

    fn eval(&self, ctx: &Ctx, w: &[Sym], rho: &[Self::V], block: Option<usize>) -> Vec<Self::V> {
        match w {
            [Sym::Null] => return vec![None],
            [Sym::Var(y)] => return vec![rho[*y].clone()],
            _ => {}
        }
        let mut acc = Rel::identity(ctx.num_target_states());
        for s in w {
            let r = match s {
                Sym::Var(y) => match &rho[*y] {
                    Some(r) => r,
                    None => continue,
                },
                Sym::Char(c) => &ctx.const_rel[c],
                Sym::Input => &ctx.block_rel[block.expect("input on an ε-edge")],
                Sym::Null => continue,
            };
            acc = acc.then(r);
        }
        vec![Some(acc)]
    }

    fn is_null(&self, v: &Self::V) -> bool {
        v.is_none()
    }

    fn accepts(&self, ctx: &Ctx, v: &Self::V) -> bool {
        let r = v.as_ref().unwrap();
        r.0[ctx.a.initial()].ones().any(|f| ctx.a.is_final(f))
    }
}

/// Guessed single pair per variable; sound for copyless transducers since
/// every value is used at most once.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Pair {
    Null,
    /// The empty word, or any word not yet committed to a pair.
    Id,
    /// No pair is consistent with the guesses made so far.
    Dead,
    Is(u32, u32),
}

struct Pairs;

impl Pairs {
    fn then_rel(acc: Pair, r: &Rel) -> Vec<Pair> {
        let out: Vec<Pair> = match acc {
            Pair::Dead => return vec![Pair::Dead],
            Pair::Id => r
                .0
                .iter()
                .enumerate()
                .flat_map(|(p, row)| row.ones().map(move |q| Pair::Is(p as u32, q as u32)))
                .collect(),
            Pair::Null => unreachable!("null is read as the empty word"),
            Pair::Is(p, m) => r.0[m as usize].ones().map(|q| Pair::Is(p, q as u32)).collect(),
        };
        if out.is_empty() {
            vec![Pair::Dead]
        } else {
            out
        }
    }

    fn then(acc: Pair, v: Pair) -> Pair {
        match (acc, v) {
            (Pair::Dead, _) | (_, Pair::Dead) => Pair::Dead,
            (Pair::Id, x) | (x, Pair::Id) => x,
            (Pair::Null, _) | (_, Pair::Null) => unreachable!("null is read as the empty word"),
            (Pair::Is(p, m), Pair::Is(m2, q)) => {
                if m == m2 {
                    Pair::Is(p, q)
                } else {
                    Pair::Dead
                }
            }
        }
    }
}

impl Domain for Pairs {
    type V = Pair;

    fn null(&self) -> Pair {
        Pair::Null
    }

    fn eval(&self, ctx: &Ctx, w: &[Sym], rho: &[Pair], block: Option<usize>) -> Vec<Pair> {
        match w {
            [Sym::Null] => return vec![Pair::Null],
            [Sym::Var(y)] => return vec![rho[*y]],
            _ => {}
        }
        let mut accs = vec![Pair::Id];
        for s in w {
            let r = match s {
                Sym::Var(y) => {
                    let v = if rho[*y] == Pair::Null { Pair::Id } else { rho[*y] };
                    for a in &mut accs {
                        *a = Pairs::then(*a, v);
                    }
                    continue;
                }
                Sym::Null => continue,
                Sym::Char(c) => &ctx.const_rel[c],
                Sym::Input => &ctx.block_rel[block.expect("input on an ε-edge")],
            };
            let mut next: Vec<Pair> = accs.iter().flat_map(|&a| Pairs::then_rel(a, r)).collect();
            next.sort_unstable();
            next.dedup();
            accs = next;
        }
        accs
    }

    fn is_null(&self, v: &Pair) -> bool {
        *v == Pair::Null
    }

    fn accepts(&self, ctx: &Ctx, v: &Pair) -> bool {
        let init = ctx.a.initial();
        match *v {
            Pair::Id => ctx.a.is_final(init),
            Pair::Is(p, q) => p as usize == init && ctx.a.is_final(q as usize),
            Pair::Dead | Pair::Null => false,
        }
    }

    fn restrict(&self, ctx: &Ctx, x: VarId, v: Pair) -> Pair {
        match v {
            Pair::Is(p, _) if !ctx.starts[x].contains(p as usize) => Pair::Dead,
            v => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Node<V> {
    q: StateId,
    rho: Vec<V>,
    lambda: Vec<(StateId, StateId)>,
    higher: FixedBitSet,
    left_by_p2: FixedBitSet,
}

/// All valuations produced by applying `assign` to `rho`.
fn apply_all<D: Domain>(d: &D, ctx: &Ctx, assign: &Assign, rho: &[D::V], block: Option<usize>) -> Vec<Vec<D::V>> {
    let mut out = vec![rho.to_vec()];
    for (x, w) in &assign.0 {
        let mut opts: Vec<D::V> = Vec::new();
        for v in d.eval(ctx, w, rho, block) {
            let v = d.restrict(ctx, *x, v);
            if !opts.contains(&v) {
                opts.push(v);
            }
        }
        out = out
            .into_iter()
            .flat_map(|r| {
                opts.iter().map(move |v| {
                    let mut r = r.clone();
                    r[*x] = v.clone();
                    r
                })
            })
            .collect();
    }
    out
}

fn is_accepting<D: Domain>(d: &D, ctx: &Ctx, n: &Node<D::V>, naive: bool) -> bool {
    let Some(out) = &ctx.t.states[n.q].out else {
        return false;
    };
    if !naive {
        if n.higher.intersection(&ctx.has_out).next().is_some() {
            return false;
        }
        let below = ctx.reach(ctx.eps_succ(n.q).filter(|p| !n.lambda.contains(&(n.q, *p))), &n.lambda);
        if below.intersection(&ctx.has_out).next().is_some() {
            return false;
        }
    }
    d.eval(ctx, out, &n.rho, None).iter().any(|v| if d.is_null(v) { ctx.null_ok } else { d.accepts(ctx, v) })
}

fn with_edge(lambda: &[(StateId, StateId)], e: (StateId, StateId)) -> Vec<(StateId, StateId)> {
    let mut l = lambda.to_vec();
    l.push(e);
    l.sort_unstable();
    l
}

/// Explores the pre-image automaton from its initial state. With `naive`
/// the priority bookkeeping is ignored, which gives the classical
/// (over-approximating) pre-image of the underlying relation.
fn build<D: Domain>(ctx: &Ctx, d: &D, budget: Budget, naive: bool) -> Result<Fa, PreimageError> {
    let t = ctx.t;
    let nq = t.num_states();
    let empty = FixedBitSet::with_capacity(nq);
    let start = Node {
        q: t.init,
        rho: vec![d.null(); t.num_vars()],
        lambda: Vec::new(),
        higher: empty.clone(),
        left_by_p2: empty.clone(),
    };
    let mut fa = Fa::new();
    let mut ids: HashMap<Node<D::V>, StateId> = HashMap::new();
    ids.insert(start.clone(), 0);
    let mut queue = VecDeque::from([(start, 0)]);
    let mut count = 0usize;
    while let Some((n, id)) = queue.pop_front() {
        count += 1;
        if count.is_multiple_of(256) && budget.deadline.is_some_and(|dl| Instant::now() >= dl) {
            return Err(PreimageError::Timeout);
        }
        if is_accepting(d, ctx, &n, naive) {
            fa.set_final(id, true);
        }
        let s = &t.states[n.q];
        let mut succ: Vec<(Option<usize>, Node<D::V>)> = Vec::new();
        let free = |target: StateId| !n.lambda.contains(&(n.q, target));
        // P1 edges: earlier free siblings outrank.
        let mut earlier: Vec<StateId> = Vec::new();
        for e in &s.p1 {
            if !free(e.target) {
                continue;
            }
            let mut higher = n.higher.clone();
            if !naive {
                higher.union_with(&ctx.reach(earlier.iter().copied(), &n.lambda));
            }
            for rho in apply_all(d, ctx, &e.assign, &n.rho, None) {
                let lambda = with_edge(&n.lambda, (n.q, e.target));
                succ.push((None, Node { q: e.target, rho, lambda, higher: higher.clone(), left_by_p2: n.left_by_p2.clone() }));
            }
            earlier.push(e.target);
        }
        let p1_reach = ctx.reach(earlier.iter().copied(), &n.lambda);
        // P2 edges: all free P1 edges, the letters and earlier free P2 siblings outrank.
        let mut earlier2: Vec<StateId> = Vec::new();
        for e in &s.p2 {
            if !free(e.target) {
                continue;
            }
            let mut higher = n.higher.clone();
            let mut left = n.left_by_p2.clone();
            if !naive {
                higher.union_with(&p1_reach);
                higher.union_with(&ctx.reach(earlier2.iter().copied(), &n.lambda));
                left.insert(n.q);
            }
            for rho in apply_all(d, ctx, &e.assign, &n.rho, None) {
                let lambda = with_edge(&n.lambda, (n.q, e.target));
                succ.push((None, Node { q: e.target, rho, lambda, higher: higher.clone(), left_by_p2: left.clone() }));
            }
            earlier2.push(e.target);
        }
        // Letters, block by block.
        for b in 0..ctx.blocks.len() {
            let c = ctx.blocks[b].min_char().unwrap();
            let mut pending = n.higher.clone();
            pending.union_with(&n.left_by_p2);
            pending.union_with(&p1_reach);
            let base = if naive { empty.clone() } else { ctx.letter_image(&pending, b) };
            let mut before = base;
            for e in &s.letters {
                if !e.label.contains_char(c) {
                    continue;
                }
                for rho in apply_all(d, ctx, &e.assign, &n.rho, Some(b)) {
                    succ.push((
                        Some(b),
                        Node { q: e.target, rho, lambda: Vec::new(), higher: before.clone(), left_by_p2: empty.clone() },
                    ));
                }
                if !naive {
                    before.union_with(&ctx.closure[e.target]);
                }
            }
        }
        for (label, m) in succ {
            let mid = match ids.get(&m) {
                Some(&mid) => mid,
                None => {
                    if ids.len() >= budget.max_states {
                        return Err(PreimageError::TooManyStates(budget.max_states));
                    }
                    let mid = fa.add_state();
                    ids.insert(m.clone(), mid);
                    queue.push_back((m, mid));
                    mid
                }
            };
            match label {
                Some(b) => fa.add_edge(id, ctx.blocks[b].clone(), mid),
                None => fa.add_eps(id, mid),
            }
        }
    }
    Ok(fa.trim())
}
