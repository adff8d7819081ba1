//! `extract`, `replace` and `replaceAll` as PSSTs.
//!
//! References to the whole match are turned into an explicit first group.
//! References to the text before or after a match are removed by a chain of
//! transducers that first copies that text next to every match, between the
//! two marker symbols, and then runs a replacement with plain references.

use std::fmt;

use crate::charset::{Alphabet, CharSet, MARK_CLOSE, MARK_OPEN};
use crate::compile::compile;
use crate::psst::{Assign, Output, Psst, StateId, Sym, VarId, Word};
use crate::regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StrFunError {
    #[error("capture group {index} out of range (the pattern has {count})")]
    GroupOutOfRange { index: u32, count: u32 },
}

/// One piece of a replacement string.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RepSeg {
    Lit(String),
    /// `$i` with `i >= 1`.
    Group(u32),
    /// `$&`, also written `$0` in the SMT syntax.
    WholeMatch,
    /// `` $` ``
    Before,
    /// `$'`
    After,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Replacement(pub Vec<RepSeg>);

impl Replacement {
    pub fn literal(s: &str) -> Replacement {
        if s.is_empty() {
            Replacement(Vec::new())
        } else {
            Replacement(vec![RepSeg::Lit(s.to_string())])
        }
    }

    /// Parses a JavaScript replacement string for a pattern with `groups`
    /// capture groups. Follows `String.prototype.replace`: `$$`, `$&`, `` $` ``,
    /// `$'`, `$n` and `$nn`; a reference to a missing group stays literal.
    pub fn parse_js(s: &str, groups: u32) -> Replacement {
        let cs: Vec<char> = s.chars().collect();
        let mut segs = Vec::new();
        let mut lit = String::new();
        let mut i = 0;
        let push = |segs: &mut Vec<RepSeg>, lit: &mut String, seg: RepSeg| {
            if !lit.is_empty() {
                segs.push(RepSeg::Lit(std::mem::take(lit)));
            }
            segs.push(seg);
        };
        while i < cs.len() {
            if cs[i] != '$' || i + 1 == cs.len() {
                lit.push(cs[i]);
                i += 1;
                continue;
            }
            let digit = |j: usize| cs.get(j).and_then(|c| c.to_digit(10));
            match cs[i + 1] {
                '$' => {
                    lit.push('$');
                    i += 2;
                }
                '&' => {
                    push(&mut segs, &mut lit, RepSeg::WholeMatch);
                    i += 2;
                }
                '`' => {
                    push(&mut segs, &mut lit, RepSeg::Before);
                    i += 2;
                }
                '\'' => {
                    push(&mut segs, &mut lit, RepSeg::After);
                    i += 2;
                }
                _ => match (digit(i + 1), digit(i + 2)) {
                    (Some(d1), Some(d2)) if (1..=groups).contains(&(d1 * 10 + d2)) => {
                        push(&mut segs, &mut lit, RepSeg::Group(d1 * 10 + d2));
                        i += 3;
                    }
                    (Some(d1), _) if (1..=groups).contains(&d1) => {
                        push(&mut segs, &mut lit, RepSeg::Group(d1));
                        i += 2;
                    }
                    _ => {
                        lit.push('$');
                        i += 1;
                    }
                },
            }
        }
        if !lit.is_empty() {
            segs.push(RepSeg::Lit(lit));
        }
        Replacement(segs)
    }

    pub fn max_group(&self) -> u32 {
        self.0.iter().filter_map(|s| if let RepSeg::Group(i) = s { Some(*i) } else { None }).max().unwrap_or(0)
    }

    pub fn has_whole_match(&self) -> bool {
        self.0.contains(&RepSeg::WholeMatch)
    }

    pub fn has_context(&self) -> bool {
        self.0.iter().any(|s| matches!(s, RepSeg::Before | RepSeg::After))
    }

    pub fn is_plain(&self) -> bool {
        self.0.iter().all(|s| matches!(s, RepSeg::Lit(_) | RepSeg::Group(_)))
    }

    /// Literal characters used by the replacement.
    pub fn chars(&self) -> CharSet {
        CharSet::from_chars(self.0.iter().flat_map(|s| match s {
            RepSeg::Lit(l) => l.chars().collect::<Vec<_>>(),
            _ => Vec::new(),
        }))
    }

    fn map_refs(&self, f: impl Fn(&RepSeg) -> RepSeg) -> Replacement {
        Replacement(self.0.iter().map(|s| if let RepSeg::Lit(_) = s { s.clone() } else { f(s) }).collect())
    }

    /// Evaluates the replacement for one match.
    pub fn instantiate(&self, groups: &[Option<String>], before: &str, after: &str) -> String {
        let mut out = String::new();
        for s in &self.0 {
            match s {
                RepSeg::Lit(l) => out.push_str(l),
                RepSeg::Group(i) => out.push_str(groups.get(*i as usize).and_then(|g| g.as_deref()).unwrap_or("")),
                RepSeg::WholeMatch => out.push_str(groups[0].as_deref().unwrap_or("")),
                RepSeg::Before => out.push_str(before),
                RepSeg::After => out.push_str(after),
            }
        }
        out
    }
}

impl fmt::Display for Replacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            match s {
                RepSeg::Lit(l) => f.write_str(&l.replace('$', "$$"))?,
                RepSeg::Group(i) => write!(f, "${i}")?,
                RepSeg::WholeMatch => f.write_str("$&")?,
                RepSeg::Before => f.write_str("$`")?,
                RepSeg::After => f.write_str("$'")?,
            }
        }
        Ok(())
    }
}

/// A string function of one argument.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StrFun {
    Extract(u32, Regex),
    Replace(Regex, Replacement),
    ReplaceAll(Regex, Replacement),
}

impl fmt::Display for StrFun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrFun::Extract(i, e) => write!(f, "extract[{i}, /{e}/]"),
            StrFun::Replace(p, r) => write!(f, "replace[/{p}/, {:?}]", r.to_string()),
            StrFun::ReplaceAll(p, r) => write!(f, "replaceAll[/{p}/, {:?}]", r.to_string()),
        }
    }
}

impl StrFun {
    /// Reference semantics computed without the replacement encodings: a
    /// leftmost-match loop over the pattern's own transducer.
    pub fn eval_reference(&self, w: &str) -> Output {
        match self {
            StrFun::Extract(i, e) => match encode_extract(*i, e) {
                Ok(t) => t.apply(w),
                Err(_) => Output::Undefined,
            },
            StrFun::Replace(p, r) => Output::Value(reference_replace(p, r, w, false)),
            StrFun::ReplaceAll(p, r) => Output::Value(reference_replace(p, r, w, true)),
        }
    }
}

/// One `y := T(x)` link of a pipeline.
#[derive(Clone, Debug)]
pub struct Stage {
    pub label: String,
    pub psst: Psst,
}

/// Applies the stages in order; undefined as soon as one stage is.
pub fn run_pipeline(stages: &[Stage], w: &str) -> Output {
    let mut cur = Output::Value(w.to_string());
    for s in stages {
        cur = match cur {
            Output::Value(v) => s.psst.apply(&v),
            _ => return Output::Undefined,
        };
    }
    cur
}

/// `extract_{i,e}`: undefined outside `L(e)`, null when group `i` did not participate.
pub fn encode_extract(i: u32, e: &Regex) -> Result<Psst, StrFunError> {
    let e = e.clone().numbered();
    let count = e.group_count();
    if i > count {
        return Err(StrFunError::GroupOutOfRange { index: i, count });
    }
    let c = compile(&e);
    // A group index without a group node (holes in the numbering) never matches.
    let out = match c.group_var(i) {
        Some(x) => vec![Sym::Var(x)],
        None => vec![Sym::Null],
    };
    Ok(c.t.to_output_psst(out).prune_vars())
}

/// Pattern `[Σ*?·(reg)]·Σ*` whose group `i + 1` is group `i` of the first match of `reg`.
pub fn first_match_regex(reg: &Regex, sigma: &Alphabet) -> Regex {
    let any = Regex::class(sigma.any());
    Regex::concat_all([Regex::star(any.clone(), true), Regex::group(reg.shift_groups(1), 1), Regex::star(any, false)])
        .numbered()
}

/// Group `i` of the first match of `reg`, as JavaScript's `str.match(reg)[i]`.
pub fn encode_first_match_extract(i: u32, reg: &Regex, sigma: &Alphabet) -> Result<Psst, StrFunError> {
    let count = reg.group_count();
    if i > count {
        return Err(StrFunError::GroupOutOfRange { index: i, count });
    }
    encode_extract(i + 1, &first_match_regex(reg, sigma))
}

fn app(x: VarId) -> Word {
    vec![Sym::Var(x), Sym::Input]
}

fn rename(w: &Word, from: VarId, to: VarId) -> Word {
    w.iter().map(|s| if *s == Sym::Var(from) { Sym::Var(to) } else { *s }).collect()
}

/// Shared part of `replace` and `replaceAll`: the pattern machine with one
/// mirror variable per reference, a scanning state and the output `x0`.
/// Returns the transducer, the scanning state, the pattern finals, the
/// output variable and the update performed when a match completes.
fn replace_core(pat: &Regex, rep: &Replacement, sigma: &CharSet) -> (Psst, StateId, Vec<StateId>, VarId, Assign) {
    assert!(rep.is_plain(), "special references must be eliminated first");
    let pat = pat.clone().numbered();
    let c = compile(&pat);
    let mut t = c.t.psst.clone();
    let pat_vars = t.num_vars();
    let x0 = t.add_var("x0");
    let mut word: Word = vec![Sym::Var(x0)];
    let mut mirrors = Vec::new();
    for seg in &rep.0 {
        match seg {
            RepSeg::Lit(l) => word.extend(l.chars().map(Sym::Char)),
            RepSeg::Group(i) => match c.group_var(*i) {
                Some(g) => {
                    let y = t.add_var(format!("y{}", mirrors.len() + 1));
                    mirrors.push((g, y));
                    word.push(Sym::Var(y));
                }
                // A reference to a group that never exists is always empty.
                None => {}
            },
            _ => unreachable!(),
        }
    }
    for s in &mut t.states {
        let assigns =
            s.letters.iter_mut().map(|e| &mut e.assign).chain(s.p1.iter_mut().chain(s.p2.iter_mut()).map(|e| &mut e.assign));
        for a in assigns {
            for &(g, y) in &mirrors {
                if let Some(w) = a.get(g) {
                    let w = rename(w, g, y);
                    a.set(y, w);
                }
            }
        }
    }
    let mut done = Assign::identity().with(x0, word);
    for x in (0..pat_vars).chain(mirrors.iter().map(|m| m.1)) {
        done.set(x, vec![Sym::Null]);
    }
    let scan = t.add_state("scan");
    let start = t.add_state("start");
    t.add_p1(start, scan, Assign::identity().with(x0, vec![]));
    t.add_p1(scan, c.t.init(), Assign::identity());
    t.add_letter(scan, sigma.clone(), scan, Assign::identity().with(x0, app(x0)));
    t.set_output(scan, Some(vec![Sym::Var(x0)]));
    t.init = start;
    let finals = c.t.finals().collect();
    (t, scan, finals, x0, done)
}

/// `replaceAll_{pat,rep}` for a replacement with plain references only.
pub fn encode_replace_all(pat: &Regex, rep: &Replacement, sigma: &CharSet) -> Psst {
    let (mut t, scan, finals, _, done) = replace_core(pat, rep, sigma);
    for f in finals {
        t.add_p1(f, scan, done.clone());
    }
    t.prune_vars()
}

/// `replace_{pat,rep}`: only the leftmost match is replaced.
pub fn encode_replace(pat: &Regex, rep: &Replacement, sigma: &CharSet) -> Psst {
    let (mut t, _, finals, x0, done) = replace_core(pat, rep, sigma);
    let rest = t.add_state("rest");
    t.add_letter(rest, sigma.clone(), rest, Assign::identity().with(x0, app(x0)));
    t.set_output(rest, Some(vec![Sym::Var(x0)]));
    for f in finals {
        t.add_p1(f, rest, done.clone());
    }
    t.prune_vars()
}

/// Inserts, after every `⟨`, the text read so far (markers excluded)
/// followed by another `⟨`. Copyful.
pub fn mark_prefix_psst(sigma: &CharSet) -> Psst {
    let mut t = Psst::new(0);
    let x = t.add_var("X");
    let o = t.add_var("O");
    let q0 = t.add_state("pre0");
    let q = t.add_state("pre");
    t.add_p1(q0, q, Assign::identity().with(x, vec![]).with(o, vec![]));
    t.add_letter(q, sigma.clone(), q, Assign::identity().with(x, app(x)).with(o, app(o)));
    let open = vec![Sym::Var(o), Sym::Char(MARK_OPEN), Sym::Var(x), Sym::Char(MARK_OPEN)];
    t.add_letter(q, CharSet::single(MARK_OPEN), q, Assign::identity().with(o, open));
    t.add_letter(q, CharSet::single(MARK_CLOSE), q, Assign::identity().with(o, app(o)));
    t.set_output(q, Some(vec![Sym::Var(o)]));
    t.init = q0;
    t
}

/// Run on the reversal of the output of [`mark_prefix_psst`]: after every
/// `⟩` inserts the text read so far, skipping the inserted prefixes that sit
/// between pairs of `⟨`, followed by another `⟩`. Copyful.
pub fn mark_suffix_psst(sigma: &CharSet) -> Psst {
    let mut t = Psst::new(0);
    let x = t.add_var("X");
    let o = t.add_var("O");
    let q0 = t.add_state("suf0");
    let q = t.add_state("suf");
    let inside = t.add_state("suf_in");
    t.add_p1(q0, q, Assign::identity().with(x, vec![]).with(o, vec![]));
    t.add_letter(q, sigma.clone(), q, Assign::identity().with(x, app(x)).with(o, app(o)));
    let close = vec![Sym::Var(o), Sym::Char(MARK_CLOSE), Sym::Var(x), Sym::Char(MARK_CLOSE)];
    t.add_letter(q, CharSet::single(MARK_CLOSE), q, Assign::identity().with(o, close));
    t.add_letter(q, CharSet::single(MARK_OPEN), inside, Assign::identity().with(o, app(o)));
    t.add_letter(inside, sigma.clone(), inside, Assign::identity().with(o, app(o)));
    t.add_letter(inside, CharSet::single(MARK_OPEN), q, Assign::identity().with(o, app(o)));
    t.set_output(q, Some(vec![Sym::Var(o)]));
    t.init = q0;
    t
}

/// Makes the whole match explicit as group 1.
fn eliminate_whole_match(pat: &Regex, rep: &Replacement) -> (Regex, Replacement) {
    let pat = Regex::group(pat.shift_groups(1), 1).numbered();
    let rep = rep.map_refs(|s| match s {
        RepSeg::Group(i) => RepSeg::Group(i + 1),
        RepSeg::WholeMatch => RepSeg::Group(1),
        other => other.clone(),
    });
    (pat, rep)
}

/// Rewrites `f` into a chain of transducers whose replacements only use
/// plain group references.
pub fn to_pipeline(f: &StrFun, sigma: &Alphabet) -> Result<Vec<Stage>, StrFunError> {
    let (pat, rep, global) = match f {
        StrFun::Extract(i, e) => {
            return Ok(vec![Stage { label: f.to_string(), psst: encode_extract(*i, e)? }]);
        }
        StrFun::Replace(p, r) => (p, r, false),
        StrFun::ReplaceAll(p, r) => (p, r, true),
    };
    let count = pat.group_count();
    if rep.max_group() > count {
        return Err(StrFunError::GroupOutOfRange { index: rep.max_group(), count });
    }
    let encode = |p: &Regex, r: &Replacement, s: &CharSet| {
        if global {
            encode_replace_all(p, r, s)
        } else {
            encode_replace(p, r, s)
        }
    };
    let (pat, rep) = if rep.has_whole_match() { eliminate_whole_match(pat, rep) } else { (pat.clone(), rep.clone()) };
    let plain = sigma.any();
    if !rep.has_context() {
        return Ok(vec![Stage { label: f.to_string(), psst: encode(&pat, &rep, &plain) }]);
    }
    let marked = sigma.with_markers();
    let k = pat.group_count();
    let mark_rep = Replacement(vec![
        RepSeg::Lit(MARK_OPEN.to_string()),
        RepSeg::Group(1),
        RepSeg::Lit(MARK_CLOSE.to_string()),
    ]);
    let mark_pat = Regex::group(pat.shift_groups(1), 1).numbered();
    let any = Regex::class(sigma.any());
    let final_pat = Regex::concat_all([
        Regex::char(MARK_OPEN),
        Regex::group(Regex::star(any.clone(), true), 1),
        Regex::char(MARK_OPEN),
        pat.shift_groups(1),
        Regex::char(MARK_CLOSE),
        Regex::group(Regex::star(any, true), k + 2),
        Regex::char(MARK_CLOSE),
    ])
    .numbered();
    let final_rep = rep.map_refs(|s| match s {
        RepSeg::Group(i) => RepSeg::Group(i + 1),
        RepSeg::Before => RepSeg::Group(1),
        RepSeg::After => RepSeg::Group(k + 2),
        RepSeg::WholeMatch | RepSeg::Lit(_) => unreachable!(),
    });
    Ok(vec![
        Stage { label: format!("mark matches of /{pat}/"), psst: encode(&mark_pat, &mark_rep, &plain) },
        Stage { label: "insert prefixes".into(), psst: mark_prefix_psst(&plain) },
        Stage { label: "reverse".into(), psst: Psst::reverse(&marked) },
        Stage { label: "insert suffixes".into(), psst: mark_suffix_psst(&plain) },
        Stage { label: "reverse".into(), psst: Psst::reverse(&marked) },
        Stage { label: f.to_string(), psst: encode(&final_pat, &final_rep, &marked) },
    ])
}

/// Group values of the highest-priority match of `pat` starting at the
/// beginning of `w`, or `None` if there is none. Index 0 is the match.
fn match_prefix(pat: &Regex, w: &str) -> Option<Vec<Option<String>>> {
    let e = Regex::concat(pat.clone(), Regex::star(Regex::class(CharSet::range(0, 0x10ffff)), false)).numbered();
    let c = compile(&e);
    let t = c.t.to_output_psst(vec![]);
    let r = t.run_with(w, crate::psst::RunOptions { memo: true });
    if !r.output.is_defined() {
        return None;
    }
    let vals = t.valuation_after(&r.trace);
    let root = c.node_var(1).expect("pattern node");
    let mut groups = vec![vals[root].clone()];
    for i in 1..=pat.group_count() {
        groups.push(c.group_var(i).and_then(|x| vals[x].clone()));
    }
    Some(groups)
}

fn reference_replace(pat: &Regex, rep: &Replacement, w: &str, global: bool) -> String {
    let cs: Vec<char> = w.chars().collect();
    let mut out = String::new();
    let mut p = 0;
    let mut replaced = false;
    while p <= cs.len() {
        let rest: String = cs[p..].iter().collect();
        let found = if replaced && !global { None } else { match_prefix(pat, &rest) };
        match found {
            Some(groups) => {
                replaced = true;
                let m = groups[0].clone().unwrap_or_default().chars().count();
                let before: String = cs[..p].iter().collect();
                let after: String = cs[p + m..].iter().collect();
                out.push_str(&rep.instantiate(&groups, &before, &after));
                if m == 0 {
                    if p < cs.len() {
                        out.push(cs[p]);
                    }
                    p += 1;
                } else {
                    p += m;
                }
            }
            None => {
                if p < cs.len() {
                    out.push(cs[p]);
                }
                p += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regex::parse_js;
    use proptest::prelude::*;

    fn re(s: &str) -> Regex {
        parse_js(s, &Alphabet::ascii()).unwrap()
    }

    fn ascii() -> Alphabet {
        Alphabet::ascii()
    }

    fn val(s: &str) -> Output {
        Output::Value(s.into())
    }

    fn all(p: &str, r: &str) -> StrFun {
        let pat = re(p);
        let n = pat.group_count();
        StrFun::ReplaceAll(pat, Replacement::parse_js(r, n))
    }

    fn first(p: &str, r: &str) -> StrFun {
        let pat = re(p);
        let n = pat.group_count();
        StrFun::Replace(pat, Replacement::parse_js(r, n))
    }

    fn run(f: &StrFun, w: &str) -> Output {
        run_pipeline(&to_pipeline(f, &ascii()).unwrap(), w)
    }

    #[test]
    fn parses_js_replacements() {
        use RepSeg::*;
        let r = Replacement::parse_js("$2, $1$$ $& $` $' $0 $9 $12x $", 12);
        assert_eq!(
            r.0,
            vec![
                Group(2),
                Lit(", ".into()),
                Group(1),
                Lit("$ ".into()),
                WholeMatch,
                Lit(" ".into()),
                Before,
                Lit(" ".into()),
                After,
                Lit(" $0 ".into()),
                Group(9),
                Lit(" ".into()),
                Group(12),
                Lit("x $".into()),
            ]
        );
        assert_eq!(Replacement::parse_js("$12", 1).0, vec![Group(1), Lit("2".into())]);
        assert_eq!(Replacement::parse_js("$3", 2).0, vec![Lit("$3".into())]);
    }

    #[test]
    fn extract_examples() {
        let t = encode_extract(1, &re(r"(\d+)(\d*)")).unwrap();
        assert_eq!(t.apply("2050"), val("2050"));
        let t = encode_extract(1, &re("a+|(a*)")).unwrap();
        assert_eq!(t.apply("aa"), Output::Null);
        assert_eq!(t.apply("b"), Output::Undefined);
        let t = encode_extract(0, &re("a+|(a*)")).unwrap();
        for w in ["", "a", "aaa"] {
            assert_eq!(t.apply(w), val(w));
        }
        let t = encode_extract(1, &re("(.*?)0*")).unwrap();
        assert_eq!(t.apply("2500"), val("25"));
        assert!(matches!(encode_extract(3, &re("(a)")), Err(StrFunError::GroupOutOfRange { index: 3, count: 1 })));
    }

    #[test]
    fn first_match_examples() {
        let name = re(r"[A-Z][a-z]*(?: [A-Z]\.)?(?: [A-Z][a-z]*)?");
        let t = encode_first_match_extract(0, &name, &ascii()).unwrap();
        assert_eq!(t.apply("Alice M. Brown and John Smith"), val("Alice M. Brown"));
        let t = encode_first_match_extract(0, &re("a"), &ascii()).unwrap();
        assert_eq!(t.apply("bab"), val("a"));
        assert_eq!(t.apply("bbb"), Output::Undefined);
        let t = encode_first_match_extract(0, &re("a+"), &ascii()).unwrap();
        assert_eq!(t.apply("baab"), val("aa"));
        let t = encode_first_match_extract(1, &re("(a+?)b"), &ascii()).unwrap();
        assert_eq!(t.apply("xaab"), val("aa"));
    }

    #[test]
    fn name_swap() {
        let f = all("([A-Za-z]+) ([A-Za-z]+)", "$2, $1");
        assert_eq!(run(&f, "Don Knuth; Alan Turing"), val("Knuth, Don; Turing, Alan"));
        assert!(to_pipeline(&f, &ascii()).unwrap()[0].psst.check_copyless());
    }

    #[test]
    fn replace_all_basics() {
        assert_eq!(run(&all("a", "b"), "aaa"), val("bbb"));
        assert_eq!(run(&all("q", "b"), "xyz"), val("xyz"));
        assert_eq!(run(&all("a", "b"), ""), val(""));
        assert_eq!(run(&all("x*", "-"), "abc"), val("-a-b-c-"));
        assert_eq!(run(&all("a*", "-"), "aa"), val("--"));
        assert_eq!(run(&all("(a)|b", "[$1]"), "ab"), val("[a][]"));
        assert_eq!(run(&all("a", "$1"), "a"), val("$1"));
    }

    #[test]
    fn replace_first_only() {
        assert_eq!(run(&first("0+", ""), "0250"), val("250"));
        assert_eq!(run(&first("a", "b"), "aaa"), val("baa"));
        assert_eq!(run(&first("q", "b"), "xyz"), val("xyz"));
    }

    #[test]
    fn special_references() {
        assert_eq!(run(&all("a", "$`"), "xay"), val("xxy"));
        assert_eq!(run(&all("a", "$'"), "xay"), val("xyy"));
        assert_eq!(run(&all("b+", "<$&>"), "abbcb"), val("a<bb>c<b>"));
        assert_eq!(run(&all("(b)", "[$`|$1|$'|$&]"), "abc"), val("a[a|b|c|b]c"));
        assert_eq!(run(&first("b", "$`$'"), "abcb"), val("aacbcb"));
        assert_eq!(run(&all("x*", "$`"), "ab"), val("aabab"));
        assert_eq!(to_pipeline(&all("a", "$`"), &ascii()).unwrap().len(), 6);
        assert_eq!(to_pipeline(&all("a", "$&"), &ascii()).unwrap().len(), 1);
    }

    #[test]
    fn prefix_marker_trace() {
        let t = mark_prefix_psst(Alphabet::ascii().chars());
        let o = MARK_OPEN;
        let c = MARK_CLOSE;
        let input = format!("ab{o}c{c}d{o}e{c}f");
        assert_eq!(t.apply(&input), val(&format!("ab{o}ab{o}c{c}d{o}abcd{o}e{c}f")));
        assert!(!t.check_copyless());
    }

    #[test]
    fn reference_agrees_on_examples() {
        let cases = [
            (all("a", "$`"), "xay", "xxy"),
            (all("([A-Za-z]+) ([A-Za-z]+)", "$2, $1"), "Don Knuth; Alan Turing", "Knuth, Don; Turing, Alan"),
            (all("x*", "-"), "abc", "-a-b-c-"),
            (first("0+", ""), "0250", "250"),
        ];
        for (f, w, want) in cases {
            assert_eq!(f.eval_reference(w), val(want), "{f} on {w:?}");
        }
    }

    fn arb_fun() -> impl Strategy<Value = StrFun> {
        let pats = prop::sample::select(vec![
            "a", "a+", "a*", "a*?", "(a)|b", "(a+)(b*)", "(a|ab)(c|bcd)?", "b(a?)", "(?:ab)*", "(a*)+", "a{1,2}?", "",
        ]);
        let reps = prop::sample::select(vec!["x", "", "$1", "[$&]", "$`", "$'", "$2$1", "<$1|$`>"]);
        (pats, reps, any::<bool>()).prop_map(|(p, r, g)| if g { all(p, r) } else { first(p, r) })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(120))]

        #[test]
        fn encoding_matches_reference(f in arb_fun(), w in "[abcd]{0,6}") {
            let stages = to_pipeline(&f, &Alphabet::from_str_chars("abcdx")).unwrap();
            prop_assert_eq!(run_pipeline(&stages, &w), f.eval_reference(&w), "{}", f);
        }

        #[test]
        fn plain_replacements_are_copyless_and_bounded(f in arb_fun(), w in "[ab]{0,6}") {
            let stages = to_pipeline(&f, &Alphabet::from_str_chars("ab")).unwrap();
            if stages.len() == 1 {
                prop_assert!(stages[0].psst.check_copyless());
            }
            for s in &stages {
                prop_assert!(s.psst.validate().is_ok());
            }
            let r = stages[0].psst.run(&w);
            prop_assert!(r.max_depth <= stages[0].psst.run_length_bound(w.chars().count()));
        }
    }
}
