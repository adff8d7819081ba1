//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use capstr::calculus::{verify_model, Formula, Function, Lang, Limits, Model, Solver, Verdict};
use capstr::charset::{Alphabet, CharSet};
use capstr::fa::{concat_preimage, Fa};
use capstr::oracle::{operator_pairs, sample_word, small_corpus, CorpusEntry};
use capstr::preimage::{preimage, Budget, Mode};
use capstr::psst::{compare_priority, Output, Psst, RunOptions};
use capstr::regex::parse_js;
use capstr::smtlib::{parse_script, Command, Options, Session};
use capstr::strfun::{
    encode_extract, encode_first_match_extract, encode_replace, encode_replace_all, run_pipeline, to_pipeline,
    Replacement, Stage, StrFun,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("author-list replaceAll constraint is unsat within 60 s", author_list),
        ("normalize path constraint is unsat; normalize pipeline outputs", normalize),
        ("calculus examples: first unsat, second sat with verified model", calculus_examples),
        ("pre-image oracle suite (500 cases, words <= 6)", preimage_suite),
        ("concatenation pre-image suite (100 FAs, |uv| <= 8)", concat_suite),
        ("run determinism and run-length bound on the operator-pair corpus", determinism),
        ("copyless replace encodings; copyless pre-image agrees with general", copyless),
        ("extraction semantics: null group, greedy vs lazy", extraction),
        ("straight-line formulas agree with brute force (200 formulas)", straight_line),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS {}. {name} [{secs:.1}s] {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name} [{secs:.1}s] {detail}", i + 1)
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ab() -> Alphabet {
    Alphabet::from_str_chars("ab")
}

fn words(max: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..max {
        layer = layer.iter().flat_map(|w| ['a', 'b'].map(|c| format!("{w}{c}"))).collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn random_fa(rng: &mut impl Rng, max_states: usize) -> Fa {
    let k = rng.gen_range(1..=max_states);
    let mut fa = Fa::new();
    for _ in 1..k {
        fa.add_state();
    }
    for q in 0..k {
        fa.set_final(q, rng.gen_bool(0.4));
    }
    for _ in 0..rng.gen_range(0..=3 * k) {
        let (p, q) = (rng.gen_range(0..k), rng.gen_range(0..k));
        match rng.gen_range(0..5) {
            0 | 1 => fa.add_edge(p, CharSet::single('a'), q),
            2 | 3 => fa.add_edge(p, CharSet::single('b'), q),
            _ => fa.add_eps(p, q),
        }
    }
    fa
}

fn script_verdict(file: &str, timeout: Duration) -> Result<(String, Option<String>, Duration), String> {
    let path = format!("{}/tests/data/{file}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let sigma = Alphabet::ascii();
    let script = parse_script(&text, &sigma).map_err(|e| e.to_string())?;
    let mut s = Session::new(sigma, Options { timeout: Some(timeout), ..Options::default() });
    let start = Instant::now();
    let mut verdict = None;
    let mut model = None;
    for c in &script.commands {
        if matches!(c, Command::GetModel) && verdict.as_deref() != Some("sat") {
            continue;
        }
        let lines = s.run(c).map_err(|e| e.to_string())?;
        match c {
            Command::CheckSat => verdict = Some(lines.join(" ")),
            Command::GetModel => model = Some(lines.join(" ").replace('\n', " ")),
            _ => {}
        }
    }
    Ok((verdict.ok_or("no check-sat")?, model, start.elapsed()))
}

fn author_list() -> Result<String, String> {
    let (verdict, model, t) = script_verdict("author_list.smt2", Duration::from_secs(60))?;
    let detail = format!("answer {verdict} in {:.1}s", t.as_secs_f64());
    if verdict == "unsat" && t < Duration::from_secs(60) {
        Ok(detail)
    } else {
        Err(format!("{detail}; model {}", model.unwrap_or_default()))
    }
}

fn js_fun(f: StrFun) -> Function {
    Function::compile(&f, &Alphabet::ascii()).unwrap()
}

fn extract(i: u32, re: &str) -> Function {
    js_fun(StrFun::Extract(i, parse_js(re, &Alphabet::ascii()).unwrap()))
}

/// normalize(decimal): strip leading zeros of the integer part and trailing
/// zeros of the fractional part.
fn normalize_eval(decimal: &str) -> Option<String> {
    let value = |o: Output| o.value().map(str::to_string);
    let d1 = value(extract(1, r"(\d+)\.?(\d*)").apply(Some(decimal)))?;
    let d2 = value(extract(2, r"(\d+)\.?(\d*)").apply(Some(decimal)))?;
    let mut integer = value(extract(1, "0*(.*)").apply(Some(&d1)))?;
    let fractional = value(extract(1, "(.*?)0*").apply(Some(&d2)))?;
    if integer.is_empty() {
        integer = "0".into();
    }
    Some(if fractional.is_empty() { integer } else { format!("{integer}.{fractional}") })
}

fn normalize() -> Result<String, String> {
    let (verdict, _, t) = script_verdict("normalize.smt2", Duration::from_secs(60))?;
    if verdict != "unsat" {
        return Err(format!("path constraint answered {verdict}"));
    }
    for (input, want) in [("0.250", "0.25"), ("02.50", "2.5"), ("025.0", "25"), ("0250", "250")] {
        let got = normalize_eval(input);
        if got.as_deref() != Some(want) {
            return Err(format!("normalize({input:?}) = {got:?}, expected {want:?}"));
        }
    }
    Ok(format!("unsat in {:.3}s; 4/4 outputs", t.as_secs_f64()))
}

fn calculus_examples() -> Result<String, String> {
    let sigma = Alphabet::ascii();
    let a_to_b = Arc::new(js_fun(StrFun::ReplaceAll(
        parse_js("a", &sigma).unwrap(),
        Replacement::parse_js("b", 0),
    )));
    let a_plus = Lang::from_regex(&parse_js("a+", &sigma).unwrap());
    let first = Formula::And(vec![
        Formula::concat("x", "y", "z"),
        Formula::member("y", a_plus.clone()),
        Formula::member("z", Lang::universal(&sigma)),
        Formula::app("x", &a_to_b, "x"),
    ]);
    let second = Formula::And(vec![
        Formula::concat("x", "y", "z"),
        Formula::member("x", a_plus),
        Formula::app("r", &a_to_b, "x"),
    ]);
    let solver = Solver::new(sigma);
    let v1 = solver.solve(&first).verdict;
    if !matches!(v1, Verdict::Unsat) {
        return Err(format!("first example answered {}", v1.name()));
    }
    let Verdict::Sat(m) = solver.solve(&second).verdict else {
        return Err("second example is not sat".into());
    };
    if !verify_model(&second, &m) {
        return Err(format!("model {m:?} does not verify"));
    }
    let witness: Model =
        [("x", "a"), ("y", ""), ("z", "a"), ("r", "b")].iter().map(|(k, v)| (k.to_string(), Some(v.to_string()))).collect();
    if !verify_model(&second, &witness) {
        return Err("the witness x=a, y=\"\", z=a, r=b does not verify".into());
    }
    Ok(format!("model {}", render(&m)))
}

fn render(m: &Model) -> String {
    m.iter().map(|(k, v)| format!("{k}={:?}", v.as_deref().unwrap_or("⊥"))).collect::<Vec<_>>().join(" ")
}

/// The four function shapes drawn from a corpus regex.
fn corpus_functions(e: &CorpusEntry, sigma: &Alphabet) -> Vec<(String, Vec<Stage>)> {
    let rep = Replacement::parse_js("b$1", 1);
    let single = |label: String, psst: Psst| vec![Stage { label, psst }];
    vec![
        (format!("extract {}", e.id), single(e.id.clone(), encode_extract(1, &e.regex).unwrap())),
        (format!("match {}", e.id), single(e.id.clone(), encode_first_match_extract(1, &e.regex, sigma).unwrap())),
        (format!("replace {}", e.id), to_pipeline(&StrFun::Replace(e.regex.clone(), rep.clone()), sigma).unwrap()),
        (format!("replaceAll {}", e.id), to_pipeline(&StrFun::ReplaceAll(e.regex.clone(), rep), sigma).unwrap()),
    ]
}

fn pipeline_preimage(stages: &[Stage], a: &Fa) -> Result<Fa, String> {
    let mut cur = a.clone();
    for s in stages.iter().rev() {
        cur = preimage(&s.psst, &cur, false, Mode::General, Budget::default()).map_err(|e| e.to_string())?;
    }
    Ok(cur)
}

fn preimage_suite() -> Result<String, String> {
    let sigma = ab();
    let corpus = small_corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs = words(6);
    let mut checked = 0usize;
    for case in 0..500 {
        let e = &corpus[rng.gen_range(0..corpus.len())];
        let fns = corpus_functions(e, &sigma);
        let (label, stages) = &fns[case % fns.len()];
        let a = random_fa(&mut rng, 5);
        let pre = pipeline_preimage(stages, &a).map_err(|err| format!("case {case} ({label}): {err}"))?;
        for w in &inputs {
            let expect = matches!(run_pipeline(stages, w), Output::Value(v) if a.accepts(&v));
            if pre.accepts(w) != expect {
                return Err(format!("case {case} ({label}) on {w:?}: pre-image says {}", !expect));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} word checks, 0 mismatches"))
}

fn concat_suite() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let ws = words(8);
    let mut checked = 0usize;
    for case in 0..100 {
        let a = random_fa(&mut rng, 5);
        let splits = concat_preimage(&a);
        for u in &ws {
            for v in ws.iter().filter(|v| u.len() + v.len() <= 8) {
                let covered = splits.iter().any(|(b, c)| b.accepts(u) && c.accepts(v));
                if covered != a.accepts(&format!("{u}{v}")) {
                    return Err(format!("case {case}: ({u:?}, {v:?}) covered={covered}"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} pairs, 0 mismatches"))
}

fn determinism() -> Result<String, String> {
    let ascii = Alphabet::ascii();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let pool: Vec<char> = "azAZ09#".chars().collect();
    let (mut runs, mut defined) = (0usize, 0usize);
    for e in operator_pairs() {
        let lang = Fa::from_regex(&e.regex);
        let ts = [encode_extract(1, &e.regex).unwrap(), encode_first_match_extract(1, &e.regex, &ascii).unwrap()];
        let mut inputs: Vec<String> = (0..=12).filter_map(|n| sample_word(&lang, n, &mut rng)).collect();
        for _ in 0..6 {
            let n = rng.gen_range(0..=12);
            inputs.push((0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect());
        }
        for t in &ts {
            for w in &inputs {
                let n = w.chars().count();
                let r = t.run(w);
                let bound = t.run_length_bound(n);
                if r.max_depth > bound || r.trace.len() > bound {
                    return Err(format!("{} on {w:?}: depth {} exceeds bound {bound}", e.id, r.max_depth));
                }
                if t.run_with(w, RunOptions { memo: true }).output != r.output {
                    return Err(format!("{} on {w:?}: memoized run differs", e.id));
                }
                let all = t.enumerate_runs(w, 32);
                match all.first() {
                    None if r.output == Output::Undefined => {}
                    None => return Err(format!("{} on {w:?}: run found but enumeration empty", e.id)),
                    Some(best) => {
                        defined += 1;
                        if *best != r.trace || t.eval_trace(best) != r.output {
                            return Err(format!("{} on {w:?}: chosen run is not the maximal one", e.id));
                        }
                        if let Some(i) =
                            (1..all.len()).find(|&i| compare_priority(&all[i - 1], &all[i]) != Ordering::Greater)
                        {
                            return Err(format!("{} on {w:?}: runs {} and {i} out of order", e.id, i - 1));
                        }
                        if all.iter().any(|tr| tr.len() > bound) {
                            return Err(format!("{} on {w:?}: enumerated run exceeds bound", e.id));
                        }
                    }
                }
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs ({defined} defined)"))
}

fn copyless() -> Result<String, String> {
    let ascii = Alphabet::ascii();
    let reps = ["$1", "b$1", "$1$1", "", "<$1>"];
    let mut checked = 0usize;
    for e in operator_pairs() {
        for r in reps {
            let rep = Replacement::parse_js(r, 1);
            for (kind, t) in [
                ("replace", encode_replace(&e.regex, &rep, ascii.chars())),
                ("replaceAll", encode_replace_all(&e.regex, &rep, ascii.chars())),
            ] {
                if !t.check_copyless() {
                    return Err(format!("{kind} {} with {r:?} is not copyless", e.id));
                }
                checked += 1;
            }
        }
    }
    let sigma = ab();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let corpus = small_corpus();
    let mut compared = 0usize;
    for e in &corpus {
        for (label, stages) in corpus_functions(e, &sigma) {
            for s in stages.iter().filter(|s| s.psst.check_copyless()) {
                for _ in 0..2 {
                    let a = random_fa(&mut rng, 4);
                    let general = preimage(&s.psst, &a, false, Mode::General, Budget::default());
                    let pairs = preimage(&s.psst, &a, false, Mode::Copyless, Budget::default());
                    match (general, pairs) {
                        (Ok(g), Ok(p)) if g.equivalent(&p, sigma.chars()) => compared += 1,
                        (g, p) => return Err(format!("{label}: general {:?} vs copyless {:?}", g.is_ok(), p.is_ok())),
                    }
                }
            }
        }
    }
    Ok(format!("{checked} encodings checked; {compared} pre-image pairs equivalent"))
}

fn extraction() -> Result<String, String> {
    let ascii = Alphabet::ascii();
    let group = |i: u32, re: &str, w: &str| encode_extract(i, &parse_js(re, &ascii).unwrap()).unwrap().apply(w);
    let cases = [
        (1, "a+|(a*)", "aa", Output::Null),
        (1, "(a*)[ab]*", "aaa", Output::Value("aaa".into())),
        (1, "(a*?)[ab]*", "aaa", Output::Value(String::new())),
        (2, "((a)|b)*", "ab", Output::Null),
        (1, "([a-z]*?)*", "aaa", Output::Value("a".into())),
    ];
    for (i, re, w, want) in &cases {
        let got = group(*i, re, w);
        if got != *want {
            return Err(format!("group {i} of /{re}/ on {w:?} is {got:?}, expected {want:?}"));
        }
    }
    Ok(format!("{} cases", cases.len()))
}

#[derive(Clone)]
enum Def {
    Fun(Arc<Function>, usize),
    Concat(usize, usize),
}

/// A random straight-line formula over inputs `x0`, `x1` of length at most
/// four and up to three defined variables.
fn random_sl(rng: &mut ChaCha8Rng, corpus: &[CorpusEntry], pool: &[Arc<Function>]) -> (Formula, Vec<Def>, usize) {
    let sigma = ab();
    let inputs = 2;
    let n_defs = rng.gen_range(1..=3);
    let mut parts = Vec::new();
    let mut defs = Vec::new();
    for k in 0..n_defs {
        let avail = inputs + k;
        let d = if rng.gen_bool(0.7) {
            Def::Fun(pool[rng.gen_range(0..pool.len())].clone(), rng.gen_range(0..avail))
        } else {
            Def::Concat(rng.gen_range(0..avail), rng.gen_range(0..avail))
        };
        let y = name(inputs + k);
        parts.push(match &d {
            Def::Fun(f, x) => Formula::app(&y, f, &name(*x)),
            Def::Concat(a, b) => Formula::concat(&y, &name(*a), &name(*b)),
        });
        defs.push(d);
    }
    let total = inputs + n_defs;
    for _ in 0..rng.gen_range(1..=3) {
        let x = name(rng.gen_range(0..total));
        let lang = if rng.gen_bool(0.8) {
            Lang::from_regex(&corpus[rng.gen_range(0..corpus.len())].regex)
        } else {
            Lang::universal(&sigma)
        };
        parts.push(if rng.gen_bool(0.3) { Formula::not_member(&x, lang) } else { Formula::member(&x, lang) });
    }
    // The last defined variable is always constrained.
    let last = name(total - 1);
    let lang = Lang::from_regex(&corpus[rng.gen_range(0..corpus.len())].regex);
    parts.push(Formula::member(&last, lang));
    // Inputs range over the words the brute force enumerates, so both sides
    // decide the same formula.
    let short = Lang::from_regex(&parse_js("[ab]{0,4}", &sigma).unwrap());
    for i in 0..inputs {
        parts.push(Formula::member(&name(i), short.clone()));
    }
    (Formula::And(parts), defs, inputs)
}

fn name(i: usize) -> String {
    if i < 2 {
        format!("x{i}")
    } else {
        format!("y{}", i - 1)
    }
}

fn brute_force(phi: &Formula, defs: &[Def], inputs: usize, max: usize, cache: &mut HashMap<(usize, Option<String>), Output>) -> Option<Model> {
    let ws = words(max);
    let mut idx = vec![0usize; inputs];
    loop {
        let mut vals: Vec<Option<String>> = idx.iter().map(|&i| Some(ws[i].clone())).collect();
        let mut ok = true;
        for d in defs {
            let v = match d {
                Def::Concat(a, b) => {
                    Some(format!("{}{}", vals[*a].as_deref().unwrap_or(""), vals[*b].as_deref().unwrap_or("")))
                }
                Def::Fun(f, x) => {
                    let key = (Arc::as_ptr(f) as usize, vals[*x].clone());
                    match cache.entry(key).or_insert_with(|| f.apply(vals[*x].as_deref())).clone() {
                        Output::Value(v) => Some(v),
                        Output::Null => None,
                        Output::Undefined => {
                            ok = false;
                            None
                        }
                    }
                }
            };
            if !ok {
                break;
            }
            vals.push(v);
        }
        if ok {
            let m: Model = vals.into_iter().enumerate().map(|(i, v)| (name(i), v)).collect();
            if phi.eval(&m) {
                return Some(m);
            }
        }
        let mut k = 0;
        loop {
            if k == inputs {
                return None;
            }
            idx[k] += 1;
            if idx[k] < ws.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn straight_line() -> Result<String, String> {
    let sigma = ab();
    let corpus = small_corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut pool = Vec::new();
    for i in 0..24 {
        let e = &corpus[rng.gen_range(0..corpus.len())];
        let rep = Replacement::parse_js(["b$1", "$1", "a"][i % 3], 1);
        let f = match i % 4 {
            0 => Function::compile(&StrFun::Extract(1, e.regex.clone()), &sigma),
            1 => Ok(Function::from_psst(format!("match {}", e.id), encode_first_match_extract(1, &e.regex, &sigma).unwrap())),
            2 => Function::compile(&StrFun::Replace(e.regex.clone(), rep), &sigma),
            _ => Function::compile(&StrFun::ReplaceAll(e.regex.clone(), rep), &sigma),
        };
        pool.push(Arc::new(f.unwrap()));
    }
    let mut cache = HashMap::new();
    let (mut sat, mut unsat) = (0, 0);
    for case in 0..200 {
        let (phi, defs, inputs) = random_sl(&mut rng, &corpus, &pool);
        let limits = Limits { deadline: Some(Instant::now() + Duration::from_secs(30)), ..Limits::default() };
        let verdict = Solver::new(sigma.clone()).with_limits(limits).solve(&phi).verdict;
        let brute = brute_force(&phi, &defs, inputs, 4, &mut cache);
        match (&verdict, &brute) {
            (Verdict::Sat(m), Some(_)) => {
                if !verify_model(&phi, m) {
                    return Err(format!("case {case}: model {} does not verify", render(m)));
                }
                sat += 1;
            }
            (Verdict::Unsat, None) => unsat += 1,
            (Verdict::Sat(m), None) => {
                return Err(format!("case {case}: solver sat with {}, brute force found none; {phi}", render(m)))
            }
            (Verdict::Unsat, Some(m)) => {
                return Err(format!("case {case}: solver unsat, brute force found {}; {phi}", render(m)))
            }
            (Verdict::Unknown(r), _) => return Err(format!("case {case}: unknown ({r})")),
        }
    }
    Ok(format!("{sat} sat, {unsat} unsat"))
}
