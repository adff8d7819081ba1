//! Operator-pair regex corpus and the JSON manifest consumed by the
//! JavaScript validation runner.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::charset::Alphabet;
use crate::fa::Fa;
use crate::psst::Output;
use crate::regex::{parse_js, Regex};
use crate::strfun::{encode_first_match_extract, run_pipeline, to_pipeline, Replacement, StrFun};

/// The ten regex operators of the validation corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Alt,
    Concat,
    Opt,
    LazyOpt,
    Star,
    LazyStar,
    Plus,
    LazyPlus,
    Repeat,
    LazyRepeat,
}

pub const OPS: [Op; 10] = [
    Op::Alt,
    Op::Concat,
    Op::Opt,
    Op::LazyOpt,
    Op::Star,
    Op::LazyStar,
    Op::Plus,
    Op::LazyPlus,
    Op::Repeat,
    Op::LazyRepeat,
];

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Alt => "alt",
            Op::Concat => "cat",
            Op::Opt => "opt",
            Op::LazyOpt => "opt-lazy",
            Op::Star => "star",
            Op::LazyStar => "star-lazy",
            Op::Plus => "plus",
            Op::LazyPlus => "plus-lazy",
            Op::Repeat => "rep",
            Op::LazyRepeat => "rep-lazy",
        }
    }

    /// JavaScript source of the operator applied to `x`; binary operators
    /// take `other` as their second argument.
    fn apply(self, x: &str, other: &str) -> String {
        match self {
            Op::Alt => format!("{x}|{other}"),
            Op::Concat => format!("{x}{other}"),
            Op::Opt => format!("{x}?"),
            Op::LazyOpt => format!("{x}??"),
            Op::Star => format!("{x}*"),
            Op::LazyStar => format!("{x}*?"),
            Op::Plus => format!("{x}+"),
            Op::LazyPlus => format!("{x}+?"),
            Op::Repeat => format!("{x}{{1,3}}"),
            Op::LazyRepeat => format!("{x}{{1,3}}?"),
        }
    }
}

/// One corpus regex: the innermost operator application is capture group 1.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub id: String,
    pub source: String,
    pub regex: Regex,
}

/// One regex per element of `O ∪ O²`, 110 in total.
pub fn operator_pairs() -> Vec<CorpusEntry> {
    let sigma = Alphabet::ascii();
    let mut out = Vec::new();
    let mk = |id: String, source: String| {
        let regex = parse_js(&source, &sigma).expect("corpus regex parses");
        CorpusEntry { id, source, regex }
    };
    for o in OPS {
        out.push(mk(o.name().to_string(), format!("({})", o.apply("[a-z]", "[A-Z]"))));
    }
    for o1 in OPS {
        for o2 in OPS {
            let inner = format!("({})", o1.apply("[a-z]", "[A-Z]"));
            out.push(mk(format!("{}.{}", o1.name(), o2.name()), o2.apply(&inner, "[0-9]")));
        }
    }
    out
}

/// The same shapes over `{a, b}`, for suites that enumerate inputs.
pub fn small_corpus() -> Vec<CorpusEntry> {
    let sigma = Alphabet::from_str_chars("ab");
    operator_pairs()
        .into_iter()
        .map(|e| {
            let source = e.source.replace("[a-z]", "a").replace("[A-Z]", "b").replace("[0-9]", "b");
            let regex = parse_js(&source, &sigma).expect("small corpus regex parses");
            CorpusEntry { id: e.id, source, regex }
        })
        .collect()
}

/// A random word of `L(fa)` with exactly `len` letters, if there is one.
pub fn sample_word(fa: &Fa, len: usize, rng: &mut impl Rng) -> Option<String> {
    let fa = fa.remove_eps();
    let n = fa.num_states();
    // ok[k][q]: some word of length k leads from q to a final state.
    let mut ok = vec![vec![false; n]; len + 1];
    for q in 0..n {
        ok[0][q] = fa.is_final(q);
    }
    for k in 1..=len {
        for q in 0..n {
            ok[k][q] = fa.edges(q).iter().any(|(l, t)| !l.is_empty() && ok[k - 1][*t]);
        }
    }
    if !ok[len][fa.initial()] {
        return None;
    }
    let mut q = fa.initial();
    let mut w = String::new();
    for k in (1..=len).rev() {
        let choices: Vec<_> = fa.edges(q).iter().filter(|(l, t)| !l.is_empty() && ok[k - 1][*t]).collect();
        let (l, t) = choices[rng.gen_range(0..choices.len())];
        let (lo, hi) = l.ranges()[rng.gen_range(0..l.ranges().len())];
        let c = char::from_u32(rng.gen_range(lo..=hi.min(lo + 25)));
        w.push(c.unwrap_or_else(|| l.min_char().unwrap()));
        q = *t;
    }
    Some(w)
}

/// An input of length at least 10 containing a match of `e`.
pub fn long_input(e: &Regex, rng: &mut impl Rng) -> String {
    let fa = Fa::from_regex(e);
    for len in (10..=12).chain((0..10).rev()) {
        if let Some(mut w) = sample_word(&fa, len, rng) {
            while w.chars().count() < 10 {
                w.push('#');
            }
            return w;
        }
    }
    "#".repeat(10)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    #[serde(rename = "match-group-1")]
    MatchGroup1,
    Replace,
    ReplaceAll,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCase {
    pub id: String,
    pub kind: Kind,
    /// JavaScript source without delimiters or flags.
    pub regex: String,
    pub input: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replacement: Option<String>,
    /// `null` when the group did not participate.
    pub expected: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub cases: Vec<OracleCase>,
}

/// Runs the transducer encoding of the case; `Err` when it is undefined.
pub fn psst_output(kind: &Kind, regex: &str, input: &str, replacement: Option<&str>) -> Result<Option<String>, String> {
    let sigma = Alphabet::ascii();
    let e = parse_js(regex, &sigma).map_err(|e| e.to_string())?;
    let out = match kind {
        Kind::MatchGroup1 => encode_first_match_extract(1, &e, &sigma).map_err(|e| e.to_string())?.apply(input),
        Kind::Replace | Kind::ReplaceAll => {
            let rep = Replacement::parse_js(replacement.unwrap_or(""), e.group_count());
            let f = if *kind == Kind::Replace { StrFun::Replace(e, rep) } else { StrFun::ReplaceAll(e, rep) };
            run_pipeline(&to_pipeline(&f, &sigma).map_err(|e| e.to_string())?, input)
        }
    };
    match out {
        Output::Undefined => Err("no match".into()),
        Output::Null => Ok(None),
        Output::Value(v) => Ok(Some(v)),
    }
}

fn case(id: &str, kind: Kind, regex: &str, input: &str, replacement: Option<&str>) -> OracleCase {
    let expected = psst_output(&kind, regex, input, replacement).expect("oracle case has a defined output");
    OracleCase {
        id: id.to_string(),
        kind,
        regex: regex.to_string(),
        input: input.to_string(),
        replacement: replacement.map(String::from),
        expected,
    }
}

/// The hand-picked cases: nested lazy star, name swap, normalize components.
pub fn named_cases() -> Vec<OracleCase> {
    vec![
        case("lazy-star-in-star", Kind::MatchGroup1, "(a*?)*", "aaa", None),
        case("name-swap", Kind::ReplaceAll, "([A-Za-z]+) ([A-Za-z]+)", "Don Knuth; Alan Turing", Some("$2 $1")),
        case("normalize-split", Kind::MatchGroup1, "(\\d+)\\.?(\\d*)", "02.50", None),
        case("normalize-leading-zeros", Kind::Replace, "0+", "0250", Some("")),
        case("normalize-split-integer", Kind::MatchGroup1, "(\\d+)\\.?(\\d*)", "025.0", None),
    ]
}

/// Corpus cases with seeded inputs of length at least 10, then the named cases.
pub fn manifest(seed: u64) -> Manifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<OracleCase> = operator_pairs()
        .into_iter()
        .map(|e| {
            let w = long_input(&e.regex, &mut rng);
            case(&e.id, Kind::MatchGroup1, &e.source, &w, None)
        })
        .collect();
    cases.extend(named_cases());
    Manifest { cases }
}

fn js_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// A stand-alone program printing the JavaScript result as JSON.
pub fn js_program(c: &OracleCase) -> String {
    let x = js_string(&c.input);
    match c.kind {
        Kind::MatchGroup1 => {
            format!("var x = {x}; var m = x.match(/{}/); console.log(JSON.stringify(m ? (m[1] === undefined ? null : m[1]) : \"<no match>\"));\n", c.regex)
        }
        Kind::Replace | Kind::ReplaceAll => {
            let flags = if c.kind == Kind::ReplaceAll { "g" } else { "" };
            let rep = js_string(c.replacement.as_deref().unwrap_or(""));
            format!("var x = {x}; console.log(JSON.stringify(x.replace(/{}/{flags}, {rep})));\n", c.regex)
        }
    }
}

/// Writes `manifest.json` and one program per case under `cases/`.
pub fn write_dir(dir: &Path, m: &Manifest) -> io::Result<PathBuf> {
    fs::create_dir_all(dir.join("cases"))?;
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(m).map_err(io::Error::other)? + "\n")?;
    for c in &m.cases {
        fs::write(dir.join("cases").join(format!("{}.js", c.id)), js_program(c))?;
    }
    Ok(path)
}
