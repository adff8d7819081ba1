//! Regex terms in the extended SMT-LIB syntax.

use super::{Regex, RegexError, RegexKind};
use crate::charset::{Alphabet, CharSet};
use crate::sexpr::Sexp;

fn syn(s: &Sexp, msg: impl Into<String>) -> RegexError {
    RegexError::Syntax { pos: s.pos(), msg: msg.into() }
}

/// Parses one regex term. Capture indices must be `1..k` in order of appearance.
pub fn parse_smt_regex(term: &Sexp, alphabet: &Alphabet) -> Result<Regex, RegexError> {
    let r = term_to_regex(term, alphabet)?;
    let mut seen = Vec::new();
    for (_, sub) in r.subexpressions() {
        if let RegexKind::Group(_, i) = sub.kind {
            seen.push(i);
        }
    }
    if seen.iter().enumerate().any(|(k, &i)| i as usize != k + 1) {
        return Err(syn(term, "capture indices must be 1..k in left-to-right order"));
    }
    Ok(r.numbered())
}

fn string_arg(s: &Sexp) -> Result<&str, RegexError> {
    match s {
        Sexp::Str(v, _) => Ok(v),
        _ => Err(syn(s, "expected a string literal")),
    }
}

fn num_arg(s: &Sexp) -> Result<u32, RegexError> {
    match s {
        Sexp::Num(n, _) => u32::try_from(*n).map_err(|_| syn(s, "number too large")),
        _ => Err(syn(s, "expected a numeral")),
    }
}

fn literal(s: &str, sigma: &Alphabet) -> Result<Regex, RegexError> {
    if let Some(c) = s.chars().find(|&c| !sigma.contains(c)) {
        return Err(RegexError::OutsideAlphabet(c));
    }
    Ok(Regex::literal(s))
}

fn term_to_regex(t: &Sexp, sigma: &Alphabet) -> Result<Regex, RegexError> {
    match t {
        Sexp::Symbol(s, _) => match s.as_str() {
            "re.allchar" => Ok(Regex::class(sigma.any())),
            "re.all" => Ok(Regex::star(Regex::class(sigma.any()), false)),
            "re.none" | "re.nostr" => Ok(Regex::empty()),
            "re.begin-anchor" | "re.end-anchor" => {
                Err(RegexError::Unsupported { pos: t.pos(), feature: "anchor".into() })
            }
            _ => Err(syn(t, format!("unknown regex constant '{s}'"))),
        },
        Sexp::Str(..) | Sexp::Num(..) => Err(syn(t, "expected a regex term")),
        Sexp::List(items, _) => {
            let Some(head) = items.first() else {
                return Err(syn(t, "empty application"));
            };
            let args = &items[1..];
            if let Some(idx) = head.as_list() {
                return indexed(t, idx, args, sigma);
            }
            if head.is_symbol("_") {
                if args.first().is_some_and(|a| a.is_symbol("re.reference")) {
                    return Err(RegexError::Unsupported { pos: t.pos(), feature: "backreference".into() });
                }
                return Err(syn(t, "unknown indexed constant"));
            }
            let name = head.as_symbol().ok_or_else(|| syn(head, "expected operator"))?;
            let sub = |i: usize| -> Result<Regex, RegexError> {
                term_to_regex(args.get(i).ok_or_else(|| syn(t, "missing argument"))?, sigma)
            };
            let unary = |lazy: bool, f: fn(Regex, bool) -> Regex| -> Result<Regex, RegexError> {
                if args.len() != 1 {
                    return Err(syn(t, format!("{name} expects one argument")));
                }
                Ok(f(sub(0)?, lazy))
            };
            match name {
                "str.to.re" | "str.to_re" => {
                    if args.len() != 1 {
                        return Err(syn(t, "str.to.re expects one argument"));
                    }
                    literal(string_arg(&args[0])?, sigma)
                }
                "re.++" | "re.union" => {
                    if args.is_empty() {
                        return Err(syn(t, format!("{name} expects arguments")));
                    }
                    let parts = args.iter().map(|a| term_to_regex(a, sigma)).collect::<Result<Vec<_>, _>>()?;
                    let f = if name == "re.++" { Regex::concat } else { Regex::union };
                    Ok(parts.into_iter().reduce(f).unwrap())
                }
                "re.*" => unary(false, Regex::star),
                "re.*?" => unary(true, Regex::star),
                "re.+" => unary(false, Regex::plus),
                "re.+?" => unary(true, Regex::plus),
                "re.opt" => unary(false, Regex::optional),
                "re.opt?" => unary(true, Regex::optional),
                "re.range" => {
                    if args.len() != 2 {
                        return Err(syn(t, "re.range expects two arguments"));
                    }
                    let (a, b) = (string_arg(&args[0])?, string_arg(&args[1])?);
                    let (mut ca, mut cb) = (a.chars(), b.chars());
                    match (ca.next(), ca.next(), cb.next(), cb.next()) {
                        (Some(x), None, Some(y), None) if x <= y => {
                            Ok(Regex::class(CharSet::range(x as u32, y as u32).intersect(sigma.chars())))
                        }
                        _ => Ok(Regex::empty()),
                    }
                }
                "re.loop" | "re.loop?" => {
                    if args.len() != 3 {
                        return Err(syn(t, "re.loop expects a regex and two bounds"));
                    }
                    loop_of(t, sub(0)?, num_arg(&args[1])?, num_arg(&args[2])?, name.ends_with('?'))
                }
                "re.comp" | "re.inter" | "re.diff" => {
                    Err(RegexError::Unsupported { pos: t.pos(), feature: format!("{name} in a capture-aware regex") })
                }
                _ => Err(syn(head, format!("unknown regex operator '{name}'"))),
            }
        }
    }
}

fn loop_of(t: &Sexp, body: Regex, m1: u32, m2: u32, lazy: bool) -> Result<Regex, RegexError> {
    if m1 > m2 {
        return Err(syn(t, "loop bounds out of order"));
    }
    Ok(Regex::repeat(body, m1, m2, lazy))
}

fn indexed(t: &Sexp, idx: &[Sexp], args: &[Sexp], sigma: &Alphabet) -> Result<Regex, RegexError> {
    if idx.first().map(|h| h.is_symbol("_")) != Some(true) || idx.len() < 2 {
        return Err(syn(t, "expected an indexed operator"));
    }
    let name = idx[1].as_symbol().ok_or_else(|| syn(&idx[1], "expected operator name"))?;
    if args.len() != 1 {
        return Err(syn(t, format!("{name} expects one argument")));
    }
    let body = term_to_regex(&args[0], sigma)?;
    match (name, idx.len()) {
        ("re.capture", 3) => {
            let i = num_arg(&idx[2])?;
            if i == 0 {
                return Err(syn(&idx[2], "capture index must be positive"));
            }
            Ok(Regex::group(body, i))
        }
        ("re.loop" | "re.loop?", 4) => {
            loop_of(t, body, num_arg(&idx[2])?, num_arg(&idx[3])?, name.ends_with('?'))
        }
        ("re.^", 3) => {
            let n = num_arg(&idx[2])?;
            Ok(Regex::repeat(body, n, n, false))
        }
        _ => Err(syn(t, format!("unknown indexed operator '{name}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regex::{parse_js, parse_regex, Syntax};

    fn smt(s: &str) -> Result<Regex, RegexError> {
        parse_regex(s, Syntax::Smt, &Alphabet::ascii())
    }

    #[test]
    fn name_swap_pattern() {
        let r = smt(
            r#"(re.++ ((_ re.capture 1) (re.+ (re.union (re.range "A" "Z") (re.range "a" "z"))))
                      (str.to.re " ")
                      ((_ re.capture 2) (re.+ (re.union (re.range "A" "Z") (re.range "a" "z")))))"#,
        )
        .unwrap();
        assert_eq!(r.group_count(), 2);
        let js = parse_js("(?:[A-Z]|[a-z])+ (?:[A-Z]|[a-z])+", &Alphabet::ascii()).unwrap();
        assert_eq!(r.subexpressions().len(), js.subexpressions().len() + 2);
    }

    #[test]
    fn agrees_with_js_syntax() {
        let pairs = [
            ("(re.*? re.allchar)", ".*?"),
            ("((_ re.loop 1 3) (str.to.re \"a\"))", "a{1,3}"),
            ("((_ re.loop? 1 3) (str.to.re \"a\"))", "a{1,3}?"),
            ("(re.opt? (re.range \"0\" \"9\"))", "[0-9]??"),
            ("(re.++ (str.to.re \"ab\") re.allchar)", "ab."),
        ];
        for (s, j) in pairs {
            assert_eq!(smt(s).unwrap(), parse_js(j, &Alphabet::ascii()).unwrap(), "{s}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(smt("(_ re.reference 1)"), Err(RegexError::Unsupported { .. })));
        assert!(matches!(smt("re.begin-anchor"), Err(RegexError::Unsupported { .. })));
        assert!(matches!(smt("((_ re.capture 2) re.allchar)"), Err(RegexError::Syntax { .. })));
        assert!(matches!(smt("(re.foo re.all)"), Err(RegexError::Syntax { .. })));
    }
}
