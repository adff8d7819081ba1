//! S-expression reader for SMT-LIB text.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SexpError {
    pub pos: usize,
    pub msg: String,
}

impl fmt::Display for SexpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "offset {}: {}", self.pos, self.msg)
    }
}

impl std::error::Error for SexpError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Symbol(String, usize),
    Str(String, usize),
    Num(u64, usize),
    List(Vec<Sexp>, usize),
}

impl Sexp {
    pub fn pos(&self) -> usize {
        match self {
            Sexp::Symbol(_, p) | Sexp::Str(_, p) | Sexp::Num(_, p) | Sexp::List(_, p) => *p,
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            Sexp::Symbol(s, _) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(v, _) => Some(v),
            _ => None,
        }
    }

    pub fn is_symbol(&self, name: &str) -> bool {
        self.as_symbol() == Some(name)
    }

    pub fn err(&self, msg: impl Into<String>) -> SexpError {
        SexpError { pos: self.pos(), msg: msg.into() }
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Symbol(s, _) => write!(f, "{s}"),
            Sexp::Str(s, _) => write!(f, "{}", quote(s)),
            Sexp::Num(n, _) => write!(f, "{n}"),
            Sexp::List(v, _) => {
                write!(f, "(")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// SMT-LIB string literal for `s`: `"` doubled, non-printable characters as `\u{..}`.
pub fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\"\""),
            ' '..='~' if c != '\\' => out.push(c),
            _ => out.push_str(&format!("\\u{{{:x}}}", c as u32)),
        }
    }
    out.push('"');
    out
}

/// Decodes the `\u{..}` and `\uXXXX` escapes of an SMT-LIB string literal body.
fn unescape(raw: &str) -> String {
    let cs: Vec<char> = raw.chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < cs.len() {
        if cs[i] == '\\' && i + 1 < cs.len() && cs[i + 1] == 'u' {
            if i + 2 < cs.len() && cs[i + 2] == '{' {
                if let Some(end) = cs[i + 3..].iter().position(|&c| c == '}') {
                    let hex: String = cs[i + 3..i + 3 + end].iter().collect();
                    if let Some(ch) = u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                        if (1..=5).contains(&hex.len()) {
                            out.push(ch);
                            i += 4 + end;
                            continue;
                        }
                    }
                }
            } else if i + 6 <= cs.len() {
                let hex: String = cs[i + 2..i + 6].iter().collect();
                if hex.chars().all(|c| c.is_ascii_hexdigit()) {
                    if let Some(ch) = u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                        out.push(ch);
                        i += 6;
                        continue;
                    }
                }
            }
        }
        out.push(cs[i]);
        i += 1;
    }
    out
}

pub fn parse_all(text: &str) -> Result<Vec<Sexp>, SexpError> {
    let cs: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    let mut stack: Vec<(Vec<Sexp>, usize)> = vec![(Vec::new(), 0)];
    let err = |pos: usize, msg: &str| SexpError { pos, msg: msg.to_string() };
    while i < cs.len() {
        let (pos, c) = cs[i];
        match c {
            ';' => {
                while i < cs.len() && cs[i].1 != '\n' {
                    i += 1;
                }
            }
            c if c.is_whitespace() => i += 1,
            '(' => {
                stack.push((Vec::new(), pos));
                i += 1;
            }
            ')' => {
                if stack.len() == 1 {
                    return Err(err(pos, "unbalanced ')'"));
                }
                let (items, start) = stack.pop().unwrap();
                stack.last_mut().unwrap().0.push(Sexp::List(items, start));
                i += 1;
            }
            '"' => {
                let mut raw = String::new();
                i += 1;
                loop {
                    if i >= cs.len() {
                        return Err(err(pos, "unterminated string literal"));
                    }
                    let ch = cs[i].1;
                    if ch == '"' {
                        if i + 1 < cs.len() && cs[i + 1].1 == '"' {
                            raw.push('"');
                            i += 2;
                            continue;
                        }
                        i += 1;
                        break;
                    }
                    raw.push(ch);
                    i += 1;
                }
                stack.last_mut().unwrap().0.push(Sexp::Str(unescape(&raw), pos));
            }
            '|' => {
                let mut s = String::new();
                i += 1;
                while i < cs.len() && cs[i].1 != '|' {
                    s.push(cs[i].1);
                    i += 1;
                }
                if i >= cs.len() {
                    return Err(err(pos, "unterminated quoted symbol"));
                }
                i += 1;
                stack.last_mut().unwrap().0.push(Sexp::Symbol(s, pos));
            }
            _ => {
                let mut s = String::new();
                while i < cs.len() {
                    let ch = cs[i].1;
                    if ch.is_whitespace() || "()\";|".contains(ch) {
                        break;
                    }
                    s.push(ch);
                    i += 1;
                }
                let atom = match s.parse::<u64>() {
                    Ok(n) if s.chars().all(|c| c.is_ascii_digit()) => Sexp::Num(n, pos),
                    _ => Sexp::Symbol(s, pos),
                };
                stack.last_mut().unwrap().0.push(atom);
            }
        }
    }
    if stack.len() > 1 {
        return Err(err(stack.last().unwrap().1, "unbalanced '('"));
    }
    Ok(stack.pop().unwrap().0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists_and_literals() {
        let v = parse_all(r#"(assert (= x "a""b\u{41}")) ; comment
            (check-sat)"#)
        .unwrap();
        assert_eq!(v.len(), 2);
        let inner = &v[0].as_list().unwrap()[1].as_list().unwrap()[2];
        assert_eq!(inner, &Sexp::Str("a\"bA".into(), inner.pos()));
    }

    #[test]
    fn quote_round_trip() {
        for s in ["", "a\"b", "x\\y", "\u{E000}"] {
            let v = parse_all(&quote(s)).unwrap();
            assert_eq!(v[0], Sexp::Str(s.into(), 0));
        }
    }

    #[test]
    fn unbalanced() {
        assert!(parse_all("(a").is_err());
        assert!(parse_all("a)").is_err());
    }
}
