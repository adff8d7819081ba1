//! Parser for the JavaScript-like concrete syntax.

use super::{Regex, RegexError};
use crate::charset::{Alphabet, CharSet};

pub fn parse_js(text: &str, alphabet: &Alphabet) -> Result<Regex, RegexError> {
    let mut p = Parser { s: text.chars().collect(), pos: 0, groups: 0, sigma: alphabet };
    let r = p.alternation()?;
    if p.pos < p.s.len() {
        return Err(p.syntax(if p.peek() == Some(')') { "unmatched ')'" } else { "unexpected character" }));
    }
    Ok(r.numbered())
}

struct Parser<'a> {
    s: Vec<char>,
    pos: usize,
    groups: u32,
    sigma: &'a Alphabet,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<char> {
        self.s.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.s.get(self.pos + k).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn syntax(&self, msg: &str) -> RegexError {
        RegexError::Syntax { pos: self.pos, msg: msg.to_string() }
    }

    fn unsupported(&self, feature: &str) -> RegexError {
        RegexError::Unsupported { pos: self.pos, feature: feature.to_string() }
    }

    fn alternation(&mut self) -> Result<Regex, RegexError> {
        let mut r = self.concatenation()?;
        while self.eat('|') {
            let rhs = self.concatenation()?;
            r = Regex::union(r, rhs);
        }
        Ok(r)
    }

    fn concatenation(&mut self) -> Result<Regex, RegexError> {
        let mut parts = Vec::new();
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            parts.push(self.quantified()?);
        }
        Ok(Regex::concat_all(parts))
    }

    fn quantified(&mut self) -> Result<Regex, RegexError> {
        let atom_pos = self.pos;
        let mut r = self.atom()?;
        let mut quantified = false;
        loop {
            let start = self.pos;
            let q = match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    Some(Quant::Star)
                }
                Some('+') => {
                    self.pos += 1;
                    Some(Quant::Plus)
                }
                Some('?') => {
                    self.pos += 1;
                    Some(Quant::Opt)
                }
                Some('{') => self.braces()?,
                _ => None,
            };
            let Some(q) = q else { break };
            if quantified {
                self.pos = start;
                return Err(self.syntax("nothing to repeat"));
            }
            if atom_pos == start {
                return Err(self.syntax("nothing to repeat"));
            }
            let lazy = self.eat('?');
            r = match q {
                Quant::Star => Regex::star(r, lazy),
                Quant::Plus => Regex::plus(r, lazy),
                Quant::Opt => Regex::optional(r, lazy),
                Quant::Loop(m1, m2) => Regex::repeat(r, m1, m2, lazy),
            };
            quantified = true;
        }
        Ok(r)
    }

    /// `{m}` or `{m,n}`; anything else starting with `{` is a literal brace.
    fn braces(&mut self) -> Result<Option<Quant>, RegexError> {
        let save = self.pos;
        self.pos += 1;
        let m1 = self.number();
        let Some(m1) = m1 else {
            self.pos = save;
            return Ok(None);
        };
        let m2 = if self.eat(',') {
            match self.number() {
                Some(n) => n,
                None => {
                    if self.peek() == Some('}') {
                        self.pos = save;
                        return Err(self.unsupported("unbounded repetition {m,}"));
                    }
                    self.pos = save;
                    return Ok(None);
                }
            }
        } else {
            m1
        };
        if !self.eat('}') {
            self.pos = save;
            return Ok(None);
        }
        if m1 > m2 {
            self.pos = save;
            return Err(self.syntax("numbers out of order in {} quantifier"));
        }
        Ok(Some(Quant::Loop(m1, m2)))
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some('0'..='9')) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        self.s[start..self.pos].iter().collect::<String>().parse().ok()
    }

    fn atom(&mut self) -> Result<Regex, RegexError> {
        let c = self.peek().ok_or_else(|| self.syntax("unexpected end of pattern"))?;
        match c {
            '(' => self.group(),
            '[' => self.class(),
            '.' => {
                self.pos += 1;
                Ok(Regex::class(self.sigma.any()))
            }
            '^' | '$' => Err(self.unsupported("anchor")),
            '\\' => {
                self.pos += 1;
                self.escape_atom()
            }
            '*' | '+' | '?' => Err(self.syntax("nothing to repeat")),
            _ => {
                self.pos += 1;
                self.literal(c)
            }
        }
    }

    fn literal(&self, c: char) -> Result<Regex, RegexError> {
        if !self.sigma.contains(c) {
            return Err(RegexError::OutsideAlphabet(c));
        }
        Ok(Regex::char(c))
    }

    fn group(&mut self) -> Result<Regex, RegexError> {
        self.pos += 1;
        let capturing = if self.peek() == Some('?') {
            match (self.peek_at(1), self.peek_at(2)) {
                (Some(':'), _) => {
                    self.pos += 2;
                    false
                }
                (Some('='), _) | (Some('!'), _) => return Err(self.unsupported("lookahead")),
                (Some('<'), Some('=')) | (Some('<'), Some('!')) => return Err(self.unsupported("lookbehind")),
                (Some('<'), _) => {
                    self.pos += 2;
                    while let Some(c) = self.peek() {
                        self.pos += 1;
                        if c == '>' {
                            break;
                        }
                    }
                    true
                }
                _ => return Err(self.syntax("invalid group")),
            }
        } else {
            true
        };
        let index = if capturing {
            self.groups += 1;
            self.groups
        } else {
            0
        };
        let body = self.alternation()?;
        if !self.eat(')') {
            return Err(self.syntax("missing ')'"));
        }
        Ok(if capturing { Regex::group(body, index) } else { body })
    }

    fn escape_atom(&mut self) -> Result<Regex, RegexError> {
        let c = self.peek().ok_or_else(|| self.syntax("trailing backslash"))?;
        match c {
            '1'..='9' => Err(self.unsupported("backreference")),
            'k' if self.peek_at(1) == Some('<') => Err(self.unsupported("backreference")),
            'b' | 'B' => Err(self.unsupported("anchor")),
            _ => match self.escape_set(false)? {
                Esc::Set(s) => Ok(Regex::class(s)),
                Esc::Char(ch) => self.literal(ch),
            },
        }
    }

    /// Parses the escape after a backslash (already consumed).
    fn escape_set(&mut self, in_class: bool) -> Result<Esc, RegexError> {
        let c = self.peek().ok_or_else(|| self.syntax("trailing backslash"))?;
        self.pos += 1;
        let sig = self.sigma;
        Ok(match c {
            'd' => Esc::Set(sig.digit()),
            'D' => Esc::Set(sig.complement(&sig.digit())),
            'w' => Esc::Set(sig.word()),
            'W' => Esc::Set(sig.complement(&sig.word())),
            's' => Esc::Set(sig.space()),
            'S' => Esc::Set(sig.complement(&sig.space())),
            't' => Esc::Char('\t'),
            'n' => Esc::Char('\n'),
            'r' => Esc::Char('\r'),
            'f' => Esc::Char('\u{c}'),
            'v' => Esc::Char('\u{b}'),
            'b' if in_class => Esc::Char('\u{8}'),
            '0' if !matches!(self.peek(), Some('0'..='9')) => Esc::Char('\0'),
            'x' => {
                let v = self.hex(2).ok_or_else(|| self.syntax("invalid \\x escape"))?;
                Esc::Char(char::from_u32(v).unwrap())
            }
            'u' => {
                let v = if self.eat('{') {
                    let start = self.pos;
                    while matches!(self.peek(), Some(c) if c.is_ascii_hexdigit()) {
                        self.pos += 1;
                    }
                    let digits: String = self.s[start..self.pos].iter().collect();
                    if !self.eat('}') {
                        return Err(self.syntax("invalid \\u{} escape"));
                    }
                    u32::from_str_radix(&digits, 16).ok()
                } else {
                    self.hex(4)
                };
                let ch = v.and_then(char::from_u32).ok_or_else(|| self.syntax("invalid \\u escape"))?;
                Esc::Char(ch)
            }
            c if c.is_ascii_alphanumeric() => {
                self.pos -= 1;
                return Err(self.syntax("unknown escape"));
            }
            c => Esc::Char(c),
        })
    }

    fn hex(&mut self, n: usize) -> Option<u32> {
        if self.pos + n > self.s.len() {
            return None;
        }
        let digits: String = self.s[self.pos..self.pos + n].iter().collect();
        let v = u32::from_str_radix(&digits, 16).ok()?;
        self.pos += n;
        Some(v)
    }

    fn class(&mut self) -> Result<Regex, RegexError> {
        self.pos += 1;
        let negated = self.eat('^');
        let mut set = CharSet::empty();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.syntax("missing ']'"));
            };
            if c == ']' {
                self.pos += 1;
                break;
            }
            let lo = self.class_atom()?;
            if self.peek() == Some('-') && self.peek_at(1).is_some_and(|c| c != ']') {
                self.pos += 1;
                let hi = self.class_atom()?;
                match (lo, hi) {
                    (Esc::Char(a), Esc::Char(b)) => {
                        if a > b {
                            return Err(self.syntax("range out of order in character class"));
                        }
                        set = set.union(&CharSet::range(a as u32, b as u32));
                    }
                    _ => return Err(self.syntax("invalid character class range")),
                }
            } else {
                set = set.union(&match lo {
                    Esc::Char(c) => CharSet::single(c),
                    Esc::Set(s) => s,
                });
            }
        }
        let set = set.intersect(self.sigma.chars());
        Ok(Regex::class(if negated { self.sigma.complement(&set) } else { set }))
    }

    fn class_atom(&mut self) -> Result<Esc, RegexError> {
        let c = self.peek().unwrap();
        self.pos += 1;
        if c == '\\' {
            self.escape_set(true)
        } else {
            Ok(Esc::Char(c))
        }
    }
}

enum Quant {
    Star,
    Plus,
    Opt,
    Loop(u32, u32),
}

enum Esc {
    Char(char),
    Set(CharSet),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regex::RegexKind as K;

    fn p(s: &str) -> Result<Regex, RegexError> {
        parse_js(s, &Alphabet::ascii())
    }

    #[test]
    fn precedence() {
        let r = p("ab|c*").unwrap();
        assert!(matches!(r.kind, K::Union(..)));
        assert_eq!(r.to_js(), "ab|c*");
    }

    #[test]
    fn lazy_flags() {
        for (s, lazy) in [("a*?", true), ("a+?", true), ("a??", true), ("a{1,3}?", true), ("a{1,3}", false)] {
            let r = p(s).unwrap();
            let l = match r.kind {
                K::Star(_, l) | K::Plus(_, l) | K::Optional(_, l) | K::Loop(_, _, _, l) => l,
                _ => panic!(),
            };
            assert_eq!(l, lazy, "{s}");
        }
    }

    #[test]
    fn unsupported_features() {
        for (s, feat) in [(r"(a)\1", "backreference"), ("^a", "anchor"), ("a$", "anchor"), ("(?=a)", "lookahead"), ("a{2,}", "unbounded")] {
            match p(s) {
                Err(RegexError::Unsupported { feature, .. }) => assert!(feature.contains(feat), "{s}: {feature}"),
                other => panic!("{s}: {other:?}"),
            }
        }
    }

    #[test]
    fn syntax_errors_have_positions() {
        assert!(matches!(p("(ab"), Err(RegexError::Syntax { pos: 3, .. })));
        assert!(matches!(p("a)"), Err(RegexError::Syntax { pos: 1, .. })));
        assert!(matches!(p("*a"), Err(RegexError::Syntax { pos: 0, .. })));
    }

    #[test]
    fn classes_and_escapes() {
        let r = p(r"[^,]").unwrap();
        match r.kind {
            K::Class(c) => assert_eq!(c.len(), 94),
            _ => panic!(),
        }
        assert!(matches!(p("[]").unwrap().kind, K::Empty));
        assert!(matches!(p(r"\.").unwrap().kind, K::Class(ref c) if c.len() == 1));
        assert!(matches!(p("a{,3}").unwrap().kind, K::Concat(..)));
        assert!(matches!(p(r"é"), Err(RegexError::OutsideAlphabet('é'))));
    }

    #[test]
    fn non_capturing_and_named_groups() {
        assert_eq!(p("(?:a)(b)(?<n>c)").unwrap().group_count(), 2);
    }
}
