//! Interval sets over code points and the configured alphabet.

use std::fmt;

/// A set of code points stored as sorted, disjoint, non-adjacent closed intervals.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CharSet {
    ranges: Vec<(u32, u32)>,
}

impl CharSet {
    pub fn empty() -> Self {
        CharSet { ranges: Vec::new() }
    }

    pub fn single(c: char) -> Self {
        CharSet::range(c as u32, c as u32)
    }

    pub fn range(lo: u32, hi: u32) -> Self {
        if lo > hi {
            return CharSet::empty();
        }
        CharSet { ranges: vec![(lo, hi)] }
    }

    pub fn from_ranges<I: IntoIterator<Item = (u32, u32)>>(it: I) -> Self {
        let mut ranges: Vec<(u32, u32)> = it.into_iter().filter(|(a, b)| a <= b).collect();
        ranges.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::with_capacity(ranges.len());
        for (lo, hi) in ranges {
            match out.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        CharSet { ranges: out }
    }

    pub fn from_chars<I: IntoIterator<Item = char>>(it: I) -> Self {
        CharSet::from_ranges(it.into_iter().map(|c| (c as u32, c as u32)))
    }

    pub fn ranges(&self) -> &[(u32, u32)] {
        &self.ranges
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn len(&self) -> u64 {
        self.ranges.iter().map(|(a, b)| (*b - *a) as u64 + 1).sum()
    }

    pub fn contains(&self, c: u32) -> bool {
        self.ranges
            .binary_search_by(|&(lo, hi)| {
                if hi < c {
                    std::cmp::Ordering::Less
                } else if lo > c {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .is_ok()
    }

    pub fn contains_char(&self, c: char) -> bool {
        self.contains(c as u32)
    }

    pub fn min(&self) -> Option<u32> {
        self.ranges.first().map(|r| r.0)
    }

    /// Smallest member that is a valid `char`.
    pub fn min_char(&self) -> Option<char> {
        self.iter().find_map(char::from_u32)
    }

    pub fn union(&self, other: &CharSet) -> CharSet {
        CharSet::from_ranges(self.ranges.iter().chain(other.ranges.iter()).copied())
    }

    pub fn intersect(&self, other: &CharSet) -> CharSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.ranges.len() && j < other.ranges.len() {
            let (a1, b1) = self.ranges[i];
            let (a2, b2) = other.ranges[j];
            let lo = a1.max(a2);
            let hi = b1.min(b2);
            if lo <= hi {
                out.push((lo, hi));
            }
            if b1 < b2 {
                i += 1;
            } else {
                j += 1;
            }
        }
        CharSet { ranges: out }
    }

    pub fn intersects(&self, other: &CharSet) -> bool {
        !self.intersect(other).is_empty()
    }

    /// `self \ other`.
    pub fn minus(&self, other: &CharSet) -> CharSet {
        let mut out = Vec::new();
        let mut j = 0;
        for &(lo, hi) in &self.ranges {
            let mut cur = lo;
            let mut done = false;
            while j < other.ranges.len() && other.ranges[j].1 < cur {
                j += 1;
            }
            let mut k = j;
            while k < other.ranges.len() && other.ranges[k].0 <= hi {
                let (olo, ohi) = other.ranges[k];
                if olo > cur {
                    out.push((cur, olo - 1));
                }
                if ohi >= hi {
                    done = true;
                    break;
                }
                cur = ohi + 1;
                k += 1;
            }
            if !done {
                out.push((cur, hi));
            }
        }
        CharSet { ranges: out }
    }

    pub fn is_subset(&self, other: &CharSet) -> bool {
        self.minus(other).is_empty()
    }

    /// Iterates over all members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.ranges.iter().flat_map(|&(a, b)| a..=b)
    }
}

fn fmt_cp(c: u32, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match char::from_u32(c) {
        Some(ch) if (' '..='~').contains(&ch) && !"\\[]^-".contains(ch) => write!(f, "{ch}"),
        Some(ch) if (' '..='~').contains(&ch) => write!(f, "\\{ch}"),
        _ => write!(f, "\\u{{{c:x}}}"),
    }
}

impl fmt::Debug for CharSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for CharSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ranges.len() == 1 && self.ranges[0].0 == self.ranges[0].1 {
            return fmt_cp(self.ranges[0].0, f);
        }
        write!(f, "[")?;
        for &(a, b) in &self.ranges {
            fmt_cp(a, f)?;
            if b > a {
                if b > a + 1 {
                    write!(f, "-")?;
                }
                fmt_cp(b, f)?;
            }
        }
        write!(f, "]")
    }
}

/// Splits the union of `sets` into the coarsest partition such that each
/// input set is a union of blocks. Blocks are returned in ascending order.
pub fn minterms<'a, I: IntoIterator<Item = &'a CharSet>>(universe: &CharSet, sets: I) -> Vec<CharSet> {
    // Boundaries: every point where membership of some set may change.
    let mut cuts: Vec<u32> = Vec::new();
    let sets: Vec<&CharSet> = sets.into_iter().collect();
    for s in sets.iter().copied().chain(std::iter::once(universe)) {
        for &(a, b) in s.ranges() {
            cuts.push(a);
            cuts.push(b.saturating_add(1));
        }
    }
    cuts.sort_unstable();
    cuts.dedup();
    let mut blocks: std::collections::BTreeMap<Vec<bool>, Vec<(u32, u32)>> = Default::default();
    let mut order: Vec<Vec<bool>> = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1] - 1);
        if !universe.contains(lo) {
            continue;
        }
        let sig: Vec<bool> = sets.iter().map(|s| s.contains(lo)).collect();
        let entry = blocks.entry(sig.clone()).or_default();
        if entry.is_empty() {
            order.push(sig);
        }
        entry.push((lo, hi));
    }
    order
        .into_iter()
        .map(|sig| CharSet::from_ranges(blocks.remove(&sig).unwrap()))
        .collect()
}

/// Marker code points used by the special-reference elimination; kept
/// outside every configured alphabet.
pub const MARK_OPEN: char = '\u{E000}';
pub const MARK_CLOSE: char = '\u{E001}';

/// The finite alphabet Σ together with its named classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    chars: CharSet,
}

impl Alphabet {
    /// Printable ASCII, `' '..='~'`.
    pub fn ascii() -> Self {
        Alphabet { chars: CharSet::range(0x20, 0x7e) }
    }

    /// All code points `0..=255`.
    pub fn bytes() -> Self {
        Alphabet { chars: CharSet::range(0, 0xff) }
    }

    pub fn from_set(chars: CharSet) -> Self {
        let markers = CharSet::from_chars([MARK_OPEN, MARK_CLOSE]);
        Alphabet { chars: chars.minus(&markers) }
    }

    pub fn from_str_chars(s: &str) -> Self {
        Alphabet::from_set(CharSet::from_chars(s.chars()))
    }

    pub fn chars(&self) -> &CharSet {
        &self.chars
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.contains_char(c)
    }

    /// The alphabet extended with the two marker symbols.
    pub fn with_markers(&self) -> CharSet {
        self.chars.union(&CharSet::from_chars([MARK_OPEN, MARK_CLOSE]))
    }

    pub fn any(&self) -> CharSet {
        self.chars.clone()
    }

    pub fn digit(&self) -> CharSet {
        self.chars.intersect(&CharSet::range('0' as u32, '9' as u32))
    }

    pub fn upper(&self) -> CharSet {
        self.chars.intersect(&CharSet::range('A' as u32, 'Z' as u32))
    }

    pub fn lower(&self) -> CharSet {
        self.chars.intersect(&CharSet::range('a' as u32, 'z' as u32))
    }

    pub fn word(&self) -> CharSet {
        let w = CharSet::from_ranges([
            ('0' as u32, '9' as u32),
            ('A' as u32, 'Z' as u32),
            ('_' as u32, '_' as u32),
            ('a' as u32, 'z' as u32),
        ]);
        self.chars.intersect(&w)
    }

    pub fn space(&self) -> CharSet {
        let s = CharSet::from_ranges([(0x09, 0x0d), (0x20, 0x20), (0xa0, 0xa0)]);
        self.chars.intersect(&s)
    }

    pub fn complement(&self, s: &CharSet) -> CharSet {
        self.chars.minus(s)
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Alphabet::ascii()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set_of(bits: u16) -> CharSet {
        CharSet::from_ranges((0..16u32).filter(|i| bits & (1 << i) != 0).map(|i| (i, i)))
    }

    proptest! {
        #[test]
        fn set_ops_match_bitmasks(a in any::<u16>(), b in any::<u16>()) {
            let (sa, sb) = (set_of(a), set_of(b));
            prop_assert_eq!(sa.union(&sb), set_of(a | b));
            prop_assert_eq!(sa.intersect(&sb), set_of(a & b));
            prop_assert_eq!(sa.minus(&sb), set_of(a & !b));
            prop_assert_eq!(sa.len(), a.count_ones() as u64);
        }

        #[test]
        fn minterms_partition(a in any::<u16>(), b in any::<u16>(), c in any::<u16>()) {
            let uni = CharSet::range(0, 15);
            let sets = [set_of(a), set_of(b), set_of(c)];
            let blocks = minterms(&uni, sets.iter());
            let total: u64 = blocks.iter().map(|b| b.len()).sum();
            prop_assert_eq!(total, 16);
            for blk in &blocks {
                for s in &sets {
                    let i = blk.intersect(s);
                    prop_assert!(i.is_empty() || &i == blk);
                }
            }
        }
    }

    #[test]
    fn classes() {
        let a = Alphabet::ascii();
        assert_eq!(a.digit().len(), 10);
        assert_eq!(a.word().len(), 63);
        assert_eq!(a.space(), CharSet::single(' '));
        assert_eq!(a.any().len(), 95);
        assert!(!a.contains(MARK_OPEN));
    }

    #[test]
    fn display() {
        assert_eq!(CharSet::range('a' as u32, 'c' as u32).to_string(), "[a-c]");
        assert_eq!(CharSet::single('x').to_string(), "x");
    }
}
