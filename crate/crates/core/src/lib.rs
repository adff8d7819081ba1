//! String constraint solving for regexes with capture groups and lazy quantifiers.

pub mod charset;
pub mod fa;
pub mod regex;
pub mod sexpr;
pub mod psst;
pub mod compile;
pub mod strfun;
pub mod preimage;
pub mod calculus;
pub mod smtlib;
pub mod oracle;
