//! Exact symbolic expressions over rational constants.

mod diff;
mod eval;
mod expr;
mod parse;
pub mod poly;
mod ratfun;
mod simplify;
mod symbol;
mod tape;

pub use expr::{rational, rational_from_decimal, rational_from_f64, rational_to_f64, Expr, Node, Rational};
#[allow(unused_imports)]
pub(crate) use parse::parse_expr_at;
pub use parse::parse_expr;
pub use ratfun::{atom_expr, is_atom, RatFun};
pub use symbol::{Binding, Sym};
pub use tape::{Op, Tape};
