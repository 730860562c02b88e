use num_traits::One;

use super::expr::{Expr, Node, Rational};
use super::symbol::Sym;

impl Expr {
    /// Exact partial derivative with respect to `v`, in canonical form.
    pub fn differentiate(&self, v: Sym) -> Expr {
        self.diff_raw(v).simplify()
    }

    fn diff_raw(&self, v: Sym) -> Expr {
        if !self.depends_on(v) {
            return Expr::zero();
        }
        match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(s) => {
                if *s == v {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Sum(terms) => Expr::sum(
                terms
                    .iter()
                    .filter(|t| t.depends_on(v))
                    .map(|t| t.diff_raw(v))
                    .collect(),
            ),
            Node::Product(factors) => {
                let mut terms = Vec::new();
                for (i, f) in factors.iter().enumerate() {
                    if !f.depends_on(v) {
                        continue;
                    }
                    let mut fs: Vec<Expr> = factors.clone();
                    fs[i] = f.diff_raw(v);
                    terms.push(Expr::product(fs));
                }
                Expr::sum(terms)
            }
            Node::Pow(b, e) => Expr::product(vec![
                Expr::constant(e.clone()),
                Expr::pow(b.clone(), e - Rational::one()),
                b.diff_raw(v),
            ]),
            Node::Quot(n, d) if !d.depends_on(v) => Expr::quot(n.diff_raw(v), d.clone()),
            Node::Quot(n, d) => {
                let dn = n.diff_raw(v);
                let dd = d.diff_raw(v);
                let numer = Expr::sum(vec![
                    Expr::product(vec![dn, d.clone()]),
                    Expr::product(vec![Expr::int(-1), n.clone(), dd]),
                ]);
                Expr::quot(numer, Expr::powi(d.clone(), 2))
            }
            Node::Tanh(g) => Expr::product(vec![
                Expr::sum(vec![
                    Expr::one(),
                    Expr::product(vec![Expr::int(-1), Expr::powi(self.clone(), 2)]),
                ]),
                g.diff_raw(v),
            ]),
            Node::Neg(a) => Expr::from_node(Node::Neg(a.diff_raw(v))),
        }
    }

    /// Gradient with respect to `vars`, one entry per variable.
    pub fn gradient(&self, vars: &[Sym]) -> Vec<Expr> {
        vars.iter().map(|v| self.differentiate(*v)).collect()
    }
}
