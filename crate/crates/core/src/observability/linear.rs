//! Linear time-invariant specialization: `O(A, C)` and its discrete counterpart.

use nalgebra::DMatrix;

use super::rank::numeric_rank;
use crate::error::{Error, Result};
use crate::lie::{build_chain, DerivativeDefinition};
use crate::model::{augment_parameters, ModelDef};
use crate::symbolic::{rational_from_f64, Expr, Sym};

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn check(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() || c.ncols() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, C is {}x{}",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(())
}

/// `[C; CA; …; CA^(N-1)]` and its numeric rank.
pub fn linear_observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    check(a, c)?;
    let (n, q) = (a.nrows(), c.nrows());
    let mut o = DMatrix::zeros(n * q, n);
    let mut block = c.clone();
    for k in 0..n {
        o.view_mut((k * q, 0), (q, n)).copy_from(&block);
        block = &block * a;
    }
    let r = numeric_rank(&rows_of(&o), n);
    Ok((o, r))
}

/// `(e^{AΔt} - I)/Δt`, by series while `‖AΔt‖` is small.
fn divided_difference(a: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let x = a * dt;
    let n = a.nrows();
    if x.norm() > 1.0 {
        return (x.exp() - DMatrix::identity(n, n)) / dt;
    }
    // A Σ X^k/(k+1)!
    let mut term = DMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &x / (k + 1) as f64;
        sum += &term;
    }
    a * sum
}

/// Observability matrix of the sampled system `x_{k+1} = e^{AΔt} x_k`.
///
/// The rows `CΦ^k` are nearly parallel for small `Δt`, so the rank is taken
/// from `[C; CD; …]` with `D = (Φ - I)/Δt`, which spans the same rows.
pub fn discrete_observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>, dt: f64) -> Result<(DMatrix<f64>, usize)> {
    check(a, c)?;
    if !(dt > 0.0) {
        return Err(Error::Config(format!("sample interval must be positive, got {dt}")));
    }
    let (o, _) = linear_observability_matrix(&(a * dt).exp(), c)?;
    let (_, r) = linear_observability_matrix(&divided_difference(a, dt), c)?;
    Ok((o, r))
}

/// `ẋ = Ax`, `y = Cx` as a model with exact constant entries.
pub fn linear_model(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<ModelDef> {
    check(a, c)?;
    let n = a.nrows();
    let states: Vec<Sym> = (1..=n).map(|i| Sym::new(&format!("x{i}"))).collect();
    let row = |m: &DMatrix<f64>, i: usize| -> Result<Expr> {
        let mut terms = Vec::new();
        for (j, s) in states.iter().enumerate() {
            let v = m[(i, j)];
            if v != 0.0 {
                let q = rational_from_f64(v).ok_or_else(|| Error::NotRational(v.to_string()))?;
                terms.push(Expr::product(vec![Expr::constant(q), Expr::var(*s)]));
            }
        }
        Ok(Expr::sum(terms).simplify())
    };
    Ok(ModelDef {
        states: states.clone(),
        params: Vec::new(),
        inputs_measured: Vec::new(),
        inputs_unmeasured: Vec::new(),
        constants: Vec::new(),
        dynamics: (0..n).map(|i| row(a, i)).collect::<Result<_>>()?,
        output_names: (1..=c.nrows()).map(|i| format!("y{i}")).collect(),
        outputs: (0..c.nrows()).map(|i| row(c, i)).collect::<Result<_>>()?,
        benchmark: Vec::new(),
    })
}

/// Does the definition-(1) chain Jacobian span the same rows as `O(A, C)`?
pub fn chain_matches_observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<bool> {
    let (o, r) = linear_observability_matrix(a, c)?;
    let m = augment_parameters(&linear_model(a, c)?, &[])?;
    let chain = build_chain(&m, DerivativeDefinition::AffineNoInput, a.nrows().saturating_sub(1))?;
    let empty = crate::symbolic::Binding::new();
    let j: Vec<Vec<f64>> = chain
        .jacobian()
        .iter()
        .map(|row| row.iter().map(|e| e.evaluate(&empty)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let n = a.nrows();
    let rj = numeric_rank(&j, n);
    let mut both = rows_of(&o);
    both.extend(j);
    Ok(rj == r && numeric_rank(&both, n) == r)
}
