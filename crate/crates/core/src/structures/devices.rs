//! Device force laws, written once over [`Scalar`] so the symbolic and the
//! numeric forms cannot drift apart.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::symbolic::{rational, Expr};

/// Gravitational acceleration used by the track NES (m/s²).
pub const GRAVITY: f64 = 9.81;

pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn lit(x: f64) -> Self;
    fn tanh(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    /// `self^(n/d)` on the positive branch.
    fn powq(&self, n: i64, d: i64) -> Self;
}

impl Scalar for f64 {
    fn lit(x: f64) -> f64 {
        x
    }
    fn tanh(&self) -> f64 {
        f64::tanh(*self)
    }
    fn powi(&self, n: i32) -> f64 {
        f64::powi(*self, n)
    }
    fn powq(&self, n: i64, d: i64) -> f64 {
        self.powf(n as f64 / d as f64)
    }
}

impl Scalar for Expr {
    fn lit(x: f64) -> Expr {
        Expr::real(x)
    }
    fn tanh(&self) -> Expr {
        Expr::tanh(self.clone()).simplify()
    }
    fn powi(&self, n: i32) -> Expr {
        Expr::powi(self.clone(), n as i64).simplify()
    }
    fn powq(&self, n: i64, d: i64) -> Expr {
        Expr::pow(self.clone(), rational(n, d)).simplify()
    }
}

/// Differentiable Bouc-Wen law of a lead rubber bearing, SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrbBoucWenSpec {
    /// Pre-yield stiffness (N/m).
    pub k_lrb: f64,
    /// Post- to pre-yield stiffness ratio.
    pub alpha: f64,
    /// Yield displacement (m).
    pub u_y: f64,
    pub n_lrb: i32,
    pub beta: f64,
    pub gamma: f64,
    /// Sharpness of the smooth sign and absolute value.
    pub rho: f64,
}

impl LrbBoucWenSpec {
    /// 135 kN/mm, 40 mm, α 0.2, n 2, β 0.75, γ 0.8, ρ 100.
    pub fn design() -> LrbBoucWenSpec {
        LrbBoucWenSpec {
            k_lrb: 135e6,
            alpha: 0.2,
            u_y: 0.040,
            n_lrb: 2,
            beta: 0.75,
            gamma: 0.8,
            rho: 100.0,
        }
    }

    pub fn validate(&self) -> bool {
        self.k_lrb > 0.0
            && self.u_y > 0.0
            && self.rho > 0.0
            && self.alpha > 0.0
            && self.alpha < 1.0
            && self.n_lrb >= 1
    }
}

/// Spring in series with a parallel inerter and dashpot, SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InerterSpec {
    /// Equivalent translational mass (kg).
    pub m_in: f64,
    /// Dashpot (N·s/m).
    pub c_in: f64,
    /// Series spring (N/m).
    pub k_in: f64,
}

impl InerterSpec {
    /// `m_in = τ Σm`, `k_in = κ k_lrb`, `c_in = 2ζ √(k_lrb Σm)`.
    pub fn design(total_mass: f64, k_lrb: f64, tau: f64, kappa: f64, zeta: f64) -> InerterSpec {
        InerterSpec {
            m_in: tau * total_mass,
            c_in: 2.0 * zeta * (k_lrb * total_mass).sqrt(),
            k_in: kappa * k_lrb,
        }
    }

    pub fn scaled(&self, s: f64) -> InerterSpec {
        InerterSpec {
            m_in: self.m_in * s,
            c_in: self.c_in * s,
            k_in: self.k_in * s,
        }
    }

    pub fn validate(&self) -> bool {
        self.m_in > 0.0 && self.c_in > 0.0 && self.k_in > 0.0
    }
}

/// Auxiliary mass on a quartic track `h(x) = a_N x⁴`, SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NesSpec {
    pub m_n: f64,
    pub c_n: f64,
    /// Track shape coefficient (1/m³).
    pub a_n: f64,
    pub g: f64,
}

impl NesSpec {
    pub fn validate(&self) -> bool {
        self.m_n > 0.0 && self.c_n > 0.0 && self.a_n > 0.0
    }
}

/// Fractional-power viscous damper `C |v|^α tanh(ρ v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscousDamperSpec {
    /// N·(s/m)^α.
    pub c: f64,
    pub alpha: f64,
    pub rho: f64,
}

impl ViscousDamperSpec {
    pub fn validate(&self) -> bool {
        self.c > 0.0 && self.rho > 0.0 && self.alpha > 0.0 && self.alpha <= 1.0
    }
}

pub fn bouc_wen_law<T: Scalar>(xdot: T, z: T, u_y: T, beta: T, gamma: T, rho: T, n: i32) -> T {
    let sz = (rho.clone() * z.clone()).tanh();
    let smooth_abs = sz.clone() * z;
    // the switch acts on sign(ẋ z); on sign(ẋ) alone z runs away after a reversal
    let shape = gamma + beta * (rho * xdot.clone()).tanh() * sz;
    xdot / u_y * (T::lit(1.0) - smooth_abs.powi(n) * shape)
}

pub fn lrb_force_law<T: Scalar>(x0: T, z: T, k_lrb: T, alpha: T, u_y: T) -> T {
    alpha.clone() * k_lrb.clone() * x0 + (T::lit(1.0) - alpha) * k_lrb * u_y * z
}

pub fn nes_force_law<T: Scalar>(x: T, xdot: T, xddot: T, m_n: T, a_n: T, g: T) -> T {
    let a2 = a_n.clone() * a_n.clone();
    (T::lit(16.0) * a2.clone() * x.powi(6) * xddot
        + T::lit(48.0) * a2 * x.powi(5) * xdot.powi(2)
        + T::lit(4.0) * a_n * x.powi(3) * g)
        * m_n
}

/// `C (v²)^(α/2) tanh(ρ v)`: the analytic branch used for symbolic work.
pub fn viscous_force_law<T: Scalar>(v: T, c: T, alpha: (i64, i64), rho: T) -> T {
    let (n, d) = alpha;
    c * (v.clone() * v.clone()).powq(n, 2 * d) * (rho * v).tanh()
}

/// Hysteretic rate `ż`. Units follow the spec fields.
pub fn bouc_wen_rate(xdot: f64, z: f64, spec: &LrbBoucWenSpec) -> f64 {
    bouc_wen_law(xdot, z, spec.u_y, spec.beta, spec.gamma, spec.rho, spec.n_lrb)
}

/// Restoring force `α k x₀ + (1 − α) k u_y z`.
pub fn lrb_force(x0: f64, z: f64, spec: &LrbBoucWenSpec) -> f64 {
    lrb_force_law(x0, z, spec.k_lrb, spec.alpha, spec.u_y)
}

pub fn nes_force(x: f64, xdot: f64, xddot: f64, spec: &NesSpec) -> f64 {
    nes_force_law(x, xdot, xddot, spec.m_n, spec.a_n, spec.g)
}

/// `C |v|^α tanh(ρ v)` with the true absolute value.
pub fn viscous_force(v: f64, spec: &ViscousDamperSpec) -> f64 {
    spec.c * v.abs().powf(spec.alpha) * (spec.rho * v).tanh()
}

/// `(ẍ_in, f_in)` of the inerter chain driven by the isolation displacement.
pub fn inerter_dynamics(x0: f64, x_in: f64, v_in: f64, spec: &InerterSpec) -> (f64, f64) {
    let f = spec.k_in * (x0 - x_in);
    ((f - spec.c_in * v_in) / spec.m_in, f)
}

/// Rational approximation of an exponent with a small denominator.
pub fn exponent_ratio(alpha: f64) -> (i64, i64) {
    (1..=1000)
        .map(|d| ((alpha * d as f64).round() as i64, d))
        .find(|&(n, d)| (n as f64 / d as f64 - alpha).abs() < 1e-12)
        .unwrap_or(((alpha * 1000.0).round() as i64, 1000))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{Binding, Sym};

    fn table_v() -> LrbBoucWenSpec {
        LrbBoucWenSpec::design()
    }

    #[test]
    fn bouc_wen_examples() {
        let mut s = table_v();
        s.u_y = 40.0;
        assert!((bouc_wen_rate(1.0, 0.0, &s) - 0.025).abs() < 1e-15);
        assert_eq!(bouc_wen_rate(0.0, 0.3, &s), 0.0);
    }

    #[test]
    fn bouc_wen_fixed_point_by_bisection() {
        let s = table_v();
        let g = |z: f64| (100.0 * z).tanh() * z * ((100.0 * z).tanh() * z) * 1.55 - 1.0;
        let (mut lo, mut hi) = (0.1, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let z = 0.5 * (lo + hi);
        assert!((z - 1.0 / 1.55f64.sqrt()).abs() < 1e-6);
        assert!(bouc_wen_rate(1.0, z, &s).abs() < 1e-9);
    }

    #[test]
    fn nes_examples() {
        let s = NesSpec {
            m_n: 1.0,
            c_n: 1.0,
            a_n: 1.0,
            g: GRAVITY,
        };
        assert!((nes_force(1.0, 0.0, 0.0, &s) - 39.24).abs() < 1e-12);
        assert_eq!(nes_force(0.0, 3.0, -2.0, &s), 0.0);
        assert_eq!(nes_force(-0.7, 0.0, 0.0, &s), -nes_force(0.7, 0.0, 0.0, &s));
    }

    #[test]
    fn viscous_examples() {
        let s = ViscousDamperSpec {
            c: 1.0,
            alpha: 0.5,
            rho: 100.0,
        };
        assert_eq!(viscous_force(0.0, &s), 0.0);
        assert!((viscous_force(1.0, &s) - 1.0).abs() < 1e-12);
        for v in [0.01, 0.3, 2.0] {
            assert_eq!(viscous_force(-v, &s), -viscous_force(v, &s));
        }
    }

    #[test]
    fn inerter_examples() {
        let s = InerterSpec {
            m_in: 2.0,
            c_in: 3.0,
            k_in: 5.0,
        };
        assert_eq!(inerter_dynamics(0.4, 0.4, 0.0, &s), (0.0, 0.0));
        let (_, f) = inerter_dynamics(0.3, 0.1, 0.0, &s);
        assert!((f - 5.0 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn inerter_design_values() {
        let total: f64 = [3057.0, 2335.0, 1928.0, 1807.0, 1800.0].iter().sum::<f64>() * 1e3;
        let s = InerterSpec::design(total, 135e6, 0.1, 0.12, 0.013);
        // 10927 t, 0.12 × 135 kN/mm, 2 × 0.013 × √(1.35e8 × 1.0927e7)
        assert!((s.m_in - 1.0927e6).abs() < 1e-6);
        assert!((s.k_in - 1.62e7).abs() < 1e-6);
        assert!((s.c_in - 998_598.027_236).abs() < 1e-3);
    }

    #[test]
    fn symbolic_forms_match_numeric() {
        let (xd, z) = (Sym::new("xd"), Sym::new("z"));
        let s = table_v();
        let e = bouc_wen_law(
            Expr::var(xd),
            Expr::var(z),
            Expr::real(s.u_y),
            Expr::real(s.beta),
            Expr::real(s.gamma),
            Expr::real(s.rho),
            s.n_lrb,
        );
        let v = Expr::named("v");
        let f = viscous_force_law(v, Expr::real(2.0), (1, 2), Expr::real(100.0));
        let spec = ViscousDamperSpec {
            c: 2.0,
            alpha: 0.5,
            rho: 100.0,
        };
        for (a, b) in [(0.3, 0.2), (-0.1, 0.7), (0.02, -0.9)] {
            let bind: Binding = [(xd, a), (z, b), (Sym::new("v"), a)].into_iter().collect();
            assert!((e.evaluate(&bind).unwrap() - bouc_wen_rate(a, b, &s)).abs() < 1e-12);
            assert!((f.evaluate(&bind).unwrap() - viscous_force(a, &spec)).abs() < 1e-12);
        }
    }

    #[test]
    fn exponent_ratios() {
        assert_eq!(exponent_ratio(0.5), (1, 2));
        assert_eq!(exponent_ratio(0.35), (7, 20));
        assert_eq!(exponent_ratio(1.0), (1, 1));
    }
}
