//! Strip cell problem and the strange-term coefficient `K`.
//!
//! `V` is `Y`-periodic on `Y × (-∞, 0)` with `Δ³V = 0`, `V = 0`,
//! `∂V/∂y_N = b` and `∂³V/∂y_N³ = 0` on `y_N = 0`. Writing
//! `V = Σ_k w_k(y_N) e^{2πi k·ȳ}` turns the equation into
//! `(d²/dt² - ξ_k²)³ w_k = 0` with `ξ_k = 2π|k|`. The tangential Laplacian
//! acts on a mode as `-|2πk|²` whatever the tangential dimension, so the
//! 2D case needs no extra bookkeeping: every sum of squared tangential
//! derivatives collapses to a power of `ξ_k` by the multinomial identity
//! `Σ_{i₁..i_p} Π (2πk_{i_j})² = ξ_k^{2p}`.
//!
//! The decaying solutions are `e^{ξt}(c₀ + c₁t + c₂t²)`. The three boundary
//! conditions give `c₀ = 0`, `c₁ = b_k` and `3ξ²c₁ + 6ξc₂ = 0`, i.e.
//! `w_k(t) = b_k e^{ξt}(t - ξt²/2)`. The zero mode is gauge-fixed to
//! `w₀ = b₀ t`; adding `a t²` changes no third derivative.
//!
//! `K = ∫|D³V|²` is evaluated three ways:
//!
//! * energy: per mode `Σ_m C(3,m) ξ^{2(3-m)} ∫|w^{(m)}|²`, where `C(3,m)`
//!   counts the placements of `m` vertical slots in an ordered triple. The
//!   integrals are exponential moments `∫_{-∞}^0 e^{2ξt} t^n dt =
//!   (-1)^n n!/(2ξ)^{n+1}` and are cross-checked by adaptive quadrature.
//!   Substituting `s = ξt` shows each mode contributes `C ξ³|b_k|²` with a
//!   universal `C`; the moments give `C = 13/16 + 3·7/16 + 3·13/16 + 7/16 = 5`.
//! * boundary trace: `-(w⁗(0) - 3ξ²w″(0)) conj(b_k)` per mode.
//! * test function: the weak identity against `b(ȳ)(1+y_N)⁴` on
//!   `Y × (-1, 0)` by Gauss quadrature.

use std::f64::consts::PI;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::profile::{OscillationProfile, Wavevector};
use crate::quadrature::{adaptive_gk, GaussRule};
use crate::{Error, Real, Result};

/// Per-mode energy divided by `ξ³|b_k|²`; derived from the exponential
/// moments and confirmed by quadrature in the tests.
pub const UNIVERSAL_MODE_CONSTANT: f64 = 5.0;

/// Truncation of the per-mode quadrature, in units of `1/ξ`.
pub const DECAY_CUTOFF: f64 = 40.0;
/// Closed form and quadrature must agree to this relative gap.
pub const QUADRATURE_AGREEMENT: f64 = 1e-8;
pub const TESTFUNCTION_GAUSS_POINTS: usize = 64;

/// `e^{rate·t} Σ_j poly[j] tʲ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpPoly<T> {
    pub rate: T,
    pub poly: Vec<T>,
}

impl<T: Real> ExpPoly<T> {
    pub fn new(rate: T, poly: Vec<T>) -> Self {
        ExpPoly { rate, poly }
    }

    pub fn derivative(&self) -> Self {
        let n = self.poly.len();
        let mut out = vec![T::zero(); n];
        for j in 0..n {
            out[j] = self.rate * self.poly[j];
            if j + 1 < n {
                out[j] += T::from_usize(j + 1) * self.poly[j + 1];
            }
        }
        ExpPoly { rate: self.rate, poly: out }
    }

    pub fn nth_derivative(&self, n: usize) -> Self {
        (0..n).fold(self.clone(), |acc, _| acc.derivative())
    }

    pub fn eval(&self, t: T) -> T {
        let p = self.poly.iter().rev().fold(T::zero(), |acc, &c| acc * t + c);
        (self.rate * t).exp() * p
    }

    fn product(&self, other: &Self) -> Self {
        let mut poly = vec![T::zero(); self.poly.len() + other.poly.len() - 1];
        for (i, a) in self.poly.iter().enumerate() {
            for (j, b) in other.poly.iter().enumerate() {
                poly[i + j] += *a * *b;
            }
        }
        ExpPoly { rate: self.rate + other.rate, poly }
    }

    /// `∫_{-∞}^0`, finite only for a positive rate.
    fn integral_to_minus_infinity(&self) -> T {
        let c = self.rate;
        let mut acc = T::zero();
        let mut fact = T::one();
        for (n, &p) in self.poly.iter().enumerate() {
            if n > 0 {
                fact *= T::from_usize(n);
            }
            let sign = if n % 2 == 0 { T::one() } else { -T::one() };
            acc += p * sign * fact / c.powi(n as i32 + 1);
        }
        acc
    }

    /// `(d²/dt² - ξ²)³` applied symbolically.
    pub fn apply_sixth_order(&self, xi: T) -> Self {
        let mut cur = self.clone();
        for _ in 0..3 {
            let d2 = cur.nth_derivative(2);
            let poly = d2
                .poly
                .iter()
                .zip(&cur.poly)
                .map(|(a, b)| *a - xi * xi * *b)
                .collect();
            cur = ExpPoly { rate: cur.rate, poly };
        }
        cur
    }
}

/// One Fourier mode of the cell solution, `w_k = amplitude · shape`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMode<T> {
    pub k: Wavevector,
    pub xi: T,
    pub amplitude: Complex<T>,
    pub shape: ExpPoly<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSolution<T> {
    dim: usize,
    /// Nonzero modes sorted by wave vector.
    pub modes: Vec<CellMode<T>>,
    pub b0: T,
    /// Coefficient `a` of the zero-mode gauge term `a y_N²`.
    pub gauge: T,
    pub cutoff: i32,
}

/// Builds the decaying per-mode solution for every mode of the profile.
pub fn solve_cell<T: Real>(profile: &OscillationProfile<T>) -> CellSolution<T> {
    let two_pi = T::lit(2.0 * PI);
    let modes = profile
        .modes()
        .iter()
        .filter(|(k, _)| !k.is_zero())
        .map(|(k, b)| {
            let xi = two_pi * T::lit(k.norm_sq() as f64).sqrt();
            CellMode {
                k: *k,
                xi,
                amplitude: *b,
                shape: ExpPoly::new(xi, vec![T::zero(), T::one(), -xi * T::lit(0.5)]),
            }
        })
        .collect();
    CellSolution { dim: profile.dim(), modes, b0: profile.b0(), gauge: T::zero(), cutoff: profile.cutoff() }
}

impl<T: Real> CellSolution<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn with_gauge(mut self, a: T) -> Self {
        self.gauge = a;
        self
    }

    /// Multiplies every `c₂` by `factor`; used to show the residual check
    /// detects broken coefficients.
    pub fn with_scaled_quadratic(mut self, factor: T) -> Self {
        for m in &mut self.modes {
            m.shape.poly[2] *= factor;
        }
        self
    }

    fn zero_mode(&self) -> ExpPoly<T> {
        ExpPoly::new(T::zero(), vec![T::zero(), self.b0, self.gauge])
    }
}

pub const MAX_V_DERIVATIVE: usize = 4;

/// `∂^deriv V(ȳ, y_N)` for `|deriv| ≤ 4` and `y_N ≤ 0`; `deriv` lists the
/// tangential orders followed by the vertical one.
pub fn eval_v<T: Real>(sol: &CellSolution<T>, ybar: &[T], yn: T, deriv: &[u8]) -> Result<T> {
    if ybar.len() != sol.dim || deriv.len() != sol.dim + 1 {
        return Err(Error::DimensionMismatch { expected: sol.dim, got: ybar.len() });
    }
    let order: usize = deriv.iter().map(|&d| d as usize).sum();
    if order > MAX_V_DERIVATIVE {
        return Err(Error::DerivativeOrder { requested: order, max: MAX_V_DERIVATIVE });
    }
    if yn > T::zero() {
        return Err(Error::OutOfDomain(format!("y_N = {yn} > 0")));
    }
    let two_pi = T::lit(2.0 * PI);
    let vert = deriv[sol.dim] as usize;
    let tangential = &deriv[..sol.dim];
    let mut acc = T::zero();
    if tangential.iter().all(|&d| d == 0) {
        acc += sol.zero_mode().nth_derivative(vert).eval(yn);
    }
    for m in &sol.modes {
        let ks = m.k.components(sol.dim);
        let mut factor = Complex::new(T::one(), T::zero());
        let mut phase = T::zero();
        for i in 0..sol.dim {
            let ki = T::lit(ks[i] as f64);
            phase += ki * ybar[i];
            for _ in 0..tangential[i] {
                factor = factor * Complex::new(T::zero(), two_pi * ki);
            }
        }
        let w = m.shape.nth_derivative(vert).eval(yn);
        acc += (m.amplitude * factor * Complex::from_polar(T::one(), two_pi * phase)).re * w;
    }
    Ok(acc)
}

fn binomial3(m: usize) -> T3 {
    [1.0, 3.0, 3.0, 1.0][m]
}
type T3 = f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeContribution {
    pub k: Vec<i32>,
    pub xi: f64,
    pub contribution: f64,
}

/// Energy route with the closed form checked against adaptive quadrature.
/// Returns `K` and the per-mode table (closed-form values).
pub fn k_energy<T: Real>(sol: &CellSolution<T>) -> Result<(T, Vec<ModeContribution>)> {
    let mut total = T::zero();
    let mut table = Vec::with_capacity(sol.modes.len());
    for m in &sol.modes {
        let amp2 = m.amplitude.norm_sqr();
        let mut closed = T::zero();
        let mut quad = T::zero();
        for order in 0..=3 {
            let d = m.shape.nth_derivative(order);
            let weight = T::lit(binomial3(order)) * m.xi.powi(2 * (3 - order as i32));
            closed += weight * d.product(&d).integral_to_minus_infinity();
            let lower = -T::lit(DECAY_CUTOFF) / m.xi;
            quad += weight
                * adaptive_gk(
                    |t| {
                        let v = d.eval(t);
                        v * v
                    },
                    lower,
                    T::zero(),
                    T::lit(1e-13),
                );
        }
        let gap = ((closed - quad) / closed).abs();
        if !(gap <= T::lit(QUADRATURE_AGREEMENT)) {
            return Err(Error::QuadratureMismatch { mode: format!("{:?}", m.k.0), gap: gap.to_f64_lossy() });
        }
        let c = closed * amp2;
        total += c;
        table.push(ModeContribution {
            k: m.k.components(sol.dim).to_vec(),
            xi: m.xi.to_f64_lossy(),
            contribution: c.to_f64_lossy(),
        });
    }
    Ok((total, table))
}

/// Boundary-trace route `-∫_Y (Δ ∂²_N V + 2Δ_{N-1} ∂²_N V)(ȳ, 0) b(ȳ) dȳ`.
pub fn k_boundary<T: Real>(sol: &CellSolution<T>, profile: &OscillationProfile<T>) -> T {
    sol.modes
        .iter()
        .map(|m| {
            let w2 = m.shape.nth_derivative(2).eval(T::zero());
            let w4 = m.shape.nth_derivative(4).eval(T::zero());
            let bk = profile.modes().get(&m.k).copied().unwrap_or_default();
            let trace = m.amplitude * (w4 - T::lit(3.0) * m.xi * m.xi * w2);
            -(trace * bk.conj()).re
        })
        .fold(T::zero(), |s, v| s + v)
}

fn binomial2(m: usize) -> f64 {
    [1.0, 2.0, 1.0][m]
}

/// Test-function route: `∫_{Y×(-1,0)} 3 D²(∂_N V) : D²φ + y_N D³V : D³φ`
/// with `φ = b(ȳ)(1 + y_N)⁴`, per mode by Gauss quadrature in `y_N`.
pub fn k_testfunction<T: Real>(sol: &CellSolution<T>, profile: &OscillationProfile<T>) -> T {
    let rule = GaussRule::<T>::new(TESTFUNCTION_GAUSS_POINTS);
    let phi = ExpPoly::new(
        T::zero(),
        vec![T::one(), T::lit(4.0), T::lit(6.0), T::lit(4.0), T::one()],
    );
    let phi_d: Vec<ExpPoly<T>> = (0..=3).map(|n| phi.nth_derivative(n)).collect();
    let mode_term = |k: &Wavevector, xi: T, amp: Complex<T>, shape: &ExpPoly<T>| -> T {
        let bk = profile.modes().get(k).copied().unwrap_or_default();
        let coupling = (amp * bk.conj()).re;
        if coupling == T::zero() {
            return T::zero();
        }
        let wd: Vec<ExpPoly<T>> = (0..=4).map(|n| shape.nth_derivative(n)).collect();
        let integrand = |t: T| {
            let mut first = T::zero();
            for m in 0..=2 {
                first += T::lit(binomial2(m)) * xi.powi(2 * (2 - m as i32)) * wd[m + 1].eval(t) * phi_d[m].eval(t);
            }
            let mut second = T::zero();
            for m in 0..=3 {
                second += T::lit(binomial3(m)) * xi.powi(2 * (3 - m as i32)) * wd[m].eval(t) * phi_d[m].eval(t);
            }
            T::lit(3.0) * first + t * second
        };
        coupling * rule.integrate(-T::one(), T::zero(), integrand)
    };
    let mut total = mode_term(&Wavevector::zero(), T::zero(), Complex::new(T::one(), T::zero()), &sol.zero_mode());
    for m in &sol.modes {
        total += mode_term(&m.k, m.xi, m.amplitude, &m.shape);
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellResiduals {
    /// Max over modes of `max_t |(D² - ξ²)³ w_k| / (ξ⁶ |b_k|)`.
    pub ode: f64,
    /// `max |w_k(0)|`.
    pub value: f64,
    /// `max |w_k'(0) - b_k|`.
    pub slope: f64,
    /// `max |w_k'''(0)|`.
    pub third: f64,
}

pub const RESIDUAL_GRID: usize = 400;

pub fn residual_check<T: Real>(sol: &CellSolution<T>) -> CellResiduals {
    let mut r = CellResiduals { ode: 0.0, value: 0.0, slope: 0.0, third: 0.0 };
    let zero_mode = (Wavevector::zero(), T::zero(), Complex::new(T::one(), T::zero()), sol.zero_mode(), sol.b0);
    let modes = sol.modes.iter().map(|m| (m.k, m.xi, m.amplitude, m.shape.clone(), m.amplitude.norm()));
    for (_, xi, amp, shape, bk) in std::iter::once(zero_mode).chain(modes) {
        let residual = shape.apply_sixth_order(xi);
        let scale = if xi > T::zero() { xi.powi(6) } else { T::one() } * amp.norm().max(T::min_positive_value());
        let extent = if xi > T::zero() { T::lit(DECAY_CUTOFF) / xi } else { T::one() };
        for i in 0..=RESIDUAL_GRID {
            let t = -extent * T::from_usize(i) / T::from_usize(RESIDUAL_GRID);
            let v = (amp * residual.eval(t)).norm() / scale;
            r.ode = r.ode.max(v.to_f64_lossy());
        }
        let at0 = |n: usize| amp * shape.nth_derivative(n).eval(T::zero());
        r.value = r.value.max(at0(0).norm().to_f64_lossy());
        let target = if xi > T::zero() { amp } else { Complex::new(bk, T::zero()) };
        r.slope = r.slope.max((at0(1) - target).norm().to_f64_lossy());
        r.third = r.third.max(at0(3).norm().to_f64_lossy());
    }
    r
}

/// Two-scale corrector `v̂(x̄, y) = V(y) · ∂²v/∂x_N²(x̄, 0)`, differentiated
/// in `y` by `deriv`.
pub fn corrector_vhat<T: Real>(
    sol: &CellSolution<T>,
    trace: impl Fn(&[T]) -> T,
    xbar: &[T],
    ybar: &[T],
    yn: T,
    deriv: &[u8],
) -> Result<T> {
    Ok(eval_v(sol, ybar, yn, deriv)? * trace(xbar))
}

/// Three values of `K` with the per-mode energy table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KReport {
    pub k_energy: f64,
    pub k_boundary: f64,
    pub k_testfunction: f64,
    pub modes: Vec<ModeContribution>,
    pub cutoff: i32,
}

/// Relative agreement demanded between the energy and boundary routes.
pub const BOUNDARY_AGREEMENT: f64 = 1e-9;
/// Relative agreement demanded between the energy and test-function routes.
pub const TESTFUNCTION_AGREEMENT: f64 = 1e-8;

impl KReport {
    pub fn agrees(&self) -> bool {
        let scale = 1.0 + self.k_energy.abs();
        (self.k_energy - self.k_boundary).abs() <= BOUNDARY_AGREEMENT * scale
            && (self.k_energy - self.k_testfunction).abs() <= TESTFUNCTION_AGREEMENT * scale
    }
}

pub fn k_report<T: Real>(profile: &OscillationProfile<T>) -> Result<KReport> {
    let sol = solve_cell(profile);
    let (energy, modes) = k_energy(&sol)?;
    Ok(KReport {
        k_energy: energy.to_f64_lossy(),
        k_boundary: k_boundary(&sol, profile).to_f64_lossy(),
        k_testfunction: k_testfunction(&sol, profile).to_f64_lossy(),
        modes,
        cutoff: sol.cutoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos_profile() -> OscillationProfile<f64> {
        OscillationProfile::cosine(1.0, 1.0).unwrap()
    }

    #[test]
    fn constant_profile_has_zero_k() {
        let p = OscillationProfile::<f64>::constant(1, 1.0).unwrap();
        let sol = solve_cell(&p);
        assert!(sol.modes.is_empty());
        assert_eq!(k_energy(&sol).unwrap().0, 0.0);
        assert_eq!(k_boundary(&sol, &p), 0.0);
        assert_eq!(k_testfunction(&sol, &p), 0.0);
        assert_eq!(eval_v(&sol, &[0.2], -0.5, &[0, 0]).unwrap(), -0.5);
        assert_eq!(eval_v(&sol, &[0.2], -0.5, &[0, 3]).unwrap(), 0.0);
    }

    #[test]
    fn boundary_data_reproduced() {
        let p = cos_profile();
        let sol = solve_cell(&p);
        for i in 0..32 {
            let y = i as f64 / 32.0 - 0.5;
            let b = 1.0 + (2.0 * PI * y).cos();
            assert!(eval_v(&sol, &[y], 0.0, &[0, 0]).unwrap().abs() < 1e-12);
            assert!((eval_v(&sol, &[y], 0.0, &[0, 1]).unwrap() - b).abs() < 1e-12);
            assert!(eval_v(&sol, &[y], 0.0, &[0, 3]).unwrap().abs() < 1e-12);
        }
        assert!(eval_v(&sol, &[0.0], 0.1, &[0, 0]).is_err());
        assert!(eval_v(&sol, &[0.0], -0.1, &[3, 2]).is_err());
    }

    #[test]
    fn mixed_trace_is_tangential_slope_of_b() {
        let p = cos_profile();
        let sol = solve_cell(&p);
        let y = 0.13;
        let want = -2.0 * PI * (2.0 * PI * y).sin();
        assert!((eval_v(&sol, &[y], 0.0, &[1, 1]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn three_routes_agree_for_cosine() {
        let r = k_report(&cos_profile()).unwrap();
        let want = 2.0 * UNIVERSAL_MODE_CONSTANT * (2.0 * PI).powi(3) * 0.25;
        assert!(((r.k_energy - want) / want).abs() < 1e-12);
        assert!(((r.k_boundary - r.k_energy) / r.k_energy).abs() < 1e-10);
        assert!(((r.k_testfunction - r.k_energy) / r.k_energy).abs() < 1e-9);
        assert!(r.agrees());
    }

    #[test]
    fn conjugate_pairs_contribute_equally() {
        let p = OscillationProfile::from_half(
            1,
            2.0,
            [(Wavevector([1, 0]), Complex::new(0.3, 0.4)), (Wavevector([2, 0]), Complex::new(-0.2, 0.1))],
        )
        .unwrap();
        let (_, table) = k_energy(&solve_cell(&p)).unwrap();
        let get = |k: i32| table.iter().find(|m| m.k == vec![k]).unwrap().contribution;
        assert!((get(1) - get(-1)).abs() < 1e-12 * get(1));
        assert!((get(2) - get(-2)).abs() < 1e-12 * get(2));
    }

    #[test]
    fn scaling_is_quadratic() {
        let p = cos_profile();
        let k1 = k_report(&p).unwrap();
        let k2 = k_report(&p.scaled(2.0).unwrap()).unwrap();
        assert!((k2.k_energy - 4.0 * k1.k_energy).abs() < 1e-9 * k2.k_energy);
        assert!((k2.k_boundary - 4.0 * k1.k_boundary).abs() < 1e-9 * k2.k_energy);
    }

    #[test]
    fn gauge_leaves_k_unchanged() {
        let p = cos_profile();
        let sol = solve_cell(&p);
        let a = k_testfunction(&sol, &p);
        let b = k_testfunction(&sol.clone().with_gauge(7.0), &p);
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn residuals_vanish_by_construction() {
        let sol = solve_cell(&cos_profile());
        let r = residual_check(&sol);
        assert!(r.ode < 1e-10, "{r:?}");
        assert!(r.value < 1e-12 && r.slope < 1e-12 && r.third < 1e-12, "{r:?}");

        let zero = solve_cell(&OscillationProfile::<f64>::constant(1, 0.0).unwrap());
        let z = residual_check(&zero);
        assert_eq!((z.ode, z.value, z.slope, z.third), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn perturbed_quadratic_breaks_third_derivative_condition() {
        let sol = solve_cell(&cos_profile()).with_scaled_quadratic(1.01);
        let r = residual_check(&sol);
        // w'''(0) = b_k (3ξ² + 6ξ c₂) with c₂ = -1.01 ξ/2 gives -0.03 ξ² b_k
        let xi = 2.0 * PI;
        let want = 0.03 * xi * xi * 0.5;
        assert!((r.third - want).abs() < 1e-10, "{} vs {want}", r.third);
        assert!(r.ode < 1e-10);
    }

    #[test]
    fn two_dimensional_modes() {
        let p = OscillationProfile::from_half(
            2,
            1.0,
            [(Wavevector([1, 1]), Complex::new(0.2, 0.0)), (Wavevector([0, 1]), Complex::new(0.1, 0.1))],
        )
        .unwrap();
        let r = k_report(&p).unwrap();
        assert!(r.agrees(), "{r:?}");
        let xi11 = 2.0 * PI * 2f64.sqrt();
        let m = r.modes.iter().find(|m| m.k == vec![1, 1]).unwrap();
        assert!((m.contribution / (xi11.powi(3) * 0.04) - 5.0).abs() < 1e-10);
    }

    #[test]
    fn corrector_scales_with_trace() {
        let sol = solve_cell(&cos_profile());
        let zero = corrector_vhat(&sol, |_| 0.0, &[0.3], &[0.1], -0.2, &[0, 0]).unwrap();
        assert_eq!(zero, 0.0);
        let v = eval_v(&sol, &[0.1], -0.2, &[1, 1]).unwrap();
        let c = corrector_vhat(&sol, |x| 2.0 * x[0], &[0.3], &[0.1], -0.2, &[1, 1]).unwrap();
        assert!((c - 0.6 * v).abs() < 1e-14);
    }
}
