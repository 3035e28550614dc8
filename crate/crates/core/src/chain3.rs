//! Third-order calculus on truncated Taylor polynomials.
//!
//! A [`Jet3`] stores the Taylor coefficients `c_β` of a scalar field around a
//! point, for all multi-indices `|β| ≤ 3` over `n ≤ 3` variables, so that
//! `f(x₀ + δ) = Σ c_β δ^β + O(|δ|⁴)` and `∂^β f(x₀) = β! c_β`. Products,
//! reciprocals and compositions of jets are exact to order three, which is
//! what the transition function `h_ε`, the pullback `Ψ_ε`, its inverse and the
//! Faà di Bruno coefficients are built from.
//!
//! Maps are vertical shears `(x̄, t) ↦ (x̄, τ(x̄, t))`: only the last coordinate
//! is transformed, the tangential ones pass through unchanged.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use crate::{Error, Real, Result};

pub const MAX_VARS: usize = 3;
pub const MAX_ORDER: usize = 3;
/// Monomials of degree ≤ 3 in three variables.
pub const MAX_MONOMIALS: usize = 20;

/// Exponent vector of a monomial (unused trailing entries are zero).
pub type Exponents = [u8; MAX_VARS];

pub struct MonomialTable {
    pub nvars: usize,
    pub exps: Vec<Exponents>,
    /// `(i, j, k)` with `exps[i] + exps[j] == exps[k]` and degree ≤ 3.
    products: Vec<(u8, u8, u8)>,
}

impl MonomialTable {
    fn build(nvars: usize) -> Self {
        let mut exps = Vec::new();
        for deg in 0..=MAX_ORDER as u8 {
            let mut level = Vec::new();
            for a in 0..=deg {
                for b in 0..=deg - a {
                    let c = deg - a - b;
                    let e = [a, b, c];
                    if e[nvars..].iter().all(|&x| x == 0) {
                        level.push(e);
                    }
                }
            }
            // first variable fastest-decreasing: x³, x²y, x²z, ...
            level.sort_by(|p, q| q.cmp(p));
            level.dedup();
            exps.extend(level);
        }
        let mut products = Vec::new();
        for (i, ei) in exps.iter().enumerate() {
            for (j, ej) in exps.iter().enumerate() {
                let sum = [ei[0] + ej[0], ei[1] + ej[1], ei[2] + ej[2]];
                if degree(&sum) as usize <= MAX_ORDER {
                    let k = exps.iter().position(|e| *e == sum).expect("closed under products");
                    products.push((i as u8, j as u8, k as u8));
                }
            }
        }
        MonomialTable { nvars, exps, products }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn index(&self, e: &Exponents) -> Option<usize> {
        self.exps.iter().position(|x| x == e)
    }

    /// Indices of all monomials of exactly the given degree.
    pub fn of_degree(&self, deg: usize) -> impl Iterator<Item = usize> + '_ {
        self.exps
            .iter()
            .enumerate()
            .filter(move |(_, e)| degree(e) as usize == deg)
            .map(|(i, _)| i)
    }
}

pub fn table(nvars: usize) -> &'static MonomialTable {
    static TABLES: [OnceLock<MonomialTable>; MAX_VARS] =
        [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    assert!((1..=MAX_VARS).contains(&nvars), "jets support 1..=3 variables");
    TABLES[nvars - 1].get_or_init(|| MonomialTable::build(nvars))
}

pub fn degree(e: &Exponents) -> u8 {
    e[0] + e[1] + e[2]
}

/// `β! = Π β_i!`.
pub fn factorial_multi(e: &Exponents) -> u32 {
    e.iter().map(|&k| (1..=k as u32).product::<u32>()).product()
}

/// Number of ordered index tuples that collapse to the unordered multi-index:
/// `|β|! / β!`.
pub fn multiplicity(e: &Exponents) -> u32 {
    let d = degree(e) as u32;
    (1..=d).product::<u32>() / factorial_multi(e)
}

/// Converts an ordered index list such as `[0, 0, 1]` into exponents.
pub fn exponents_of(indices: &[usize]) -> Exponents {
    let mut e = [0u8; MAX_VARS];
    for &i in indices {
        e[i] += 1;
    }
    e
}

/// Truncated Taylor polynomial of total degree ≤ 3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet3<T> {
    nvars: u8,
    coeffs: [T; MAX_MONOMIALS],
}

/// Derivative jet of a scalar field.
pub type DerivativeJet3<T> = Jet3<T>;

impl<T: Real> Jet3<T> {
    pub fn zero(nvars: usize) -> Self {
        table(nvars);
        Jet3 { nvars: nvars as u8, coeffs: [T::zero(); MAX_MONOMIALS] }
    }

    pub fn constant(nvars: usize, value: T) -> Self {
        let mut j = Self::zero(nvars);
        j.coeffs[0] = value;
        j
    }

    /// The coordinate function `x_i` expanded around `x_i = at`.
    pub fn variable(nvars: usize, i: usize, at: T) -> Self {
        let mut j = Self::constant(nvars, at);
        let mut e = [0u8; MAX_VARS];
        e[i] = 1;
        let k = table(nvars).index(&e).expect("first-order monomial");
        j.coeffs[k] = T::one();
        j
    }

    /// Builds a jet from partial derivatives `∂^β f` supplied by exponent.
    pub fn from_derivatives(nvars: usize, mut deriv: impl FnMut(&Exponents) -> T) -> Self {
        let tab = table(nvars);
        let mut j = Self::zero(nvars);
        for (k, e) in tab.exps.iter().enumerate() {
            j.coeffs[k] = deriv(e) / T::lit(factorial_multi(e) as f64);
        }
        j
    }

    pub fn nvars(&self) -> usize {
        self.nvars as usize
    }

    pub fn table(&self) -> &'static MonomialTable {
        table(self.nvars())
    }

    pub fn value(&self) -> T {
        self.coeffs[0]
    }

    /// Taylor coefficient by monomial index.
    pub fn coeff(&self, k: usize) -> T {
        self.coeffs[k]
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs[..self.table().len()]
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        let n = self.table().len();
        &mut self.coeffs[..n]
    }

    /// Partial derivative `∂^β f` at the expansion point.
    pub fn derivative(&self, e: &Exponents) -> T {
        match self.table().index(e) {
            Some(k) => self.coeffs[k] * T::lit(factorial_multi(e) as f64),
            None => T::zero(),
        }
    }

    /// Partial derivative by monomial index.
    pub fn derivative_at(&self, k: usize) -> T {
        let e = self.table().exps[k];
        self.coeffs[k] * T::lit(factorial_multi(&e) as f64)
    }

    /// Entry of the symmetric derivative tensor of order `indices.len()`.
    pub fn tensor_entry(&self, indices: &[usize]) -> T {
        self.derivative(&exponents_of(indices))
    }

    pub fn scale(mut self, s: T) -> Self {
        for c in self.coeffs_mut() {
            *c *= s;
        }
        self
    }

    /// Part of degree ≥ 1, i.e. the jet minus its value.
    pub fn displacement(mut self) -> Self {
        self.coeffs[0] = T::zero();
        self
    }

    pub fn recip(&self) -> Self {
        let a = self.value();
        let inv = T::one() / a;
        let d = self.displacement().scale(-inv);
        // 1/(a + δ) = (1/a) Σ_{k≤3} (-δ/a)^k
        let d2 = d * d;
        let d3 = d2 * d;
        (Self::constant(self.nvars(), T::one()) + d + d2 + d3).scale(inv)
    }

    pub fn powi(&self, p: u32) -> Self {
        let mut acc = Self::constant(self.nvars(), T::one());
        for _ in 0..p {
            acc = acc * *self;
        }
        acc
    }

    /// Taylor composition `self ∘ inner`, where `self` is a jet in
    /// `inner.len()` variables and each `inner[i]` is a jet in `n` variables.
    /// Only the displacements `inner[i] - inner[i].value()` enter, so the
    /// expansion point of `self` must be the value of `inner`.
    pub fn compose(&self, inner: &[Jet3<T>]) -> Result<Self> {
        if inner.len() != self.nvars() {
            return Err(Error::DimensionMismatch { expected: self.nvars(), got: inner.len() });
        }
        let n = inner[0].nvars();
        if inner.iter().any(|j| j.nvars() != n) {
            return Err(Error::InvalidInput("inner jets must share a variable count".into()));
        }
        let tab = self.table();
        let deltas: Vec<Jet3<T>> = inner.iter().map(|j| j.displacement()).collect();
        let powers = displacement_powers(&deltas);
        let mut out = Self::zero(n);
        for (k, e) in tab.exps.iter().enumerate() {
            let c = self.coeffs[k];
            if c == T::zero() {
                continue;
            }
            let p = monomial_of_powers(&powers, e, n);
            out = out + p.scale(c);
        }
        Ok(out)
    }
}

/// `powers[i][p] = δ_i^p` for `p ≤ 3`.
fn displacement_powers<T: Real>(deltas: &[Jet3<T>]) -> Vec<[Jet3<T>; 4]> {
    deltas
        .iter()
        .map(|d| {
            let n = d.nvars();
            let one = Jet3::constant(n, T::one());
            let d2 = *d * *d;
            [one, *d, d2, d2 * *d]
        })
        .collect()
}

fn monomial_of_powers<T: Real>(powers: &[[Jet3<T>; 4]], e: &Exponents, n: usize) -> Jet3<T> {
    let mut p = Jet3::constant(n, T::one());
    for (i, pw) in powers.iter().enumerate() {
        if e[i] > 0 {
            p = p * pw[e[i] as usize];
        }
    }
    p
}

impl<T: Real> Add for Jet3<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        debug_assert_eq!(self.nvars, rhs.nvars);
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs.iter()) {
            *a += *b;
        }
        self
    }
}

impl<T: Real> Sub for Jet3<T> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        debug_assert_eq!(self.nvars, rhs.nvars);
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs.iter()) {
            *a -= *b;
        }
        self
    }
}

impl<T: Real> Neg for Jet3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Real> Mul for Jet3<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        debug_assert_eq!(self.nvars, rhs.nvars);
        let mut out = Self::zero(self.nvars());
        for &(i, j, k) in &self.table().products {
            out.coeffs[k as usize] += self.coeffs[i as usize] * rhs.coeffs[j as usize];
        }
        out
    }
}

impl<T: Real> Add<T> for Jet3<T> {
    type Output = Self;
    fn add(mut self, rhs: T) -> Self {
        self.coeffs[0] += rhs;
        self
    }
}

/// Jet of the vertical component of a vertical-shear map at a point.
///
/// For the forward map `(x̄, t) ↦ (x̄, τ)` the jet is in reference
/// displacements around `point`; for an inverse jet it is `t(x̄, τ)` in
/// physical displacements around the image point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapJet3<T> {
    pub point: [T; MAX_VARS],
    pub vertical: Jet3<T>,
}

impl<T: Real> MapJet3<T> {
    pub fn new(point: &[T], vertical: Jet3<T>) -> Result<Self> {
        if point.len() != vertical.nvars() {
            return Err(Error::DimensionMismatch { expected: vertical.nvars(), got: point.len() });
        }
        let mut p = [T::zero(); MAX_VARS];
        p[..point.len()].copy_from_slice(point);
        Ok(MapJet3 { point: p, vertical })
    }

    pub fn identity(point: &[T]) -> Self {
        let n = point.len();
        Self::new(point, Jet3::variable(n, n - 1, point[n - 1])).expect("consistent dims")
    }

    pub fn nvars(&self) -> usize {
        self.vertical.nvars()
    }

    pub fn point(&self) -> &[T] {
        &self.point[..self.nvars()]
    }

    /// Image of `point` under the map.
    pub fn image(&self) -> Vec<T> {
        let mut p = self.point().to_vec();
        let n = p.len();
        p[n - 1] = self.vertical.value();
        p
    }

    /// `∂τ/∂t` at the point, the Jacobian determinant of a vertical shear.
    pub fn vertical_stretch(&self) -> T {
        let n = self.nvars();
        let mut e = [0u8; MAX_VARS];
        e[n - 1] = 1;
        self.vertical.derivative(&e)
    }
}

/// Smallest admissible `|∂τ/∂t|` before a map is treated as degenerate.
pub const MIN_STRETCH: f64 = 1e-8;

/// Jet of the inverse map, obtained by implicit differentiation of
/// `τ(x̄, t(x̄, τ)) = τ` through fixed-point iteration on truncated jets.
pub fn invert_jet3<T: Real>(forward: &MapJet3<T>) -> Result<MapJet3<T>> {
    let n = forward.nvars();
    let stretch = forward.vertical_stretch();
    if !(stretch.abs() >= T::lit(MIN_STRETCH)) {
        return Err(Error::DegenerateJacobian(stretch.to_f64_lossy()));
    }
    let f = forward.vertical;
    let tau0 = f.value();
    let t0 = forward.point[n - 1];
    let dx: Vec<Jet3<T>> = (0..n).map(|i| Jet3::variable(n, i, T::zero())).collect();
    let inv_stretch = T::one() / stretch;

    // linear start, then each pass fixes one further order
    let mut lin = dx[n - 1];
    for i in 0..n - 1 {
        let mut e = [0u8; MAX_VARS];
        e[i] = 1;
        lin = lin - dx[i].scale(f.derivative(&e));
    }
    let mut dt = lin.scale(inv_stretch);
    for _ in 0..MAX_ORDER {
        let mut inner: Vec<Jet3<T>> = dx[..n - 1].to_vec();
        inner.push(dt);
        let composed = f.compose(&inner)? + (-tau0);
        dt = dt + (dx[n - 1] - composed).scale(inv_stretch);
    }
    let mut image = forward.image();
    image[n - 1] = tau0;
    MapJet3::new(&image, dt + t0)
}

/// Linear relation `D^β u = Σ_γ C[β][γ] D^γ ũ` between physical derivatives
/// of `u = ũ ∘ Ψ⁻¹` and reference derivatives of `ũ`, for `|β|, |γ| ≤ 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformCoeffs<T> {
    nvars: usize,
    /// Row-major `n_mono × n_mono`, indexed by monomial indices of the table.
    coeffs: Vec<T>,
    /// `|det DΨ|` at the reference point.
    pub det_j: T,
}

/// Order-3 Faà di Bruno coefficients from an inverse-map jet.
pub fn transform_coeffs<T: Real>(inverse: &MapJet3<T>) -> TransformCoeffs<T> {
    let n = inverse.nvars();
    let tab = table(n);
    let m = tab.len();
    let mut deltas: Vec<Jet3<T>> = (0..n - 1).map(|i| Jet3::variable(n, i, T::zero())).collect();
    deltas.push(inverse.vertical.displacement());
    let powers = displacement_powers(&deltas);
    let mut coeffs = vec![T::zero(); m * m];
    for (g, eg) in tab.exps.iter().enumerate() {
        let p = monomial_of_powers(&powers, eg, n);
        let gfact = T::lit(factorial_multi(eg) as f64);
        for (b, eb) in tab.exps.iter().enumerate() {
            let c = p.coeff(b);
            if c != T::zero() {
                coeffs[b * m + g] = c * T::lit(factorial_multi(eb) as f64) / gfact;
            }
        }
    }
    let stretch = inverse.vertical_stretch();
    TransformCoeffs { nvars: n, coeffs, det_j: (T::one() / stretch).abs() }
}

impl<T: Real> TransformCoeffs<T> {
    pub fn identity(nvars: usize) -> Self {
        let m = table(nvars).len();
        let mut coeffs = vec![T::zero(); m * m];
        for i in 0..m {
            coeffs[i * m + i] = T::one();
        }
        TransformCoeffs { nvars, coeffs, det_j: T::one() }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn coeff(&self, beta: usize, gamma: usize) -> T {
        let m = table(self.nvars).len();
        self.coeffs[beta * m + gamma]
    }

    /// Physical derivative jet from a reference derivative jet.
    pub fn physical(&self, reference: &Jet3<T>) -> Jet3<T> {
        let tab = table(self.nvars);
        let m = tab.len();
        let refd: Vec<T> = (0..m).map(|g| reference.derivative_at(g)).collect();
        Jet3::from_derivatives(self.nvars, |e| {
            let b = tab.index(e).expect("monomial");
            let row = &self.coeffs[b * m..(b + 1) * m];
            row.iter().zip(&refd).fold(T::zero(), |acc, (c, d)| acc + *c * *d)
        })
    }

    /// Physical derivative `D^β u` for monomial index `beta`, from reference
    /// derivatives listed by monomial index.
    pub fn physical_derivative(&self, beta: usize, reference_derivs: &[T]) -> T {
        let m = table(self.nvars).len();
        let row = &self.coeffs[beta * m..(beta + 1) * m];
        row.iter().zip(reference_derivs).fold(T::zero(), |acc, (c, d)| acc + *c * *d)
    }
}

/// Full contraction `D³a : D³b = Σ_{i,j,k} ∂_{ijk}a ∂_{ijk}b`, with each
/// unordered third derivative counted by its multiplicity `3!/β!`.
pub fn frobenius_d3<T: Real>(a: &Jet3<T>, b: &Jet3<T>) -> Result<T> {
    if a.nvars() != b.nvars() {
        return Err(Error::DimensionMismatch { expected: a.nvars(), got: b.nvars() });
    }
    let tab = a.table();
    Ok(tab.of_degree(3).fold(T::zero(), |acc, k| {
        let e = tab.exps[k];
        acc + T::lit(multiplicity(&e) as f64) * a.derivative_at(k) * b.derivative_at(k)
    }))
}

/// `(D³u : D³v + u v) |det J|` with `u`, `v` given by reference jets.
pub fn pullback_integrand<T: Real>(
    coeffs: &TransformCoeffs<T>,
    jet_u: &Jet3<T>,
    jet_v: &Jet3<T>,
) -> Result<T> {
    if jet_u.nvars() != coeffs.nvars() || jet_v.nvars() != coeffs.nvars() {
        return Err(Error::DimensionMismatch { expected: coeffs.nvars(), got: jet_u.nvars() });
    }
    let pu = coeffs.physical(jet_u);
    let pv = coeffs.physical(jet_v);
    Ok((frobenius_d3(&pu, &pv)? + pu.value() * pv.value()) * coeffs.det_j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial(n: usize, at: &[f64], e: &Exponents) -> Jet3<f64> {
        let mut p = Jet3::constant(n, 1.0);
        for i in 0..n {
            for _ in 0..e[i] {
                p = p * Jet3::variable(n, i, at[i]);
            }
        }
        p
    }

    #[test]
    fn table_sizes() {
        assert_eq!(table(1).len(), 4);
        assert_eq!(table(2).len(), 10);
        assert_eq!(table(3).len(), 20);
        assert_eq!(table(2).of_degree(3).count(), 4);
    }

    #[test]
    fn frobenius_examples() {
        let ones = Jet3::from_derivatives(2, |e| if degree(e) == 3 { 1.0 } else { 0.0 });
        assert_eq!(frobenius_d3(&ones, &ones).unwrap(), 8.0);

        let x3 = monomial(2, &[0.0, 0.0], &[3, 0, 0]);
        assert_eq!(frobenius_d3(&x3, &x3).unwrap(), 36.0);

        let x2y = monomial(2, &[0.0, 0.0], &[2, 1, 0]);
        assert_eq!(frobenius_d3(&x2y, &x2y).unwrap(), 12.0);

        let one_d = Jet3::<f64>::zero(1);
        assert!(frobenius_d3(&one_d, &x3).is_err());
    }

    #[test]
    fn identity_map_inverse_and_coeffs() {
        let fwd = MapJet3::identity(&[0.3, -0.4]);
        let inv = invert_jet3(&fwd).unwrap();
        assert_eq!(inv, fwd);
        let c = transform_coeffs(&inv);
        assert_eq!(c, TransformCoeffs::identity(2));
    }

    #[test]
    fn affine_stretch() {
        // τ = 2t
        let fwd = MapJet3::new(&[0.5], Jet3::<f64>::variable(1, 0, 0.5).scale(2.0)).unwrap();
        let inv = invert_jet3(&fwd).unwrap();
        assert_eq!(inv.point(), &[1.0]);
        assert!((inv.vertical.derivative(&[1, 0, 0]) - 0.5).abs() < 1e-15);
        assert_eq!(inv.vertical.derivative(&[2, 0, 0]), 0.0);
        assert_eq!(inv.vertical.derivative(&[3, 0, 0]), 0.0);

        // ũ = t³ ⇒ u = (τ/2)³, u''' = 3!·(1/2)³
        let c = transform_coeffs(&inv);
        let u_ref = monomial(1, &[0.5], &[3, 0, 0]);
        let u = c.physical(&u_ref);
        assert!((u.derivative(&[3, 0, 0]) - 6.0 * 0.125).abs() < 1e-14);
        assert!((c.det_j - 2.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_jacobian_rejected() {
        let fwd = MapJet3::new(&[0.0, 0.0], Jet3::variable(2, 0, 0.0)).unwrap();
        assert!(matches!(invert_jet3(&fwd), Err(Error::DegenerateJacobian(_))));
    }

    #[test]
    fn recip_and_powers() {
        let x = Jet3::<f64>::variable(1, 0, 2.0);
        let r = (x * x + 1.0).recip(); // 1/(1+x²) at x = 2
        let f = |x: f64| 1.0 / (1.0 + x * x);
        let h = 1e-3;
        let d1 = (f(2.0 + h) - f(2.0 - h)) / (2.0 * h);
        assert!((r.value() - 0.2).abs() < 1e-15);
        assert!((r.derivative(&[1, 0, 0]) - d1).abs() < 1e-6);
        assert_eq!(x.powi(3).derivative(&[3, 0, 0]), 6.0);
    }

    #[test]
    fn pullback_identity_reduces_to_frobenius() {
        let u = Jet3::from_derivatives(2, |e| 1.0 + e[0] as f64 - 0.5 * e[1] as f64);
        let v = Jet3::from_derivatives(2, |e| 0.3 * e[1] as f64 - 2.0);
        let c = TransformCoeffs::identity(2);
        let want = frobenius_d3(&u, &v).unwrap() + u.value() * v.value();
        assert!((pullback_integrand(&c, &u, &v).unwrap() - want).abs() < 1e-14);
    }
}
