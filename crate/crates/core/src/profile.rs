//! The oscillating boundary.
//!
//! The profile `b` is a finite real Fourier series on the unit cell
//! `Y = (-1/2, 1/2)^{N-1}`; the top boundary of the perturbed domain is the
//! graph of `g_ε(x̄) = ε^α b(x̄/ε)`. Two maps onto the reference rectangle
//! `W × (-1, 0)` are provided:
//!
//! * `Φ_ε(x̄, x_N) = (x̄, x_N - h_ε(x̄, x_N))`, where `h_ε` vanishes below
//!   `x_N = -ε` and equals `g_ε ((x_N + ε)/(g_ε + ε))⁴` above. Only its
//!   derivative bounds are checked here.
//! * `Ψ_ε(x̄, t) = (x̄, t + (t + 1) g_ε(x̄))`, the global vertical stretch the
//!   direct solver discretizes with.
//!
//! All derivatives are exact: they come from truncated Taylor arithmetic, not
//! from differencing.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain3::{degree, Exponents, Jet3, MapJet3, MAX_ORDER};
use crate::{Error, Real, Result};

/// Points per tangential dimension used to check `b ≥ 0` at construction.
pub const NONNEG_GRID: usize = 4096;
/// Rounding slack allowed when checking `b ≥ 0`.
pub const NONNEG_SLACK: f64 = 1e-12;

/// Integer tangential wave vector; the second entry is zero when `N - 1 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Wavevector(pub [i32; 2]);

impl Wavevector {
    pub fn zero() -> Self {
        Wavevector([0, 0])
    }

    pub fn neg(self) -> Self {
        Wavevector([-self.0[0], -self.0[1]])
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0, 0]
    }

    pub fn norm_sq(&self) -> i64 {
        let [a, b] = self.0;
        (a as i64) * (a as i64) + (b as i64) * (b as i64)
    }

    pub fn max_abs(&self) -> i32 {
        self.0[0].abs().max(self.0[1].abs())
    }

    /// `true` when the first nonzero component is positive.
    pub fn is_positive_half(&self) -> bool {
        match self.0 {
            [0, b] => b > 0,
            [a, _] => a > 0,
        }
    }

    pub fn components(&self, dim: usize) -> &[i32] {
        &self.0[..dim]
    }
}

/// Periodic profile `b(ȳ) = Σ_k b_k e^{2πi k·ȳ}` with conjugate-symmetric
/// amplitudes, realised nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillationProfile<T> {
    dim: usize,
    modes: BTreeMap<Wavevector, Complex<T>>,
    cutoff: i32,
}

impl<T: Real> OscillationProfile<T> {
    /// Builds a profile from the full (both-halves) mode map.
    pub fn new(
        dim: usize,
        modes: impl IntoIterator<Item = (Wavevector, Complex<T>)>,
        cutoff: i32,
    ) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidInput(format!("tangential dimension {dim} not in 1..=2")));
        }
        let mut map = BTreeMap::new();
        for (k, b) in modes {
            if dim == 1 && k.0[1] != 0 {
                return Err(Error::InvalidInput(format!("wave vector {:?} in 1D profile", k.0)));
            }
            if k.max_abs() > cutoff {
                return Err(Error::InvalidInput(format!(
                    "wave vector {:?} beyond cutoff {cutoff}",
                    k.0
                )));
            }
            if !(b.re.is_finite() && b.im.is_finite()) {
                return Err(Error::NonFinite("profile amplitude"));
            }
            map.insert(k, b);
        }
        for (k, b) in &map {
            let tol = T::lit(1e-14) * (T::one() + b.norm());
            let partner = map.get(&k.neg()).copied().unwrap_or_default();
            if (partner - b.conj()).norm() > tol {
                return Err(Error::InvalidInput(format!(
                    "amplitudes of {:?} and its negative are not conjugate",
                    k.0
                )));
            }
        }
        let p = OscillationProfile { dim, modes: map, cutoff };
        let min = p.grid_minimum(NONNEG_GRID);
        if min < -T::lit(NONNEG_SLACK) * (T::one() + p.amplitude_sum()) {
            return Err(Error::InvalidInput(format!(
                "profile takes the negative value {min} on the sampling grid"
            )));
        }
        Ok(p)
    }

    /// Builds from `b0` and the positive-half modes, adding conjugates.
    pub fn from_half(
        dim: usize,
        b0: T,
        half: impl IntoIterator<Item = (Wavevector, Complex<T>)>,
    ) -> Result<Self> {
        let mut full = vec![(Wavevector::zero(), Complex::new(b0, T::zero()))];
        let mut cutoff = 0;
        for (k, b) in half {
            if !k.is_positive_half() {
                return Err(Error::InvalidInput(format!(
                    "wave vector {:?} is not in the positive half (first nonzero component > 0)",
                    k.0
                )));
            }
            cutoff = cutoff.max(k.max_abs());
            full.push((k, b));
            full.push((k.neg(), b.conj()));
        }
        Self::new(dim, full, cutoff)
    }

    /// `b ≡ value`.
    pub fn constant(dim: usize, value: T) -> Result<Self> {
        Self::from_half(dim, value, std::iter::empty())
    }

    /// `b(ȳ) = b0 + amp cos(2π ȳ₁)`.
    pub fn cosine(b0: T, amp: T) -> Result<Self> {
        Self::from_half(
            1,
            b0,
            [(Wavevector([1, 0]), Complex::new(amp * T::lit(0.5), T::zero()))],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> i32 {
        self.cutoff
    }

    pub fn modes(&self) -> &BTreeMap<Wavevector, Complex<T>> {
        &self.modes
    }

    pub fn b0(&self) -> T {
        self.modes.get(&Wavevector::zero()).map(|c| c.re).unwrap_or_else(T::zero)
    }

    pub fn is_constant(&self) -> bool {
        self.modes.iter().all(|(k, b)| k.is_zero() || *b == Complex::default())
    }

    fn amplitude_sum(&self) -> T {
        self.modes.values().map(|b| b.norm()).fold(T::zero(), |s, v| s + v)
    }

    /// `b(ȳ - shift)`.
    pub fn translated(&self, shift: &[T]) -> Self {
        let two_pi = T::lit(2.0 * PI);
        let modes = self
            .modes
            .iter()
            .map(|(k, b)| {
                let phase = k
                    .components(self.dim)
                    .iter()
                    .zip(shift)
                    .fold(T::zero(), |acc, (&ki, &s)| acc + T::lit(ki as f64) * s);
                (*k, *b * Complex::from_polar(T::one(), -two_pi * phase))
            })
            .collect();
        OscillationProfile { dim: self.dim, modes, cutoff: self.cutoff }
    }

    /// `c · b` for `c ≥ 0`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        if c < T::zero() {
            return Err(Error::InvalidInput("negative scaling breaks b ≥ 0".into()));
        }
        let modes = self.modes.iter().map(|(k, b)| (*k, *b * c)).collect();
        Ok(OscillationProfile { dim: self.dim, modes, cutoff: self.cutoff })
    }

    /// Complex-valued series `Σ b_k (2πik)^β e^{2πik·ȳ}`; its imaginary part
    /// is rounding noise.
    pub fn eval_complex(&self, ybar: &[T], deriv: &[u8]) -> Complex<T> {
        let two_pi = T::lit(2.0 * PI);
        let mut acc = Complex::new(T::zero(), T::zero());
        for (k, b) in &self.modes {
            let ks = k.components(self.dim);
            let mut factor = Complex::new(T::one(), T::zero());
            let mut phase = T::zero();
            for i in 0..self.dim {
                let ki = T::lit(ks[i] as f64);
                phase += ki * ybar[i];
                for _ in 0..deriv[i] {
                    factor = factor * Complex::new(T::zero(), two_pi * ki);
                }
            }
            acc = acc + *b * factor * Complex::from_polar(T::one(), two_pi * phase);
        }
        acc
    }

    fn grid_minimum(&self, n: usize) -> T {
        let two_pi = T::lit(2.0 * PI);
        let step = T::one() / T::from_usize(n);
        let modes: Vec<(Wavevector, Complex<T>)> = self.modes.iter().map(|(k, b)| (*k, *b)).collect();
        let axis = |kx: i32| -> Vec<Complex<T>> {
            (0..n)
                .map(|i| Complex::from_polar(T::one(), two_pi * T::lit(kx as f64) * T::from_usize(i) * step))
                .collect()
        };
        let mut tables: BTreeMap<i32, Vec<Complex<T>>> = BTreeMap::new();
        for (k, _) in &modes {
            for &c in k.components(self.dim) {
                tables.entry(c).or_insert_with(|| axis(c));
            }
        }
        let rows = if self.dim == 1 { 1 } else { n };
        (0..rows)
            .into_par_iter()
            .map(|j| {
                let mut min = T::infinity();
                for i in 0..n {
                    let mut acc = T::zero();
                    for (k, b) in &modes {
                        let mut e = tables[&k.0[0]][i];
                        if self.dim == 2 {
                            e = e * tables[&k.0[1]][j];
                        }
                        acc += (*b * e).re;
                    }
                    min = min.min(acc);
                }
                min
            })
            .reduce(T::infinity, |a, b| a.min(b))
    }

    /// Largest imaginary part of the series on a uniform grid.
    pub fn max_imaginary(&self, n: usize) -> T {
        let pts = n.max(1);
        let zero = [0u8; 2];
        let mut worst = T::zero();
        let rows = if self.dim == 1 { 1 } else { pts };
        for j in 0..rows {
            for i in 0..pts {
                let y = [
                    T::from_usize(i) / T::from_usize(pts) - T::lit(0.5),
                    T::from_usize(j) / T::from_usize(pts) - T::lit(0.5),
                ];
                worst = worst.max(self.eval_complex(&y, &zero).im.abs());
            }
        }
        worst
    }

    /// Maximum of `b` over a uniform grid.
    pub fn grid_maximum(&self, n: usize) -> T {
        let zero = [0u8; 2];
        let rows = if self.dim == 1 { 1 } else { n };
        let mut best = T::neg_infinity();
        for j in 0..rows {
            for i in 0..n {
                let y = [T::from_usize(i) / T::from_usize(n), T::from_usize(j) / T::from_usize(n)];
                best = best.max(self.eval_complex(&y, &zero).re);
            }
        }
        best
    }
}

/// Exact derivative `∂^deriv b(ȳ)` for `|deriv| ≤ 3`.
pub fn eval_b<T: Real>(profile: &OscillationProfile<T>, ybar: &[T], deriv: &[u8]) -> Result<T> {
    check_tangential(profile, ybar, deriv)?;
    Ok(profile.eval_complex(ybar, deriv).re)
}

fn check_tangential<T: Real>(p: &OscillationProfile<T>, ybar: &[T], deriv: &[u8]) -> Result<()> {
    if ybar.len() != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: ybar.len() });
    }
    if deriv.len() != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: deriv.len() });
    }
    let order: usize = deriv.iter().map(|&d| d as usize).sum();
    if order > MAX_ORDER {
        return Err(Error::DerivativeOrder { requested: order, max: MAX_ORDER });
    }
    Ok(())
}

/// `ε = 1/n` and the exponent `α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationParams<T> {
    denominator: u32,
    pub alpha: T,
}

impl<T: Real> PerturbationParams<T> {
    pub fn new(denominator: u32, alpha: T) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::InvalidInput("ε = 1/n needs n ≥ 1".into()));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("α = {alpha} must be positive")));
        }
        Ok(PerturbationParams { denominator, alpha })
    }

    /// Accepts `ε` only when it is the reciprocal of a positive integer.
    pub fn from_epsilon(epsilon: T, alpha: T) -> Result<Self> {
        if !(epsilon > T::zero()) {
            return Err(Error::InvalidInput(format!("ε = {epsilon} must be positive")));
        }
        let n = (T::one() / epsilon).round();
        let back = T::one() / n;
        if n < T::one() || ((back - epsilon) / epsilon).abs() > T::lit(1e-12) {
            return Err(Error::InvalidInput(format!("ε = {epsilon} is not 1/n for an integer n")));
        }
        Self::new(n.to_u32().ok_or_else(|| Error::InvalidInput("ε too small".into()))?, alpha)
    }

    pub fn denominator(&self) -> u32 {
        self.denominator
    }

    pub fn epsilon(&self) -> T {
        T::one() / T::lit(self.denominator as f64)
    }

    /// `ε^α`.
    pub fn amplitude(&self) -> T {
        self.epsilon().powf(self.alpha)
    }
}

/// `g_ε(x̄) = ε^α b(x̄/ε)`.
pub fn eval_g<T: Real>(
    profile: &OscillationProfile<T>,
    params: &PerturbationParams<T>,
    xbar: &[T],
) -> T {
    let eps = params.epsilon();
    let y: Vec<T> = xbar.iter().map(|&x| x / eps).collect();
    params.amplitude() * profile.eval_complex(&y, &[0, 0][..profile.dim]).re
}

/// Jet of `g_ε` as a function of all `N = dim + 1` coordinates (constant in
/// `x_N`).
pub fn g_jet<T: Real>(
    profile: &OscillationProfile<T>,
    params: &PerturbationParams<T>,
    xbar: &[T],
) -> Jet3<T> {
    let n = profile.dim + 1;
    let eps = params.epsilon();
    let amp = params.amplitude();
    let y: Vec<T> = xbar.iter().map(|&x| x / eps).collect();
    Jet3::from_derivatives(n, |e: &Exponents| {
        if e[n - 1] != 0 {
            return T::zero();
        }
        let d = degree(e) as i32;
        amp * eps.powi(-d) * profile.eval_complex(&y, &e[..profile.dim]).re
    })
}

fn check_point<T: Real>(profile: &OscillationProfile<T>, x: &[T]) -> Result<()> {
    let n = profile.dim + 1;
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    Ok(())
}

/// Jet of the transition function `h_ε` at a point of the closed domain.
pub fn h_jet<T: Real>(
    profile: &OscillationProfile<T>,
    params: &PerturbationParams<T>,
    x: &[T],
) -> Result<Jet3<T>> {
    check_point(profile, x)?;
    let n = x.len();
    let xn = x[n - 1];
    let eps = params.epsilon();
    let g = g_jet(profile, params, &x[..n - 1]);
    let slack = T::lit(1e-12);
    if xn < -T::one() - slack || xn > g.value() + slack {
        return Err(Error::OutOfDomain(format!(
            "x_N = {xn} not in [-1, g_ε(x̄) = {}]",
            g.value()
        )));
    }
    if xn <= -eps {
        return Ok(Jet3::zero(n));
    }
    let ratio = (Jet3::variable(n, n - 1, xn) + eps) * (g + eps).recip();
    Ok(g * ratio.powi(4))
}

/// `∂^deriv h_ε(x)` for `|deriv| ≤ 3`.
pub fn eval_h<T: Real>(
    profile: &OscillationProfile<T>,
    params: &PerturbationParams<T>,
    x: &[T],
    deriv: &[u8],
) -> Result<T> {
    let jet = h_jet(profile, params, x)?;
    derivative_of(&jet, deriv)
}

fn derivative_of<T: Real>(jet: &Jet3<T>, deriv: &[u8]) -> Result<T> {
    if deriv.len() != jet.nvars() {
        return Err(Error::DimensionMismatch { expected: jet.nvars(), got: deriv.len() });
    }
    let order: usize = deriv.iter().map(|&d| d as usize).sum();
    if order > MAX_ORDER {
        return Err(Error::DerivativeOrder { requested: order, max: MAX_ORDER });
    }
    let mut e = [0u8; 3];
    e[..deriv.len()].copy_from_slice(deriv);
    Ok(jet.derivative(&e))
}

/// Per-order scaled maxima `max |D^j h_ε| · ε^{j-α}`, `j = 0..=3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HBoundReport {
    pub epsilon: f64,
    pub alpha: f64,
    pub scaled_max: [f64; 4],
}

/// Samples `h_ε` on a grid covering one tangential period and the layer
/// `-ε ≤ x_N ≤ g_ε(x̄)` (outside it `h_ε ≡ 0`).
pub fn verify_h_bounds<T: Real>(
    profile: &OscillationProfile<T>,
    params: &PerturbationParams<T>,
    resolution: usize,
) -> Result<HBoundReport> {
    let res = resolution.max(2);
    let eps = params.epsilon();
    let mut maxima = [T::zero(); 4];
    let tang_pts = |i: usize| eps * T::from_usize(i) / T::from_usize(res);
    let rows = if profile.dim == 1 { 1 } else { res };
    for j in 0..rows {
        for i in 0..res {
            let xbar: Vec<T> = if profile.dim == 1 { vec![tang_pts(i)] } else { vec![tang_pts(i), tang_pts(j)] };
            let top = eval_g(profile, params, &xbar);
            for l in 0..=res {
                let s = T::from_usize(l) / T::from_usize(res);
                let mut x = xbar.clone();
                x.push(-eps + (top + eps) * s);
                let jet = h_jet(profile, params, &x)?;
                for (k, e) in jet.table().exps.iter().enumerate() {
                    let d = degree(e) as usize;
                    maxima[d] = maxima[d].max(jet.derivative_at(k).abs());
                }
            }
        }
    }
    let mut scaled = [0.0; 4];
    for (j, m) in maxima.iter().enumerate() {
        scaled[j] = (*m * eps.powf(T::from_usize(j) - params.alpha)).to_f64_lossy();
    }
    Ok(HBoundReport {
        epsilon: eps.to_f64_lossy(),
        alpha: params.alpha.to_f64_lossy(),
        scaled_max: scaled,
    })
}

/// Jet of `b(ȳ)(y_N + 1)⁴` in the unfolded variables.
fn unfolded_limit_jet<T: Real>(profile: &OscillationProfile<T>, y: &[T]) -> Jet3<T> {
    let n = profile.dim + 1;
    let b = Jet3::from_derivatives(n, |e: &Exponents| {
        if e[n - 1] != 0 {
            T::zero()
        } else {
            profile.eval_complex(&y[..n - 1], &e[..profile.dim]).re
        }
    });
    b * (Jet3::variable(n, n - 1, y[n - 1]) + T::one()).powi(4)
}

/// Sup-norm errors of the unfolded second and third derivatives of `h_ε`
/// against their limits `D^j(b(ȳ)(y_N + 1)⁴)` on a grid of `Y × (-1, 0)`;
/// defined for `α = 3/2` only.
pub fn unfolded_h_limit_error<T: Real>(
    profile: &OscillationProfile<T>,
    params: &PerturbationParams<T>,
    resolution: usize,
) -> Result<[T; 2]> {
    if (params.alpha - T::lit(1.5)).abs() > T::lit(1e-14) {
        return Err(Error::InvalidInput(format!(
            "unfolded limit needs α = 3/2, got {}",
            params.alpha
        )));
    }
    let res = resolution.max(2);
    let eps = params.epsilon();
    let mut err = [T::zero(); 2];
    let coord = |i: usize| T::from_usize(i) / T::from_usize(res) - T::lit(0.5);
    let rows = if profile.dim == 1 { 1 } else { res };
    for j in 0..rows {
        for i in 0..res {
            for l in 0..=res {
                let mut y: Vec<T> = if profile.dim == 1 { vec![coord(i)] } else { vec![coord(i), coord(j)] };
                y.push(-T::one() + T::from_usize(l) / T::from_usize(res));
                let x: Vec<T> = y.iter().map(|&v| v * eps).collect();
                let hj = h_jet(profile, params, &x)?;
                let lim = unfolded_limit_jet(profile, &y);
                for (k, e) in hj.table().exps.iter().enumerate() {
                    let d = degree(e) as usize;
                    if d < 2 {
                        continue;
                    }
                    let scaled = hj.derivative_at(k) * eps.powf(T::from_usize(d) - T::lit(1.5));
                    err[d - 2] = err[d - 2].max((scaled - lim.derivative_at(k)).abs());
                }
            }
        }
    }
    Ok(err)
}

/// Jet of the vertical component of `Ψ_ε(x̄, t) = (x̄, t + (t + 1) g_ε(x̄))`.
pub fn eval_pullback<T: Real>(
    profile: &OscillationProfile<T>,
    params: &PerturbationParams<T>,
    point: &[T],
) -> Result<MapJet3<T>> {
    check_point(profile, point)?;
    let n = point.len();
    let t = point[n - 1];
    if !(t >= -T::one() && t <= T::zero()) {
        return Err(Error::OutOfDomain(format!("reference t = {t} not in [-1, 0]")));
    }
    let g = g_jet(profile, params, &point[..n - 1]);
    let tv = Jet3::variable(n, n - 1, t);
    MapJet3::new(point, tv + (tv + T::one()) * g)
}

/// Jet of the vertical component of the layer map
/// `(x̄, t) ↦ (x̄, t + g_ε(x̄) χ(t))`, `χ(t) = ((t + δ)/δ)⁴` on `(-δ, 0]` and
/// zero below. It is `C³`, equals the identity for `t ≤ -δ`, and has
/// `∂_t x_N ≥ 1` whenever `g_ε ≥ 0`.
pub fn eval_layer_pullback<T: Real>(
    profile: &OscillationProfile<T>,
    params: &PerturbationParams<T>,
    point: &[T],
    delta: T,
) -> Result<MapJet3<T>> {
    check_point(profile, point)?;
    let n = point.len();
    let t = point[n - 1];
    if !(t >= -T::one() && t <= T::zero()) {
        return Err(Error::OutOfDomain(format!("reference t = {t} not in [-1, 0]")));
    }
    if !(delta > T::zero() && delta <= T::one()) {
        return Err(Error::InvalidInput(format!("layer width {delta} not in (0, 1]")));
    }
    let tv = Jet3::variable(n, n - 1, t);
    if t <= -delta {
        return MapJet3::new(point, tv);
    }
    let g = g_jet(profile, params, &point[..n - 1]);
    let s = (tv + delta).scale(T::one() / delta);
    MapJet3::new(point, tv + s.powi(4) * g)
}

/// JSON profile file: positive-half modes plus the mean `b0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub dim: usize,
    #[serde(default)]
    pub modes: Vec<ProfileMode>,
    #[serde(default)]
    pub b0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileMode {
    pub k: Vec<i32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl ProfileFile {
    pub fn into_profile<T: Real>(&self) -> Result<OscillationProfile<T>> {
        let mut half = Vec::with_capacity(self.modes.len());
        for m in &self.modes {
            if m.k.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "mode {:?} has {} components, profile dim is {}",
                    m.k,
                    m.k.len(),
                    self.dim
                )));
            }
            let mut k = [0i32; 2];
            k[..self.dim].copy_from_slice(&m.k);
            half.push((Wavevector(k), Complex::new(T::lit(m.re), T::lit(m.im))));
        }
        OscillationProfile::from_half(self.dim, T::lit(self.b0), half)
    }

    pub fn from_profile<T: Real>(p: &OscillationProfile<T>) -> Self {
        let modes = p
            .modes
            .iter()
            .filter(|(k, _)| k.is_positive_half())
            .map(|(k, b)| ProfileMode {
                k: k.components(p.dim).to_vec(),
                re: b.re.to_f64_lossy(),
                im: b.im.to_f64_lossy(),
            })
            .collect();
        ProfileFile { dim: p.dim, modes, b0: p.b0().to_f64_lossy() }
    }
}

pub fn load_profile(path: &std::path::Path) -> Result<OscillationProfile<f64>> {
    let text = std::fs::read_to_string(path)?;
    let file: ProfileFile = serde_json::from_str(&text)?;
    file.into_profile()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_plus_cos() -> OscillationProfile<f64> {
        OscillationProfile::cosine(1.0, 1.0).unwrap()
    }

    #[test]
    fn eval_b_examples() {
        let c = OscillationProfile::<f64>::constant(1, 1.0).unwrap();
        assert_eq!(eval_b(&c, &[0.37], &[0]).unwrap(), 1.0);
        let p = one_plus_cos();
        assert!((eval_b(&p, &[0.0], &[0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(eval_b(&p, &[0.25], &[2]).unwrap().abs() < 1e-12);
        assert!(matches!(
            eval_b(&p, &[0.25], &[4]),
            Err(Error::DerivativeOrder { requested: 4, .. })
        ));
    }

    #[test]
    fn rejects_negative_and_asymmetric_profiles() {
        assert!(OscillationProfile::<f64>::cosine(0.5, 1.0).is_err());
        let bad = [(Wavevector([1, 0]), Complex::new(0.1, 0.0)), (Wavevector::zero(), Complex::new(1.0, 0.0))];
        assert!(OscillationProfile::new(1, bad, 1).is_err());
    }

    #[test]
    fn eval_g_examples() {
        let zero = OscillationProfile::<f64>::constant(1, 0.0).unwrap();
        let params = PerturbationParams::new(4, 2.0).unwrap();
        assert_eq!(eval_g(&zero, &params, &[0.3]), 0.0);
        let p = one_plus_cos();
        assert!((eval_g(&p, &params, &[0.0]) - 0.125).abs() < 1e-15);
        for &x in &[0.013, 0.4, 0.77] {
            let a = eval_g(&p, &params, &[x]);
            let b = eval_g(&p, &params, &[x + 0.25]);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn epsilon_must_be_reciprocal_integer() {
        assert!(PerturbationParams::from_epsilon(0.125, 1.5).is_ok());
        assert!(PerturbationParams::from_epsilon(0.3, 1.5).is_err());
        assert!(PerturbationParams::new(4, 0.0f64).is_err());
    }

    #[test]
    fn h_endpoint_values() {
        let p = one_plus_cos();
        let params = PerturbationParams::new(4, 1.5).unwrap();
        let eps = params.epsilon();
        assert_eq!(eval_h(&p, &params, &[0.1, -eps], &[0, 0]).unwrap(), 0.0);
        let top = eval_g(&p, &params, &[0.1]);
        let h = eval_h(&p, &params, &[0.1, top], &[0, 0]).unwrap();
        assert!((h - top).abs() < 1e-15);
        assert!(eval_h(&p, &params, &[0.1, top + 1e-6], &[0, 0]).is_err());
        assert!(eval_h(&p, &params, &[0.1, -1.5], &[0, 0]).is_err());
    }

    #[test]
    fn h_vertical_derivative_matches_central_difference() {
        let p = one_plus_cos();
        let params = PerturbationParams::new(4, 1.5).unwrap();
        let x = [0.07, -0.1];
        let d = eval_h(&p, &params, &x, &[0, 1]).unwrap();
        let step = 1e-6;
        let fd = (eval_h(&p, &params, &[x[0], x[1] + step], &[0, 0]).unwrap()
            - eval_h(&p, &params, &[x[0], x[1] - step], &[0, 0]).unwrap())
            / (2.0 * step);
        assert!(((d - fd) / d).abs() < 1e-7, "{d} vs {fd}");
    }

    #[test]
    fn h_is_c3_across_the_layer_edge() {
        let p = one_plus_cos();
        let params = PerturbationParams::new(8, 1.5).unwrap();
        let eps = params.epsilon();
        let below = h_jet(&p, &params, &[0.02, -eps - 1e-8]).unwrap();
        let above = h_jet(&p, &params, &[0.02, -eps + 1e-8]).unwrap();
        for (k, e) in below.table().exps.iter().enumerate() {
            if degree(e) <= 2 {
                assert!((below.derivative_at(k) - above.derivative_at(k)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_profile_bounds_vanish() {
        let zero = OscillationProfile::<f64>::constant(1, 0.0).unwrap();
        let params = PerturbationParams::new(8, 1.5).unwrap();
        let r = verify_h_bounds(&zero, &params, 16).unwrap();
        assert_eq!(r.scaled_max, [0.0; 4]);
        let e = unfolded_h_limit_error(&zero, &params, 8).unwrap();
        assert_eq!(e, [0.0, 0.0]);
    }

    #[test]
    fn order_zero_bound_is_max_b() {
        let p = one_plus_cos();
        for &(n, alpha) in &[(4u32, 1.0), (8, 2.5), (16, 1.5)] {
            let params = PerturbationParams::new(n, alpha).unwrap();
            let r = verify_h_bounds(&p, &params, 16).unwrap();
            assert!(r.scaled_max[0] <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn unfolded_limit_requires_critical_alpha() {
        let p = one_plus_cos();
        let params = PerturbationParams::new(8, 2.0).unwrap();
        assert!(unfolded_h_limit_error(&p, &params, 8).is_err());
        let lim = unfolded_limit_jet(&p, &[0.2, 0.0]);
        let b = eval_b(&p, &[0.2], &[0]).unwrap();
        assert!((lim.derivative(&[0, 2, 0]) - 12.0 * b).abs() < 1e-12);
    }

    #[test]
    fn pullback_examples() {
        let zero = OscillationProfile::<f64>::constant(1, 0.0).unwrap();
        let params = PerturbationParams::new(4, 1.5).unwrap();
        let j = eval_pullback(&zero, &params, &[0.3, -0.4]).unwrap();
        assert_eq!(j, MapJet3::identity(&[0.3, -0.4]));
        let p = one_plus_cos();
        let bottom = eval_pullback(&p, &params, &[0.3, -1.0]).unwrap();
        assert_eq!(bottom.vertical.value(), -1.0);
        let top = eval_pullback(&p, &params, &[0.3, 0.0]).unwrap();
        assert!((top.vertical.value() - eval_g(&p, &params, &[0.3])).abs() < 1e-15);
        assert!(eval_pullback(&p, &params, &[0.3, 0.1]).is_err());
    }

    #[test]
    fn profile_file_round_trip() {
        let text = r#"{"dim": 1, "modes": [{"k": [1], "re": 0.5, "im": 0.0}], "b0": 1.0}"#;
        let file: ProfileFile = serde_json::from_str(text).unwrap();
        let p: OscillationProfile<f64> = file.into_profile().unwrap();
        assert_eq!(p, one_plus_cos());
        assert_eq!(ProfileFile::from_profile(&p), file);
        assert!(p.max_imaginary(1024) < 1e-13);
    }
}
