//! C² quintic Hermite elements in one variable and their tensor products on
//! the reference strip `[0, 1)_periodic × [-1, 0]`.
//!
//! A nodal degree of freedom of order `a` stores `h_node^a f^{(a)}`, with
//! `h_node` the mean size of the adjacent elements. Inside an element of
//! size `h_e` the shape function of that degree is therefore the reference
//! shape multiplied by `(h_e / h_node)^a`, which keeps the diagonal of
//! sixth-order stiffness matrices within a few orders of magnitude on graded
//! meshes.
//!
//! In two variables there are nine degrees per node, `∂_x^a ∂_t^b`, and the
//! periodic tangential columns are numbered in the interleaved order
//! `0, n-1, 1, n-2, ...` so that the wrap-around neighbour is never more
//! than two columns away. This keeps the envelope of the assembled matrices
//! at about three columns of degrees of freedom.

use std::io::Write;

use rayon::prelude::*;

use crate::chain3::{table, Jet3, MAX_MONOMIALS};
use crate::quadrature::GaussRule;
use crate::{Error, Real, Result};

/// Monomial coefficients of the six shapes, ordered
/// `f(0), f'(0), f''(0), f(1), f'(1), f''(1)`.
const SHAPE_COEFFS: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
];

pub const MAX_SHAPE_DERIVATIVE: usize = 5;
pub const DEFAULT_QUADRATURE: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HermiteBasis1D;

impl HermiteBasis1D {
    /// The six shapes (or a derivative of them) at `s ∈ [0, 1]`.
    pub fn eval<T: Real>(&self, s: T, deriv: usize) -> Result<[T; 6]> {
        if deriv > MAX_SHAPE_DERIVATIVE {
            return Err(Error::DerivativeOrder { requested: deriv, max: MAX_SHAPE_DERIVATIVE });
        }
        if !(s >= T::zero() && s <= T::one()) {
            return Err(Error::OutOfDomain(format!("local coordinate {s} not in [0, 1]")));
        }
        Ok(shape_values(s, deriv))
    }
}

fn shape_values<T: Real>(s: T, deriv: usize) -> [T; 6] {
    let mut out = [T::zero(); 6];
    for (i, row) in SHAPE_COEFFS.iter().enumerate() {
        let mut acc = T::zero();
        for p in (deriv..6).rev() {
            let falling: f64 = (0..deriv).map(|q| (p - q) as f64).product();
            acc = acc * s + T::lit(row[p] * falling);
        }
        out[i] = acc;
    }
    out
}

/// Shape values or derivatives at `s`; see [`HermiteBasis1D::eval`].
pub fn shape_eval<T: Real>(s: T, deriv: usize) -> Result<[T; 6]> {
    HermiteBasis1D.eval(s, deriv)
}

/// Ascending node coordinates of a one-dimensional mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1D<T> {
    nodes: Vec<T>,
}

pub const GRADING_RATIO: f64 = 0.75;
pub const MIN_VERTICAL_ELEMENTS: usize = 16;

impl<T: Real> Mesh1D<T> {
    pub fn from_nodes(nodes: Vec<T>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput("a mesh needs at least one element".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("mesh nodes must be strictly increasing".into()));
        }
        Ok(Mesh1D { nodes })
    }

    /// All elements of equal size up to roundoff.
    pub fn is_uniform(&self) -> bool {
        let h0 = self.element(0).1;
        (0..self.n_elements()).all(|e| (self.element(e).1 - h0).abs() <= T::lit(1e-12) * h0)
    }

    pub fn uniform(a: T, b: T, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("a mesh needs at least one element".into()));
        }
        let h = (b - a) / T::from_usize(n);
        let mut nodes: Vec<T> = (0..=n).map(|i| a + h * T::from_usize(i)).collect();
        nodes[n] = b;
        Self::from_nodes(nodes)
    }

    /// Geometric grading toward `top`: element sizes grow from `h_top` by
    /// `1/ratio` per element until they reach `h_bulk`, after which the rest
    /// of the interval is split uniformly. The bulk size shrinks until at
    /// least `min_elements` elements are produced.
    pub fn graded_toward_top(
        bottom: T,
        top: T,
        h_top: T,
        h_bulk: T,
        ratio: T,
        min_elements: usize,
    ) -> Result<Self> {
        let len = top - bottom;
        if !(len > T::zero()) || !(h_top > T::zero()) || !(h_bulk >= h_top) {
            return Err(Error::InvalidInput("grading needs 0 < h_top ≤ h_bulk and top > bottom".into()));
        }
        if !(ratio > T::zero() && ratio <= T::one()) {
            return Err(Error::InvalidInput(format!("grading ratio {ratio} not in (0, 1]")));
        }
        let mut bulk = h_bulk;
        loop {
            let mut sizes = Vec::new();
            let mut h = h_top;
            let mut used = T::zero();
            while h < bulk && used + h < len {
                sizes.push(h);
                used += h;
                h = (h / ratio).min(bulk);
            }
            let rest = len - used;
            let n_bulk = if rest > T::lit(1e-14) * len {
                (rest / bulk).ceil().to_usize().unwrap_or(1).max(1)
            } else {
                0
            };
            if sizes.len() + n_bulk >= min_elements || bulk <= h_top {
                let hb = if n_bulk > 0 { rest / T::from_usize(n_bulk) } else { T::zero() };
                let mut nodes = Vec::with_capacity(sizes.len() + n_bulk + 1);
                nodes.push(bottom);
                for i in 1..=n_bulk {
                    nodes.push(bottom + hb * T::from_usize(i));
                }
                let mut x = top;
                let mut upper = vec![top];
                for &s in &sizes {
                    x -= s;
                    upper.push(x);
                }
                upper.pop();
                nodes.extend(upper.into_iter().rev());
                if n_bulk == 0 {
                    nodes[0] = bottom;
                }
                let last = nodes.len() - 1;
                nodes[last] = top;
                return Self::from_nodes(nodes);
            }
            bulk = (bulk * T::lit(0.8)).max(h_top);
        }
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn element(&self, e: usize) -> (T, T) {
        (self.nodes[e], self.nodes[e + 1] - self.nodes[e])
    }

    pub fn min_size(&self) -> T {
        (0..self.n_elements()).map(|e| self.element(e).1).fold(T::infinity(), T::min)
    }

    /// Element containing `x`, preferring the left one at interior nodes.
    pub fn locate(&self, x: T) -> Option<usize> {
        let n = self.n_elements();
        if x < self.nodes[0] || x > self.nodes[n] {
            return None;
        }
        let i = self.nodes.partition_point(|&p| p < x);
        Some(i.saturating_sub(1).min(n - 1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SideBc {
    /// Value and first normal derivative pinned.
    Clamped1,
    /// Value, first and second normal derivatives pinned.
    Clamped2,
    Free,
    Periodic,
}

impl SideBc {
    fn pinned_orders(self) -> usize {
        match self {
            SideBc::Clamped1 => 2,
            SideBc::Clamped2 => 3,
            SideBc::Free | SideBc::Periodic => 0,
        }
    }
}

const NONE: u32 = u32::MAX;

/// Quintic Hermite space in `t` (one variable) or in `(x, t)` with `x`
/// periodic on `[0, 1)`.
#[derive(Clone, Debug)]
pub struct TensorElementSpace<T> {
    tangential: Option<Mesh1D<T>>,
    vertical: Mesh1D<T>,
    bottom: SideBc,
    top: SideBc,
    vertical_scale: Vec<T>,
    tangential_scale: T,
    column_pos: Vec<usize>,
    full_to_free: Vec<u32>,
    free_to_full: Vec<usize>,
}

fn node_scales<T: Real>(mesh: &Mesh1D<T>) -> Vec<T> {
    let n = mesh.n_elements();
    (0..=n)
        .map(|i| {
            let left = if i > 0 { Some(mesh.element(i - 1).1) } else { None };
            let right = if i < n { Some(mesh.element(i).1) } else { None };
            match (left, right) {
                (Some(a), Some(b)) => (a + b) * T::lit(0.5),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => T::one(),
            }
        })
        .collect()
}

/// Interleaved column order `0, n-1, 1, n-2, ...`, returned as positions.
fn interleaved_positions(n: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(n);
    let (mut lo, mut hi) = (0usize, n);
    while lo < hi {
        order.push(lo);
        lo += 1;
        if lo < hi {
            hi -= 1;
            order.push(hi);
        }
    }
    let mut pos = vec![0; n];
    for (p, &c) in order.iter().enumerate() {
        pos[c] = p;
    }
    pos
}

impl<T: Real> TensorElementSpace<T> {
    /// One-variable space on the vertical mesh.
    pub fn line(vertical: Mesh1D<T>, bottom: SideBc, top: SideBc) -> Result<Self> {
        Self::build(None, vertical, bottom, top)
    }

    /// Tensor space with `n_x` periodic tangential elements on `[0, 1)`.
    pub fn periodic_strip(n_x: usize, vertical: Mesh1D<T>, bottom: SideBc, top: SideBc) -> Result<Self> {
        if n_x < 2 {
            return Err(Error::InvalidInput("at least 2 tangential elements are required".into()));
        }
        Self::build(Some(Mesh1D::uniform(T::zero(), T::one(), n_x)?), vertical, bottom, top)
    }

    fn build(tangential: Option<Mesh1D<T>>, vertical: Mesh1D<T>, bottom: SideBc, top: SideBc) -> Result<Self> {
        if vertical.n_elements() < 2 {
            return Err(Error::InvalidInput("at least 2 vertical elements are required".into()));
        }
        if bottom == SideBc::Periodic || top == SideBc::Periodic {
            return Err(Error::InvalidInput(
                "periodicity is only available in the tangential direction".into(),
            ));
        }
        let n_cols = tangential.as_ref().map_or(1, |m| m.n_elements());
        let dpn = if tangential.is_some() { 9 } else { 3 };
        let nt = vertical.n_nodes();
        let total = n_cols * nt * dpn;
        let mut full_to_free = vec![NONE; total];
        let mut free_to_full = Vec::with_capacity(total);
        for (idx, slot) in full_to_free.iter_mut().enumerate() {
            let node = idx / dpn;
            let b = (idx % dpn) % 3;
            let it = node % nt;
            let pinned = (it == 0 && b < bottom.pinned_orders()) || (it == nt - 1 && b < top.pinned_orders());
            if !pinned {
                *slot = free_to_full.len() as u32;
                free_to_full.push(idx);
            }
        }
        let tangential_scale = tangential.as_ref().map_or(T::one(), |m| m.element(0).1);
        Ok(TensorElementSpace {
            vertical_scale: node_scales(&vertical),
            tangential_scale,
            column_pos: interleaved_positions(n_cols),
            tangential,
            vertical,
            bottom,
            top,
            full_to_free,
            free_to_full,
        })
    }

    /// Number of reference variables (1 or 2).
    pub fn nvars(&self) -> usize {
        if self.tangential.is_some() {
            2
        } else {
            1
        }
    }

    /// Length scale `h_node` of vertical node `it`; a degree of order `b`
    /// stores `h_node^b` times the derivative.
    pub fn vertical_node_scale(&self, it: usize) -> T {
        self.vertical_scale[it]
    }

    pub fn tangential_node_scale(&self) -> T {
        self.tangential_scale
    }

    pub fn vertical(&self) -> &Mesh1D<T> {
        &self.vertical
    }

    pub fn tangential(&self) -> Option<&Mesh1D<T>> {
        self.tangential.as_ref()
    }

    pub fn bcs(&self) -> (SideBc, SideBc) {
        (self.bottom, self.top)
    }

    pub fn dofs_per_node(&self) -> usize {
        if self.tangential.is_some() {
            9
        } else {
            3
        }
    }

    fn n_cols(&self) -> usize {
        self.column_pos.len()
    }

    pub fn n_total(&self) -> usize {
        self.full_to_free.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_to_full.len()
    }

    pub fn n_constrained(&self) -> usize {
        self.n_total() - self.n_free()
    }

    pub fn n_elements(&self) -> usize {
        self.n_cols() * self.vertical.n_elements()
    }

    /// Global index of degree `(a, b)` (`∂_x^a ∂_t^b`) at node `(ix, it)`.
    pub fn full_index(&self, ix: usize, it: usize, a: usize, b: usize) -> usize {
        let node = self.column_pos[ix % self.n_cols()] * self.vertical.n_nodes() + it;
        if self.tangential.is_some() {
            node * 9 + a * 3 + b
        } else {
            node * 3 + b
        }
    }

    pub fn free_index(&self, full: usize) -> Option<usize> {
        match self.full_to_free[full] {
            NONE => None,
            k => Some(k as usize),
        }
    }

    pub fn full_of_free(&self, free: usize) -> usize {
        self.free_to_full[free]
    }

    /// Periodic identification of tangential node indices; an involution on
    /// `0..n` composed with its inverse.
    pub fn wrap_column(&self, ix: isize) -> usize {
        ix.rem_euclid(self.n_cols() as isize) as usize
    }

    fn element_coords(&self, e: usize) -> (usize, usize) {
        let nte = self.vertical.n_elements();
        (e / nte, e % nte)
    }

    /// Local-to-global map of element `e` (full indices), in local order.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let (ex, et) = self.element_coords(e);
        let mut out = Vec::with_capacity(36);
        if self.tangential.is_some() {
            for lx in 0..2 {
                for lt in 0..2 {
                    for a in 0..3 {
                        for b in 0..3 {
                            out.push(self.full_index(ex + lx, et + lt, a, b));
                        }
                    }
                }
            }
        } else {
            for lt in 0..2 {
                for b in 0..3 {
                    out.push(self.full_index(0, et + lt, 0, b));
                }
            }
        }
        out
    }

    /// Reference bounding box of element `e`: `(origin, sizes)`.
    pub fn element_box(&self, e: usize) -> ([T; 2], [T; 2]) {
        let (ex, et) = self.element_coords(e);
        let (t0, ht) = self.vertical.element(et);
        match &self.tangential {
            Some(m) => {
                let (x0, hx) = m.element(ex);
                ([x0, t0], [hx, ht])
            }
            None => ([t0, T::zero()], [ht, T::zero()]),
        }
    }

    /// 1D shape derivatives `0..=max_d` along the vertical direction,
    /// scaled to global degree units: `[deriv][local shape]`.
    fn vertical_shapes(&self, et: usize, s: T, max_d: usize) -> Vec<[T; 6]> {
        let (_, h) = self.vertical.element(et);
        let scales = [self.vertical_scale[et], self.vertical_scale[et + 1]];
        scaled_shapes(s, h, scales, max_d)
    }

    fn tangential_shapes(&self, s: T, max_d: usize) -> Vec<[T; 6]> {
        let h = self.tangential_scale;
        scaled_shapes(s, h, [h, h], max_d)
    }

    /// Reference derivatives (by monomial index of the jet table) of every
    /// local basis function of element `e` at the reference point `p`.
    pub fn local_derivatives(&self, e: usize, p: &[T]) -> Vec<[T; MAX_MONOMIALS]> {
        let (origin, size) = self.element_box(e);
        let (_, et) = self.element_coords(e);
        let n = self.nvars();
        let tab = table(n);
        if n == 1 {
            let v = self.vertical_shapes(et, (p[0] - origin[0]) / size[0], 3);
            (0..6)
                .map(|i| {
                    let mut d = [T::zero(); MAX_MONOMIALS];
                    for (k, e) in tab.exps.iter().enumerate() {
                        d[k] = v[e[0] as usize][i];
                    }
                    d
                })
                .collect()
        } else {
            let xs = self.tangential_shapes((p[0] - origin[0]) / size[0], 3);
            let ts = self.vertical_shapes(et, (p[1] - origin[1]) / size[1], 3);
            let mut out = Vec::with_capacity(36);
            for lx in 0..2 {
                for lt in 0..2 {
                    for a in 0..3 {
                        for b in 0..3 {
                            let (ix, it) = (3 * lx + a, 3 * lt + b);
                            let mut d = [T::zero(); MAX_MONOMIALS];
                            for (k, e) in tab.exps.iter().enumerate() {
                                d[k] = xs[e[0] as usize][ix] * ts[e[1] as usize][it];
                            }
                            out.push(d);
                        }
                    }
                }
            }
            out
        }
    }

    /// Gauss points of element `e` with `order` points per direction; the
    /// weights include the element measure.
    pub fn quadrature_points(&self, e: usize, rule: &GaussRule<T>) -> Vec<QuadPoint<T>> {
        let (origin, size) = self.element_box(e);
        if self.nvars() == 1 {
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&s, &w)| QuadPoint { point: [origin[0] + size[0] * s, T::zero()], nvars: 1, weight: w * size[0], element: e })
                .collect()
        } else {
            let mut out = Vec::with_capacity(rule.len() * rule.len());
            for (&sx, &wx) in rule.nodes.iter().zip(&rule.weights) {
                for (&st, &wt) in rule.nodes.iter().zip(&rule.weights) {
                    out.push(QuadPoint {
                        point: [origin[0] + size[0] * sx, origin[1] + size[1] * st],
                        nvars: 2,
                        weight: wx * wt * size[0] * size[1],
                        element: e,
                    });
                }
            }
            out
        }
    }

    /// Full coefficient vector from free coefficients (constrained = 0).
    pub fn expand(&self, free: &[T]) -> Result<Vec<T>> {
        if free.len() != self.n_free() {
            return Err(Error::DimensionMismatch { expected: self.n_free(), got: free.len() });
        }
        let mut full = vec![T::zero(); self.n_total()];
        for (k, &v) in free.iter().enumerate() {
            full[self.free_to_full[k]] = v;
        }
        Ok(full)
    }

    /// Free coefficients from a full vector (constrained entries dropped).
    pub fn restrict(&self, full: &[T]) -> Vec<T> {
        self.free_to_full.iter().map(|&i| full[i]).collect()
    }

    /// Nodal interpolant; `f(point, deriv)` supplies `∂^deriv f`.
    pub fn interpolate(&self, f: impl Fn(&[T], &[u8]) -> T) -> Vec<T> {
        let mut full = vec![T::zero(); self.n_total()];
        let nt = self.vertical.n_nodes();
        match &self.tangential {
            None => {
                for it in 0..nt {
                    let t = self.vertical.nodes[it];
                    for b in 0..3 {
                        let s = self.vertical_scale[it].powi(b as i32);
                        full[self.full_index(0, it, 0, b)] = s * f(&[t], &[b as u8]);
                    }
                }
            }
            Some(m) => {
                let h = self.tangential_scale;
                for ix in 0..m.n_elements() {
                    let x = m.nodes[ix];
                    for it in 0..nt {
                        let t = self.vertical.nodes[it];
                        for a in 0..3 {
                            for b in 0..3 {
                                let s = h.powi(a as i32) * self.vertical_scale[it].powi(b as i32);
                                full[self.full_index(ix, it, a, b)] = s * f(&[x, t], &[a as u8, b as u8]);
                            }
                        }
                    }
                }
            }
        }
        full
    }

    /// Element containing the reference point.
    pub fn locate(&self, p: &[T]) -> Result<usize> {
        let n = self.nvars();
        if p.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.len() });
        }
        let et = self
            .vertical
            .locate(p[n - 1])
            .ok_or_else(|| Error::OutOfDomain(format!("t = {} outside the mesh", p[n - 1])))?;
        let ex = match &self.tangential {
            Some(m) => {
                let x = p[0] - p[0].floor();
                m.locate(x).unwrap_or(0)
            }
            None => 0,
        };
        Ok(ex * self.vertical.n_elements() + et)
    }

    /// `∂^deriv u(p)` from a full coefficient vector, inside element `e`.
    pub fn evaluate_in_element(&self, full: &[T], e: usize, p: &[T], deriv: &[u8]) -> Result<T> {
        let n = self.nvars();
        if deriv.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: deriv.len() });
        }
        let (origin, size) = self.element_box(e);
        let (_, et) = self.element_coords(e);
        let dofs = self.element_dofs(e);
        let order: usize = deriv.iter().map(|&d| d as usize).sum();
        if deriv.iter().any(|&d| d as usize > MAX_SHAPE_DERIVATIVE) {
            return Err(Error::DerivativeOrder { requested: order, max: MAX_SHAPE_DERIVATIVE });
        }
        let clamp01 = |s: T| s.max(T::zero()).min(T::one());
        if n == 1 {
            let v = self.vertical_shapes(et, clamp01((p[0] - origin[0]) / size[0]), deriv[0] as usize);
            let row = &v[deriv[0] as usize];
            Ok((0..6).fold(T::zero(), |acc, i| acc + row[i] * full[dofs[i]]))
        } else {
            let x = p[0] - p[0].floor();
            let mut sx = (x - origin[0]) / size[0];
            if sx < -T::lit(0.5) {
                sx += T::one() / size[0];
            } else if sx > T::lit(1.5) {
                sx -= T::one() / size[0];
            }
            let xs = self.tangential_shapes(clamp01(sx), deriv[0] as usize);
            let ts = self.vertical_shapes(et, clamp01((p[1] - origin[1]) / size[1]), deriv[1] as usize);
            let (xr, tr) = (&xs[deriv[0] as usize], &ts[deriv[1] as usize]);
            let mut acc = T::zero();
            let mut k = 0;
            for lx in 0..2 {
                for lt in 0..2 {
                    for a in 0..3 {
                        for b in 0..3 {
                            acc += xr[3 * lx + a] * tr[3 * lt + b] * full[dofs[k]];
                            k += 1;
                        }
                    }
                }
            }
            Ok(acc)
        }
    }

    /// `∂^deriv u(p)` from free coefficients.
    pub fn evaluate(&self, free: &[T], p: &[T], deriv: &[u8]) -> Result<T> {
        let full = self.expand(free)?;
        let e = self.locate(p)?;
        self.evaluate_in_element(&full, e, p, deriv)
    }
}

fn scaled_shapes<T: Real>(s: T, h: T, node_scale: [T; 2], max_d: usize) -> Vec<[T; 6]> {
    let ratio = [h / node_scale[0], h / node_scale[1]];
    let mut fac = [T::one(); 6];
    for node in 0..2 {
        for a in 0..3 {
            fac[3 * node + a] = ratio[node].powi(a as i32);
        }
    }
    (0..=max_d)
        .map(|d| {
            let raw = shape_values(s, d);
            let hd = h.powi(-(d as i32));
            let mut out = [T::zero(); 6];
            for i in 0..6 {
                out[i] = raw[i] * fac[i] * hd;
            }
            out
        })
        .collect()
}

/// A Gauss point in reference coordinates with its weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadPoint<T> {
    point: [T; 2],
    nvars: usize,
    pub weight: T,
    pub element: usize,
}

impl<T: Real> QuadPoint<T> {
    pub fn point(&self) -> &[T] {
        &self.point[..self.nvars]
    }
}

/// Upper-triangle coordinate storage of a symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricSparseMatrix<T> {
    n: usize,
    rows: Vec<u32>,
    cols: Vec<u32>,
    vals: Vec<T>,
    finalized: bool,
}

impl<T: Real> SymmetricSparseMatrix<T> {
    /// Same pattern with every value converted.
    pub fn convert<U: Real>(&self) -> SymmetricSparseMatrix<U> {
        SymmetricSparseMatrix {
            n: self.n,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            vals: self.vals.iter().map(|v| U::lit(v.to_f64_lossy()) + U::lit((*v - T::lit(v.to_f64_lossy())).to_f64_lossy())).collect(),
            finalized: self.finalized,
        }
    }

    pub fn new(n: usize) -> Self {
        SymmetricSparseMatrix { n, rows: Vec::new(), cols: Vec::new(), vals: Vec::new(), finalized: true }
    }

    /// Adds `v` at `(i, j)`; the entry is stored in the upper triangle.
    pub fn push(&mut self, i: usize, j: usize, v: T) {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        self.rows.push(r as u32);
        self.cols.push(c as u32);
        self.vals.push(v);
        self.finalized = false;
    }

    /// Sorts entries by `(row, col)` and sums duplicates in insertion order.
    pub fn finalize(&mut self) {
        if self.finalized {
            return;
        }
        let mut idx: Vec<usize> = (0..self.vals.len()).collect();
        idx.sort_by_key(|&k| (self.rows[k], self.cols[k]));
        let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        for k in idx {
            let (r, c, v) = (self.rows[k], self.cols[k], self.vals[k]);
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().expect("nonempty") += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        self.rows = rows;
        self.cols = cols;
        self.vals = vals;
        self.finalized = true;
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Upper-triangle entries `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.vals.len()).map(|k| (self.rows[k] as usize, self.cols[k] as usize, self.vals[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (r, c) = if i <= j { (i as u32, j as u32) } else { (j as u32, i as u32) };
        if self.finalized {
            let k = self.rows.partition_point(|&x| x < r);
            let end = self.rows.partition_point(|&x| x <= r);
            match self.cols[k..end].binary_search(&c) {
                Ok(p) => self.vals[k + p],
                Err(_) => T::zero(),
            }
        } else {
            self.entries().filter(|&(a, b, _)| a == r as usize && b == c as usize).map(|e| e.2).fold(T::zero(), |s, v| s + v)
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.n];
        for (i, j, v) in self.entries() {
            if i == j {
                d[i] += v;
            }
        }
        d
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for (i, j, v) in self.entries() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| *a * *b).fold(T::zero(), |s, v| s + v)
    }

    /// `self + c·other` (both finalized or not).
    pub fn add_scaled(&self, c: T, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        let mut out = self.clone();
        for (i, j, v) in other.entries() {
            out.push(i, j, c * v);
        }
        out.finalize();
        Ok(out)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        for (i, j, v) in self.entries() {
            d[i][j] += v;
            if i != j {
                d[j][i] += v;
            }
        }
        d
    }

    /// Coordinate text export: a `n nnz` header, then one `row col value`
    /// line per stored upper-triangle entry at 17 significant digits.
    pub fn write_coordinate(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {}", self.n, self.nnz())?;
        for (i, j, v) in self.entries() {
            writeln!(w, "{} {} {:.16e}", i, j, v.to_f64_lossy())?;
        }
        Ok(())
    }
}

/// Local element matrix scattered to free indices, skipping constrained
/// degrees of freedom.
fn scatter<T: Real>(space: &TensorElementSpace<T>, e: usize, local: &[T], out: &mut SymmetricSparseMatrix<T>) {
    let dofs = space.element_dofs(e);
    let n = dofs.len();
    for i in 0..n {
        let Some(fi) = space.free_index(dofs[i]) else { continue };
        for j in i..n {
            let Some(fj) = space.free_index(dofs[j]) else { continue };
            let v = local[i * n + j];
            if v != T::zero() {
                out.push(fi, fj, v);
            }
        }
    }
}

fn merge<T: Real>(space: &TensorElementSpace<T>, locals: Vec<Result<Vec<T>>>) -> Result<SymmetricSparseMatrix<T>> {
    let mut m = SymmetricSparseMatrix::new(space.n_free());
    for (e, local) in locals.into_iter().enumerate() {
        scatter(space, e, &local?, &mut m);
    }
    m.finalize();
    Ok(m)
}

fn jet_of<T: Real>(nvars: usize, d: &[T; MAX_MONOMIALS]) -> Jet3<T> {
    let tab = table(nvars);
    Jet3::from_derivatives(nvars, |e| d[tab.index(e).expect("monomial")])
}

/// Assembles `Σ_q w_q integrand(q, φ_j, φ_i)` over all elements, where the
/// jets are reference derivative jets of the basis functions.
pub fn assemble<T: Real, F>(space: &TensorElementSpace<T>, order: usize, integrand: F) -> Result<SymmetricSparseMatrix<T>>
where
    F: Fn(&QuadPoint<T>, &Jet3<T>, &Jet3<T>) -> T + Sync,
{
    let rule = GaussRule::<T>::new(order);
    let n = space.nvars();
    let locals: Vec<Result<Vec<T>>> = (0..space.n_elements())
        .into_par_iter()
        .map(|e| {
            let mut local: Vec<T> = Vec::new();
            for qp in space.quadrature_points(e, &rule) {
                let jets: Vec<Jet3<T>> = space.local_derivatives(e, qp.point()).iter().map(|d| jet_of(n, d)).collect();
                let m = jets.len();
                if local.is_empty() {
                    local = vec![T::zero(); m * m];
                }
                for i in 0..m {
                    for j in i..m {
                        let v = integrand(&qp, &jets[i], &jets[j]);
                        if !v.is_finite() {
                            return Err(Error::NonFinite("assembly integrand"));
                        }
                        local[i * m + j] += qp.weight * v;
                    }
                }
            }
            Ok(local)
        })
        .collect();
    merge(space, locals)
}

/// A bilinear form written as a weighted sum of products of linear features,
/// `a(u, v) = ∫ Σ_f w_f F_f(u) F_f(v)`. Several forms sharing the features
/// (e.g. stiffness and mass) can be assembled in one pass via `n_outputs`.
pub trait FeatureForm<T: Real>: Sync {
    type Ctx;
    fn n_features(&self) -> usize;
    fn n_outputs(&self) -> usize {
        1
    }
    /// Per-point data shared by all basis functions (e.g. map coefficients).
    fn prepare(&self, qp: &QuadPoint<T>) -> Result<Self::Ctx>;
    /// Features of one basis function from its reference derivatives, listed
    /// by monomial index.
    fn features(&self, ctx: &Self::Ctx, derivs: &[T], out: &mut [T]);
    /// Feature weights of output `k`, without the quadrature weight.
    fn weights(&self, ctx: &Self::Ctx, k: usize, out: &mut [T]);
    /// Whether the form is independent of the tangential position on the
    /// reference box `(origin, sizes)`; such elements of one row share their
    /// element matrices on a uniform strip.
    fn tangentially_invariant(&self, _origin: &[T; 2], _sizes: &[T; 2]) -> bool {
        false
    }
}

/// Fast path of [`assemble`] for forms given by features.
pub fn assemble_features<T: Real, F: FeatureForm<T>>(
    space: &TensorElementSpace<T>,
    order: usize,
    form: &F,
) -> Result<SymmetricSparseMatrix<T>> {
    Ok(assemble_features_multi(space, order, form)?.swap_remove(0))
}

/// One assembled matrix per output of the form.
pub fn assemble_features_multi<T: Real, F: FeatureForm<T>>(
    space: &TensorElementSpace<T>,
    order: usize,
    form: &F,
) -> Result<Vec<SymmetricSparseMatrix<T>>> {
    let rule = GaussRule::<T>::new(order);
    let nf = form.n_features();
    let no = form.n_outputs();
    let element_locals = |e: usize| -> Result<Vec<Vec<T>>> {
        let mut local: Vec<Vec<T>> = Vec::new();
        let mut feats: Vec<T> = Vec::new();
        let mut w = vec![T::zero(); nf];
        for qp in space.quadrature_points(e, &rule) {
            let ctx = form.prepare(&qp)?;
            let derivs = space.local_derivatives(e, qp.point());
            let m = derivs.len();
            if local.is_empty() {
                local = vec![vec![T::zero(); m * m]; no];
                feats = vec![T::zero(); m * nf];
            }
            for (i, d) in derivs.iter().enumerate() {
                form.features(&ctx, d, &mut feats[i * nf..(i + 1) * nf]);
            }
            for (k, out) in local.iter_mut().enumerate() {
                form.weights(&ctx, k, &mut w);
                for f in 0..nf {
                    let wf = w[f] * qp.weight;
                    if wf == T::zero() {
                        continue;
                    }
                    for i in 0..m {
                        let fi = feats[i * nf + f] * wf;
                        if fi == T::zero() {
                            continue;
                        }
                        let row = &mut out[i * m..(i + 1) * m];
                        for j in i..m {
                            row[j] += fi * feats[j * nf + f];
                        }
                    }
                }
            }
        }
        if local.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature assembly"));
        }
        Ok(local)
    };

    // rows whose elements all share one matrix
    let nte = space.vertical().n_elements();
    let shared_row: Vec<bool> = match space.tangential() {
        Some(tm) if tm.is_uniform() => (0..nte)
            .map(|et| {
                (0..tm.n_elements()).all(|ex| {
                    let (o, h) = space.element_box(ex * nte + et);
                    form.tangentially_invariant(&o, &h)
                })
            })
            .collect(),
        _ => vec![false; nte],
    };
    let row_locals: Vec<Option<Vec<Vec<T>>>> = (0..nte)
        .into_par_iter()
        .map(|et| if shared_row[et] { element_locals(et).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    let locals: Vec<Option<Vec<Vec<T>>>> = (0..space.n_elements())
        .into_par_iter()
        .map(|e| if shared_row[e % nte] { Ok(None) } else { element_locals(e).map(Some) })
        .collect::<Result<_>>()?;
    let mut mats: Vec<SymmetricSparseMatrix<T>> = (0..no).map(|_| SymmetricSparseMatrix::new(space.n_free())).collect();
    for (e, local) in locals.iter().enumerate() {
        let l = match local {
            Some(l) => l,
            None => row_locals[e % nte].as_ref().expect("shared row computed"),
        };
        for (k, lk) in l.iter().enumerate() {
            scatter(space, e, lk, &mut mats[k]);
        }
    }
    for m in &mut mats {
        m.finalize();
    }
    Ok(mats)
}

/// `∫ f φ_i` for every free basis function; `f` receives the Gauss point.
pub fn assemble_rhs<T: Real>(
    space: &TensorElementSpace<T>,
    order: usize,
    f: impl Fn(&QuadPoint<T>) -> T + Sync,
) -> Result<Vec<T>> {
    let rule = GaussRule::<T>::new(order);
    let locals: Vec<Result<Vec<T>>> = (0..space.n_elements())
        .into_par_iter()
        .map(|e| {
            let mut local: Vec<T> = Vec::new();
            for qp in space.quadrature_points(e, &rule) {
                let fv = f(&qp);
                if !fv.is_finite() {
                    return Err(Error::NonFinite("right-hand side"));
                }
                let derivs = space.local_derivatives(e, qp.point());
                if local.is_empty() {
                    local = vec![T::zero(); derivs.len()];
                }
                for (i, d) in derivs.iter().enumerate() {
                    local[i] += qp.weight * fv * d[0];
                }
            }
            Ok(local)
        })
        .collect();
    let mut rhs = vec![T::zero(); space.n_free()];
    for (e, local) in locals.into_iter().enumerate() {
        let local = local?;
        for (i, full) in space.element_dofs(e).into_iter().enumerate() {
            if let Some(k) = space.free_index(full) {
                rhs[k] += local[i];
            }
        }
    }
    Ok(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, bottom: SideBc, top: SideBc) -> TensorElementSpace<f64> {
        TensorElementSpace::line(Mesh1D::uniform(-1.0, 0.0, n).unwrap(), bottom, top).unwrap()
    }

    #[test]
    fn nodal_duality() {
        assert_eq!(shape_eval(0.0, 0).unwrap(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(shape_eval(1.0, 2).unwrap(), [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        for (d, s) in [(0, 0.0), (1, 0.0), (2, 0.0), (0, 1.0), (1, 1.0), (2, 1.0)].into_iter().enumerate() {
            let v = shape_eval(s.1, s.0).unwrap();
            for (i, x) in v.iter().enumerate() {
                assert_eq!(*x, if i == d { 1.0 } else { 0.0 }, "shape {i} at dof {d}");
            }
        }
        assert!(shape_eval(1.2, 0).is_err());
        assert!(shape_eval(0.5, 6).is_err());
    }

    #[test]
    fn quintic_reproduction_on_unit_element() {
        let p = |s: f64| s.powi(5) - 2.0 * s * s + 1.0;
        let dofs = [1.0, 0.0, -4.0, 0.0, 1.0, 16.0];
        let s = 0.37;
        let v = shape_eval(s, 0).unwrap();
        let r: f64 = v.iter().zip(dofs).map(|(a, b)| a * b).sum();
        assert!((r - p(s)).abs() < 1e-13);
    }

    #[test]
    fn one_dimensional_counts() {
        assert_eq!(line(4, SideBc::Clamped1, SideBc::Clamped1).n_free(), 11);
        assert_eq!(line(4, SideBc::Clamped1, SideBc::Clamped2).n_free(), 10);
        let s = line(4, SideBc::Free, SideBc::Free);
        assert_eq!((s.n_free(), s.n_constrained()), (15, 0));
        assert!(TensorElementSpace::line(Mesh1D::uniform(-1.0, 0.0, 4).unwrap(), SideBc::Periodic, SideBc::Free).is_err());
        assert!(TensorElementSpace::line(Mesh1D::uniform(-1.0, 0.0, 1).unwrap(), SideBc::Free, SideBc::Free).is_err());
    }

    #[test]
    fn strip_counts_and_maps() {
        let (nx, nt) = (5, 3);
        let s = TensorElementSpace::periodic_strip(nx, Mesh1D::uniform(-1.0, 0.0, nt).unwrap(), SideBc::Clamped1, SideBc::Clamped1)
            .unwrap();
        assert_eq!(s.n_free(), 9 * nx * (nt + 1) - 6 * nx * 2);
        assert_eq!(s.n_free() + s.n_constrained(), s.n_total());
        for e in 0..s.n_elements() {
            let mut d = s.element_dofs(e);
            d.sort_unstable();
            d.dedup();
            assert_eq!(d.len(), 36);
        }
        for ix in 0..nx as isize {
            assert_eq!(s.wrap_column(s.wrap_column(ix + nx as isize) as isize), ix as usize);
        }
        let mut seen = vec![false; s.n_total()];
        for ix in 0..nx {
            for it in 0..=nt {
                for a in 0..3 {
                    for b in 0..3 {
                        let k = s.full_index(ix, it, a, b);
                        assert!(!seen[k]);
                        seen[k] = true;
                    }
                }
            }
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn graded_mesh_properties() {
        let m = Mesh1D::graded_toward_top(-1.0, 0.0, 1.0 / 128.0, 0.125, GRADING_RATIO, MIN_VERTICAL_ELEMENTS).unwrap();
        assert!(m.n_elements() >= MIN_VERTICAL_ELEMENTS);
        let n = m.n_elements();
        assert!((m.element(n - 1).1 - 1.0 / 128.0).abs() < 1e-15);
        assert_eq!(m.nodes()[0], -1.0);
        assert_eq!(m.nodes()[n], 0.0);
        for e in 1..n {
            let r = m.element(e).1 / m.element(e - 1).1;
            assert!(r <= 1.0 + 1e-12 && r >= GRADING_RATIO - 1e-12, "ratio {r}");
        }
    }

    #[test]
    fn third_derivative_energy_of_t5() {
        // u = t⁵ on (0, 1): ∫(60t²)² = 720
        let s = TensorElementSpace::line(Mesh1D::<f64>::uniform(0.0, 1.0, 3).unwrap(), SideBc::Free, SideBc::Free).unwrap();
        let full = s.interpolate(|p, d| {
            let t: f64 = p[0];
            [t.powi(5), 5.0 * t.powi(4), 20.0 * t.powi(3), 60.0 * t * t][d[0] as usize]
        });
        let u = s.restrict(&full);
        let a = assemble(&s, 8, |_, ju, jv| ju.derivative(&[3, 0, 0]) * jv.derivative(&[3, 0, 0])).unwrap();
        assert!((a.bilinear(&u, &u) - 720.0).abs() < 1e-9);
    }

    #[test]
    fn mass_has_positive_diagonal_and_partition_of_unity() {
        let s = line(4, SideBc::Free, SideBc::Free);
        let m = assemble(&s, 8, |_, ju, jv| ju.value() * jv.value()).unwrap();
        assert!(m.diagonal().iter().all(|&d| d > 0.0));
        let rhs = assemble_rhs(&s, 8, |_| 1.0).unwrap();
        let total: f64 = (0..s.vertical().n_nodes()).map(|it| rhs[s.free_index(s.full_index(0, it, 0, 0)).unwrap()]).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(assemble_rhs(&s, 8, |_| 0.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn c2_continuity_across_faces() {
        let s = TensorElementSpace::periodic_strip(3, Mesh1D::uniform(-1.0, 0.0, 3).unwrap(), SideBc::Free, SideBc::Free).unwrap();
        let coeffs: Vec<f64> = (0..s.n_free()).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let full = s.expand(&coeffs).unwrap();
        let nte = 3;
        for ex in 0..3 {
            for et in 0..nte - 1 {
                let (lo, hi) = (ex * nte + et, ex * nte + et + 1);
                let t = s.vertical().nodes()[et + 1];
                let x = (ex as f64 + 0.3) / 3.0;
                for d in 0..3u8 {
                    for a in 0..2u8 {
                        let l = s.evaluate_in_element(&full, lo, &[x, t], &[a, d]).unwrap();
                        let r = s.evaluate_in_element(&full, hi, &[x, t], &[a, d]).unwrap();
                        assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs()), "jump {l} {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn feature_path_matches_callback_path() {
        struct Energy;
        impl FeatureForm<f64> for Energy {
            type Ctx = ();
            fn n_features(&self) -> usize {
                2
            }
            fn prepare(&self, _: &QuadPoint<f64>) -> Result<()> {
                Ok(())
            }
            fn features(&self, _: &(), d: &[f64], out: &mut [f64]) {
                out[0] = d[0];
                out[1] = d[3];
            }
            fn weights(&self, _: &(), _: usize, w: &mut [f64]) {
                w[0] = 1.0;
                w[1] = 1.0;
            }
        }
        let s = line(5, SideBc::Clamped1, SideBc::Clamped1);
        let a = assemble(&s, 8, |_, u, v| u.value() * v.value() + u.derivative(&[3, 0, 0]) * v.derivative(&[3, 0, 0])).unwrap();
        let b = assemble_features(&s, 8, &Energy).unwrap();
        let scale = a.entries().map(|e| e.2.abs()).fold(0.0, f64::max);
        for (i, j, v) in a.entries() {
            assert!((v - b.get(i, j)).abs() < 1e-12 * scale, "{i} {j} {v} {}", b.get(i, j));
        }
    }

    #[test]
    fn export_is_seventeen_digits() {
        let mut m = SymmetricSparseMatrix::<f64>::new(2);
        m.push(1, 0, 1.0 / 3.0);
        m.push(0, 1, 1.0 / 3.0);
        m.finalize();
        let mut buf = Vec::new();
        m.write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "2 1\n0 1 6.6666666666666663e-1\n");
    }
}
