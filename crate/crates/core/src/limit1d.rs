//! Limit problems on `Ω = W × (-1, 0)` by Fourier reduction in `x̄`.
//!
//! With `u = c_m(x̄) w(t)`, `c_m` one of `1, cos(2π|m|x̄), sin(2π|m|x̄)`, the
//! form `∫ D³u : D³φ + uφ` reduces per mode to
//! `a_ξ(w, v) = ∫ w‴v‴ + 3ξ²w″v″ + 3ξ⁴w′v′ + (ξ⁶ + 1)wv` with `ξ = 2π|m|`.
//! The bottom side carries intermediate conditions throughout. On the top
//! side:
//!
//! * intermediate: `w = w′ = 0`, `w‴` natural;
//! * strange term: as intermediate with `a_ξ - K w″(0)v″(0)`, whose natural
//!   condition is `w‴(0) - K w″(0) = 0`; the opposite sign is selectable;
//! * Dirichlet: `w = w′ = w″ = 0`.
//!
//! Mode `m > 0` stands for the cosine, `m < 0` for the sine partner.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hermite::{
    assemble_features, assemble_rhs, FeatureForm, Mesh1D, QuadPoint, SideBc, SymmetricSparseMatrix,
    TensorElementSpace, DEFAULT_QUADRATURE, GRADING_RATIO,
};
use crate::numerics::{dense_smallest, solve_linear, solve_smallest_mixed, EigenRequest, DEFAULT_TOL};
use crate::{Error, Extended, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimitKind {
    Intermediate,
    StrangeTerm,
    DirichletOnW,
}

impl LimitKind {
    pub fn short_name(self) -> &'static str {
        match self {
            LimitKind::Intermediate => "int",
            LimitKind::StrangeTerm => "strange",
            LimitKind::DirichletOnW => "dir",
        }
    }

    /// Full name, as written in tables.
    pub fn name(self) -> &'static str {
        match self {
            LimitKind::Intermediate => "Intermediate",
            LimitKind::StrangeTerm => "StrangeTerm",
            LimitKind::DirichletOnW => "DirichletOnW",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "int" => Ok(LimitKind::Intermediate),
            "strange" | "hat" => Ok(LimitKind::StrangeTerm),
            "dir" => Ok(LimitKind::DirichletOnW),
            other => Err(Error::InvalidInput(format!("unknown boundary condition {other:?}"))),
        }
    }
}

/// Top boundary condition of a limit problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitBc<T> {
    pub kind: LimitKind,
    /// Strange-term coefficient, zero for the other kinds.
    pub k: T,
    /// `true` adds `+K w″(0)v″(0)` instead of subtracting it.
    pub flipped: bool,
}

impl<T: Real> LimitBc<T> {
    pub fn intermediate() -> Self {
        LimitBc { kind: LimitKind::Intermediate, k: T::zero(), flipped: false }
    }

    pub fn dirichlet() -> Self {
        LimitBc { kind: LimitKind::DirichletOnW, k: T::zero(), flipped: false }
    }

    pub fn strange(k: T) -> Result<Self> {
        if !(k >= T::zero()) || !k.is_finite() {
            return Err(Error::InvalidInput(format!("strange-term coefficient {k} must be finite and ≥ 0")));
        }
        Ok(LimitBc { kind: LimitKind::StrangeTerm, k, flipped: false })
    }

    /// Strange term with the opposite sign, `a_ξ + K w″(0)v″(0)`.
    pub fn strange_flipped(k: T) -> Result<Self> {
        Ok(LimitBc { flipped: true, ..Self::strange(k)? })
    }

    /// Signed coefficient `s` of the boundary term `s·w″(0)v″(0)`.
    pub fn boundary_coefficient(&self) -> T {
        match (self.kind, self.flipped) {
            (LimitKind::StrangeTerm, false) => -self.k,
            (LimitKind::StrangeTerm, true) => self.k,
            _ => T::zero(),
        }
    }

    pub fn top_side(&self) -> SideBc {
        match self.kind {
            LimitKind::DirichletOnW => SideBc::Clamped2,
            _ => SideBc::Clamped1,
        }
    }

    pub fn label(&self) -> String {
        match (self.kind, self.flipped) {
            (LimitKind::StrangeTerm, true) => "strange+".into(),
            (k, _) => k.short_name().into(),
        }
    }
}

pub const DEFAULT_MODE_CUTOFF: usize = 8;
pub const DEFAULT_LIMIT_ELEMENTS: usize = 64;
pub const LIMIT_TOP_SIZE: f64 = 1.0 / 256.0;

/// Graded vertical mesh on `[-1, 0]` with at least `elements` elements
/// and top element size `1/256`.
pub fn limit_mesh<T: Real>(elements: usize) -> Result<Mesh1D<T>> {
    let h_bulk = T::lit(2.0) / T::from_usize(elements.max(1));
    let h_top = T::lit(LIMIT_TOP_SIZE).min(h_bulk);
    Mesh1D::graded_toward_top(-T::one(), T::zero(), h_top, h_bulk, T::lit(GRADING_RATIO), elements)
}

/// Mode energy `a_ξ` as a feature form: `(w, w′, w″, w‴)` with weights
/// `(ξ⁶ + 1, 3ξ⁴, 3ξ², 1)`.
pub struct ModeEnergy<T> {
    pub xi: T,
    pub with_mass: bool,
}

impl<T: Real> FeatureForm<T> for ModeEnergy<T> {
    type Ctx = ();

    fn n_features(&self) -> usize {
        4
    }

    fn prepare(&self, _: &QuadPoint<T>) -> Result<()> {
        Ok(())
    }

    fn features(&self, _: &(), d: &[T], out: &mut [T]) {
        out.copy_from_slice(&d[..4]);
    }

    fn weights(&self, _: &(), _: usize, w: &mut [T]) {
        let x2 = self.xi * self.xi;
        let mass = if self.with_mass { T::one() } else { T::zero() };
        w[0] = x2 * x2 * x2 + mass;
        w[1] = T::lit(3.0) * x2 * x2;
        w[2] = T::lit(3.0) * x2;
        w[3] = T::one();
    }
}

/// `∫ w v`.
pub struct ValueMass;

impl<T: Real> FeatureForm<T> for ValueMass {
    type Ctx = ();

    fn n_features(&self) -> usize {
        1
    }

    fn prepare(&self, _: &QuadPoint<T>) -> Result<()> {
        Ok(())
    }

    fn features(&self, _: &(), d: &[T], out: &mut [T]) {
        out[0] = d[0];
    }

    fn weights(&self, _: &(), _: usize, w: &mut [T]) {
        w[0] = T::one();
    }
}

/// Stiffness `a_ξ` (including the mass term) and mass matrix.
pub fn mode_form<T: Real>(xi: T, space: &TensorElementSpace<T>) -> Result<(SymmetricSparseMatrix<T>, SymmetricSparseMatrix<T>)> {
    if space.nvars() != 1 {
        return Err(Error::InvalidInput("mode forms live on one-variable spaces".into()));
    }
    let a = assemble_features(space, DEFAULT_QUADRATURE, &ModeEnergy { xi, with_mass: true })?;
    let m = assemble_features(space, DEFAULT_QUADRATURE, &ValueMass)?;
    Ok((a, m))
}

/// Free index of the `w″(0)` degree and the factor `1/h_node²` that turns
/// the stored degree into `w″(0)`.
pub fn top_curvature_dof<T: Real>(space: &TensorElementSpace<T>) -> Result<(usize, T)> {
    let it = space.vertical().n_nodes() - 1;
    let full = space.full_index(0, it, 0, 2);
    let free = space
        .free_index(full)
        .ok_or_else(|| Error::ConstrainedDof("w″(0) is pinned by the top boundary condition".into()))?;
    let h = space.vertical_node_scale(it);
    Ok((free, T::one() / (h * h)))
}

/// Adds `coefficient·w″(0)v″(0)` (negative for the literal strange term).
pub fn apply_boundary_term<T: Real>(
    stiffness: &SymmetricSparseMatrix<T>,
    coefficient: T,
    space: &TensorElementSpace<T>,
) -> Result<SymmetricSparseMatrix<T>> {
    let (i, e) = top_curvature_dof(space)?;
    let mut out = stiffness.clone();
    if coefficient != T::zero() {
        out.push(i, i, coefficient * e * e);
        out.finalize();
    }
    Ok(out)
}

/// Rank-one update `stiffness - K e eᵀ`, `e` extracting `w″(0)`.
pub fn apply_strange_term<T: Real>(
    stiffness: &SymmetricSparseMatrix<T>,
    k: T,
    space: &TensorElementSpace<T>,
) -> Result<SymmetricSparseMatrix<T>> {
    apply_boundary_term(stiffness, -k, space)
}

/// Space and matrices of one mode under a limit boundary condition.
pub fn mode_system<T: Real>(
    bc: &LimitBc<T>,
    xi: T,
    mesh: &Mesh1D<T>,
) -> Result<(TensorElementSpace<T>, SymmetricSparseMatrix<T>, SymmetricSparseMatrix<T>)> {
    let space = TensorElementSpace::line(mesh.clone(), SideBc::Clamped1, bc.top_side())?;
    let (a, m) = mode_form(xi, &space)?;
    let a = match bc.kind {
        LimitKind::StrangeTerm => apply_boundary_term(&a, bc.boundary_coefficient(), &space)?,
        _ => a,
    };
    Ok((space, a, m))
}

pub fn xi_of_mode<T: Real>(m: i32) -> T {
    T::lit(2.0 * PI * m.unsigned_abs() as f64)
}

/// Lowest `count` eigenpairs of one mode (free coefficients).
pub fn mode_eigenpairs<T: Real>(
    bc: &LimitBc<T>,
    m: i32,
    mesh: &Mesh1D<T>,
    count: usize,
) -> Result<(TensorElementSpace<T>, Vec<T>, Vec<Vec<T>>)> {
    let (space, a, b) = mode_system(bc, xi_of_mode(m), mesh)?;
    let count = count.min(space.n_free());
    // a subtracted boundary term can push λ far below zero, out of reach
    // of a fixed shift; the dense solver has no such restriction
    let pairs = if bc.boundary_coefficient() < T::zero() || count + 4 > space.n_free() {
        dense_smallest(&a, &b, count)?
    } else {
        let tol = (T::eps() * T::lit(1e3)).max(T::lit(1e-17)).min(T::lit(DEFAULT_TOL));
        solve_smallest_mixed(&EigenRequest::new(&a, &b, count).with_tol(tol))?
    };
    Ok((space, pairs.values, pairs.vectors))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitEig<T> {
    pub lambda: T,
    pub m: i32,
    pub idx: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimitSpectrum<T> {
    pub bc: LimitBc<T>,
    pub mode_cutoff: usize,
    pub mesh_elements: usize,
    /// Sorted by `(λ, |m|, m)`.
    pub eigs: Vec<LimitEig<T>>,
}

/// Lowest `count` eigenvalues over modes `|m| ≤ mode_cutoff`.
pub fn solve_limit_spectrum<T: Real>(
    bc: &LimitBc<T>,
    mode_cutoff: usize,
    count: usize,
    mesh: &Mesh1D<T>,
) -> Result<LimitSpectrum<T>> {
    if count == 0 {
        return Err(Error::InvalidInput("count must be at least 1".into()));
    }
    let per_mode: Vec<Result<Vec<T>>> = (0..=mode_cutoff as i32)
        .into_par_iter()
        .map(|m| mode_eigenpairs(bc, m, mesh, count).map(|r| r.1))
        .collect();
    let mut eigs = Vec::new();
    for (m, vals) in per_mode.into_iter().enumerate() {
        let vals = vals?;
        let m = m as i32;
        let signs: &[i32] = if m == 0 { &[1] } else { &[1, -1] };
        for &s in signs {
            for (idx, &lambda) in vals.iter().enumerate() {
                eigs.push(LimitEig { lambda, m: s * m, idx });
            }
        }
    }
    if eigs.len() < count {
        return Err(Error::InvalidInput(format!("only {} discrete eigenvalues available", eigs.len())));
    }
    eigs.sort_by(|a, b| {
        a.lambda
            .partial_cmp(&b.lambda)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.m.abs().cmp(&b.m.abs()))
            .then(a.m.cmp(&b.m))
    });
    eigs.truncate(count);
    Ok(LimitSpectrum { bc: *bc, mode_cutoff, mesh_elements: mesh.n_elements(), eigs })
}

/// [`solve_limit_spectrum`] assembled and iterated in [`Extended`]
/// precision, lowered to `f64`. A negative boundary coefficient stays in
/// `f64`: that spectrum is dominated by the boundary term.
pub fn solve_limit_spectrum_extended(
    bc: &LimitBc<f64>,
    mode_cutoff: usize,
    count: usize,
    mesh: &Mesh1D<f64>,
) -> Result<LimitSpectrum<f64>> {
    if bc.boundary_coefficient() < 0.0 {
        return solve_limit_spectrum(bc, mode_cutoff, count, mesh);
    }
    let wide_bc = LimitBc { kind: bc.kind, k: Extended::from(bc.k), flipped: bc.flipped };
    let wide_mesh = Mesh1D::from_nodes(mesh.nodes().iter().map(|&x| Extended::from(x)).collect())?;
    let r = solve_limit_spectrum(&wide_bc, mode_cutoff, count, &wide_mesh)?;
    Ok(LimitSpectrum {
        bc: *bc,
        mode_cutoff,
        mesh_elements: r.mesh_elements,
        eigs: r.eigs.iter().map(|e| LimitEig { lambda: e.lambda.to_f64_lossy(), m: e.m, idx: e.idx }).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFile {
    pub bc: String,
    #[serde(rename = "K")]
    pub k: f64,
    pub modes: usize,
    pub eigs: Vec<LimitEig<f64>>,
}

impl<T: Real> LimitSpectrum<T> {
    pub fn values(&self) -> Vec<T> {
        self.eigs.iter().map(|e| e.lambda).collect()
    }

    pub fn to_file(&self) -> SpectrumFile {
        SpectrumFile {
            bc: self.bc.label(),
            k: self.bc.k.to_f64_lossy(),
            modes: self.mode_cutoff,
            eigs: self
                .eigs
                .iter()
                .map(|e| LimitEig { lambda: e.lambda.to_f64_lossy(), m: e.m, idx: e.idx })
                .collect(),
        }
    }
}

/// Tangential factor of mode `m`: 1, `cos(2πmx)` for `m > 0`, `sin(2π|m|x)`
/// for `m < 0`, differentiated `d` times.
pub fn tangential_factor<T: Real>(m: i32, x: T, d: u8) -> T {
    if m == 0 {
        return if d == 0 { T::one() } else { T::zero() };
    }
    let w = T::lit(2.0 * PI) * T::lit(m.unsigned_abs() as f64);
    let phase = w * x;
    let base = if m > 0 { phase.cos() } else { phase.sin() };
    let shifted = if m > 0 { phase.sin() } else { phase.cos() };
    // derivatives cycle cos → -sin → -cos → sin and sin → cos → -sin → -cos
    let v = match (m > 0, d % 4) {
        (_, 0) => base,
        (true, 1) => -shifted,
        (true, 2) => -base,
        (true, _) => shifted,
        (false, 1) => shifted,
        (false, 2) => -base,
        (false, _) => -shifted,
    };
    v * w.powi(d as i32)
}

/// Function on `Ω` given by its tangential modes.
pub struct ModalLoad<T> {
    pub modes: Vec<(i32, Box<dyn Fn(T) -> T + Send + Sync>)>,
}

#[derive(Clone, Debug)]
pub struct LimitPoissonSolution<T> {
    pub bc: LimitBc<T>,
    pub space: TensorElementSpace<T>,
    /// Free coefficients per tangential mode.
    pub modes: Vec<(i32, Vec<T>)>,
}

/// Solves `a(v, φ) = ∫ f φ` mode by mode.
pub fn solve_limit_poisson<T: Real>(
    bc: &LimitBc<T>,
    load: &ModalLoad<T>,
    mesh: &Mesh1D<T>,
) -> Result<LimitPoissonSolution<T>> {
    let mut modes = Vec::with_capacity(load.modes.len());
    let mut space_out = None;
    for (m, f) in &load.modes {
        let (space, a, _) = mode_system(bc, xi_of_mode(*m), mesh)?;
        // ∫_W c_m² = 1 for m = 0 and 1/2 otherwise, on both sides
        let rhs = assemble_rhs(&space, DEFAULT_QUADRATURE, |qp| f(qp.point()[0]))?;
        let w = solve_linear(&a, &rhs)?;
        modes.push((*m, w));
        space_out = Some(space);
    }
    let space = match space_out {
        Some(s) => s,
        None => TensorElementSpace::line(mesh.clone(), SideBc::Clamped1, bc.top_side())?,
    };
    Ok(LimitPoissonSolution { bc: *bc, space, modes })
}

impl<T: Real> LimitPoissonSolution<T> {
    /// `∂_x^dx ∂_t^dt v(x, t)`.
    pub fn eval(&self, x: T, t: T, dx: u8, dt: u8) -> Result<T> {
        let mut acc = T::zero();
        for (m, w) in &self.modes {
            let c = tangential_factor(*m, x, dx);
            if c != T::zero() {
                acc += c * self.space.evaluate(w, &[t], &[dt])?;
            }
        }
        Ok(acc)
    }

    /// `∂²v/∂x_N²(x̄, 0)`.
    pub fn trace(&self, x: T) -> Result<T> {
        self.eval(x, T::zero(), 0, 2)
    }

    /// `a(v, v)` summed over modes with the tangential weights `∫_W c_m²`.
    pub fn energy(&self) -> Result<T> {
        let mut total = T::zero();
        for (m, w) in &self.modes {
            let (_, a, _) = mode_system(&self.bc, xi_of_mode(*m), self.space.vertical())?;
            let weight = if *m == 0 { T::one() } else { T::lit(0.5) };
            total += weight * a.bilinear(w, w);
        }
        Ok(total)
    }
}

/// `w‴(0)` and `w″(0)` of a mode function, read off the top element.
pub fn top_derivatives<T: Real>(space: &TensorElementSpace<T>, w: &[T]) -> Result<(T, T)> {
    let full = space.expand(w)?;
    let e = space.n_elements() - 1;
    let w3 = space.evaluate_in_element(&full, e, &[T::zero()], &[3])?;
    let w2 = space.evaluate_in_element(&full, e, &[T::zero()], &[2])?;
    Ok((w3, w2))
}
