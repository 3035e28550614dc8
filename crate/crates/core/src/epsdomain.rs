//! Direct solver on the oscillating domain
//! `Ω_ε = {(x̄, x_N) : x̄ ∈ W, -1 < x_N < g_ε(x̄)}`.
//!
//! The form `∫_{Ω_ε} D³u : D³φ + uφ` is pulled back to `Ω = W × (-1, 0)`
//! through a vertical map `Ψ_ε` that sends `t = 0` to the oscillating side
//! and keeps `t = -1` fixed. At every Gauss point the jet of `Ψ_ε` is
//! inverted and turned into the order-3 chain-rule coefficients, so the
//! physical third derivatives of each reference basis function are exact.
//! Clamping degrees `b ∈ {0, 1}` on both horizontal sides gives exactly the
//! conforming space `W^{3,2} ∩ W^{2,2}_0` of the deformed domain.
//!
//! Two maps are available. [`PullbackMap::Shear`] is
//! `t + (t + 1) g_ε(x̄)`: every reference function then carries the
//! `ε`-oscillation through the whole depth, and resolving it needs far more
//! than four elements per period once `ε^{α-3}` is large. In double
//! precision the `h⁻⁶` conditioning stops that refinement near
//! `h = 1/256`. [`PullbackMap::Layer`] confines the deformation to
//! `t ∈ (-ε, 0)` (see [`eval_layer_pullback`]), the bulk is mapped by
//! the identity, and it is the default.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chain3::{invert_jet3, multiplicity, table, transform_coeffs, TransformCoeffs};
use crate::hermite::{
    assemble_features_multi, assemble_rhs, FeatureForm, Mesh1D, QuadPoint, SideBc, SymmetricSparseMatrix,
    TensorElementSpace, DEFAULT_QUADRATURE, GRADING_RATIO, MIN_VERTICAL_ELEMENTS,
};
use crate::numerics::{solve_linear, solve_smallest_mixed, EigenRequest, DEFAULT_TOL};
use crate::profile::{eval_g, eval_layer_pullback, eval_pullback, OscillationProfile, PerturbationParams, ProfileFile};
use crate::quadrature::GaussRule;
use crate::{Error, Extended, Real, Result};

pub const DEFAULT_ELEMENTS_PER_PERIOD: usize = 4;
/// Vertical bulk element size away from the oscillating side.
pub const BULK_SIZE: f64 = 0.125;
pub const MAX_EIGEN_COUNT: usize = 20;

/// Elements across the deformation layer `(-ε, 0)`.
pub const LAYER_ELEMENTS: usize = 8;

/// Tangential elements per period and elements across the layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshRule {
    pub elements_per_period: usize,
    pub layer_elements: usize,
}

impl MeshRule {
    /// Production resolution. At `α = 1` the teeth are as tall as they are
    /// wide and the deformed elements are the most distorted, so small `α`
    /// gets the finest mesh.
    pub fn for_alpha(alpha: f64) -> Self {
        let (elements_per_period, layer_elements) = if alpha >= 1.25 {
            (8, 8)
        } else {
            (16, 16)
        };
        MeshRule { elements_per_period, layer_elements }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PullbackMap {
    Shear,
    Layer,
}

#[derive(Clone, Debug)]
pub struct EpsProblem<T> {
    pub profile: OscillationProfile<T>,
    pub params: PerturbationParams<T>,
    pub elements_per_period: usize,
    pub vertical: Mesh1D<T>,
    pub quadrature: usize,
    pub map: PullbackMap,
}

/// Vertical mesh: `LAYER_ELEMENTS` uniform elements on `(-ε, 0)`, graded
/// growth below until the bulk size, at least `MIN_VERTICAL_ELEMENTS` in all.
/// The node at `-ε` keeps the kink of the layer map off Gauss points.
pub fn eps_vertical_mesh<T: Real>(epsilon: T) -> Result<Mesh1D<T>> {
    eps_vertical_mesh_with(epsilon, LAYER_ELEMENTS)
}

pub fn eps_vertical_mesh_with<T: Real>(epsilon: T, layer_elements: usize) -> Result<Mesh1D<T>> {
    if layer_elements == 0 {
        return Err(Error::InvalidInput("the layer needs at least one element".into()));
    }
    let bulk = T::lit(BULK_SIZE);
    if !(epsilon > T::zero() && epsilon < T::one()) {
        return Err(Error::InvalidInput(format!("epsilon {epsilon} not in (0, 1)")));
    }
    let h_top = epsilon / T::from_usize(layer_elements);
    let lower = Mesh1D::graded_toward_top(
        -T::one(),
        -epsilon,
        h_top.min(bulk),
        bulk.max(h_top),
        T::lit(GRADING_RATIO),
        MIN_VERTICAL_ELEMENTS.saturating_sub(layer_elements),
    )?;
    let mut nodes = lower.nodes().to_vec();
    for i in 1..=layer_elements {
        nodes.push(-epsilon + h_top * T::from_usize(i));
    }
    let last = nodes.len() - 1;
    nodes[last] = T::zero();
    Mesh1D::from_nodes(nodes)
}

impl<T: Real> EpsProblem<T> {
    /// Problem with the default mesh rule.
    pub fn new(profile: OscillationProfile<T>, params: PerturbationParams<T>) -> Result<Self> {
        let vertical = eps_vertical_mesh(params.epsilon())?;
        Self::with_mesh(profile, params, DEFAULT_ELEMENTS_PER_PERIOD, vertical)
    }

    /// Problem on the mesh of a [`MeshRule`].
    pub fn with_rule(profile: OscillationProfile<T>, params: PerturbationParams<T>, rule: MeshRule) -> Result<Self> {
        let vertical = eps_vertical_mesh_with(params.epsilon(), rule.layer_elements)?;
        Self::with_mesh(profile, params, rule.elements_per_period, vertical)
    }

    pub fn with_mesh(
        profile: OscillationProfile<T>,
        params: PerturbationParams<T>,
        elements_per_period: usize,
        vertical: Mesh1D<T>,
    ) -> Result<Self> {
        if profile.dim() != 1 {
            return Err(Error::InvalidInput("the oscillating-domain solver supports N = 2 only".into()));
        }
        if elements_per_period < DEFAULT_ELEMENTS_PER_PERIOD {
            return Err(Error::InvalidInput(format!(
                "at least {DEFAULT_ELEMENTS_PER_PERIOD} elements per period are required"
            )));
        }
        if profile.grid_maximum(64) < T::zero() || profile_min(&profile) < -T::lit(1e-12) {
            return Err(Error::InvalidInput("the profile must be nonnegative".into()));
        }
        Ok(EpsProblem {
            profile,
            params,
            elements_per_period,
            vertical,
            quadrature: DEFAULT_QUADRATURE,
            map: PullbackMap::Layer,
        })
    }

    /// The same problem in another scalar type. Mesh nodes are re-rounded,
    /// except that the layer boundary is recomputed in `U`.
    pub fn cast<U: Real>(&self) -> Result<EpsProblem<U>> {
        let profile = ProfileFile::from_profile(&self.profile).into_profile()?;
        let params = PerturbationParams::new(self.params.denominator(), U::lit(self.params.alpha.to_f64_lossy()))?;
        let d = self.layer_width();
        let layer = params.epsilon();
        let nodes = self
            .vertical
            .nodes()
            .iter()
            .map(|&x| if (x + d).abs() <= d * T::lit(1e-12) { -layer } else { U::lit(x.to_f64_lossy()) })
            .collect();
        Ok(EpsProblem {
            profile,
            params,
            elements_per_period: self.elements_per_period,
            vertical: Mesh1D::from_nodes(nodes)?,
            quadrature: self.quadrature,
            map: self.map,
        })
    }

    pub fn with_map(mut self, map: PullbackMap) -> Self {
        self.map = map;
        self
    }

    /// Width of the deformation layer.
    pub fn layer_width(&self) -> T {
        self.params.epsilon()
    }

    /// Jet of `Ψ_ε` at a reference point.
    pub fn pullback_jet(&self, point: &[T]) -> Result<crate::chain3::MapJet3<T>> {
        match self.map {
            PullbackMap::Shear => eval_pullback(&self.profile, &self.params, point),
            PullbackMap::Layer => eval_layer_pullback(&self.profile, &self.params, point, self.layer_width()),
        }
    }

    pub fn n_tangential(&self) -> usize {
        self.elements_per_period * self.params.denominator() as usize
    }

    pub fn space(&self, bottom: SideBc, top: SideBc) -> Result<TensorElementSpace<T>> {
        TensorElementSpace::periodic_strip(self.n_tangential(), self.vertical.clone(), bottom, top)
    }

    /// Clamped-1 on both horizontal sides.
    pub fn intermediate_space(&self) -> Result<TensorElementSpace<T>> {
        self.space(SideBc::Clamped1, SideBc::Clamped1)
    }

    /// Physical height `Ψ_ε(x̄, t)_N` and `det DΨ_ε`.
    pub fn map_point(&self, x: T, t: T) -> (T, T) {
        let g = eval_g(&self.profile, &self.params, &[x]);
        self.map_with(g, t)
    }

    fn map_with(&self, g: T, t: T) -> (T, T) {
        match self.map {
            PullbackMap::Shear => (t + (t + T::one()) * g, T::one() + g),
            PullbackMap::Layer => {
                let d = self.layer_width();
                if t <= -d {
                    (t, T::one())
                } else {
                    let s = (t + d) / d;
                    (t + g * s.powi(4), T::one() + g * T::lit(4.0) * s.powi(3) / d)
                }
            }
        }
    }

    /// Reference `t` of the physical point `(x̄, x_N)`.
    pub fn inverse_point(&self, x: T, xn: T) -> T {
        let g = eval_g(&self.profile, &self.params, &[x]);
        match self.map {
            PullbackMap::Shear => (xn - g) / (T::one() + g),
            PullbackMap::Layer => {
                if xn <= -self.layer_width() {
                    return xn;
                }
                // t ↦ x_N is convex and increasing on the layer, so Newton
                // from t = 0 decreases monotonically to the root.
                let mut t = T::zero();
                for _ in 0..100 {
                    let (f, df) = self.map_with(g, t);
                    let step = (f - xn) / df;
                    t -= step;
                    if step.abs() <= T::eps() * T::lit(4.0) {
                        break;
                    }
                }
                t
            }
        }
    }

    pub fn area(&self) -> T {
        T::one() + self.params.amplitude() * self.profile.b0()
    }
}

fn profile_min<T: Real>(p: &OscillationProfile<T>) -> T {
    let n = 512;
    (0..n)
        .map(|i| p.eval_complex(&[T::from_usize(i) / T::from_usize(n)], &[0]).re)
        .fold(T::infinity(), T::min)
}

/// Pulled-back energy (output 0) and mass (output 1). Features are the
/// value and the four physical third derivatives.
pub struct PullbackForm<'a, T> {
    pub problem: &'a EpsProblem<T>,
}

pub struct PullbackCtx<T> {
    coeffs: TransformCoeffs<T>,
}

const THIRD_ORDER: [usize; 4] = [6, 7, 8, 9];

impl<T: Real> FeatureForm<T> for PullbackForm<'_, T> {
    type Ctx = PullbackCtx<T>;

    fn n_features(&self) -> usize {
        5
    }

    fn n_outputs(&self) -> usize {
        2
    }

    fn prepare(&self, qp: &QuadPoint<T>) -> Result<PullbackCtx<T>> {
        let forward = self.problem.pullback_jet(qp.point())?;
        let inverse = invert_jet3(&forward)?;
        Ok(PullbackCtx { coeffs: transform_coeffs(&inverse) })
    }

    fn features(&self, ctx: &PullbackCtx<T>, d: &[T], out: &mut [T]) {
        out[0] = d[0];
        for (f, &beta) in THIRD_ORDER.iter().enumerate() {
            out[f + 1] = ctx.coeffs.physical_derivative(beta, &d[..10]);
        }
    }

    fn tangentially_invariant(&self, origin: &[T; 2], sizes: &[T; 2]) -> bool {
        if self.problem.profile.modes().keys().all(|k| k.is_zero()) {
            return true;
        }
        let d = self.problem.layer_width();
        self.problem.map == PullbackMap::Layer && origin[1] + sizes[1] <= -d + d * T::lit(1e-12)
    }

    fn weights(&self, ctx: &PullbackCtx<T>, k: usize, w: &mut [T]) {
        let det = ctx.coeffs.det_j;
        w[0] = det;
        let tab = table(2);
        for (f, &beta) in THIRD_ORDER.iter().enumerate() {
            w[f + 1] = if k == 0 { det * T::lit(multiplicity(&tab.exps[beta]) as f64) } else { T::zero() };
        }
    }
}

/// Stiffness and mass on a space with the given horizontal conditions.
pub fn assemble_eps_on<T: Real>(
    problem: &EpsProblem<T>,
    space: &TensorElementSpace<T>,
) -> Result<(SymmetricSparseMatrix<T>, SymmetricSparseMatrix<T>)> {
    let mut mats = assemble_features_multi(space, problem.quadrature, &PullbackForm { problem })?;
    let m = mats.pop().expect("two outputs");
    let a = mats.pop().expect("two outputs");
    Ok((a, m))
}

/// Stiffness and mass on the intermediate space.
pub fn assemble_eps<T: Real>(
    problem: &EpsProblem<T>,
) -> Result<(TensorElementSpace<T>, SymmetricSparseMatrix<T>, SymmetricSparseMatrix<T>)> {
    let space = problem.intermediate_space()?;
    let (a, m) = assemble_eps_on(problem, &space)?;
    Ok((space, a, m))
}

#[derive(Clone, Debug)]
pub struct EpsEigenResult<T> {
    pub alpha: T,
    pub epsilon: T,
    pub values: Vec<T>,
    /// Free coefficients in reference coordinates, mass-normalized.
    pub vectors: Vec<Vec<T>>,
    pub residuals: Vec<T>,
    pub dof: usize,
    pub quadrature: usize,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
}

/// JSON record of one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsResultFile {
    pub alpha: f64,
    pub eps: f64,
    pub eigs: Vec<f64>,
    pub dof: usize,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
}

impl<T: Real> EpsEigenResult<T> {
    pub fn to_file(&self) -> EpsResultFile {
        EpsResultFile {
            alpha: self.alpha.to_f64_lossy(),
            eps: self.epsilon.to_f64_lossy(),
            eigs: self.values.iter().map(|v| v.to_f64_lossy()).collect(),
            dof: self.dof,
            assembly_seconds: self.assembly_seconds,
            solve_seconds: self.solve_seconds,
        }
    }
}

/// Lowest `count` eigenpairs, assembled and iterated in `T`.
pub fn solve_eps_spectrum<T: Real>(problem: &EpsProblem<T>, count: usize) -> Result<(TensorElementSpace<T>, EpsEigenResult<T>)> {
    if count == 0 || count > MAX_EIGEN_COUNT {
        return Err(Error::InvalidInput(format!("count must be in 1..={MAX_EIGEN_COUNT}")));
    }
    let t0 = Instant::now();
    let (space, a, m) = assemble_eps(problem)?;
    let assembly_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let pairs = solve_smallest_mixed(&EigenRequest::new(&a, &m, count).with_tol(eigen_tol::<T>()))?;
    let solve_seconds = t1.elapsed().as_secs_f64();
    let dof = space.n_free();
    Ok((
        space,
        EpsEigenResult {
            alpha: problem.params.alpha,
            epsilon: problem.params.epsilon(),
            values: pairs.values,
            vectors: pairs.vectors,
            residuals: pairs.residuals,
            dof,
            quadrature: problem.quadrature,
            assembly_seconds,
            solve_seconds,
        },
    ))
}

/// Backward-error target: the default in `f64`, a thousand roundoff units
/// in wider types.
fn eigen_tol<T: Real>() -> T {
    (T::eps() * T::lit(1e3)).max(T::lit(1e-17)).min(T::lit(DEFAULT_TOL))
}

/// [`solve_eps_spectrum`] with the assembly and the eigen-iteration in
/// [`Extended`] precision. The stiffness entries scale like `h⁻⁴`, so in
/// `f64` the fine meshes needed here lose several digits to roundoff.
pub fn solve_eps_spectrum_extended(
    problem: &EpsProblem<f64>,
    count: usize,
) -> Result<(TensorElementSpace<f64>, EpsEigenResult<f64>)> {
    let wide = problem.cast::<Extended>()?;
    let (_, r) = solve_eps_spectrum(&wide, count)?;
    let space = problem.intermediate_space()?;
    let lower = |v: &[Extended]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
    Ok((
        space,
        EpsEigenResult {
            alpha: problem.params.alpha,
            epsilon: problem.params.epsilon(),
            values: lower(&r.values),
            vectors: r.vectors.iter().map(|v| lower(v)).collect(),
            residuals: lower(&r.residuals),
            dof: r.dof,
            quadrature: r.quadrature,
            assembly_seconds: r.assembly_seconds,
            solve_seconds: r.solve_seconds,
        },
    ))
}

/// Galerkin solution of the pulled-back Poisson problem, `f` given in
/// physical coordinates `(x̄, x_N)`.
pub fn solve_eps_poisson<T: Real>(
    problem: &EpsProblem<T>,
    f: impl Fn(T, T) -> T + Sync,
) -> Result<(TensorElementSpace<T>, SymmetricSparseMatrix<T>, Vec<T>, Vec<T>)> {
    let (space, a, _) = assemble_eps(problem)?;
    let rhs = assemble_rhs(&space, problem.quadrature, |qp| {
        let p = qp.point();
        let (xn, det) = problem.map_point(p[0], p[1]);
        f(p[0], xn) * det
    })?;
    let u = solve_linear(&a, &rhs)?;
    Ok((space, a, rhs, u))
}

/// Poisson solution computed in [`Extended`] precision, lowered to `f64`.
#[derive(Clone, Debug)]
pub struct EpsPoisson {
    pub space: TensorElementSpace<f64>,
    pub u: Vec<f64>,
    /// `a(u, u) = ∫ f u`, evaluated before lowering.
    pub energy: f64,
}

pub fn solve_eps_poisson_extended(problem: &EpsProblem<f64>, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<EpsPoisson> {
    let wide = problem.cast::<Extended>()?;
    let (_, _, rhs, u) = solve_eps_poisson(&wide, |x, xn| Extended::lit(f(x.to_f64_lossy(), xn.to_f64_lossy())))?;
    let energy = rhs.iter().zip(&u).fold(Extended::lit(0.0), |s, (r, v)| s + *r * *v);
    Ok(EpsPoisson {
        space: problem.intermediate_space()?,
        u: u.iter().map(|v| v.to_f64_lossy()).collect(),
        energy: energy.to_f64_lossy(),
    })
}

/// A solution on the reference strip, expanded once for fast evaluation.
pub struct ReferenceField<'a, T> {
    space: &'a TensorElementSpace<T>,
    full: Vec<T>,
}

impl<'a, T: Real> ReferenceField<'a, T> {
    pub fn new(space: &'a TensorElementSpace<T>, free: &[T]) -> Result<Self> {
        Ok(ReferenceField { space, full: space.expand(free)? })
    }

    pub fn value(&self, x: T, t: T) -> Result<T> {
        let e = self.space.locate(&[x, t])?;
        self.space.evaluate_in_element(&self.full, e, &[x, t], &[0, 0])
    }
}

/// `L²` discrepancy on `Ω` and the separately reported `L²(Ω_ε ∖ Ω)` norm
/// of the ε-solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Discrepancy {
    pub omega: f64,
    pub sliver: f64,
}

/// `‖u_ε ∘ Ψ_ε⁻¹ - u_lim‖_{L²(Ω)}` with `u_lim(x̄, x_N)` given on `Ω`.
/// With `align`, both sides are normalized in `L²(Ω)` and the sign of the
/// ε-side is matched first (for eigenfunctions).
pub fn compare_to_limit<T: Real>(
    problem: &EpsProblem<T>,
    space: &TensorElementSpace<T>,
    u_eps: &[T],
    u_lim: impl Fn(T, T) -> Result<T>,
    align: bool,
) -> Result<Discrepancy> {
    if space.n_free() != u_eps.len() {
        return Err(Error::DimensionMismatch { expected: space.n_free(), got: u_eps.len() });
    }
    let field = ReferenceField::new(space, u_eps)?;
    let rule = GaussRule::<T>::new(problem.quadrature);
    let tang = space.tangential().ok_or_else(|| Error::InvalidInput("expected a strip space".into()))?;
    let vert = space.vertical();
    let (mut ee, mut ll, mut el) = (T::zero(), T::zero(), T::zero());
    let mut sliver = T::zero();
    for ex in 0..tang.n_elements() {
        let (x0, hx) = tang.element(ex);
        for (&sx, &wx) in rule.nodes.iter().zip(&rule.weights) {
            let x = x0 + hx * sx;
            for et in 0..vert.n_elements() {
                let (t0, ht) = vert.element(et);
                for (&st, &wt) in rule.nodes.iter().zip(&rule.weights) {
                    let xn = t0 + ht * st;
                    let w = wx * wt * hx * ht;
                    let ue = field.value(x, problem.inverse_point(x, xn))?;
                    let ul = u_lim(x, xn)?;
                    ee += w * ue * ue;
                    ll += w * ul * ul;
                    el += w * ue * ul;
                }
            }
            // sliver 0 < x_N < g(x̄), integrated in the reference variable
            // piece by piece over the vertical elements it meets
            let g = eval_g(&problem.profile, &problem.params, &[x]);
            if g > T::zero() {
                let t_lo = problem.inverse_point(x, T::zero());
                for et in 0..vert.n_elements() {
                    let (t0, ht) = vert.element(et);
                    let a = t0.max(t_lo);
                    let b = (t0 + ht).min(T::zero());
                    if !(b > a) {
                        continue;
                    }
                    for (&st, &wt) in rule.nodes.iter().zip(&rule.weights) {
                        let t = a + (b - a) * st;
                        let ue = field.value(x, t)?;
                        let det = problem.map_with(g, t).1;
                        sliver += wx * hx * wt * (b - a) * det * ue * ue;
                    }
                }
            }
        }
    }
    let (d2, s2) = if align {
        let ne = ee.sqrt();
        let nl = ll.sqrt();
        if ne == T::zero() || nl == T::zero() {
            return Err(Error::InvalidInput("cannot align a zero function".into()));
        }
        let cos = el / (ne * nl);
        let d2 = T::lit(2.0) * (T::one() - cos.abs());
        (d2.max(T::zero()), sliver / ee)
    } else {
        ((ee - T::lit(2.0) * el + ll).max(T::zero()), sliver)
    };
    Ok(Discrepancy { omega: d2.sqrt().to_f64_lossy(), sliver: s2.sqrt().to_f64_lossy() })
}
