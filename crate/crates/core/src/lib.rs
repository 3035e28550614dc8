//! Numerical laboratory for boundary homogenization of the triharmonic
//! operator `-Δ³ + I` with intermediate boundary conditions on domains
//! whose top boundary oscillates as `x_N = ε^α b(x̄/ε)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`chain3`]: order-3 jets, inverse-map jets, Faà di Bruno transforms.
//! * [`profile`]: the oscillation profile `b`, the perturbation `g_ε`, the
//!   transition function `h_ε` and the solver's pullback map `Ψ_ε`.
//! * [`cell`]: the semi-analytic strip cell problem and the strange-term
//!   coefficient `K` by three routes.
//! * [`hermite`]: C² quintic Hermite elements, tensor spaces, assembly.
//! * [`numerics`]: envelope LDLᵀ, dense symmetric eigensolvers and the
//!   shift-invert block iteration.
//! * [`limit1d`]: the three limit problems via Fourier-mode reduction.
//! * [`epsdomain`]: the direct solver on the oscillating domain.
//! * [`sweep`]: experiment orchestration, verification suites, file I/O.
//!
//! Everything numerical is generic over [`Real`]; the `f64` aliases at the
//! crate root are what the command-line driver uses.

pub mod cell;
pub mod chain3;
pub mod epsdomain;
mod error;
pub mod hermite;
pub mod limit1d;
pub mod numerics;
pub mod profile;
pub mod quadrature;
pub mod sweep;

pub use error::{Error, Result};

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, NumAssign};

/// Floating-point scalar the numerical kernels are generic over.
pub trait Real:
    Float + FloatConst + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("literal representable")
    }

    #[inline]
    fn from_usize(n: usize) -> Self {
        <Self as num_traits::NumCast>::from(n).expect("integer representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Unit roundoff gap at one.
    #[inline]
    fn eps() -> Self {
        Self::epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Scalar of the ill-conditioned assemblies (about 32 significant digits).
pub type Extended = twofloat::TwoFloat;

/// Double-double arithmetic; its `Float::epsilon` is the smallest normal
/// number, so the roundoff gap is supplied here.
impl Real for twofloat::TwoFloat {
    #[inline]
    fn eps() -> Self {
        twofloat::TwoFloat::from(2.0f64.powi(-104))
    }
}

pub type OscillationProfile = profile::OscillationProfile<f64>;
pub type PerturbationParams = profile::PerturbationParams<f64>;
pub type MapJet3 = chain3::MapJet3<f64>;
pub type DerivativeJet3 = chain3::Jet3<f64>;
pub type TransformCoeffs = chain3::TransformCoeffs<f64>;
pub type CellSolution = cell::CellSolution<f64>;
pub type KReport = cell::KReport;
pub type TensorElementSpace = hermite::TensorElementSpace<f64>;
pub type SymmetricSparseMatrix = hermite::SymmetricSparseMatrix<f64>;
pub type LimitBc = limit1d::LimitBc<f64>;
pub type LimitSpectrum = limit1d::LimitSpectrum<f64>;
pub type EpsProblem = epsdomain::EpsProblem<f64>;
pub type EpsEigenResult = epsdomain::EpsEigenResult<f64>;
