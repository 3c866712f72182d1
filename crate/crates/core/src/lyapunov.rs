//! Fidelity Lyapunov function `V(ρ) = tr(Υρ)` with `Υ = I − |ψ⟩⟨ψ|`, its
//! second-order expansion under a displacement, and the Newton choice of α.
//!
//! Under `ρ → D(α)ρD(α)†`,
//! `V(ρ') ≈ V(ρ) + q(α)` with
//! `q(α) = 2Re(αζ*) + Re(α²γ*) − |α|²χ`, where `ζ = tr(Cρ)`, `γ = tr(Gρ)`,
//! `χ = tr(Eρ)`, `C = [a, Υ]`, `G = [a, C]`, `E = [a†, C]`.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation, CavityState, DensityMatrix, FockSpace, Ket, Operator};
use crate::scalar::{from_c64, to_c64, Real, C};

/// Default displacement clamp.
pub const DEFAULT_ALPHA_MAX: f64 = 0.3;

const BOUNDARY_SAMPLES: usize = 720;

#[derive(Debug, Clone)]
pub struct LyapunovContext<T: Real> {
    target: Ket<T>,
    upsilon: Operator<T>,
    c_op: Operator<T>,
    g_op: Operator<T>,
    e_op: Operator<T>,
    alpha_max: f64,
}

pub fn build_context<T: Real>(target: &Ket<T>, space: FockSpace, alpha_max: f64) -> Result<LyapunovContext<T>> {
    space.check(target.dim())?;
    if !(alpha_max > 0.0) || !alpha_max.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha_max = {alpha_max} must be positive")));
    }
    let d = space.dim();
    let upsilon = Operator::from_matrix(
        DMatrix::identity(d, d) - target.projector().into_matrix(),
        true,
    );
    let a = annihilation::<T>(space);
    let c_op = a.commutator(&upsilon);
    let g_op = a.commutator(&c_op);
    let e_op = a.adjoint().commutator(&c_op);
    Ok(LyapunovContext {
        target: target.clone(),
        upsilon,
        c_op,
        g_op,
        e_op,
        alpha_max,
    })
}

/// `(ζ, γ, χ)` for one state. `chi_imag` keeps the discarded imaginary part
/// of `tr(Eρ)` for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoeffs {
    pub zeta: Complex64,
    pub gamma: Complex64,
    pub chi: f64,
    pub chi_imag: f64,
}

impl ExpansionCoeffs {
    /// `T⁽¹⁾(α) = αζ* + α*ζ`.
    pub fn t1(&self, alpha: Complex64) -> f64 {
        2.0 * (alpha * self.zeta.conj()).re
    }

    /// `T⁽²⁾(α) = α²γ* + α*²γ − 2|α|²χ`, left complex so its reality can be
    /// checked.
    pub fn t2(&self, alpha: Complex64) -> Complex64 {
        alpha * alpha * self.gamma.conj() + alpha.conj() * alpha.conj() * self.gamma
            - 2.0 * alpha.norm_sqr() * Complex64::new(self.chi, self.chi_imag)
    }

    /// `q(α) = T⁽¹⁾ + ½T⁽²⁾`.
    pub fn q(&self, alpha: Complex64) -> f64 {
        self.t1(alpha) + (alpha * alpha * self.gamma.conj()).re - alpha.norm_sqr() * self.chi
    }

    /// Real 2×2 matrix of the quadratic part in `(Re α, Im α)`.
    pub fn q_matrix(&self) -> [[f64; 2]; 2] {
        let (g, h) = (self.gamma.re, self.gamma.im);
        [[g - self.chi, h], [h, -(g + self.chi)]]
    }

    /// `λ± = −χ ± |γ|`.
    pub fn q_eigenvalues(&self) -> (f64, f64) {
        let r = self.gamma.norm();
        (-self.chi - r, -self.chi + r)
    }

    pub fn positive_definite(&self) -> bool {
        self.chi < -self.gamma.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NewtonStatus {
    /// Unclamped Newton step.
    Newton,
    /// Newton step rescaled onto `|α| = alpha_max`.
    Clamped,
    /// Quadratic model not positive definite; fallback step taken.
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonStep {
    pub alpha: Complex64,
    pub status: NewtonStatus,
    pub q: f64,
}

impl<T: Real> LyapunovContext<T> {
    pub fn target(&self) -> &Ket<T> {
        &self.target
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    pub fn upsilon(&self) -> &Operator<T> {
        &self.upsilon
    }

    pub fn c_op(&self) -> &Operator<T> {
        &self.c_op
    }

    pub fn g_op(&self) -> &Operator<T> {
        &self.g_op
    }

    pub fn e_op(&self) -> &Operator<T> {
        &self.e_op
    }

    /// Same commutators, different clamp.
    pub fn with_alpha_max(&self, alpha_max: f64) -> Self {
        Self {
            alpha_max,
            ..self.clone()
        }
    }

    pub fn value(&self, state: &CavityState<T>) -> f64 {
        state.expectation(self.upsilon.matrix()).re.as_f64()
    }

    pub fn coeffs(&self, state: &CavityState<T>) -> ExpansionCoeffs {
        let chi = to_c64(state.expectation(self.e_op.matrix()));
        ExpansionCoeffs {
            zeta: to_c64(state.expectation(self.c_op.matrix())),
            gamma: to_c64(state.expectation(self.g_op.matrix())),
            chi: chi.re,
            chi_imag: chi.im,
        }
    }

    pub fn newton(&self, state: &CavityState<T>) -> NewtonStep {
        newton_from_coeffs(&self.coeffs(state), self.alpha_max)
    }
}

/// `V(ρ) = tr(Υρ)`.
pub fn lyapunov_value<T: Real>(ctx: &LyapunovContext<T>, rho: &DensityMatrix<T>) -> f64 {
    ctx.value(&CavityState::Mixed(rho.clone()))
}

pub fn expansion_coeffs<T: Real>(ctx: &LyapunovContext<T>, rho: &DensityMatrix<T>) -> ExpansionCoeffs {
    ctx.coeffs(&CavityState::Mixed(rho.clone()))
}

pub fn newton_alpha<T: Real>(ctx: &LyapunovContext<T>, rho: &DensityMatrix<T>) -> (C<T>, NewtonStatus) {
    let step = ctx.newton(&CavityState::Mixed(rho.clone()));
    (from_c64(step.alpha), step.status)
}

/// Newton step of the quadratic model, clamped radially; when the model is
/// not positive definite, the lower of the best point on `|α| = alpha_max` and
/// an exact line search along `−ζ` (or `α = 0` if neither decreases q).
pub fn newton_from_coeffs(k: &ExpansionCoeffs, alpha_max: f64) -> NewtonStep {
    let zero = Complex64::new(0.0, 0.0);
    if k.positive_definite() {
        let denom = k.chi * k.chi - k.gamma.norm_sqr();
        let alpha = (k.chi * k.zeta + k.gamma * k.zeta.conj()) / denom;
        let r = alpha.norm();
        let (alpha, status) = if r > alpha_max {
            (alpha * (alpha_max / r), NewtonStatus::Clamped)
        } else {
            (alpha, NewtonStatus::Newton)
        };
        return NewtonStep {
            alpha,
            status,
            q: k.q(alpha),
        };
    }

    let mut best = (zero, 0.0);
    let boundary = boundary_minimum(k, alpha_max);
    if boundary.1 < best.1 {
        best = boundary;
    }
    let zn = k.zeta.norm();
    if zn > 0.0 {
        let dir = -k.zeta / zn;
        // q(t·dir) = −2t|ζ| + t²·curv
        let curv = (dir * dir * k.gamma.conj()).re - k.chi;
        let t = if curv > 0.0 { (zn / curv).min(alpha_max) } else { alpha_max };
        let cand = dir * t;
        let q = k.q(cand);
        if q < best.1 {
            best = (cand, q);
        }
    }
    NewtonStep {
        alpha: best.0,
        status: NewtonStatus::Rejected,
        q: best.1,
    }
}

fn boundary_minimum(k: &ExpansionCoeffs, radius: f64) -> (Complex64, f64) {
    let at = |phi: f64| {
        let a = Complex64::from_polar(radius, phi);
        (a, k.q(a))
    };
    let step = TAU / BOUNDARY_SAMPLES as f64;
    let mut best_i = 0;
    let mut best_q = f64::INFINITY;
    for i in 0..BOUNDARY_SAMPLES {
        let q = at(i as f64 * step).1;
        if q < best_q {
            best_q = q;
            best_i = i;
        }
    }
    // golden-section refinement inside the bracketing samples
    let (mut lo, mut hi) = ((best_i as f64 - 1.0) * step, (best_i as f64 + 1.0) * step);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = hi - inv_phi * (hi - lo);
        let m2 = lo + inv_phi * (hi - lo);
        if at(m1).1 < at(m2).1 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let refined = at(0.5 * (lo + hi));
    let sampled = at(best_i as f64 * step);
    if refined.1 <= sampled.1 {
        refined
    } else {
        sampled
    }
}
