//! Concrete memory models in five-coefficient form.

use num_complex::Complex64 as C64;

use crate::bogoliubov::{reduce_memory, ReducedMemory};
use crate::error::{Error, Result};

/// Lowest-order creation amplitude per unit wall reflection, `c3^2 = 0.9 xi`,
/// valid at `kappa = 2` only.
pub const WALL_REFLECTION_FACTOR: f64 = 0.9;

/// Two-pass memory: coupling `kappa` and cell-wall reflection `xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPassParams {
    pub kappa: f64,
    pub xi: f64,
}

/// One-pass memory with feedback: coupling `kappa`, gain `g` and the factor
/// `s` by which the atomic X-quadrature variance is squeezed (`s < 1` is
/// squeezing below vacuum).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnePassParams {
    pub kappa: f64,
    pub g: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MemoryModel {
    Ideal,
    Generic(ReducedMemory),
    TwoPass(TwoPassParams),
    OnePass(OnePassParams),
}

impl MemoryModel {
    pub fn reduce(&self) -> Result<ReducedMemory> {
        match self {
            Self::Ideal => Ok(ideal()),
            Self::Generic(m) => {
                m.validate(crate::bogoliubov::MEMORY_INPUT_TOL)?;
                Ok(*m)
            }
            Self::TwoPass(p) => two_pass(p),
            Self::OnePass(p) => one_pass(p),
        }
    }
}

pub fn ideal() -> ReducedMemory {
    ReducedMemory::ideal()
}

pub fn generic(b1: f64, b2: f64, c1: f64, c2: C64, c3: f64) -> Result<ReducedMemory> {
    ReducedMemory::new(b1, b2, c1, c2, c3)
}

/// Pure single-mode squeezing error: `b1 = sqrt(1 + c1^2)`, everything else zero.
pub fn squeezing_only(c1: f64) -> ReducedMemory {
    ReducedMemory { b1: (1.0 + c1 * c1).sqrt(), b2: 0.0, c1, c2: C64::new(0.0, 0.0), c3: 0.0 }
}

/// `a' = (e^{-k^2} - 1) a_L - e^{-k^2/2} sqrt(1 - e^{-k^2}) a_A + e^{-k^2/2} a_ret`,
/// plus a wall-reflection creation term at `kappa = 2`.
pub fn two_pass(p: &TwoPassParams) -> Result<ReducedMemory> {
    if !(p.kappa > 0.0) || !p.kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa {} must be positive", p.kappa)));
    }
    if !(0.0..1.0).contains(&p.xi) {
        return Err(Error::InvalidParameter(format!("xi {} outside [0, 1)", p.xi)));
    }
    if p.xi > 0.0 && p.kappa != 2.0 {
        return Err(Error::InvalidParameter(
            "wall reflections are only modelled at kappa = 2".into(),
        ));
    }
    let e = (-p.kappa * p.kappa).exp();
    let half = (-p.kappa * p.kappa / 2.0).exp();
    let b1 = e - 1.0;
    let zero = C64::new(0.0, 0.0);
    let b_tilde = [C64::new(-half * (1.0 - e).sqrt(), 0.0), C64::new(half, 0.0)];
    let mut mem = reduce_memory(b1, 0.0, &b_tilde, &[zero, zero])?;
    if p.xi > 0.0 {
        mem.c3 = (WALL_REFLECTION_FACTOR * p.xi).sqrt();
        // Rescale b1 so the row stays normalised; keep its sign.
        let b1_sq = 1.0 + mem.c3 * mem.c3 - mem.b2 * mem.b2;
        mem.b1 = b1.signum() * b1_sq.sqrt();
        mem.validate(crate::bogoliubov::MEMORY_TOL)?;
    }
    Ok(mem)
}

/// `a' = (1 - kg/2) a_A + (kg/2) a_A^† + (k+g)/2 a_L - (k-g)/2 a_L^†`
/// with the atomic mode squeezed, `a_A + a_A^† = sqrt(s) (a_0 + a_0^†)`.
pub fn one_pass(p: &OnePassParams) -> Result<ReducedMemory> {
    if !(p.s > 0.0) || !p.s.is_finite() || !p.kappa.is_finite() || !p.g.is_finite() {
        return Err(Error::InvalidParameter(format!("one-pass parameters {p:?}")));
    }
    let root = p.s.sqrt();
    let mu = 0.5 * (root + 1.0 / root);
    let nu = 0.5 * (root - 1.0 / root);
    let kg = p.kappa * p.g / 2.0;
    let b_tilde = (1.0 - kg) * mu + kg * nu;
    let c_tilde = (1.0 - kg) * nu + kg * mu;
    let b1 = 0.5 * (p.kappa + p.g);
    let c1 = -0.5 * (p.kappa - p.g);
    reduce_memory(b1, c1, &[C64::new(b_tilde, 0.0)], &[C64::new(c_tilde, 0.0)])
}
