//! Bogoliubov transformations of bosonic mode operators.
//!
//! A map is stored in the Heisenberg picture, `a' = B a + C a^†`, where `a` is
//! the column of annihilation operators. Maps compose as the block product of
//! their symplectic matrices `[[B, C], [conj C, conj B]]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Tolerance on `B B^† - C C^† = I` and on the symmetry of `B C^T`.
pub const SYMPLECTIC_TOL: f64 = 1e-10;
/// Looser bound accepted after composition of many maps.
pub const COMPOSE_TOL: f64 = 1e-8;
/// Tolerance on the five-coefficient memory normalisation.
pub const MEMORY_TOL: f64 = 1e-10;
/// Bound accepted from user-supplied memory coefficients.
pub const MEMORY_INPUT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovMap {
    b: DMatrix<C64>,
    c: DMatrix<C64>,
}

impl BogoliubovMap {
    pub fn identity(mode_count: usize) -> Self {
        Self {
            b: DMatrix::identity(mode_count, mode_count),
            c: DMatrix::zeros(mode_count, mode_count),
        }
    }

    /// Builds a map and checks the symplectic invariants.
    pub fn new(b: DMatrix<C64>, c: DMatrix<C64>) -> Result<Self> {
        let map = Self::from_parts_unchecked(b, c)?;
        let deviation = map.symplectic_deviation();
        if deviation > SYMPLECTIC_TOL {
            return Err(Error::NotSymplectic { deviation, tolerance: SYMPLECTIC_TOL });
        }
        Ok(map)
    }

    pub(crate) fn from_parts_unchecked(b: DMatrix<C64>, c: DMatrix<C64>) -> Result<Self> {
        if !b.is_square() || b.shape() != c.shape() {
            return Err(Error::DimensionMismatch(format!(
                "B is {:?}, C is {:?}",
                b.shape(),
                c.shape()
            )));
        }
        Ok(Self { b, c })
    }

    pub fn mode_count(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &DMatrix<C64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<C64> {
        &self.c
    }

    /// Largest elementwise violation of `B B^† - C C^† = I` and `B C^T = (B C^T)^T`.
    pub fn symplectic_deviation(&self) -> f64 {
        let n = self.mode_count();
        let unit = &self.b * self.b.adjoint() - &self.c * self.c.adjoint() - DMatrix::identity(n, n);
        let bct = &self.b * self.c.transpose();
        let asym = &bct - bct.transpose();
        max_abs(&unit).max(max_abs(&asym))
    }

    /// `U_second U_first`: apply `first`, then `second`.
    pub fn compose(first: &Self, second: &Self) -> Result<Self> {
        if first.mode_count() != second.mode_count() {
            return Err(Error::DimensionMismatch(format!(
                "composing {}-mode and {}-mode maps",
                first.mode_count(),
                second.mode_count()
            )));
        }
        let b = &second.b * &first.b + &second.c * first.c.map(|z| z.conj());
        let c = &second.b * &first.c + &second.c * first.b.map(|z| z.conj());
        let map = Self { b, c };
        let deviation = map.symplectic_deviation();
        if deviation > COMPOSE_TOL {
            return Err(Error::NotSymplectic { deviation, tolerance: COMPOSE_TOL });
        }
        Ok(map)
    }

    pub fn inverse(&self) -> Self {
        Self { b: self.b.adjoint(), c: -self.c.transpose() }
    }

    /// Places a `k`-mode map on the listed modes of an `n`-mode system.
    pub fn embed(&self, modes: &[usize], mode_count: usize) -> Result<Self> {
        if modes.len() != self.mode_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} target modes for a {}-mode map",
                modes.len(),
                self.mode_count()
            )));
        }
        check_distinct(modes, mode_count)?;
        let mut out = Self::identity(mode_count);
        for (i, &mi) in modes.iter().enumerate() {
            out.b[(mi, mi)] = C64::new(0.0, 0.0);
            for (j, &mj) in modes.iter().enumerate() {
                out.b[(mi, mj)] = self.b[(i, j)];
                out.c[(mi, mj)] = self.c[(i, j)];
            }
        }
        Ok(out)
    }

    /// Real symplectic matrix acting on `(x_1..x_n, p_1..p_n)` with `a = (x + i p)/sqrt 2`.
    pub fn to_real(&self) -> DMatrix<f64> {
        let n = self.mode_count();
        let plus = &self.b + &self.c;
        let minus = &self.b - &self.c;
        let mut s = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = plus[(i, j)].re;
                s[(i, n + j)] = -minus[(i, j)].im;
                s[(n + i, j)] = plus[(i, j)].im;
                s[(n + i, n + j)] = minus[(i, j)].re;
            }
        }
        s
    }

    pub fn from_real(s: &DMatrix<f64>) -> Result<Self> {
        if !s.is_square() || s.nrows() % 2 != 0 {
            return Err(Error::DimensionMismatch(format!("real symplectic {:?}", s.shape())));
        }
        let n = s.nrows() / 2;
        let mut b = DMatrix::zeros(n, n);
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let (xx, xp, px, pp) = (s[(i, j)], s[(i, n + j)], s[(n + i, j)], s[(n + i, n + j)]);
                b[(i, j)] = C64::new(0.5 * (xx + pp), 0.5 * (px - xp));
                c[(i, j)] = C64::new(0.5 * (xx - pp), 0.5 * (px + xp));
            }
        }
        Self::new(b, c)
    }

    /// Completes a single output row `a'_0 = b . a + c . a^†` to a full
    /// symplectic map by symplectic Gram-Schmidt over the standard basis.
    /// The remaining rows are an arbitrary valid completion.
    pub fn complete_row(b_row: &[C64], c_row: &[C64]) -> Result<Self> {
        let n = b_row.len();
        if c_row.len() != n || n == 0 {
            return Err(Error::DimensionMismatch("row length".into()));
        }
        let norm: f64 = b_row.iter().map(|z| z.norm_sqr()).sum::<f64>()
            - c_row.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if (norm - 1.0).abs() > MEMORY_INPUT_TOL {
            return Err(Error::MemoryNormalization(norm - 1.0));
        }
        // Row of x'_0 and p'_0 in quadrature coordinates.
        let mut e0 = DVector::zeros(2 * n);
        let mut f0 = DVector::zeros(2 * n);
        for j in 0..n {
            let plus = b_row[j] + c_row[j];
            let minus = b_row[j] - c_row[j];
            e0[j] = plus.re;
            e0[n + j] = -minus.im;
            f0[j] = plus.im;
            f0[n + j] = minus.re;
        }
        let scale = symplectic_form(&e0, &f0);
        f0 /= scale;

        let mut pairs: Vec<(DVector<f64>, DVector<f64>)> = vec![(e0, f0)];
        while pairs.len() < n {
            let candidates: Vec<DVector<f64>> = (0..2 * n)
                .map(|k| {
                    let mut v = DVector::zeros(2 * n);
                    v[k] = 1.0;
                    project_out(v, &pairs)
                })
                .collect();
            let e_idx = argmax(candidates.iter().map(|v| v.norm()));
            let e = &candidates[e_idx] / candidates[e_idx].norm();
            let w_idx = argmax(candidates.iter().map(|w| symplectic_form(&e, w).abs()));
            let omega = symplectic_form(&e, &candidates[w_idx]);
            if omega.abs() < 1e-12 {
                return Err(Error::IllConditioned(f64::INFINITY));
            }
            let f = &candidates[w_idx] / omega;
            pairs.push((e, f));
        }

        let mut s = DMatrix::zeros(2 * n, 2 * n);
        for (k, (e, f)) in pairs.iter().enumerate() {
            s.row_mut(k).copy_from(&e.transpose());
            s.row_mut(n + k).copy_from(&f.transpose());
        }
        Self::from_real(&s)
    }

    // Elementary optical elements on an n-mode system.

    /// `a_i' = sqrt(T) a_i + sqrt(1-T) a_j`, `a_j' = -sqrt(1-T) a_i + sqrt(T) a_j`.
    pub fn beam_splitter(mode_count: usize, i: usize, j: usize, transmittivity: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&transmittivity) {
            return Err(Error::InvalidParameter(format!("transmittivity {transmittivity}")));
        }
        let t = transmittivity.sqrt();
        let r = (1.0 - transmittivity).sqrt();
        let b = DMatrix::from_row_slice(2, 2, &[re(t), re(r), re(-r), re(t)]);
        Self::from_parts_unchecked(b, DMatrix::zeros(2, 2))?.embed(&[i, j], mode_count)
    }

    pub fn phase_shift(mode_count: usize, i: usize, angle: f64) -> Result<Self> {
        let b = DMatrix::from_element(1, 1, C64::from_polar(1.0, angle));
        Self::from_parts_unchecked(b, DMatrix::zeros(1, 1))?.embed(&[i], mode_count)
    }

    /// `a' = cosh r a + sinh r a^†`.
    pub fn one_mode_squeeze(mode_count: usize, i: usize, r: f64) -> Result<Self> {
        let b = DMatrix::from_element(1, 1, re(r.cosh()));
        let c = DMatrix::from_element(1, 1, re(r.sinh()));
        Self::from_parts_unchecked(b, c)?.embed(&[i], mode_count)
    }

    /// `a_i' = cosh r a_i + sinh r a_j^†` and symmetrically; vacuum goes to
    /// `sum_k tanh^k r |k,k> / cosh r`.
    pub fn two_mode_squeeze(mode_count: usize, i: usize, j: usize, r: f64) -> Result<Self> {
        let (ch, sh) = (re(r.cosh()), re(r.sinh()));
        let zero = re(0.0);
        let b = DMatrix::from_row_slice(2, 2, &[ch, zero, zero, ch]);
        let c = DMatrix::from_row_slice(2, 2, &[zero, sh, sh, zero]);
        Self::from_parts_unchecked(b, c)?.embed(&[i, j], mode_count)
    }
}

/// Five-coefficient memory map
/// `a_1' = b1 a_1 + c1 a_1^† + b2 a_2 + c2 a_2^† + c3 a_3^†`
/// with `b1, b2, c1, c3` real and `b2, c3 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedMemory {
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: C64,
    pub c3: f64,
}

impl ReducedMemory {
    pub fn new(b1: f64, b2: f64, c1: f64, c2: C64, c3: f64) -> Result<Self> {
        let mem = Self { b1, b2, c1, c2, c3 };
        mem.validate(MEMORY_INPUT_TOL)?;
        Ok(mem)
    }

    pub fn ideal() -> Self {
        Self { b1: 1.0, b2: 0.0, c1: 0.0, c2: re(0.0), c3: 0.0 }
    }

    /// `b1^2 + b2^2 - c1^2 - |c2|^2 - c3^2 - 1`.
    pub fn normalization_residual(&self) -> f64 {
        self.b1 * self.b1 + self.b2 * self.b2
            - self.c1 * self.c1
            - self.c2.norm_sqr()
            - self.c3 * self.c3
            - 1.0
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let finite = [self.b1, self.b2, self.c1, self.c2.re, self.c2.im, self.c3]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite memory coefficient".into()));
        }
        if self.b2 < 0.0 || self.c3 < 0.0 {
            return Err(Error::InvalidParameter("b2 and c3 must be non-negative".into()));
        }
        let residual = self.normalization_residual();
        if residual.abs() > tol {
            return Err(Error::MemoryNormalization(residual));
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        *self == Self::ideal()
    }

    /// True when no creation operators appear (a pure loss up to phase).
    pub fn is_passive(&self) -> bool {
        self.c1 == 0.0 && self.c2 == re(0.0) && self.c3 == 0.0
    }

    /// Output row over `(input, aux2, aux3)`; `input_phase` rotates the input mode.
    pub fn row(&self, input_phase: f64) -> ([C64; 3], [C64; 3]) {
        let phase = C64::from_polar(1.0, input_phase);
        (
            [phase * self.b1, re(self.b2), re(0.0)],
            [phase.conj() * self.c1, self.c2, re(self.c3)],
        )
    }

    /// Three-mode unitary completion acting on `(input, aux2, aux3)`.
    pub fn to_map(&self, input_phase: f64) -> Result<BogoliubovMap> {
        let (b, c) = self.row(input_phase);
        BogoliubovMap::complete_row(&b, &c)
    }
}

/// Mode reduction of `a' = b1 a_1 + c1 a_1^† + sum_i (bt_i a_i + ct_i a_i^†)`.
pub fn reduce_memory(b1: f64, c1: f64, b_tilde: &[C64], c_tilde: &[C64]) -> Result<ReducedMemory> {
    if b_tilde.len() != c_tilde.len() {
        return Err(Error::DimensionMismatch("b~ and c~ lengths differ".into()));
    }
    let b2 = b_tilde.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let c_norm_sq: f64 = c_tilde.iter().map(|z| z.norm_sqr()).sum();
    let (c2, c3) = if b2 > 0.0 {
        // a_2 = sum_i (bt_i / b2) a_i, so a_2^† carries conj(bt_i / b2).
        let c2: C64 = b_tilde.iter().zip(c_tilde).map(|(b, c)| c * b / b2).sum();
        let remainder: f64 = b_tilde
            .iter()
            .zip(c_tilde)
            .map(|(b, c)| (c - c2 * b.conj() / b2).norm_sqr())
            .sum();
        (c2, remainder.sqrt())
    } else {
        (re(0.0), c_norm_sq.sqrt())
    };
    let mem = ReducedMemory { b1, b2, c1, c2, c3 };
    mem.validate(MEMORY_TOL)?;
    Ok(mem)
}

/// Folds a thermal dark-count source of mean `n_dc` into the memory output,
/// in the limit of a vanishing virtual beam-splitter reflectivity.
pub fn augment_dark_counts(mem: &ReducedMemory, n_dc: f64) -> Result<ReducedMemory> {
    if !(n_dc >= 0.0) || !n_dc.is_finite() {
        return Err(Error::InvalidParameter(format!("mean dark counts {n_dc}")));
    }
    if n_dc == 0.0 {
        return Ok(*mem);
    }
    let b2 = (mem.b2 * mem.b2 + n_dc).sqrt();
    let c2 = mem.c2 * (mem.b2 / b2);
    let c3_sq = mem.c2.norm_sqr() - c2.norm_sqr() + mem.c3 * mem.c3 + n_dc;
    Ok(ReducedMemory { b1: mem.b1, b2, c1: mem.c1, c2, c3: c3_sq.max(0.0).sqrt() })
}

/// A single optical element of a circuit.
#[derive(Debug, Clone, PartialEq)]
pub enum CircuitElement {
    BeamSplitter { modes: (usize, usize), transmittivity: f64 },
    PhaseShift { mode: usize, angle: f64 },
    OneModeSqueeze { mode: usize, r: f64 },
    TwoModeSqueeze { modes: (usize, usize), r: f64 },
    Memory { memory: ReducedMemory, input: usize, aux: (usize, usize), input_phase: f64 },
    General { map: BogoliubovMap, modes: Vec<usize> },
}

impl CircuitElement {
    pub fn to_map(&self, mode_count: usize) -> Result<BogoliubovMap> {
        match self {
            Self::BeamSplitter { modes: (i, j), transmittivity } => {
                BogoliubovMap::beam_splitter(mode_count, *i, *j, *transmittivity)
            }
            Self::PhaseShift { mode, angle } => BogoliubovMap::phase_shift(mode_count, *mode, *angle),
            Self::OneModeSqueeze { mode, r } => BogoliubovMap::one_mode_squeeze(mode_count, *mode, *r),
            Self::TwoModeSqueeze { modes: (i, j), r } => {
                BogoliubovMap::two_mode_squeeze(mode_count, *i, *j, *r)
            }
            Self::Memory { memory, input, aux, input_phase } => {
                memory.to_map(*input_phase)?.embed(&[*input, aux.0, aux.1], mode_count)
            }
            Self::General { map, modes } => map.embed(modes, mode_count),
        }
    }

    pub fn modes(&self) -> Vec<usize> {
        match self {
            Self::BeamSplitter { modes, .. } | Self::TwoModeSqueeze { modes, .. } => {
                vec![modes.0, modes.1]
            }
            Self::PhaseShift { mode, .. } | Self::OneModeSqueeze { mode, .. } => vec![*mode],
            Self::Memory { input, aux, .. } => vec![*input, aux.0, aux.1],
            Self::General { modes, .. } => modes.clone(),
        }
    }
}

/// Loss of probability `p` on `signal`, modelled as a beam splitter to `aux`.
pub fn lossy_channel(p: f64, signal: usize, aux: usize) -> Result<CircuitElement> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("loss probability {p}")));
    }
    Ok(CircuitElement::BeamSplitter { modes: (signal, aux), transmittivity: 1.0 - p })
}

/// Ordered list of elements on a fixed number of modes. Elements act in
/// sequence: the first element is applied to the input state first.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub mode_count: usize,
    pub elements: Vec<CircuitElement>,
}

impl Circuit {
    pub fn new(mode_count: usize) -> Self {
        Self { mode_count, elements: Vec::new() }
    }

    pub fn push(&mut self, element: CircuitElement) -> &mut Self {
        self.elements.push(element);
        self
    }

    pub fn to_map(&self) -> Result<BogoliubovMap> {
        let mut total = BogoliubovMap::identity(self.mode_count);
        for element in &self.elements {
            let map = element.to_map(self.mode_count)?;
            total = BogoliubovMap::compose(&total, &map)?;
        }
        Ok(total)
    }
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn check_distinct(modes: &[usize], mode_count: usize) -> Result<()> {
    for (k, &m) in modes.iter().enumerate() {
        if m >= mode_count {
            return Err(Error::InvalidMode { index: m, mode_count });
        }
        if modes[..k].contains(&m) {
            return Err(Error::InvalidParameter(format!("mode {m} listed twice")));
        }
    }
    Ok(())
}

/// `u^T J v` with `J = [[0, I], [-I, 0]]`.
fn symplectic_form(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let n = u.len() / 2;
    (0..n).map(|k| u[k] * v[n + k] - u[n + k] * v[k]).sum()
}

fn project_out(mut v: DVector<f64>, pairs: &[(DVector<f64>, DVector<f64>)]) -> DVector<f64> {
    for (e, f) in pairs {
        let along_e = symplectic_form(&v, f);
        let along_f = symplectic_form(&v, e);
        v -= e * along_e;
        v += f * along_f;
    }
    v
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    values
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_maps_close(a: &BogoliubovMap, b: &BogoliubovMap, tol: f64) {
        assert!(max_abs(&(a.b() - b.b())) < tol, "B differs");
        assert!(max_abs(&(a.c() - b.c())) < tol, "C differs");
    }

    #[test]
    fn compose_with_identity() {
        let x = BogoliubovMap::two_mode_squeeze(3, 0, 2, 0.3).unwrap();
        let id = BogoliubovMap::identity(3);
        assert_maps_close(&BogoliubovMap::compose(&id, &x).unwrap(), &x, 1e-15);
        assert_maps_close(&BogoliubovMap::compose(&x, &id).unwrap(), &x, 1e-15);
    }

    #[test]
    fn beam_splitter_then_inverse_is_identity() {
        let bs = BogoliubovMap::beam_splitter(2, 0, 1, 0.3).unwrap();
        let back = BogoliubovMap::compose(&bs, &bs.inverse()).unwrap();
        assert_maps_close(&back, &BogoliubovMap::identity(2), 1e-12);
        let sq = BogoliubovMap::one_mode_squeeze(2, 1, 0.7).unwrap();
        let back = BogoliubovMap::compose(&sq, &sq.inverse()).unwrap();
        assert_maps_close(&back, &BogoliubovMap::identity(2), 1e-12);
    }

    #[test]
    fn compose_rejects_mode_mismatch() {
        let a = BogoliubovMap::identity(2);
        let b = BogoliubovMap::identity(3);
        assert!(matches!(BogoliubovMap::compose(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn new_rejects_non_symplectic() {
        let b = DMatrix::from_element(1, 1, re(1.1));
        let c = DMatrix::zeros(1, 1);
        assert!(matches!(BogoliubovMap::new(b, c), Err(Error::NotSymplectic { .. })));
    }

    #[test]
    fn real_form_round_trip() {
        let mut circuit = Circuit::new(3);
        circuit
            .push(CircuitElement::TwoModeSqueeze { modes: (0, 1), r: 0.2 })
            .push(CircuitElement::PhaseShift { mode: 1, angle: 0.4 })
            .push(CircuitElement::BeamSplitter { modes: (1, 2), transmittivity: 0.6 })
            .push(CircuitElement::OneModeSqueeze { mode: 2, r: -0.1 });
        let map = circuit.to_map().unwrap();
        let back = BogoliubovMap::from_real(&map.to_real()).unwrap();
        assert_maps_close(&map, &back, 1e-13);
    }

    #[test]
    fn completion_preserves_row_and_invariants() {
        let mem = ReducedMemory::new(
            1.01,
            0.2,
            0.05,
            C64::new(0.1, 0.03),
            (1.01f64.powi(2) + 0.04 - 0.0025 - 0.0109 - 1.0).sqrt(),
        )
        .unwrap();
        let map = mem.to_map(0.3).unwrap();
        assert!(map.symplectic_deviation() < SYMPLECTIC_TOL);
        let (b, c) = mem.row(0.3);
        for j in 0..3 {
            assert!((map.b()[(0, j)] - b[j]).norm() < 1e-12);
            assert!((map.c()[(0, j)] - c[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn reduce_single_term() {
        let x = C64::new(0.0, -0.3);
        let b1 = (1.0f64 - 0.09).sqrt();
        let mem = reduce_memory(b1, 0.0, &[x, re(0.0)], &[re(0.0), re(0.0)]).unwrap();
        assert_eq!(mem.b2, 0.3);
        assert_eq!(mem.c2, re(0.0));
        assert_eq!(mem.c3, 0.0);
    }

    #[test]
    fn reduce_two_pass_coefficients() {
        // Two-pass memory at kappa = 2.
        let e = (-4.0f64).exp();
        let b1 = e - 1.0;
        let bt = [re(-(-2.0f64).exp() * (1.0 - e).sqrt()), re((-2.0f64).exp())];
        let mem = reduce_memory(b1, 0.0, &bt, &[re(0.0), re(0.0)]).unwrap();
        assert!((mem.b1 - (-0.981684)).abs() < 1e-6);
        assert!((mem.b2 - (e * (2.0 - e)).sqrt()).abs() < 1e-15);
        assert!((mem.b2 - 0.19052).abs() < 1e-5);
        assert!(mem.normalization_residual().abs() < 1e-15);
    }

    #[test]
    fn reduce_preserves_creation_norm() {
        let bt = [C64::new(0.3, 0.1), C64::new(-0.2, 0.0), C64::new(0.0, 0.1)];
        let ct = [C64::new(0.05, 0.02), C64::new(0.0, 0.07), C64::new(-0.03, 0.0)];
        let c_sq: f64 = ct.iter().map(|z| z.norm_sqr()).sum();
        let b_sq: f64 = bt.iter().map(|z| z.norm_sqr()).sum();
        let c1 = 0.01;
        let b1 = (1.0 + c1 * c1 + c_sq - b_sq).sqrt();
        let mem = reduce_memory(b1, c1, &bt, &ct).unwrap();
        assert!((mem.c2.norm_sqr() + mem.c3 * mem.c3 - c_sq).abs() < 1e-15);
    }

    #[test]
    fn reduce_rejects_non_unitary_input() {
        let err = reduce_memory(1.0, 0.0, &[re(0.5)], &[re(0.0)]).unwrap_err();
        assert!(matches!(err, Error::MemoryNormalization(_)));
    }

    #[test]
    fn dark_count_augmentation() {
        let ideal = ReducedMemory::ideal();
        assert_eq!(augment_dark_counts(&ideal, 0.0).unwrap(), ideal);
        let aug = augment_dark_counts(&ideal, 1e-4).unwrap();
        assert_eq!(aug.b1, 1.0);
        assert!((aug.b2 - 1e-2).abs() < 1e-15);
        assert!((aug.c3 - 1e-2).abs() < 1e-15);
        assert_eq!(aug.c2, re(0.0));

        let b2 = 0.1f64;
        let c3 = 0.02f64;
        let b1 = (1.0 + c3 * c3 - b2 * b2).sqrt();
        let mem = ReducedMemory::new(b1, b2, 0.0, re(0.0), c3).unwrap();
        let n = 3e-3;
        let aug = augment_dark_counts(&mem, n).unwrap();
        assert!((aug.b2 - (0.01 + n).sqrt()).abs() < 1e-15);
        assert!((aug.c3 - (c3 * c3 + n).sqrt()).abs() < 1e-15);
        // The augmented row is still a valid Bogoliubov row.
        assert!(aug.normalization_residual().abs() < 1e-14);

        assert!(augment_dark_counts(&mem, -1.0).is_err());
    }

    #[test]
    fn lossy_channel_limits() {
        let id = lossy_channel(0.0, 0, 1).unwrap().to_map(2).unwrap();
        assert_maps_close(&id, &BogoliubovMap::identity(2), 1e-15);
        let swap = lossy_channel(1.0, 0, 1).unwrap().to_map(2).unwrap();
        assert_eq!(swap.b()[(0, 1)], re(1.0));
        assert_eq!(swap.b()[(0, 0)], re(0.0));
        assert!(lossy_channel(1.5, 0, 1).is_err());
        assert!(lossy_channel(-0.1, 0, 1).is_err());
    }

    #[test]
    fn embed_rejects_bad_modes() {
        assert!(BogoliubovMap::beam_splitter(2, 0, 2, 0.5).is_err());
        assert!(BogoliubovMap::beam_splitter(2, 1, 1, 0.5).is_err());
    }
}
