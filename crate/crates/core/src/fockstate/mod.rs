//! Truncated Fock-basis density matrices.
//!
//! Basis states of an `m`-mode system with cutoff `c` are linearised row-major
//! with mode 0 slowest: `|n_0, .., n_{m-1}>` sits at `sum_k n_k (c+1)^(m-1-k)`.

mod oracle;

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub use oracle::{oracle_apply, OracleInput, OracleOutput, ORACLE_LEAK_TOL};

/// Elementwise bound on `|rho - rho^†|`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Computed states with an anti-Hermitian part below this are symmetrised.
pub const HERMITIAN_REPAIR_TOL: f64 = 1e-9;
/// Negative diagonal entries above `-NEGATIVE_CLIP` are roundoff and get clipped.
pub const NEGATIVE_CLIP: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMeaning {
    Normalized,
    /// Trace is the probability of the conditioning event.
    EventWeighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    mode_count: usize,
    cutoff: usize,
    elements: DMatrix<C64>,
    trace_meaning: TraceMeaning,
}

pub fn fock_dim(mode_count: usize, cutoff: usize) -> usize {
    (cutoff + 1).pow(mode_count as u32)
}

/// Per-mode photon numbers of basis state `index`.
pub fn multi_index(index: usize, mode_count: usize, cutoff: usize) -> Vec<usize> {
    let mut out = vec![0; mode_count];
    let mut rest = index;
    for slot in out.iter_mut().rev() {
        *slot = rest % (cutoff + 1);
        rest /= cutoff + 1;
    }
    out
}

pub fn linear_index(occupations: &[usize], cutoff: usize) -> usize {
    occupations.iter().fold(0, |acc, &n| acc * (cutoff + 1) + n)
}

impl FockDensityMatrix {
    /// Validates dimensions, Hermiticity, populations and trace.
    pub fn new(
        mode_count: usize,
        cutoff: usize,
        elements: DMatrix<C64>,
        trace_meaning: TraceMeaning,
    ) -> Result<Self> {
        if mode_count == 0 {
            return Err(Error::DimensionMismatch("density matrix needs at least one mode".into()));
        }
        let dim = fock_dim(mode_count, cutoff);
        if elements.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch(format!(
                "{:?} matrix for {mode_count} modes at cutoff {cutoff}",
                elements.shape()
            )));
        }
        let mut rho = Self { mode_count, cutoff, elements, trace_meaning };
        rho.check_and_clip(HERMITIAN_TOL)?;
        Ok(rho)
    }

    /// Like [`Self::new`] but removes an anti-Hermitian roundoff part first.
    pub fn from_computed(
        mode_count: usize,
        cutoff: usize,
        elements: DMatrix<C64>,
        trace_meaning: TraceMeaning,
    ) -> Result<Self> {
        let deviation = hermitian_deviation(&elements);
        if deviation > HERMITIAN_REPAIR_TOL {
            return Err(Error::InvalidParameter(format!(
                "computed state is not Hermitian (deviation {deviation:e})"
            )));
        }
        let sym = (&elements + elements.adjoint()) * C64::new(0.5, 0.0);
        Self::new(mode_count, cutoff, sym, trace_meaning)
    }

    pub fn vacuum(mode_count: usize, cutoff: usize) -> Result<Self> {
        let dim = fock_dim(mode_count, cutoff);
        let mut m = DMatrix::zeros(dim, dim);
        m[(0, 0)] = C64::new(1.0, 0.0);
        Self::new(mode_count, cutoff, m, TraceMeaning::Normalized)
    }

    /// `|psi><psi|` for a normalised amplitude vector.
    pub fn from_pure(mode_count: usize, cutoff: usize, amplitudes: &[C64]) -> Result<Self> {
        let dim = fock_dim(mode_count, cutoff);
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch(format!("{} amplitudes, dim {dim}", amplitudes.len())));
        }
        let m = DMatrix::from_fn(dim, dim, |i, j| amplitudes[i] * amplitudes[j].conj());
        Self::new(mode_count, cutoff, m, TraceMeaning::Normalized)
    }

    /// `(|0,1> + |1,0>)/sqrt 2`.
    pub fn psi_plus(cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::InvalidParameter("cutoff 0 cannot hold a photon".into()));
        }
        let mut amp = vec![C64::new(0.0, 0.0); fock_dim(2, cutoff)];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        amp[linear_index(&[0, 1], cutoff)] = C64::new(h, 0.0);
        amp[linear_index(&[1, 0], cutoff)] = C64::new(h, 0.0);
        Self::from_pure(2, cutoff, &amp)
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn elements(&self) -> &DMatrix<C64> {
        &self.elements
    }

    pub fn trace_meaning(&self) -> TraceMeaning {
        self.trace_meaning
    }

    /// `<ket| rho |bra>` by per-mode photon numbers.
    pub fn get(&self, ket: &[usize], bra: &[usize]) -> C64 {
        self.elements[(linear_index(ket, self.cutoff), linear_index(bra, self.cutoff))]
    }

    pub fn trace(&self) -> f64 {
        self.elements.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let t = self.trace();
        if !(t > 1e-300) {
            return Err(Error::ZeroProbability(t));
        }
        let mut out = self.clone();
        out.elements /= C64::new(t, 0.0);
        out.trace_meaning = TraceMeaning::Normalized;
        Ok(out)
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.cutoff != other.cutoff {
            return Err(Error::CutoffMismatch(self.cutoff, other.cutoff));
        }
        let meaning = if self.trace_meaning == TraceMeaning::EventWeighted
            || other.trace_meaning == TraceMeaning::EventWeighted
        {
            TraceMeaning::EventWeighted
        } else {
            TraceMeaning::Normalized
        };
        Self::new(
            self.mode_count + other.mode_count,
            self.cutoff,
            self.elements.kronecker(&other.elements),
            meaning,
        )
    }

    /// Traces out `modes`; the remaining modes keep their relative order.
    pub fn partial_trace(&self, modes: &[usize]) -> Result<Self> {
        for &m in modes {
            if m >= self.mode_count {
                return Err(Error::InvalidMode { index: m, mode_count: self.mode_count });
            }
        }
        let keep: Vec<usize> = (0..self.mode_count).filter(|m| !modes.contains(m)).collect();
        if keep.is_empty() {
            return Err(Error::DimensionMismatch(
                "tracing every mode leaves a scalar; use trace()".into(),
            ));
        }
        let c = self.cutoff;
        let out_dim = fock_dim(keep.len(), c);
        let mut out = DMatrix::zeros(out_dim, out_dim);
        let dim = self.dim();
        let occ: Vec<Vec<usize>> = (0..dim).map(|i| multi_index(i, self.mode_count, c)).collect();
        let traced: Vec<usize> = (0..self.mode_count).filter(|m| !keep.contains(m)).collect();
        let reduce = |o: &[usize]| keep.iter().fold(0, |acc, &m| acc * (c + 1) + o[m]);
        for i in 0..dim {
            for j in 0..dim {
                if traced.iter().all(|&m| occ[i][m] == occ[j][m]) {
                    out[(reduce(&occ[i]), reduce(&occ[j]))] += self.elements[(i, j)];
                }
            }
        }
        Self::new(keep.len(), c, out, self.trace_meaning)
    }

    /// Same state embedded at a larger cutoff, or truncated to a smaller one.
    pub fn with_cutoff(&self, cutoff: usize) -> Result<Self> {
        let dim = fock_dim(self.mode_count, cutoff);
        let mut out = DMatrix::zeros(dim, dim);
        for i in 0..self.dim() {
            let oi = multi_index(i, self.mode_count, self.cutoff);
            if oi.iter().any(|&n| n > cutoff) {
                continue;
            }
            for j in 0..self.dim() {
                let oj = multi_index(j, self.mode_count, self.cutoff);
                if oj.iter().any(|&n| n > cutoff) {
                    continue;
                }
                out[(linear_index(&oi, cutoff), linear_index(&oj, cutoff))] = self.elements[(i, j)];
            }
        }
        let meaning = if cutoff < self.cutoff {
            TraceMeaning::EventWeighted
        } else {
            self.trace_meaning
        };
        Self::new(self.mode_count, cutoff, out, meaning)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.elements.shape() != other.elements.shape() {
            return f64::INFINITY;
        }
        (&self.elements - &other.elements).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// One row per matrix row, columns `re_0, im_0, re_1, im_1, ...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# modes={} cutoff={} trace_meaning={:?}",
            self.mode_count, self.cutoff, self.trace_meaning
        )?;
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .flat_map(|j| {
                    let z = self.elements[(i, j)];
                    [format!("{:.16e}", z.re), format!("{:.16e}", z.im)]
                })
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    fn check_and_clip(&mut self, herm_tol: f64) -> Result<()> {
        if self.elements.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite matrix element".into()));
        }
        let deviation = hermitian_deviation(&self.elements);
        if deviation > herm_tol {
            return Err(Error::InvalidParameter(format!("matrix not Hermitian ({deviation:e})")));
        }
        for i in 0..self.dim() {
            let d = self.elements[(i, i)];
            if d.re < -NEGATIVE_CLIP {
                return Err(Error::NegativePopulation(d.re));
            }
            self.elements[(i, i)] = C64::new(d.re.max(0.0), 0.0);
        }
        let t = self.trace();
        match self.trace_meaning {
            TraceMeaning::Normalized if (t - 1.0).abs() > TRACE_TOL => {
                Err(Error::InvalidParameter(format!("normalised state has trace {t}")))
            }
            TraceMeaning::EventWeighted if t > 1.0 + TRACE_TOL => {
                Err(Error::InvalidParameter(format!("event weight {t} exceeds 1")))
            }
            _ => Ok(()),
        }
    }
}

fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}
