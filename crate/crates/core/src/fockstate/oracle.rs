//! Brute-force reference: every circuit element is turned into its quadratic
//! Hamiltonian, exponentiated on a Fock space truncated at a total photon
//! number and applied to the input state vector by vector. Slow, but shares
//! no algebra with `genfun`.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use super::{fock_dim, multi_index, FockDensityMatrix, TraceMeaning};

use crate::bogoliubov::{BogoliubovMap, Circuit};
use crate::error::{Error, Result};
use crate::genfun::{ModeRole, Projector};

/// Largest weight tolerated on the top truncated level.
pub const ORACLE_LEAK_TOL: f64 = 1e-6;

pub struct OracleInput<'a> {
    pub state: &'a FockDensityMatrix,
    /// Circuit modes carrying the input; all others start in vacuum.
    pub modes: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct OracleOutput {
    /// Event-weighted state of the output modes, `None` if nothing is kept.
    pub state: Option<FockDensityMatrix>,
    pub probability: f64,
    /// Weight in the top two total-photon levels of the truncated space.
    /// Two levels, because squeezers only populate every other one.
    pub leak: f64,
}

/// One normal-ordered quadratic term `coef * op1 * op2`; `(mode, raise)`.
#[derive(Debug, Clone, Copy)]
struct Term {
    coef: C64,
    ops: [(usize, bool); 2],
}

/// Conditional output state of `circuit` for the detection pattern `roles`.
///
/// `oracle_cutoff` bounds the total photon number of the whole system; the
/// caller must leave headroom above the physical content. Output modes are
/// reported up to `output_cutoff` photons each.
pub fn oracle_apply(
    circuit: &Circuit,
    roles: &[ModeRole],
    input: Option<OracleInput<'_>>,
    output_cutoff: usize,
    oracle_cutoff: usize,
) -> Result<OracleOutput> {
    let n = circuit.mode_count;
    if roles.len() != n {
        return Err(Error::DimensionMismatch(format!("{} roles for {n} modes", roles.len())));
    }
    let space = Space::new(n, oracle_cutoff);

    // Input support as (full-space index, row in the input matrix).
    let (support, rho_in) = match &input {
        Some(inp) => {
            if inp.modes.len() != inp.state.mode_count() {
                return Err(Error::DimensionMismatch("input modes vs state".into()));
            }
            let mut support = Vec::new();
            for k in 0..inp.state.dim() {
                if inp.state.elements().row(k).iter().all(|z| z.norm() == 0.0) {
                    continue;
                }
                let occ = multi_index(k, inp.state.mode_count(), inp.state.cutoff());
                let mut full = vec![0; n];
                for (slot, &m) in inp.modes.iter().enumerate() {
                    if m >= n {
                        return Err(Error::InvalidMode { index: m, mode_count: n });
                    }
                    full[m] = occ[slot];
                }
                let idx = space.index(&full).ok_or_else(|| {
                    Error::InvalidParameter("input photon number exceeds the oracle cutoff".into())
                })?;
                support.push((idx, k));
            }
            (support, inp.state.elements().clone())
        }
        None => (vec![(0, 0)], DMatrix::from_element(1, 1, C64::new(1.0, 0.0))),
    };

    let mut generators = Vec::new();
    for element in &circuit.elements {
        let modes = element.modes();
        let full = element.to_map(n)?;
        let local = restrict(&full, &modes);
        for h in generator_terms(&local)? {
            let terms: Vec<Term> = h
                .into_iter()
                .map(|t| Term {
                    coef: t.coef,
                    ops: [(modes[t.ops[0].0], t.ops[0].1), (modes[t.ops[1].0], t.ops[1].1)],
                })
                .collect();
            generators.push(terms);
        }
    }

    let states: Vec<Vec<C64>> = support
        .iter()
        .map(|&(idx, _)| {
            let mut psi = vec![C64::new(0.0, 0.0); space.dim];
            psi[idx] = C64::new(1.0, 0.0);
            for g in &generators {
                psi = space.expm_minus_i(g, &psi);
            }
            psi
        })
        .collect();

    let weight = |k: usize, l: usize| rho_in[(support[k].1, support[l].1)];

    let top: Vec<usize> = (0..space.dim)
        .filter(|&x| space.occ[x].iter().sum::<usize>() + 1 >= oracle_cutoff)
        .collect();
    let mut leak = 0.0;
    for k in 0..states.len() {
        for l in 0..states.len() {
            let overlap: C64 = top
                .iter()
                .map(|&x| states[l][x].conj() * states[k][x])
                .sum();
            leak += (weight(k, l) * overlap).re;
        }
    }
    if leak > ORACLE_LEAK_TOL {
        return Err(Error::TruncationLeak { leak, tolerance: ORACLE_LEAK_TOL });
    }

    let outputs: Vec<usize> = (0..n).filter(|&m| roles[m] == ModeRole::Output).collect();
    let measured: Vec<usize> = (0..n).filter(|&m| roles[m] != ModeRole::Output).collect();
    let d_out = fock_dim(outputs.len(), output_cutoff);
    let d_rest = fock_dim(measured.len(), oracle_cutoff);

    // A_k[out, rest] = amplitude of state k passing the projectors.
    let a: Vec<DMatrix<C64>> = states
        .iter()
        .map(|psi| {
            let mut m = DMatrix::zeros(d_out, d_rest);
            for (x, amp) in psi.iter().enumerate() {
                if amp.norm() == 0.0 {
                    continue;
                }
                let occ = &space.occ[x];
                let passes = measured.iter().all(|&mm| match roles[mm] {
                    ModeRole::Measured(Projector::Dark) => occ[mm] == 0,
                    ModeRole::Measured(Projector::ClickCounting) => occ[mm] == 1,
                    ModeRole::Measured(Projector::ClickNonCounting) => occ[mm] >= 1,
                    _ => true,
                });
                if !passes || outputs.iter().any(|&o| occ[o] > output_cutoff) {
                    continue;
                }
                let oi = outputs.iter().fold(0, |acc, &o| acc * (output_cutoff + 1) + occ[o]);
                let ri = measured.iter().fold(0, |acc, &r| acc * (oracle_cutoff + 1) + occ[r]);
                m[(oi, ri)] = *amp;
            }
            m
        })
        .collect();

    let mut out = DMatrix::<C64>::zeros(d_out, d_out);
    for k in 0..a.len() {
        let mut ck = DMatrix::<C64>::zeros(d_out, d_rest);
        for l in 0..a.len() {
            ck += &a[l] * weight(k, l).conj();
        }
        out += &a[k] * ck.adjoint();
    }
    let probability = out.diagonal().iter().map(|z| z.re).sum();
    let state = if outputs.is_empty() {
        None
    } else {
        Some(FockDensityMatrix::from_computed(
            outputs.len(),
            output_cutoff,
            out,
            TraceMeaning::EventWeighted,
        )?)
    };
    Ok(OracleOutput { state, probability, leak })
}

fn restrict(map: &BogoliubovMap, modes: &[usize]) -> BogoliubovMap {
    let k = modes.len();
    let b = DMatrix::from_fn(k, k, |i, j| map.b()[(modes[i], modes[j])]);
    let c = DMatrix::from_fn(k, k, |i, j| map.c()[(modes[i], modes[j])]);
    BogoliubovMap::from_parts_unchecked(b, c).expect("square blocks")
}

/// Quadratic Hamiltonians `H_1, H_2` (local mode indices) with
/// `U = exp(-i H_2) exp(-i H_1)` implementing `map`.
fn generator_terms(map: &BogoliubovMap) -> Result<Vec<Vec<Term>>> {
    let k = map.mode_count();
    let s = map.to_real();

    // Polar split S = P O with P symmetric positive, O orthogonal symplectic.
    let eig = SymmetricEigen::new(&s * s.transpose());
    let v = &eig.eigenvectors;
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    let diag = |f: &dyn Fn(f64) -> f64| {
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
        v * d * v.transpose()
    };
    let k_p = diag(&|l| 0.5 * l.ln());
    let p_inv = diag(&|l| 1.0 / l.sqrt());
    let o = p_inv * &s;

    let u = DMatrix::from_fn(k, k, |i, j| C64::new(o[(i, j)], o[(k + i, j)]));
    let (q, t) = u.schur().unpack();
    let log_t = DMatrix::from_diagonal(&t.diagonal().map(|z| z.ln()));
    let log_u = &q * log_t * q.adjoint();
    let mut k_o = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            k_o[(i, j)] = log_u[(i, j)].re;
            k_o[(i, k + j)] = -log_u[(i, j)].im;
            k_o[(k + i, j)] = log_u[(i, j)].im;
            k_o[(k + i, k + j)] = log_u[(i, j)].re;
        }
    }
    Ok(vec![hamiltonian_terms(&k_o, k), hamiltonian_terms(&k_p, k)])
}

/// `S = exp(K)` is generated by `H = 1/2 xi^T Hm xi` with `Hm = -J K`; rewritten
/// in ladder operators and normal ordered (constants dropped).
fn hamiltonian_terms(kmat: &DMatrix<f64>, k: usize) -> Vec<Term> {
    let mut j = DMatrix::<f64>::zeros(2 * k, 2 * k);
    for i in 0..k {
        j[(i, k + i)] = 1.0;
        j[(k + i, i)] = -1.0;
    }
    let h = -(j * kmat);
    let hc = h.map(|x| C64::new(x, 0.0));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut tm = DMatrix::<C64>::zeros(2 * k, 2 * k);
    for i in 0..k {
        tm[(i, i)] = C64::new(s, 0.0);
        tm[(i, k + i)] = C64::new(s, 0.0);
        tm[(k + i, i)] = C64::new(0.0, -s);
        tm[(k + i, k + i)] = C64::new(0.0, s);
    }
    let m = tm.transpose() * hc * tm;
    let mut terms = Vec::new();
    let mut push = |coef: C64, ops: [(usize, bool); 2]| {
        if coef.norm() > 1e-15 {
            terms.push(Term { coef, ops });
        }
    };
    for a in 0..k {
        for b in 0..k {
            push(m[(a, b)] * 0.5, [(a, false), (b, false)]);
            push(m[(k + a, k + b)] * 0.5, [(a, true), (b, true)]);
            push(m[(k + a, b)], [(a, true), (b, false)]);
        }
    }
    terms
}

/// Fock states of `mode_count` modes with at most `cutoff` photons in total.
struct Space {
    cutoff: usize,
    mode_count: usize,
    dim: usize,
    occ: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
    /// `neighbours[x * 2N + 2m + raise]`: index after lowering or raising mode `m`.
    neighbours: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl Space {
    fn new(mode_count: usize, cutoff: usize) -> Self {
        let mut occ = Vec::new();
        let mut current = vec![0; mode_count];
        enumerate(&mut current, 0, cutoff, &mut occ);
        let lookup: HashMap<Vec<usize>, usize> =
            occ.iter().enumerate().map(|(i, o)| (o.clone(), i)).collect();
        let mut neighbours = vec![NONE; occ.len() * 2 * mode_count];
        for (x, o) in occ.iter().enumerate() {
            for m in 0..mode_count {
                let mut v = o.clone();
                if v[m] > 0 {
                    v[m] -= 1;
                    neighbours[x * 2 * mode_count + 2 * m] = lookup[&v] as u32;
                    v[m] += 1;
                }
                v[m] += 1;
                if let Some(&y) = lookup.get(&v) {
                    neighbours[x * 2 * mode_count + 2 * m + 1] = y as u32;
                }
            }
        }
        Self { cutoff, mode_count, dim: occ.len(), occ, lookup, neighbours }
    }

    fn index(&self, occ: &[usize]) -> Option<usize> {
        self.lookup.get(occ).copied()
    }

    fn step(&self, x: usize, mode: usize, raise: bool) -> Option<(usize, f64)> {
        let y = self.neighbours[x * 2 * self.mode_count + 2 * mode + raise as usize];
        if y == NONE {
            return None;
        }
        let n = self.occ[x][mode];
        let factor = if raise { n + 1 } else { n } as f64;
        Some((y as usize, factor))
    }

    /// `out += H psi` on the truncated space.
    fn apply(&self, terms: &[Term], psi: &[C64], out: &mut [C64]) {
        for (x, amp) in psi.iter().enumerate() {
            if amp.re == 0.0 && amp.im == 0.0 {
                continue;
            }
            for t in terms {
                // Rightmost operator acts first.
                let Some((y, f1)) = self.step(x, t.ops[1].0, t.ops[1].1) else { continue };
                let Some((z, f0)) = self.step(y, t.ops[0].0, t.ops[0].1) else { continue };
                out[z] += t.coef * (f0 * f1).sqrt() * amp;
            }
        }
    }

    /// `exp(-i H) psi` by a scaled Taylor series.
    fn expm_minus_i(&self, terms: &[Term], psi: &[C64]) -> Vec<C64> {
        let bound: f64 = terms.iter().map(|t| t.coef.norm()).sum::<f64>() * (self.cutoff + 1) as f64;
        // Steps of norm <= 4 keep the Taylor sum free of cancellation.
        let steps = (bound / 4.0).ceil().max(1.0) as usize;
        let dt = C64::new(0.0, -1.0 / steps as f64);
        let mut state = psi.to_vec();
        for _ in 0..steps {
            let mut sum = state.clone();
            let mut term = state.clone();
            for order in 1..80 {
                let mut next = vec![C64::new(0.0, 0.0); self.dim];
                self.apply(terms, &term, &mut next);
                let scale = dt / order as f64;
                let mut norm = 0.0;
                for (t, v) in term.iter_mut().zip(&next) {
                    *t = v * scale;
                    norm += t.norm_sqr();
                }
                for (s, t) in sum.iter_mut().zip(&term) {
                    *s += t;
                }
                if norm.sqrt() < 1e-17 {
                    break;
                }
            }
            state = sum;
        }
        state
    }
}

fn enumerate(current: &mut Vec<usize>, mode: usize, left: usize, out: &mut Vec<Vec<usize>>) {
    if mode == current.len() {
        out.push(current.clone());
        return;
    }
    for n in 0..=left {
        current[mode] = n;
        enumerate(current, mode + 1, left - n, out);
    }
    current[mode] = 0;
}
