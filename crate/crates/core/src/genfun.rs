//! Generating-function engine.
//!
//! For a circuit `U`, input modes and a detection pattern, the function
//!
//! `F(beta, alpha, delta, gamma) = sum <j|Phi(|k><l|)|i> beta^k alpha^l delta^j gamma^i / sqrt(k! l! i! j!)`
//!
//! is a (signed sum of) Gaussian `k exp(v^T Q v / 2 + L^T v)`. Its Taylor
//! coefficients give the transfer tensor between input and conditional
//! output density matrices.
//!
//! The ket side comes from the vacuum kernel
//! `<0| exp(z.a) U exp(beta.a^†) |0> = <0|U|0> exp(z^T X z / 2 + z^T Y beta + beta^T Z beta / 2)`,
//! the bra side is its complex conjugate in fresh variables. Measured modes
//! are then eliminated: dark sets the variables to zero, a counting click
//! keeps them as degree-one variables and a traced mode is summed with the
//! Gaussian identity `sum_n n! [z^n w^n] exp(...)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::bogoliubov::BogoliubovMap;
use crate::error::{Error, Result};
use crate::fockstate::{fock_dim, multi_index, FockDensityMatrix, TraceMeaning};

/// Default cap on the number of series coefficients held at once.
pub const DEFAULT_SERIES_BUDGET: usize = 1 << 23;
/// Largest accepted condition number of a Gaussian integration block.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projector {
    /// `|0><0|`.
    Dark,
    /// `|1><1|`.
    ClickCounting,
    /// `1 - |0><0|`.
    ClickNonCounting,
    /// No measurement; the mode is traced out.
    Traced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeRole {
    Output,
    Measured(Projector),
}

/// One role per circuit mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectorSpec {
    roles: Vec<ModeRole>,
}

impl ProjectorSpec {
    pub fn new(roles: Vec<ModeRole>) -> Self {
        Self { roles }
    }

    /// Every mode traced except the listed outputs.
    pub fn traced_except(mode_count: usize, outputs: &[usize]) -> Self {
        let roles = (0..mode_count)
            .map(|m| {
                if outputs.contains(&m) {
                    ModeRole::Output
                } else {
                    ModeRole::Measured(Projector::Traced)
                }
            })
            .collect();
        Self { roles }
    }

    pub fn set(&mut self, mode: usize, role: ModeRole) -> &mut Self {
        self.roles[mode] = role;
        self
    }

    pub fn roles(&self) -> &[ModeRole] {
        &self.roles
    }

    pub fn output_modes(&self) -> Vec<usize> {
        (0..self.roles.len()).filter(|&m| self.roles[m] == ModeRole::Output).collect()
    }

    fn modes_with(&self, p: Projector) -> Vec<usize> {
        (0..self.roles.len())
            .filter(|&m| self.roles[m] == ModeRole::Measured(p))
            .collect()
    }
}

/// Dummy variable of the generating function; the index is the position in
/// the input, output or click mode list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarTag {
    /// Input ket.
    Beta(usize),
    /// Input bra.
    Alpha(usize),
    /// Output ket.
    Delta(usize),
    /// Output bra.
    Gamma(usize),
    ClickKet(usize),
    ClickBra(usize),
}

/// `prefactor * exp(v^T quad v / 2 + lin^T v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTerm {
    pub prefactor: f64,
    pub quad: DMatrix<C64>,
    pub lin: DVector<C64>,
}

/// Signed sum of Gaussian terms over a shared variable list.
///
/// `quad` is complex symmetric in general: complex circuit coefficients enter
/// through the kernel matrices even though the dummy variables stay real.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGenFun {
    pub variables: Vec<VarTag>,
    pub terms: Vec<GaussianTerm>,
    pub input_modes: Vec<usize>,
    pub output_modes: Vec<usize>,
    pub click_modes: Vec<usize>,
}

impl QuadraticGenFun {
    /// Value at the origin: the event probability on vacuum input.
    pub fn at_zero(&self) -> f64 {
        self.terms.iter().map(|t| t.prefactor).sum()
    }

    /// `k, Q, L` of every term as CSV, for debugging.
    pub fn debug_csv(&self) -> String {
        let mut out = format!("# variables {:?}\n", self.variables);
        for (i, t) in self.terms.iter().enumerate() {
            out += &format!("term,{i},prefactor,{:.16e}\n", t.prefactor);
            for r in 0..t.quad.nrows() {
                let row: Vec<String> = t
                    .quad
                    .row(r)
                    .iter()
                    .map(|z| format!("{:.16e},{:.16e}", z.re, z.im))
                    .collect();
                out += &format!("term,{i},quad,{r},{}\n", row.join(","));
            }
            let lin: Vec<String> =
                t.lin.iter().map(|z| format!("{:.16e},{:.16e}", z.re, z.im)).collect();
            out += &format!("term,{i},lin,{}\n", lin.join(","));
        }
        out
    }
}

/// Builds the generating function of `map` acting on the state held by
/// `input_modes` (other modes in vacuum) and conditioned on `spec`.
///
/// Squeezed inputs are handled by composing the squeezers into `map`.
pub fn build_genfun(
    map: &BogoliubovMap,
    input_modes: &[usize],
    spec: &ProjectorSpec,
) -> Result<QuadraticGenFun> {
    let n = map.mode_count();
    if spec.roles.len() != n {
        return Err(Error::DimensionMismatch(format!("{} roles for {n} modes", spec.roles.len())));
    }
    for (k, &m) in input_modes.iter().enumerate() {
        if m >= n {
            return Err(Error::InvalidMode { index: m, mode_count: n });
        }
        if input_modes[..k].contains(&m) {
            return Err(Error::InvalidParameter(format!("input mode {m} listed twice")));
        }
    }
    let n_in = input_modes.len();
    let (x, y, z) = kernel(map)?;
    let det_b = map.b().clone().determinant().norm();
    let vacuum = 1.0 / det_b;

    // Full variable layout: z (N), w (N), beta (n_in), alpha (n_in).
    let size = 2 * n + 2 * n_in;
    let zi = |m: usize| m;
    let wi = |m: usize| n + m;
    let bi = |i: usize| 2 * n + i;
    let ai = |i: usize| 2 * n + n_in + i;
    let mut q = DMatrix::<C64>::zeros(size, size);
    for r in 0..n {
        for c in 0..n {
            q[(zi(r), zi(c))] = x[(r, c)];
            q[(wi(r), wi(c))] = x[(r, c)].conj();
        }
        for (i, &mi) in input_modes.iter().enumerate() {
            q[(zi(r), bi(i))] = y[(r, mi)];
            q[(bi(i), zi(r))] = y[(r, mi)];
            q[(wi(r), ai(i))] = y[(r, mi)].conj();
            q[(ai(i), wi(r))] = y[(r, mi)].conj();
        }
    }
    for (i, &mi) in input_modes.iter().enumerate() {
        for (j, &mj) in input_modes.iter().enumerate() {
            q[(bi(i), bi(j))] = z[(mi, mj)];
            q[(ai(i), ai(j))] = z[(mi, mj)].conj();
        }
    }

    let outputs = spec.output_modes();
    let clicks = spec.modes_with(Projector::ClickCounting);
    let noncounting = spec.modes_with(Projector::ClickNonCounting);
    let always_traced = spec.modes_with(Projector::Traced);
    if noncounting.len() > 20 {
        return Err(Error::InvalidParameter("too many non-counting detectors".into()));
    }

    let mut keep: Vec<usize> = Vec::new();
    let mut variables = Vec::new();
    for i in 0..n_in {
        keep.push(bi(i));
        variables.push(VarTag::Beta(i));
    }
    for i in 0..n_in {
        keep.push(ai(i));
        variables.push(VarTag::Alpha(i));
    }
    for (o, &m) in outputs.iter().enumerate() {
        keep.push(zi(m));
        variables.push(VarTag::Delta(o));
    }
    for (o, &m) in outputs.iter().enumerate() {
        keep.push(wi(m));
        variables.push(VarTag::Gamma(o));
    }
    for (c, &m) in clicks.iter().enumerate() {
        keep.push(zi(m));
        variables.push(VarTag::ClickKet(c));
    }
    for (c, &m) in clicks.iter().enumerate() {
        keep.push(wi(m));
        variables.push(VarTag::ClickBra(c));
    }

    let lin = DVector::<C64>::zeros(size);
    let mut terms = Vec::new();
    // Inclusion-exclusion: a non-counting mode in the subset is projected on
    // vacuum with sign -1, otherwise it is traced.
    for subset in 0u32..(1u32 << noncounting.len()) {
        let mut traced = always_traced.clone();
        let mut sign = 1.0;
        for (bit, &m) in noncounting.iter().enumerate() {
            if subset & (1 << bit) != 0 {
                sign = -sign;
            } else {
                traced.push(m);
            }
        }
        traced.sort_unstable();
        let mut t_idx = Vec::with_capacity(2 * traced.len());
        for &m in &traced {
            t_idx.push(zi(m));
            t_idx.push(wi(m));
        }
        let term = integrate(&q, &lin, &keep, &t_idx)?;
        terms.push(GaussianTerm { prefactor: sign * vacuum * term.prefactor, ..term });
    }

    Ok(QuadraticGenFun {
        variables,
        terms,
        input_modes: input_modes.to_vec(),
        output_modes: outputs,
        click_modes: clicks,
    })
}

/// Kernel matrices `X = (B^†)^{-1} C^T`, `Y = B - X conj(C)`,
/// `Z = conj(C)^T X conj(C) - (B^T conj(C) + conj(C)^T B) / 2`.
fn kernel(map: &BogoliubovMap) -> Result<(DMatrix<C64>, DMatrix<C64>, DMatrix<C64>)> {
    let b = map.b();
    let cb = map.c().map(|z| z.conj());
    let bdag_inv = b
        .adjoint()
        .try_inverse()
        .ok_or(Error::IllConditioned(f64::INFINITY))?;
    let x = bdag_inv * map.c().transpose();
    let y = b - &x * &cb;
    let z = cb.transpose() * &x * &cb - (b.transpose() * &cb + cb.transpose() * b) * C64::new(0.5, 0.0);
    Ok((x, y, z))
}

/// Sums the Gaussian over the `(z, w)` pairs listed in `traced` and restricts
/// to the `keep` variables; everything else is set to zero.
fn integrate(q: &DMatrix<C64>, lin: &DVector<C64>, keep: &[usize], traced: &[usize]) -> Result<GaussianTerm> {
    let nk = keep.len();
    let nt = traced.len();
    let q_kk = DMatrix::from_fn(nk, nk, |i, j| q[(keep[i], keep[j])]);
    let l_k = DVector::from_fn(nk, |i, _| lin[keep[i]]);
    if nt == 0 {
        return Ok(GaussianTerm { prefactor: 1.0, quad: q_kk, lin: l_k });
    }
    let m = DMatrix::from_fn(nt, nt, |i, j| q[(traced[i], traced[j])]);
    let mut omega = DMatrix::<C64>::zeros(nt, nt);
    for p in 0..nt / 2 {
        omega[(2 * p, 2 * p + 1)] = C64::new(1.0, 0.0);
        omega[(2 * p + 1, 2 * p)] = C64::new(1.0, 0.0);
    }
    let a = &omega - &m;
    let sv = a.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let a_inv = a.try_inverse().ok_or(Error::IllConditioned(cond))?;
    let det = (DMatrix::<C64>::identity(nt, nt) - &omega * &m).determinant();
    let q_kt = DMatrix::from_fn(nk, nt, |i, j| q[(keep[i], traced[j])]);
    let l_t = DVector::from_fn(nt, |i, _| lin[traced[i]]);
    let quad = &q_kk + &q_kt * &a_inv * q_kt.transpose();
    let lin_out = &l_k + &q_kt * &a_inv * &l_t;
    let shift = (l_t.transpose() * &a_inv * &l_t)[(0, 0)] * 0.5;
    let pre = shift.exp() / det.sqrt();
    if pre.re <= 0.0 || pre.im.abs() > 1e-9 * pre.re {
        return Err(Error::InvalidParameter(format!(
            "gaussian trace gave non-positive weight {pre}"
        )));
    }
    Ok(GaussianTerm { prefactor: pre.re, quad, lin: lin_out })
}

/// Dense Taylor coefficients of `exp(v^T Q v / 2 + L^T v)` for
/// `0 <= e_k <= bounds[k]`, row-major with variable 0 slowest.
///
/// Uses `t_k c_t = L_k c_{t-1_k} + sum_j Q_kj c_{t-1_k-1_j}`.
pub fn series_coefficients(
    quad: &DMatrix<C64>,
    lin: &DVector<C64>,
    bounds: &[usize],
    budget: usize,
) -> Result<Vec<C64>> {
    let nv = bounds.len();
    let requested = bounds
        .iter()
        .try_fold(1usize, |acc, &b| acc.checked_mul(b + 1))
        .unwrap_or(usize::MAX);
    if requested > budget {
        return Err(Error::SeriesBudget { requested, budget });
    }
    let mut strides = vec![1usize; nv];
    for k in (0..nv.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * (bounds[k + 1] + 1);
    }
    let mut c = vec![C64::new(0.0, 0.0); requested];
    c[0] = C64::new(1.0, 0.0);
    let mut e = vec![0usize; nv];
    for idx in 1..requested {
        // Odometer increment.
        let mut k = nv - 1;
        loop {
            if e[k] < bounds[k] {
                e[k] += 1;
                break;
            }
            e[k] = 0;
            k -= 1;
        }
        // Lower along the fastest non-zero variable.
        let k = (0..nv).rev().find(|&v| e[v] > 0).expect("non-zero index");
        let base = idx - strides[k];
        let mut acc = lin[k] * c[base];
        for j in 0..nv {
            let ej = if j == k { e[j] - 1 } else { e[j] };
            if ej > 0 {
                let qkj = quad[(k, j)];
                if qkj.re != 0.0 || qkj.im != 0.0 {
                    acc += qkj * c[base - strides[j]];
                }
            }
        }
        c[idx] = acc / e[k] as f64;
    }
    Ok(c)
}

/// Linear map from input to event-weighted output density matrices,
/// `rho_out[j][i] = sum_{k,l} M[j, i, k, l] rho_in[k][l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferTensor {
    pub input_modes: usize,
    pub output_modes: usize,
    pub input_cutoff: usize,
    pub output_cutoff: usize,
    data: Vec<C64>,
}

impl TransferTensor {
    fn d_in(&self) -> usize {
        fock_dim(self.input_modes, self.input_cutoff)
    }

    fn d_out(&self) -> usize {
        fock_dim(self.output_modes, self.output_cutoff)
    }

    pub fn element(&self, out_ket: usize, out_bra: usize, in_ket: usize, in_bra: usize) -> C64 {
        let (di, dout) = (self.d_in(), self.d_out());
        self.data[((out_ket * dout + out_bra) * di + in_ket) * di + in_bra]
    }

    fn raw_output(&self, rho: Option<&FockDensityMatrix>) -> Result<DMatrix<C64>> {
        let (di, dout) = (self.d_in(), self.d_out());
        let input = match rho {
            Some(r) => {
                if r.mode_count() != self.input_modes {
                    return Err(Error::DimensionMismatch(format!(
                        "{}-mode state for a {}-mode tensor input",
                        r.mode_count(),
                        self.input_modes
                    )));
                }
                if r.cutoff() != self.input_cutoff {
                    return Err(Error::CutoffMismatch(r.cutoff(), self.input_cutoff));
                }
                r.elements().clone()
            }
            None if self.input_modes == 0 => DMatrix::from_element(1, 1, C64::new(1.0, 0.0)),
            None => return Err(Error::DimensionMismatch("tensor expects an input state".into())),
        };
        let flat: Vec<(usize, C64)> = input
            .iter()
            .enumerate()
            .filter(|(_, z)| z.re != 0.0 || z.im != 0.0)
            // nalgebra stores column-major: flat index = l * di + k.
            .map(|(idx, z)| ((idx % di) * di + idx / di, *z))
            .collect();
        let mut out = DMatrix::zeros(dout, dout);
        for j in 0..dout {
            for i in 0..dout {
                let block = &self.data[(j * dout + i) * di * di..(j * dout + i + 1) * di * di];
                out[(j, i)] = flat.iter().map(|&(kl, z)| block[kl] * z).sum();
            }
        }
        Ok(out)
    }

    pub fn apply(&self, rho: &FockDensityMatrix) -> Result<FockDensityMatrix> {
        self.to_state(self.raw_output(Some(rho))?)
    }

    /// Output for a tensor without input modes.
    pub fn apply_vacuum(&self) -> Result<FockDensityMatrix> {
        self.to_state(self.raw_output(None)?)
    }

    /// Event probability, i.e. the trace of the output.
    pub fn probability(&self, rho: Option<&FockDensityMatrix>) -> Result<f64> {
        Ok(self.raw_output(rho)?.diagonal().iter().map(|z| z.re).sum())
    }

    fn to_state(&self, out: DMatrix<C64>) -> Result<FockDensityMatrix> {
        if self.output_modes == 0 {
            return Err(Error::DimensionMismatch(
                "tensor has no output modes; use probability()".into(),
            ));
        }
        FockDensityMatrix::from_computed(
            self.output_modes,
            self.output_cutoff,
            out,
            TraceMeaning::EventWeighted,
        )
    }
}

pub fn extract_tensor(f: &QuadraticGenFun, input_cutoff: usize, output_cutoff: usize) -> Result<TransferTensor> {
    extract_tensor_with_budget(f, input_cutoff, output_cutoff, DEFAULT_SERIES_BUDGET)
}

pub fn extract_tensor_with_budget(
    f: &QuadraticGenFun,
    input_cutoff: usize,
    output_cutoff: usize,
    budget: usize,
) -> Result<TransferTensor> {
    let n_in = f.input_modes.len();
    let n_out = f.output_modes.len();
    let bounds: Vec<usize> = f
        .variables
        .iter()
        .map(|v| match v {
            VarTag::Beta(_) | VarTag::Alpha(_) => input_cutoff,
            VarTag::Delta(_) | VarTag::Gamma(_) => output_cutoff,
            VarTag::ClickKet(_) | VarTag::ClickBra(_) => 1,
        })
        .collect();
    let nv = bounds.len();
    let mut strides = vec![1usize; nv];
    for k in (0..nv.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * (bounds[k + 1] + 1);
    }
    let position = |tag: VarTag| f.variables.iter().position(|&v| v == tag).expect("variable");
    let click_offset: usize = f.variables
        .iter()
        .zip(&strides)
        .filter(|(v, _)| matches!(v, VarTag::ClickKet(_) | VarTag::ClickBra(_)))
        .map(|(_, s)| s)
        .sum();

    // Series offset and sqrt-factorial weight of each Fock multi-index.
    let offsets = |count: usize, cutoff: usize, tag: &dyn Fn(usize) -> VarTag| -> Vec<(usize, f64)> {
        (0..fock_dim(count, cutoff))
            .map(|idx| {
                let occ = multi_index(idx, count, cutoff);
                let off = occ.iter().enumerate().map(|(m, &e)| e * strides[position(tag(m))]).sum();
                let w = occ.iter().map(|&e| sqrt_factorial(e)).product();
                (off, w)
            })
            .collect()
    };
    let beta = offsets(n_in, input_cutoff, &VarTag::Beta);
    let alpha = offsets(n_in, input_cutoff, &VarTag::Alpha);
    let delta = offsets(n_out, output_cutoff, &VarTag::Delta);
    let gamma = offsets(n_out, output_cutoff, &VarTag::Gamma);

    let (di, dout) = (beta.len(), delta.len());
    let mut data = vec![C64::new(0.0, 0.0); dout * dout * di * di];
    for term in &f.terms {
        let c = series_coefficients(&term.quad, &term.lin, &bounds, budget)?;
        let mut pos = 0;
        for &(oj, wj) in &delta {
            for &(oi, wi) in &gamma {
                for &(ok, wk) in &beta {
                    for &(ol, wl) in &alpha {
                        let coef = c[click_offset + oj + oi + ok + ol];
                        data[pos] += coef * (term.prefactor * wj * wi * wk * wl);
                        pos += 1;
                    }
                }
            }
        }
    }
    Ok(TransferTensor {
        input_modes: n_in,
        output_modes: n_out,
        input_cutoff,
        output_cutoff,
        data,
    })
}

fn sqrt_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).sqrt()).product()
}
