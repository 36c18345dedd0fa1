//! The repeater pipeline: entanglement generation, iterated connection
//! through the memories, dual-rail postselection with the Bell parameter,
//! and the rate bookkeeping.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use crate::analytic::Detector;
use crate::bogoliubov::{augment_dark_counts, lossy_channel, Circuit, CircuitElement, ReducedMemory};
use crate::error::{Error, Result};
use crate::fockstate::{fock_dim, multi_index, FockDensityMatrix};
use crate::genfun::{build_genfun, extract_tensor, ModeRole, Projector, ProjectorSpec, TransferTensor};

/// Smallest success probability treated as nonzero.
pub const MIN_PROBABILITY: f64 = 1e-300;

/// How connection dark counts enter the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DarkCountModel {
    /// Thermal noise folded into the memory map before the loss.
    Augmented,
    /// Two-mode squeezed vacuum fed into the loss port.
    VirtualSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeaterParams {
    pub r: f64,
    pub p_gen: f64,
    pub p_con: f64,
    pub n_dc_gen: f64,
    pub n_dc_con: f64,
    pub detector: Detector,
    /// Nesting level, `L = 2^n L0`.
    pub n: u32,
    pub memory: ReducedMemory,
    /// Phase rotation of the memory input mode at connection.
    pub memory_input_phase: f64,
    /// Segment communication time `L0/c` in seconds.
    pub tau: f64,
    /// Per-mode photon cutoff of the pair states.
    pub cutoff: usize,
    pub dark_model: DarkCountModel,
    /// Postselection detectors.
    pub ps_detector: Detector,
    /// Loss in front of the postselection detectors; `None` uses `p_con`.
    pub ps_loss: Option<f64>,
    /// Read the outer modes out through the memory before postselection.
    pub ps_readout: bool,
    /// Largest accepted output truncation leak per step.
    pub leak_tol: f64,
}

impl Default for RepeaterParams {
    fn default() -> Self {
        Self {
            r: 1e-2,
            p_gen: 0.0,
            p_con: 0.0,
            n_dc_gen: 0.0,
            n_dc_con: 0.0,
            detector: Detector::NonCounting,
            n: 0,
            memory: ReducedMemory::ideal(),
            memory_input_phase: 0.0,
            tau: 1e-4,
            cutoff: 2,
            dark_model: DarkCountModel::Augmented,
            ps_detector: Detector::Counting,
            ps_loss: None,
            ps_readout: true,
            leak_tol: 1e-3,
        }
    }
}

impl RepeaterParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return bad(format!("r = {} must be finite and >= 0", self.r));
        }
        for (name, p) in [("p_gen", self.p_gen), ("p_con", self.p_con), ("ps_loss", self.ps_loss.unwrap_or(0.0))] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        for (name, v) in [("n_dc_gen", self.n_dc_gen), ("n_dc_con", self.n_dc_con)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad(format!("tau = {} must be positive", self.tau));
        }
        if self.cutoff < 1 {
            return bad("cutoff must be at least 1".into());
        }
        if self.r > 0.0 && self.cutoff < 2 {
            return bad("cutoff >= 2 needed for r > 0".into());
        }
        if self.n_dc_con > 0.0 && self.p_con >= 1.0 {
            return bad("connection dark counts need p_con < 1".into());
        }
        if self.dark_model == DarkCountModel::VirtualSource && self.n_dc_con > 0.0 && self.p_con == 0.0 {
            return bad("the virtual dark-count source enters through the loss port; needs p_con > 0".into());
        }
        if !self.memory_input_phase.is_finite() {
            return bad(format!("memory_input_phase = {} must be finite", self.memory_input_phase));
        }
        if !(self.leak_tol > 0.0) {
            return bad(format!("leak_tol = {} must be positive", self.leak_tol));
        }
        self.memory.validate(crate::bogoliubov::MEMORY_INPUT_TOL)
    }

    /// Memory map of a full readout, including connection dark counts.
    pub fn readout_memory(&self) -> Result<ReducedMemory> {
        if self.n_dc_con > 0.0 {
            augment_dark_counts(&self.memory, self.n_dc_con / (1.0 - self.p_con))
        } else {
            Ok(self.memory)
        }
    }

    pub fn l_over_l0(&self) -> f64 {
        2f64.powi(self.n as i32)
    }
}

fn click(detector: Detector) -> ModeRole {
    ModeRole::Measured(match detector {
        Detector::Counting => Projector::ClickCounting,
        Detector::NonCounting => Projector::ClickNonCounting,
    })
}

const DARK: ModeRole = ModeRole::Measured(Projector::Dark);

/// Roles for `mode_count` modes: listed outputs, one click, one dark, rest traced.
fn roles(mode_count: usize, outputs: &[usize], clicks: &[usize], darks: &[usize], det: Detector) -> ProjectorSpec {
    let mut spec = ProjectorSpec::traced_except(mode_count, outputs);
    for &m in clicks {
        spec.set(m, click(det));
    }
    for &m in darks {
        spec.set(m, DARK);
    }
    spec
}

fn tensor(circuit: &Circuit, inputs: &[usize], spec: &ProjectorSpec, cutoff: usize) -> Result<TransferTensor> {
    let f = build_genfun(&circuit.to_map()?, inputs, spec)?;
    extract_tensor(&f, cutoff, cutoff)
}

fn check_leak(leak: f64, tol: f64) -> Result<()> {
    if leak > tol {
        return Err(Error::TruncationLeak { leak, tolerance: tol });
    }
    Ok(())
}

/// Output of one generation or connection step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Normalised conditional state.
    pub state: FockDensityMatrix,
    /// Success probability, summed over both heralding detectors.
    pub q: f64,
    /// Conditional weight lost to the output truncation.
    pub leak: f64,
}

/// Entanglement generation between two memories.
pub fn generate(p: &RepeaterParams) -> Result<StepResult> {
    p.validate()?;
    // m1 = 0, d1 = 1, m2 = 2, d2 = 3; loss ports 4, 5; dark-count ports 6..9.
    let mut c = Circuit::new(10);
    c.push(CircuitElement::TwoModeSqueeze { modes: (0, 1), r: p.r })
        .push(CircuitElement::TwoModeSqueeze { modes: (2, 3), r: p.r })
        .push(lossy_channel(p.p_gen, 1, 4)?)
        .push(lossy_channel(p.p_gen, 3, 5)?);
    if p.n_dc_gen > 0.0 {
        let noise = augment_dark_counts(&ReducedMemory::ideal(), p.n_dc_gen)?;
        c.push(CircuitElement::Memory { memory: noise, input: 1, aux: (6, 7), input_phase: 0.0 })
            .push(CircuitElement::Memory { memory: noise, input: 3, aux: (8, 9), input_phase: 0.0 });
    }
    c.push(CircuitElement::BeamSplitter { modes: (1, 3), transmittivity: 0.5 });

    let det = p.detector;
    let state = tensor(&c, &[], &roles(10, &[0, 2], &[1], &[3], det), p.cutoff)?.apply_vacuum()?;
    let q_a = tensor(&c, &[], &roles(10, &[], &[1], &[3], det), p.cutoff)?.probability(None)?;
    let q_b = tensor(&c, &[], &roles(10, &[], &[3], &[1], det), p.cutoff)?.probability(None)?;
    if q_a < MIN_PROBABILITY {
        if p.r == 0.0 && p.n_dc_gen == 0.0 {
            // Limit r -> 0 of the heralded state.
            return Ok(StepResult { state: FockDensityMatrix::psi_plus(p.cutoff)?, q: 0.0, leak: 0.0 });
        }
        return Err(Error::ZeroProbability(q_a));
    }
    let leak = (1.0 - state.trace() / q_a).max(0.0);
    check_leak(leak, p.leak_tol)?;
    Ok(StepResult { state: state.normalized()?, q: q_a + q_b, leak })
}

/// Connection step with its transfer tensors extracted once; reusable
/// across nesting levels of a homogeneous chain.
#[derive(Debug, Clone)]
pub struct Connector {
    state: TransferTensor,
    prob_a: TransferTensor,
    prob_b: TransferTensor,
    cutoff: usize,
    leak_tol: f64,
}

impl Connector {
    pub fn new(p: &RepeaterParams) -> Result<Self> {
        p.validate()?;
        let c = connection_circuit(p)?;
        let n = c.mode_count;
        let inputs = [0, 1, 2, 3];
        let det = p.detector;
        Ok(Self {
            state: tensor(&c, &inputs, &roles(n, &[0, 3], &[1], &[2], det), p.cutoff)?,
            prob_a: tensor(&c, &inputs, &roles(n, &[], &[1], &[2], det), p.cutoff)?,
            prob_b: tensor(&c, &inputs, &roles(n, &[], &[2], &[1], det), p.cutoff)?,
            cutoff: p.cutoff,
            leak_tol: p.leak_tol,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Swaps the inner modes of `left` (modes 0, 1) and `right` (modes 0, 1)
    /// into a pair on the outer modes.
    pub fn connect(&self, left: &FockDensityMatrix, right: &FockDensityMatrix) -> Result<StepResult> {
        for rho in [left, right] {
            if rho.mode_count() != 2 {
                return Err(Error::DimensionMismatch(format!("{}-mode pair state", rho.mode_count())));
            }
        }
        let input = left.tensor(right)?;
        let q_a = self.prob_a.probability(Some(&input))?;
        let q_b = self.prob_b.probability(Some(&input))?;
        if !(q_a >= MIN_PROBABILITY) {
            return Err(Error::ZeroProbability(q_a));
        }
        let out = self.state.apply(&input)?;
        let leak = (1.0 - out.trace() / q_a).max(0.0);
        check_leak(leak, self.leak_tol)?;
        Ok(StepResult { state: out.normalized()?, q: q_a + q_b, leak })
    }
}

// Inputs 0..3 hold left (0, 1) and right (2, 3); memory ports 4..7;
// loss ports 8, 9; virtual dark-count idlers 10, 11.
fn connection_circuit(p: &RepeaterParams) -> Result<Circuit> {
    let virtual_source = p.dark_model == DarkCountModel::VirtualSource && p.n_dc_con > 0.0;
    let memory = match p.dark_model {
        DarkCountModel::Augmented => p.readout_memory()?,
        DarkCountModel::VirtualSource => p.memory,
    };
    let mut c = Circuit::new(if virtual_source { 12 } else { 10 });
    let input_phase = p.memory_input_phase;
    c.push(CircuitElement::Memory { memory, input: 1, aux: (4, 5), input_phase })
        .push(CircuitElement::Memory { memory, input: 2, aux: (6, 7), input_phase });
    if virtual_source {
        // The loss port carries a thermal state with p_con sinh^2 s = n_dc.
        let s = (p.n_dc_con / p.p_con).sqrt().asinh();
        c.push(CircuitElement::TwoModeSqueeze { modes: (8, 10), r: s })
            .push(CircuitElement::TwoModeSqueeze { modes: (9, 11), r: s });
    }
    c.push(lossy_channel(p.p_con, 1, 8)?)
        .push(lossy_channel(p.p_con, 2, 9)?)
        .push(CircuitElement::BeamSplitter { modes: (1, 2), transmittivity: 0.5 });
    Ok(c)
}

/// One-shot connection; prefer [`Connector`] when connecting repeatedly.
pub fn connect(left: &FockDensityMatrix, right: &FockDensityMatrix, p: &RepeaterParams) -> Result<StepResult> {
    Connector::new(p)?.connect(left, right)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    /// `rho_0 ... rho_n`.
    pub states: Vec<FockDensityMatrix>,
    /// `q_0 ... q_n`.
    pub q: Vec<f64>,
    pub leaks: Vec<f64>,
}

impl ChainResult {
    pub fn final_state(&self) -> &FockDensityMatrix {
        self.states.last().expect("chain holds rho_0")
    }

    pub fn max_leak(&self) -> f64 {
        self.leaks.iter().cloned().fold(0.0, f64::max)
    }
}

/// Homogeneous chain: both inputs of every connection are the same `rho_k`.
pub fn run_chain(p: &RepeaterParams) -> Result<ChainResult> {
    let first = generate(p)?;
    run_chain_from(first, p)
}

/// Chain starting from a given level-0 step instead of [`generate`].
pub fn run_chain_from(first: StepResult, p: &RepeaterParams) -> Result<ChainResult> {
    let mut out = ChainResult { states: vec![first.state], q: vec![first.q], leaks: vec![first.leak] };
    if p.n == 0 {
        return Ok(out);
    }
    let connector = Connector::new(p)?;
    for _ in 0..p.n {
        let rho = out.final_state();
        let step = connector.connect(rho, rho)?;
        out.states.push(step.state);
        out.q.push(step.q);
        out.leaks.push(step.leak);
    }
    Ok(out)
}

/// `1 - <00|rho|00>`: the excitation probability of a pair state.
pub fn excitation(rho: &FockDensityMatrix) -> f64 {
    1.0 - rho.get(&[0, 0], &[0, 0]).re / rho.trace()
}

// Postselection and Bell parameter.

/// The fixed CHSH angle pairs `(phi, varphi)`; `S = E0 + E1 + E2 - E3`.
pub const FIXED_ANGLES: [(f64, f64); 4] =
    [(FRAC_PI_2, FRAC_PI_4), (0.0, FRAC_PI_4), (0.0, -FRAC_PI_4), (FRAC_PI_2, -FRAC_PI_4)];

#[derive(Debug, Clone, PartialEq)]
pub struct BellResult {
    pub s: f64,
    pub angles: [(f64, f64); 4],
    pub e: [f64; 4],
    pub p_same: [f64; 4],
    pub p_diff: [f64; 4],
    /// Probability of one click at each end, averaged over the settings.
    pub q_ps: f64,
}

/// Conditional correlation for a single setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub p_same: f64,
    pub p_diff: f64,
    /// Probability of exactly one click per end.
    pub probability: f64,
}

impl Correlation {
    pub fn e(&self) -> f64 {
        self.p_same - self.p_diff
    }
}

/// Dual-rail postselection on two copies of a pair state. Modes are
/// `A1 = 0, B1 = 1, A2 = 2, B2 = 3`; the phases act on `A1` and `B1`
/// before the local balanced beam splitters `(A1, A2)` and `(B1, B2)`.
#[derive(Debug, Clone)]
pub struct BellMeasurement {
    /// Patterns `uu, ll, ul, lu`.
    patterns: [TransferTensor; 4],
    cutoff: usize,
}

impl BellMeasurement {
    pub fn new(cutoff: usize, detector: Detector, loss: f64) -> Result<Self> {
        Self::with_readout(cutoff, detector, loss, None)
    }

    /// Like [`Self::new`], with every mode first read out through `readout`.
    pub fn with_readout(cutoff: usize, detector: Detector, loss: f64, readout: Option<&ReducedMemory>) -> Result<Self> {
        if !(0.0..=1.0).contains(&loss) {
            return Err(Error::InvalidParameter(format!("postselection loss {loss}")));
        }
        let lossy = loss > 0.0;
        // Signal modes 0..3, loss ports 4..7, memory ports 8..15.
        let n = if readout.is_some() { 16 } else if lossy { 8 } else { 4 };
        let mut c = Circuit::new(n);
        if let Some(memory) = readout {
            for m in 0..4 {
                let aux = (8 + 2 * m, 9 + 2 * m);
                c.push(CircuitElement::Memory { memory: *memory, input: m, aux, input_phase: 0.0 });
            }
        }
        if lossy {
            for m in 0..4 {
                c.push(lossy_channel(loss, m, m + 4)?);
            }
        }
        c.push(CircuitElement::BeamSplitter { modes: (0, 2), transmittivity: 0.5 })
            .push(CircuitElement::BeamSplitter { modes: (1, 3), transmittivity: 0.5 });
        let build = |clicks: [usize; 2], darks: [usize; 2]| {
            tensor(&c, &[0, 1, 2, 3], &roles(n, &[], &clicks, &darks, detector), cutoff)
        };
        Ok(Self {
            patterns: [
                build([0, 1], [2, 3])?,
                build([2, 3], [0, 1])?,
                build([0, 3], [1, 2])?,
                build([2, 1], [0, 3])?,
            ],
            cutoff,
        })
    }

    /// Postselection as configured in `p`: by default the outer modes are
    /// read out through the memory, suffer the connection loss and are
    /// detected by photon-number resolving detectors.
    pub fn for_params(p: &RepeaterParams) -> Result<Self> {
        let readout = if p.ps_readout { Some(p.readout_memory()?) } else { None };
        Self::with_readout(p.cutoff, p.ps_detector, p.ps_loss.unwrap_or(p.p_con), readout.as_ref())
    }

    /// `rho (x) rho` ordered as `A1, B1, A2, B2`.
    pub fn two_copies(&self, rho: &FockDensityMatrix) -> Result<FockDensityMatrix> {
        if rho.mode_count() != 2 {
            return Err(Error::DimensionMismatch(format!("{}-mode pair state", rho.mode_count())));
        }
        if rho.cutoff() != self.cutoff {
            return Err(Error::CutoffMismatch(rho.cutoff(), self.cutoff));
        }
        rho.tensor(rho)
    }

    /// Correlation at one setting for a prepared two-copy state.
    pub fn correlation(&self, copies: &FockDensityMatrix, phi: f64, varphi: f64) -> Result<Correlation> {
        let rotated = rotate(copies, phi, varphi)?;
        let mut p = [0.0; 4];
        for (k, t) in self.patterns.iter().enumerate() {
            p[k] = t.probability(Some(&rotated))?.max(0.0);
        }
        let total: f64 = p.iter().sum();
        if !(total >= MIN_PROBABILITY) {
            return Err(Error::ZeroProbability(total));
        }
        Ok(Correlation { p_same: (p[0] + p[1]) / total, p_diff: (p[2] + p[3]) / total, probability: total })
    }

    pub fn evaluate(&self, rho: &FockDensityMatrix, angles: &[(f64, f64); 4]) -> Result<BellResult> {
        let copies = self.two_copies(rho)?;
        let mut out = BellResult {
            s: 0.0,
            angles: *angles,
            e: [0.0; 4],
            p_same: [0.0; 4],
            p_diff: [0.0; 4],
            q_ps: 0.0,
        };
        for (k, &(phi, varphi)) in angles.iter().enumerate() {
            let c = self.correlation(&copies, phi, varphi)?;
            out.e[k] = c.e();
            out.p_same[k] = c.p_same;
            out.p_diff[k] = c.p_diff;
            out.q_ps += c.probability / 4.0;
        }
        out.s = out.e[0] + out.e[1] + out.e[2] - out.e[3];
        Ok(out)
    }

    /// CHSH value at arbitrary angles `[phi, phi', varphi, varphi']`:
    /// `E(phi, varphi) + E(phi', varphi) + E(phi', varphi') - E(phi, varphi')`.
    pub fn chsh(&self, copies: &FockDensityMatrix, x: &[f64; 4]) -> Result<f64> {
        let e = |a: f64, b: f64| self.correlation(copies, a, b).map(|c| c.e());
        Ok(e(x[0], x[2])? + e(x[1], x[2])? + e(x[1], x[3])? - e(x[0], x[3])?)
    }

    /// CHSH value maximised over the four angles, started from the fixed ones.
    pub fn optimal_s(&self, rho: &FockDensityMatrix) -> Result<f64> {
        let copies = self.two_copies(rho)?;
        let mut x = [FRAC_PI_2, 0.0, FRAC_PI_4, -FRAC_PI_4];
        let h = 1e-3;
        let f = |x: &[f64; 4]| self.chsh(&copies, x);
        let mut best = f(&x)?;
        for _ in 0..50 {
            let (grad, hess) = derivatives(&f, &x, h)?;
            // S only depends on angle differences, so the Hessian has a null
            // direction; Newton acts on the curved directions only.
            let eig = hess.symmetric_eigen();
            let mut step = Vec4::zeros(4);
            let mut newton = true;
            for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
                let v = eig.eigenvectors.column(k);
                if lambda < -1e-6 {
                    step -= v * (v.dot(&grad) / lambda);
                } else if lambda > 1e-6 {
                    newton = false;
                }
            }
            if !newton {
                step = grad.clone() * 1e-2;
            }
            let mut trial = x;
            for k in 0..4 {
                trial[k] += step[k];
            }
            let value = f(&trial)?;
            if value < best {
                break;
            }
            let gain = value - best;
            x = trial;
            best = value;
            if gain < 1e-15 {
                break;
            }
        }
        Ok(best)
    }
}

type Vec4 = nalgebra::DVector<f64>;

fn derivatives(
    f: &dyn Fn(&[f64; 4]) -> Result<f64>,
    x: &[f64; 4],
    h: f64,
) -> Result<(Vec4, DMatrix<f64>)> {
    let shifted = |d: &[(usize, f64)]| {
        let mut y = *x;
        for &(k, s) in d {
            y[k] += s;
        }
        f(&y)
    };
    let f0 = f(x)?;
    let mut grad = Vec4::zeros(4);
    let mut hess = DMatrix::zeros(4, 4);
    for i in 0..4 {
        let fp = shifted(&[(i, h)])?;
        let fm = shifted(&[(i, -h)])?;
        grad[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let v = (shifted(&[(i, h), (j, h)])? - shifted(&[(i, h), (j, -h)])?
                - shifted(&[(i, -h), (j, h)])?
                + shifted(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((grad, hess))
}

/// Phase `phi` on mode 0 and `varphi` on mode 1 of a four-mode state.
fn rotate(rho: &FockDensityMatrix, phi: f64, varphi: f64) -> Result<FockDensityMatrix> {
    let (modes, cutoff) = (rho.mode_count(), rho.cutoff());
    let dim = fock_dim(modes, cutoff);
    let occ: Vec<Vec<usize>> = (0..dim).map(|i| multi_index(i, modes, cutoff)).collect();
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        let angle = phi * (occ[i][0] as f64 - occ[j][0] as f64)
            + varphi * (occ[i][1] as f64 - occ[j][1] as f64);
        rho.elements()[(i, j)] * C64::from_polar(1.0, angle)
    });
    FockDensityMatrix::new(modes, cutoff, m, rho.trace_meaning())
}

/// Bell parameter of a pair state. `angles` overrides the fixed settings.
pub fn bell(rho: &FockDensityMatrix, p: &RepeaterParams, angles: Option<[(f64, f64); 4]>) -> Result<BellResult> {
    BellMeasurement::for_params(p)?.evaluate(rho, &angles.unwrap_or(FIXED_ANGLES))
}

// Rates.

/// Mean number of rounds until two parallel attempts with probability `q`
/// have both succeeded.
pub fn nu(q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParameter(format!("success probability {q} outside (0, 1]")));
    }
    Ok((3.0 - 2.0 * q) / ((2.0 - q) * q))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// `q_ps / (tau prod nu_i)`.
    pub exact: f64,
    /// `(2/3)^{n+1} q_ps prod q_i / tau`.
    pub simplified: f64,
}

/// Rate in pairs per second for `q = (q_0, ..., q_n)`.
pub fn rate(q: &[f64], q_ps: f64, tau: f64) -> Result<RateEstimate> {
    if q.is_empty() {
        return Err(Error::InvalidParameter("empty success-probability list".into()));
    }
    if !(q_ps > 0.0 && q_ps <= 1.0) {
        return Err(Error::InvalidParameter(format!("postselection probability {q_ps}")));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau = {tau}")));
    }
    let mut nu_product = 1.0;
    for &qi in q {
        nu_product *= nu(qi)?;
    }
    let q_product: f64 = q.iter().product();
    let simplified = (2.0f64 / 3.0).powi(q.len() as i32) * q_ps * q_product / tau;
    Ok(RateEstimate { exact: q_ps / (tau * nu_product), simplified })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloResult {
    /// Mean time per delivered postselected pair, seconds.
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

const MC_CHUNK: usize = 1024;

/// Stochastic waiting time of the doubling protocol. Each attempt at
/// level `k + 1` waits for two fresh level-`k` pairs and the communication
/// time `tau 2^k`; postselection waits for two final pairs per attempt.
/// Reproducible for a given seed regardless of the thread count.
pub fn rate_monte_carlo(q: &[f64], q_ps: f64, tau: f64, trials: usize, seed: u64) -> Result<MonteCarloResult> {
    rate(q, q_ps, tau)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let chunks = trials.div_ceil(MC_CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let count = MC_CHUNK.min(trials - chunk * MC_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let t = sample_final(q, q_ps, tau, &mut rng);
                s += t;
                s2 += t * t;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let n = trials as f64;
    let mean = s / n;
    let var = if trials > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(MonteCarloResult { mean, stderr: (var / n).sqrt(), trials })
}

fn geometric(q: f64, rng: &mut ChaCha8Rng) -> f64 {
    if q >= 1.0 {
        return 1.0;
    }
    let u = 1.0 - rng.gen::<f64>();
    (u.ln() / (-q).ln_1p()).ceil().max(1.0)
}

fn sample_level(k: usize, q: &[f64], tau: f64, rng: &mut ChaCha8Rng) -> f64 {
    if k == 0 {
        return tau * geometric(q[0], rng);
    }
    let comm = tau * 2f64.powi(k as i32 - 1);
    let mut t = 0.0;
    loop {
        let a = sample_level(k - 1, q, tau, rng);
        let b = sample_level(k - 1, q, tau, rng);
        t += a.max(b) + comm;
        if rng.gen::<f64>() < q[k] {
            return t;
        }
    }
}

fn sample_final(q: &[f64], q_ps: f64, tau: f64, rng: &mut ChaCha8Rng) -> f64 {
    let top = q.len() - 1;
    let mut t = 0.0;
    loop {
        let a = sample_level(top, q, tau, rng);
        let b = sample_level(top, q, tau, rng);
        t += a.max(b);
        if rng.gen::<f64>() < q_ps {
            return t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::S_MAX;

    fn lossless(detector: Detector) -> RepeaterParams {
        RepeaterParams { r: 0.0, detector, ..Default::default() }
    }

    #[test]
    fn nu_values() {
        assert_eq!(nu(1.0).unwrap(), 1.0);
        assert!((nu(0.5).unwrap() - 8.0 / 3.0).abs() < 1e-15);
        assert!(nu(0.0).is_err());
    }

    #[test]
    fn rate_trivial_chain() {
        let r = rate(&[1.0], 0.5, 2.0).unwrap();
        assert_eq!(r.exact, 0.25);
        assert!((r.simplified - 2.0 / 3.0 * 0.25).abs() < 1e-15);
        assert!(rate(&[0.0], 0.5, 1.0).is_err());
    }

    #[test]
    fn r_zero_limit_is_psi_plus() {
        let g = generate(&lossless(Detector::NonCounting)).unwrap();
        assert_eq!(g.q, 0.0);
        assert_eq!(g.state, FockDensityMatrix::psi_plus(2).unwrap());
    }

    #[test]
    fn dark_count_only_heralds_vacuum() {
        let p = RepeaterParams { r: 0.0, n_dc_gen: 1e-3, ..Default::default() };
        let g = generate(&p).unwrap();
        assert!((g.state.get(&[0, 0], &[0, 0]).re - 1.0).abs() < 1e-12);
        assert!(g.q > 0.0);
    }

    #[test]
    fn psi_plus_bell() {
        let rho = FockDensityMatrix::psi_plus(2).unwrap();
        for det in [Detector::Counting, Detector::NonCounting] {
            let b = bell(&rho, &lossless(det), None).unwrap();
            assert!((b.s - S_MAX).abs() < 1e-12, "{det:?}: {}", b.s);
            assert!((b.q_ps - 0.5).abs() < 1e-12);
            for k in 0..4 {
                assert!((b.p_same[k] + b.p_diff[k] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn separable_state_has_zero_s() {
        let mut amp = vec![C64::new(0.0, 0.0); 9];
        amp[1] = C64::new(1.0, 0.0);
        let pure = FockDensityMatrix::from_pure(2, 2, &amp).unwrap();
        // No photon ever reaches end A.
        let err = bell(&pure, &lossless(Detector::NonCounting), None).unwrap_err();
        assert!(matches!(err, Error::ZeroProbability(_)));

        let mut m = DMatrix::zeros(9, 9);
        m[(1, 1)] = C64::new(0.5, 0.0);
        m[(3, 3)] = C64::new(0.5, 0.0);
        let mixed = FockDensityMatrix::new(2, 2, m, crate::TraceMeaning::Normalized).unwrap();
        let b = bell(&mixed, &lossless(Detector::NonCounting), None).unwrap();
        assert!(b.s.abs() < 1e-12);
        assert!((b.q_ps - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ideal_counting_connection() {
        let p = RepeaterParams { n: 1, ..lossless(Detector::Counting) };
        let psi = FockDensityMatrix::psi_plus(2).unwrap();
        let step = connect(&psi, &psi, &p).unwrap();
        assert!((step.q - 0.5).abs() < 1e-12);
        assert!(step.state.max_abs_diff(&psi) < 1e-12);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let a = rate_monte_carlo(&[0.3, 0.5], 0.5, 1.0, 3000, 7).unwrap();
        let b = rate_monte_carlo(&[0.3, 0.5], 0.5, 1.0, 3000, 7).unwrap();
        assert_eq!(a, b);
        let c = rate_monte_carlo(&[0.3, 0.5], 0.5, 1.0, 3000, 8).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn monte_carlo_deterministic_limit() {
        let m = rate_monte_carlo(&[1.0], 1.0, 3.0, 10, 1).unwrap();
        assert_eq!(m.mean, 3.0);
        assert_eq!(m.stderr, 0.0);
    }

    #[test]
    fn validation() {
        assert!(RepeaterParams { p_con: 1.5, ..Default::default() }.validate().is_err());
        assert!(RepeaterParams { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(RepeaterParams { cutoff: 1, ..Default::default() }.validate().is_err());
        assert!(RepeaterParams::default().validate().is_ok());
    }
}
