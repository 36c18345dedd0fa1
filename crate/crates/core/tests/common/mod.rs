//! Brute-force oracle helpers and random circuit strategies shared by the
//! integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use qrepeater::fockstate::{fock_dim, oracle_apply, OracleInput, OracleOutput};
use qrepeater::{
    build_genfun, extract_tensor, Circuit, CircuitElement, FockDensityMatrix, ModeRole, Projector,
    ProjectorSpec, ReducedMemory, TraceMeaning,
};

/// Runs the oracle with growing cutoff until the truncation leak is negligible.
pub fn converged_oracle(
    circuit: &Circuit,
    roles: &[ModeRole],
    input: Option<(&FockDensityMatrix, &[usize])>,
    out_cutoff: usize,
) -> OracleOutput {
    for cutoff in [10, 14, 18, 22, 26, 30, 34, 42, 50] {
        let inp = input.map(|(state, modes)| OracleInput { state, modes });
        match oracle_apply(circuit, roles, inp, out_cutoff, cutoff) {
            Ok(out) if out.leak < 1e-9 => return out,
            _ => continue,
        }
    }
    panic!("oracle did not converge");
}

pub fn genfun_output(
    circuit: &Circuit,
    roles: &[ModeRole],
    input: Option<(&FockDensityMatrix, &[usize])>,
    out_cutoff: usize,
) -> (Option<FockDensityMatrix>, f64) {
    let map = circuit.to_map().unwrap();
    let spec = ProjectorSpec::new(roles.to_vec());
    let modes: &[usize] = input.map(|(_, m)| m).unwrap_or(&[]);
    let f = build_genfun(&map, modes, &spec).unwrap();
    let in_cutoff = input.map(|(s, _)| s.cutoff()).unwrap_or(0);
    let t = extract_tensor(&f, in_cutoff, out_cutoff).unwrap();
    let state = input.map(|(s, _)| s);
    let p = t.probability(state).unwrap();
    if spec.output_modes().is_empty() {
        (None, p)
    } else {
        let rho = match state {
            Some(s) => t.apply(s).unwrap(),
            None => t.apply_vacuum().unwrap(),
        };
        (Some(rho), p)
    }
}

/// Largest deviation between the two paths over the probability and every
/// output element.
pub fn discrepancy(circuit: &Circuit, roles: &[ModeRole], input: Option<(&FockDensityMatrix, &[usize])>) -> f64 {
    let oracle = converged_oracle(circuit, roles, input, 2);
    let (state, p) = genfun_output(circuit, roles, input, 2);
    let mut diff = (oracle.probability - p).abs();
    if let (Some(a), Some(b)) = (oracle.state, state) {
        diff = diff.max(a.max_abs_diff(&b));
    }
    diff
}

pub fn assert_agree(circuit: &Circuit, roles: &[ModeRole], input: Option<(&FockDensityMatrix, &[usize])>) {
    let diff = discrepancy(circuit, roles, input);
    assert!(diff < 1e-8, "paths differ by {diff:e}");
}

pub fn random_density(modes: usize, cutoff: usize, seed: &[f64]) -> FockDensityMatrix {
    let d = fock_dim(modes, cutoff);
    let g = DMatrix::from_fn(d, d, |i, j| {
        let k = (i * d + j) % seed.len();
        C64::new(seed[k] * ((i + 2 * j + 1) as f64).sin(), seed[(k + 1) % seed.len()] * ((3 * i + j) as f64).cos())
    });
    // The identity shift keeps the state full rank for any seed.
    let rho = &g * g.adjoint() + DMatrix::identity(d, d) * C64::new(0.05, 0.0);
    let t: f64 = rho.diagonal().iter().map(|z| z.re).sum();
    FockDensityMatrix::from_computed(modes, cutoff, rho / C64::new(t, 0.0), TraceMeaning::Normalized).unwrap()
}

#[derive(Debug, Clone)]
pub enum Gate {
    Bs(usize, usize, f64),
    Phase(usize, f64),
    Sq(usize, f64),
    Tms(usize, usize, f64),
    Loss(usize, usize, f64),
    Mem(usize, usize, usize, [f64; 6]),
}

pub fn gate(n: usize) -> impl Strategy<Value = Gate> {
    let pair = (0..n, 1..n).prop_map(move |(a, d)| (a, (a + d) % n));
    prop_oneof![
        (pair.clone(), 0.0..1.0f64).prop_map(|((a, b), t)| Gate::Bs(a, b, t)),
        (0..n, -3.0..3.0f64).prop_map(|(a, p)| Gate::Phase(a, p)),
        (0..n, -0.3..0.3f64).prop_map(|(a, r)| Gate::Sq(a, r)),
        (pair.clone(), 0.0..0.3f64).prop_map(|((a, b), r)| Gate::Tms(a, b, r)),
        (pair, prop::sample::select(vec![0.0, 0.5, 0.9])).prop_map(|((a, b), p)| Gate::Loss(a, b, p)),
        (0..n, prop::array::uniform6(-0.2..0.2f64)).prop_map(move |(a, v)| {
            Gate::Mem(a, (a + 1) % n, (a + 2) % n, v)
        }),
    ]
}

pub fn role() -> impl Strategy<Value = ModeRole> {
    prop_oneof![
        Just(ModeRole::Output),
        Just(ModeRole::Measured(Projector::Dark)),
        Just(ModeRole::Measured(Projector::ClickCounting)),
        Just(ModeRole::Measured(Projector::ClickNonCounting)),
        Just(ModeRole::Measured(Projector::Traced)),
    ]
}

pub fn case() -> impl Strategy<Value = (usize, Vec<Gate>, Vec<ModeRole>, usize, usize, Vec<f64>)> {
    (2usize..=4).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(gate(n), 1..5),
            prop::collection::vec(role(), n),
            1usize..=n.min(2),
            1usize..=2,
            prop::collection::vec(-1.0..1.0f64, 5),
        )
    })
}

pub fn to_circuit(n: usize, gates: &[Gate]) -> Option<Circuit> {
    let mut c = Circuit::new(n);
    let mut squeezers = 0;
    for g in gates {
        let el = match *g {
            Gate::Bs(a, b, t) => CircuitElement::BeamSplitter { modes: (a, b), transmittivity: t },
            Gate::Phase(a, p) => CircuitElement::PhaseShift { mode: a, angle: p },
            Gate::Sq(a, r) => {
                squeezers += 1;
                CircuitElement::OneModeSqueeze { mode: a, r }
            }
            Gate::Tms(a, b, r) => {
                squeezers += 1;
                CircuitElement::TwoModeSqueeze { modes: (a, b), r }
            }
            Gate::Loss(a, b, p) => qrepeater::lossy_channel(p, a, b).unwrap(),
            Gate::Mem(a, x, y, v) => {
                if n < 3 {
                    continue;
                }
                squeezers += 1;
                let c2 = C64::new(v[2], v[3]);
                let (b2, c1, c3) = (v[0].abs(), v[1], v[4].abs());
                let b1 = (1.0 + c1 * c1 + c2.norm_sqr() + c3 * c3 - b2 * b2).sqrt() * v[5].signum();
                let memory = ReducedMemory::new(b1, b2, c1, c2, c3).unwrap();
                CircuitElement::Memory { memory, input: a, aux: (x, y), input_phase: v[5] * 10.0 }
            }
        };
        c.push(el);
    }
    // Keep the photon content low enough for a converged brute-force run.
    (squeezers <= 2).then_some(c)
}

