//! Closed-form results used to validate the numerical engine: recurrence
//! solutions, perturbative Bell parameters, distance thresholds and the
//! loss-only repeater rate.

use std::f64::consts::{LN_2, PI, SQRT_2};

use crate::error::{Error, Result};

/// Maximal Bell parameter `2 sqrt 2`.
pub const S_MAX: f64 = 2.0 * SQRT_2;
/// Relative deficit at which `S` reaches the classical bound 2.
pub const CLASSICAL_DEFICIT: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    /// Photon-number resolving, projects on `|1><1|`.
    Counting,
    /// Threshold detector, projects on `1 - |0><0|`.
    NonCounting,
}

// Ideal-memory recurrence.

/// One connection step of the `(f, g)` recurrence for squeezing-only memories.
pub fn f_g_recurrence(f: f64, g: f64) -> (f64, f64) {
    let f_next = f / (2.0 - f);
    let g_next = (4.0 * f * (4.0 + g) + 11.0 * f.powi(3) - 20.0 * f * f - 4.0)
        / (2.0 * f * (f - 2.0).powi(2));
    (f_next, g_next)
}

/// `f_n = 1/(2^n + 1)` and the matching `g_n`.
pub fn f_g_solution(n: u32) -> (f64, f64) {
    let p = 2f64.powi(n as i32);
    let f = 1.0 / (p + 1.0);
    let g = (-2.0 * p.powi(3) + 6.0 * p * p + 5.0 * p - 9.0) / (6.0 * (p + 1.0).powi(2));
    (f, g)
}

/// Bell parameter of the squeezing-only state with coefficients `f, g`.
pub fn s_exact_c1(f: f64, g: f64, c1: f64) -> Result<f64> {
    let c2 = c1 * c1;
    let num = (f - c2 * g).powi(2);
    let den = f * f - (2.0 * f * g - (2.0 * f - 1.0).powi(2)) * c2
        - ((2.0 * f - 1.0 + g).powi(2) - 2.0 * g * g) * c2 * c2;
    if !(den > 0.0) {
        return Err(Error::InvalidParameter(format!("non-positive denominator {den}")));
    }
    Ok(S_MAX * num / den)
}

/// Lowest order in `c1`: `S = 2 sqrt 2 (1 - (L/L0 - 1)^2 c1^2)`.
pub fn s_ideal_recurrence(l_over_l0: f64, c1: f64) -> f64 {
    S_MAX * (1.0 - (l_over_l0 - 1.0).powi(2) * c1 * c1)
}

// Perturbative Bell parameters.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbativeInputs {
    pub l_over_l0: f64,
    pub p_gen: f64,
    pub p_con: f64,
    pub c1: f64,
    pub c2_mag: f64,
    pub c3: f64,
    /// Dark counts per detector and window; connection or generation
    /// depending on the formula.
    pub n_dc: f64,
    pub r: f64,
    pub detector: Detector,
}

impl Default for PerturbativeInputs {
    fn default() -> Self {
        Self {
            l_over_l0: 1.0,
            p_gen: 0.0,
            p_con: 0.0,
            c1: 0.0,
            c2_mag: 0.0,
            c3: 0.0,
            n_dc: 0.0,
            r: 0.0,
            detector: Detector::NonCounting,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbativeS {
    pub s: f64,
    /// `1 - S / 2 sqrt 2`.
    pub deficit: f64,
    /// False when the expansion is outside its regime; the value is still reported.
    pub valid: bool,
}

impl PerturbativeS {
    fn from_deficit(deficit: f64, extra_valid: bool) -> Self {
        Self { s: S_MAX * (1.0 - deficit), deficit, valid: extra_valid && deficit < 1.0 }
    }
}

/// Memory imperfections and connection dark counts.
pub fn s_memory_darkcount(x: &PerturbativeInputs) -> PerturbativeS {
    let l = x.l_over_l0;
    let p = x.p_con;
    let noise = x.c2_mag.powi(2) + x.c3.powi(2) + x.n_dc / (1.0 - p);
    let deficit = match x.detector {
        Detector::NonCounting => {
            (l - 1.0).powi(2) * (1.0 + p).powi(2) * x.c1.powi(2) + 4.0 * l * l * (1.0 + p) * noise
        }
        Detector::Counting => l * l * p * p * x.c1.powi(2) + 8.0 * l * l * p * noise,
    };
    PerturbativeS::from_deficit(deficit, x.n_dc < 1.0 - p)
}

/// Finite PDC squeezing `r`.
pub fn s_finite_squeezing(x: &PerturbativeInputs) -> PerturbativeS {
    let l2 = x.l_over_l0.powi(2);
    let r2 = x.r * x.r;
    let deficit = match x.detector {
        Detector::NonCounting => 8.0 * l2 * (1.0 + x.p_gen) / 2.0 * (1.0 + x.p_con) / 2.0 * r2,
        Detector::Counting => 8.0 * l2 * x.p_gen * x.p_con * r2,
    };
    PerturbativeS::from_deficit(deficit, true)
}

/// Dark counts in entanglement generation.
pub fn s_generation_darkcount(x: &PerturbativeInputs) -> PerturbativeS {
    let l2 = x.l_over_l0.powi(2);
    let deficit = match x.detector {
        Detector::NonCounting => 4.0 * l2 * (1.0 + x.p_gen) / (1.0 - x.p_gen) * x.n_dc,
        Detector::Counting => 8.0 * l2 * x.p_gen / (1.0 - x.p_gen) * x.n_dc,
    };
    PerturbativeS::from_deficit(deficit, x.n_dc < 1.0 - x.p_gen)
}

/// Sum of the independent deficits with separate generation and connection
/// dark counts. Cross terms are not included.
pub fn s_combined(x: &PerturbativeInputs, n_dc_gen: f64, n_dc_con: f64) -> PerturbativeS {
    let mem = s_memory_darkcount(&PerturbativeInputs { n_dc: n_dc_con, ..*x });
    let sq = s_finite_squeezing(x);
    let gen = s_generation_darkcount(&PerturbativeInputs { n_dc: n_dc_gen, ..*x });
    PerturbativeS::from_deficit(
        mem.deficit + sq.deficit + gen.deficit,
        mem.valid && sq.valid && gen.valid,
    )
}

// Thresholds.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdKind {
    /// Maximal `L/L0` for PDC squeezing `r`.
    Squeezing,
    /// Maximal `L/L0` for generation dark counts.
    GenDarkcount,
    /// Maximal `L/L0` for a two-pass memory with wall reflection `xi`.
    TwoPassXi,
    /// Largest tolerated one-pass squeezing factor `s` at the given `L/L0`.
    OnePassS,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    /// The error vanishes (infinite distance) or dominates (zero distance).
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub p_gen: f64,
    pub p_con: f64,
    pub r: f64,
    pub n_dc: f64,
    pub xi: f64,
    pub l_over_l0: f64,
    pub detector: Detector,
}

/// Solves the matching perturbative formula for `S = 2`.
pub fn max_distance(kind: ThresholdKind, p: &ThresholdParams) -> Threshold {
    let counting = p.detector == Detector::Counting;
    // Deficit = coefficient * (L/L0)^2.
    let coefficient = match kind {
        ThresholdKind::Squeezing if counting => 8.0 * p.p_gen * p.p_con * p.r * p.r,
        ThresholdKind::Squeezing => 2.0 * (1.0 + p.p_gen) * (1.0 + p.p_con) * p.r * p.r,
        ThresholdKind::GenDarkcount if counting => 8.0 * p.p_gen / (1.0 - p.p_gen) * p.n_dc,
        ThresholdKind::GenDarkcount => 4.0 * (1.0 + p.p_gen) / (1.0 - p.p_gen) * p.n_dc,
        ThresholdKind::TwoPassXi if counting => {
            8.0 * p.p_con * crate::memories::WALL_REFLECTION_FACTOR * p.xi
        }
        ThresholdKind::TwoPassXi => 4.0 * (1.0 + p.p_con) * crate::memories::WALL_REFLECTION_FACTOR * p.xi,
        ThresholdKind::OnePassS => {
            // |c2|^2 = s/4 at L/L0: solve for s.
            let per_s = if counting {
                8.0 * p.p_con / 4.0
            } else {
                4.0 * (1.0 + p.p_con) / 4.0
            } * p.l_over_l0.powi(2);
            let value = CLASSICAL_DEFICIT / per_s;
            return Threshold { value, degenerate: !value.is_finite() || per_s == 0.0 };
        }
    };
    let value = (CLASSICAL_DEFICIT / coefficient).sqrt();
    Threshold { value, degenerate: !value.is_finite() || value == 0.0 || coefficient == 0.0 }
}

pub fn to_db(s: f64) -> f64 {
    10.0 * s.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossTerm {
    Negligible,
    Dominant,
}

/// Compares generation dark counts with the pair-production probability:
/// the ratio `n_dc / r^2` decides whether cross terms matter.
pub fn cross_term_dominance(n_dc: f64, r: f64) -> Result<(CrossTerm, f64)> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("cross-term ratio needs r > 0".into()));
    }
    let ratio = n_dc / (r * r);
    let flag = if ratio > 1.0 { CrossTerm::Dominant } else { CrossTerm::Negligible };
    Ok((flag, ratio))
}

// Loss-only rate.

/// `eta_n = 1 / (1 - p + 2^n p)`.
pub fn eta_solution(n: u32, p_con: f64) -> f64 {
    1.0 / (1.0 - p_con + 2f64.powi(n as i32) * p_con)
}

pub fn eta_recurrence(eta: f64, p_con: f64) -> f64 {
    eta / (2.0 - eta * (1.0 - p_con))
}

/// Connection success probability for two loss-only pairs.
pub fn connection_success(eta: f64, p_con: f64) -> f64 {
    0.5 * (1.0 - p_con) * eta * (2.0 - eta * (1.0 - p_con))
}

/// `prod_{i=1}^n eta_i`.
pub fn eta_product(n: u32, p_con: f64) -> f64 {
    (1..=n).map(|i| eta_solution(i, p_con)).product()
}

/// `ln prod eta_i`; the product underflows beyond `n ~ 40` at large `p_con`.
pub fn ln_eta_product(n: u32, p_con: f64) -> f64 {
    (1..=n).map(|i| eta_solution(i, p_con).ln()).sum()
}

/// Dilogarithm estimate of [`eta_product`].
pub fn eta_product_estimate(n: u32, p_con: f64) -> Result<f64> {
    Ok(ln_eta_product_estimate(n, p_con)?.exp())
}

pub fn ln_eta_product_estimate(n: u32, p_con: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p_con) {
        return Err(Error::InvalidParameter(format!("p_con {p_con} outside [0, 1)")));
    }
    let a = p_con / (p_con - 1.0);
    let upper = dilog(2f64.powf(n as f64 + 0.5) * a)?;
    let lower = dilog(SQRT_2 * a)?;
    Ok((upper - lower) / LN_2 - n as f64 * (1.0 - p_con).ln())
}

/// Dimensionless rate `R tau` without dark counts or memory errors.
///
/// For non-counting detectors the distance exponent is `-log2(3/2)`.
pub fn rate_closed_form(r: f64, p_gen: f64, p_con: f64, l_over_l0: f64, detector: Detector) -> Result<f64> {
    if !(0.0..1.0).contains(&p_con) {
        return Err(Error::InvalidParameter(format!("p_con {p_con} outside [0, 1)")));
    }
    if !(l_over_l0 >= 1.0) {
        return Err(Error::InvalidParameter(format!("L/L0 = {l_over_l0} below 1")));
    }
    let (a, exponent) = match detector {
        Detector::Counting => (p_con / (p_con - 1.0), -(3f64).log2()),
        Detector::NonCounting => ((p_con + 1.0) / (p_con - 1.0), -(1.5f64).log2()),
    };
    let r_prime = ((dilog(a * SQRT_2 * l_over_l0)? - dilog(a * SQRT_2)?) / LN_2).exp();
    Ok(2.0 / 3.0 * r * r * (1.0 - p_gen) * l_over_l0.powf(exponent) * r_prime)
}

/// Finite squeezing that leaves a relative `S` deficit `deficit` at `L/L0`.
pub fn squeezing_for_deficit(deficit: f64, p_gen: f64, p_con: f64, l_over_l0: f64, detector: Detector) -> f64 {
    let per_r2 = match detector {
        Detector::NonCounting => 2.0 * (1.0 + p_gen) * (1.0 + p_con),
        Detector::Counting => 8.0 * p_gen * p_con,
    } * l_over_l0.powi(2);
    (deficit / per_r2).sqrt()
}

// Dilogarithm.

/// Real dilogarithm `Li2(x) = -int_0^x ln(1-t)/t dt` for `x <= 1`.
pub fn dilog(x: f64) -> Result<f64> {
    const PI2_6: f64 = PI * PI / 6.0;
    if x.is_nan() || x > 1.0 {
        return Err(Error::InvalidParameter(format!("dilog argument {x} > 1")));
    }
    if x == 1.0 {
        return Ok(PI2_6);
    }
    if x < -1.0 {
        // Inversion.
        let l = (-x).ln();
        return Ok(-PI2_6 - 0.5 * l * l - dilog(1.0 / x)?);
    }
    if x < -0.5 {
        // Landen: x/(x-1) lies in [1/3, 1/2].
        let l = (1.0 - x).ln();
        return Ok(-series(x / (x - 1.0)) - 0.5 * l * l);
    }
    if x > 0.5 {
        // Reflection.
        return Ok(PI2_6 - x.ln() * (1.0 - x).ln() - series(1.0 - x));
    }
    Ok(series(x))
}

/// `sum x^k / k^2` for `|x| <= 1/2`.
fn series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut power = x;
    for k in 1..200 {
        let term = power / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
        power *= x;
    }
    sum
}
