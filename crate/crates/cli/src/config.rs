//! Flat `key = value` run configuration.

use std::fmt;
use std::path::Path;

use num_complex::Complex64 as C64;
use qrepeater::memories::{self, OnePassParams, TwoPassParams};
use qrepeater::{DarkCountModel, Detector, ReducedMemory, RepeaterParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryKind {
    Ideal,
    Squeezing,
    Generic,
    TwoPass,
    OnePass,
}

/// Every tunable quantity, with defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub r: f64,
    pub p_gen: f64,
    pub p_con: f64,
    pub n_dc_gen: f64,
    pub n_dc_con: f64,
    pub detector: Detector,
    pub n: u32,
    pub memory: MemoryKind,
    pub c1: f64,
    pub c2: f64,
    pub c2_phase: f64,
    pub c3: f64,
    pub b2: f64,
    /// Phase rotation of the memory input mode at connection.
    pub input_phase: f64,
    pub kappa: f64,
    pub xi: f64,
    pub g: f64,
    pub s: f64,
    pub tau: f64,
    pub cutoff: usize,
    pub dark_model: DarkCountModel,
    pub ps_detector: Detector,
    /// Negative means "same as p_con".
    pub ps_loss: f64,
    pub ps_readout: bool,
    pub leak_tol: f64,
    pub optimize_angles: bool,
    pub seed: u64,
    pub trials: usize,
    /// Fixed relative S deficit for the rate command; 0 disables it.
    pub fixed_deficit: f64,
    pub cross_term: bool,
    pub sweep_param: String,
    pub sweep_values: Vec<String>,
    /// Argument of the dilogarithm in the analytic command.
    pub x: f64,
    /// Distance for the analytic command; defaults to `2^n`.
    pub l_over_l0: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = RepeaterParams::default();
        Self {
            r: p.r,
            p_gen: p.p_gen,
            p_con: p.p_con,
            n_dc_gen: p.n_dc_gen,
            n_dc_con: p.n_dc_con,
            detector: p.detector,
            n: p.n,
            memory: MemoryKind::Ideal,
            c1: 0.0,
            c2: 0.0,
            c2_phase: 0.0,
            c3: 0.0,
            b2: 0.0,
            input_phase: 0.0,
            kappa: 2.0,
            xi: 0.0,
            g: 1.0,
            s: 1.0,
            tau: p.tau,
            cutoff: p.cutoff,
            dark_model: p.dark_model,
            ps_detector: p.ps_detector,
            ps_loss: -1.0,
            ps_readout: p.ps_readout,
            leak_tol: p.leak_tol,
            optimize_angles: false,
            seed: 1,
            trials: 1_000,
            fixed_deficit: 0.0,
            cross_term: false,
            sweep_param: String::new(),
            sweep_values: Vec::new(),
            x: 0.0,
            l_over_l0: 0.0,
        }
    }
}

/// Keys accepted by [`RunConfig::set`], in header order.
pub const KEYS: &[&str] = &[
    "r", "p_gen", "p_con", "n_dc_gen", "n_dc_con", "detector", "n", "memory", "c1", "c2", "c2_phase",
    "c3", "b2", "input_phase", "kappa", "xi", "g", "s", "tau", "cutoff", "dark_model", "ps_detector", "ps_loss",
    "ps_readout", "leak_tol", "optimize_angles", "seed", "trials", "fixed_deficit", "cross_term",
    "sweep_param", "sweep_values", "x", "l_over_l0",
];

fn number(value: &str) -> Result<f64, String> {
    let v: f64 = value.parse().map_err(|_| format!("'{value}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{value}' is not finite"))
    }
}

fn boolean(value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("'{value}' is not a boolean")),
    }
}

fn detector(value: &str) -> Result<Detector, String> {
    match value {
        "counting" => Ok(Detector::Counting),
        "non-counting" | "noncounting" => Ok(Detector::NonCounting),
        _ => Err(format!("'{value}' is not a detector class (counting, non-counting)")),
    }
}

fn detector_name(d: Detector) -> &'static str {
    match d {
        Detector::Counting => "counting",
        Detector::NonCounting => "non-counting",
    }
}

fn probability(value: &str) -> Result<f64, String> {
    let v = number(value)?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} outside [0, 1)"))
    }
}

fn non_negative(value: &str) -> Result<f64, String> {
    let v = number(value)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} is negative"))
    }
}

impl RunConfig {
    /// Assigns one key; the message names the offending value only.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key {
            "r" => self.r = non_negative(value)?,
            "p_gen" => self.p_gen = probability(value)?,
            "p_con" => self.p_con = probability(value)?,
            "n_dc_gen" => self.n_dc_gen = non_negative(value)?,
            "n_dc_con" => self.n_dc_con = non_negative(value)?,
            "detector" => self.detector = detector(value)?,
            "n" => {
                let n: u32 = value.parse().map_err(|_| format!("'{value}' is not a level count"))?;
                if n > 30 {
                    return Err(format!("n = {n} exceeds 30"));
                }
                self.n = n;
            }
            "memory" => {
                self.memory = match value {
                    "ideal" => MemoryKind::Ideal,
                    "squeezing" => MemoryKind::Squeezing,
                    "generic" => MemoryKind::Generic,
                    "two-pass" => MemoryKind::TwoPass,
                    "one-pass" => MemoryKind::OnePass,
                    _ => {
                        return Err(format!(
                            "'{value}' is not a memory model (ideal, squeezing, generic, two-pass, one-pass)"
                        ))
                    }
                }
            }
            "c1" => self.c1 = number(value)?,
            "c2" => self.c2 = non_negative(value)?,
            "c2_phase" => self.c2_phase = number(value)?,
            "c3" => self.c3 = non_negative(value)?,
            "b2" => self.b2 = non_negative(value)?,
            "input_phase" => self.input_phase = number(value)?,
            "kappa" => self.kappa = number(value)?,
            "xi" => self.xi = probability(value)?,
            "g" => self.g = number(value)?,
            "s" => self.s = number(value)?,
            "tau" => {
                self.tau = number(value)?;
                if self.tau <= 0.0 {
                    return Err("tau must be positive".into());
                }
            }
            "cutoff" => {
                self.cutoff = value.parse().map_err(|_| format!("'{value}' is not a cutoff"))?;
                if self.cutoff == 0 || self.cutoff > 6 {
                    return Err(format!("cutoff {} outside 1..=6", self.cutoff));
                }
            }
            "dark_model" => {
                self.dark_model = match value {
                    "augmented" => DarkCountModel::Augmented,
                    "virtual-source" => DarkCountModel::VirtualSource,
                    _ => return Err(format!("'{value}' is not a dark-count model (augmented, virtual-source)")),
                }
            }
            "ps_detector" => self.ps_detector = detector(value)?,
            "ps_loss" => {
                self.ps_loss = if value == "auto" { -1.0 } else { probability(value)? };
            }
            "ps_readout" => self.ps_readout = boolean(value)?,
            "leak_tol" => self.leak_tol = non_negative(value)?,
            "optimize_angles" => self.optimize_angles = boolean(value)?,
            "seed" => self.seed = value.parse().map_err(|_| format!("'{value}' is not a seed"))?,
            "trials" => {
                self.trials = value.parse().map_err(|_| format!("'{value}' is not a trial count"))?;
                if self.trials == 0 {
                    return Err("trials must be >= 1".into());
                }
            }
            "fixed_deficit" => {
                self.fixed_deficit = non_negative(value)?;
                if self.fixed_deficit >= 1.0 {
                    return Err("fixed_deficit must be below 1".into());
                }
            }
            "cross_term" => self.cross_term = boolean(value)?,
            "sweep_param" => {
                if !value.is_empty() && (!KEYS.contains(&value) || value.starts_with("sweep")) {
                    return Err(format!("'{value}' is not a sweepable parameter"));
                }
                self.sweep_param = value.to_string();
            }
            "sweep_values" => {
                self.sweep_values =
                    value.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            }
            "x" => self.x = number(value)?,
            "l_over_l0" | "L" => self.l_over_l0 = non_negative(value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Reads a config file; errors carry the file name and line number.
    pub fn load(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), ConfigError> {
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| ConfigError(format!("{source}:{}: {msg}", i + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| at(format!("expected 'key = value', found '{line}'")))?;
            let key = key.trim();
            if seen.contains(&key.to_string()) {
                return Err(at(format!("duplicate key '{key}'")));
            }
            seen.push(key.to_string());
            self.set(key, value).map_err(|e| at(format!("{key}: {e}")))?;
        }
        Ok(())
    }

    pub fn memory(&self) -> qrepeater::Result<ReducedMemory> {
        match self.memory {
            MemoryKind::Ideal => Ok(memories::ideal()),
            MemoryKind::Squeezing => Ok(memories::squeezing_only(self.c1)),
            MemoryKind::Generic => {
                let c2 = C64::from_polar(self.c2, self.c2_phase);
                let b1_sq = 1.0 + self.c1 * self.c1 + c2.norm_sqr() + self.c3 * self.c3 - self.b2 * self.b2;
                if b1_sq < 0.0 {
                    return Err(qrepeater::Error::InvalidParameter(format!("b2 = {} too large for the other coefficients", self.b2)));
                }
                memories::generic(b1_sq.sqrt(), self.b2, self.c1, c2, self.c3)
            }
            MemoryKind::TwoPass => memories::two_pass(&TwoPassParams { kappa: self.kappa, xi: self.xi }),
            MemoryKind::OnePass => memories::one_pass(&OnePassParams { kappa: self.kappa, g: self.g, s: self.s }),
        }
    }

    pub fn params(&self) -> qrepeater::Result<RepeaterParams> {
        let p = RepeaterParams {
            r: self.r,
            p_gen: self.p_gen,
            p_con: self.p_con,
            n_dc_gen: self.n_dc_gen,
            n_dc_con: self.n_dc_con,
            detector: self.detector,
            n: self.n,
            memory: self.memory()?,
            memory_input_phase: self.input_phase,
            tau: self.tau,
            cutoff: self.cutoff,
            dark_model: self.dark_model,
            ps_detector: self.ps_detector,
            ps_loss: (self.ps_loss >= 0.0).then_some(self.ps_loss),
            ps_readout: self.ps_readout,
            leak_tol: self.leak_tol,
        };
        p.validate()?;
        Ok(p)
    }

    /// `(key, value)` for every key, in a form [`RunConfig::set`] accepts back.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "r" => self.r.to_string(),
                    "p_gen" => self.p_gen.to_string(),
                    "p_con" => self.p_con.to_string(),
                    "n_dc_gen" => self.n_dc_gen.to_string(),
                    "n_dc_con" => self.n_dc_con.to_string(),
                    "detector" => detector_name(self.detector).into(),
                    "n" => self.n.to_string(),
                    "memory" => match self.memory {
                        MemoryKind::Ideal => "ideal",
                        MemoryKind::Squeezing => "squeezing",
                        MemoryKind::Generic => "generic",
                        MemoryKind::TwoPass => "two-pass",
                        MemoryKind::OnePass => "one-pass",
                    }
                    .into(),
                    "c1" => self.c1.to_string(),
                    "c2" => self.c2.to_string(),
                    "c2_phase" => self.c2_phase.to_string(),
                    "input_phase" => self.input_phase.to_string(),
                    "c3" => self.c3.to_string(),
                    "b2" => self.b2.to_string(),
                    "kappa" => self.kappa.to_string(),
                    "xi" => self.xi.to_string(),
                    "g" => self.g.to_string(),
                    "s" => self.s.to_string(),
                    "tau" => self.tau.to_string(),
                    "cutoff" => self.cutoff.to_string(),
                    "dark_model" => match self.dark_model {
                        DarkCountModel::Augmented => "augmented",
                        DarkCountModel::VirtualSource => "virtual-source",
                    }
                    .into(),
                    "ps_detector" => detector_name(self.ps_detector).into(),
                    "ps_loss" if self.ps_loss < 0.0 => "auto".into(),
                    "ps_loss" => self.ps_loss.to_string(),
                    "ps_readout" => self.ps_readout.to_string(),
                    "leak_tol" => self.leak_tol.to_string(),
                    "optimize_angles" => self.optimize_angles.to_string(),
                    "seed" => self.seed.to_string(),
                    "trials" => self.trials.to_string(),
                    "fixed_deficit" => self.fixed_deficit.to_string(),
                    "cross_term" => self.cross_term.to_string(),
                    "sweep_param" => self.sweep_param.clone(),
                    "sweep_values" => self.sweep_values.join(","),
                    "x" => self.x.to_string(),
                    "l_over_l0" => self.l_over_l0.to_string(),
                    _ => unreachable!("key list and match out of sync"),
                };
                (k, v)
            })
            .collect()
    }

    /// Distance for single-point analytic evaluations.
    pub fn distance(&self) -> f64 {
        if self.l_over_l0 > 0.0 {
            self.l_over_l0
        } else {
            2f64.powi(self.n as i32)
        }
    }
}
