//! Batch front end for the repeater simulator.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Report};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "qrepeater", version, about = "DLCZ repeater simulation with Gaussian memories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// S, postselection probability and rate after every connection level.
    Simulate(Common),
    /// `simulate` over the values of one parameter.
    Sweep(Common),
    /// Evaluate a closed-form result by name.
    Analytic {
        /// One of: memory-noise, squeezing, gen-darkcount, combined, ideal-exact,
        /// ideal-leading, threshold-squeezing, threshold-darkcount,
        /// threshold-reflection, threshold-one-pass, rate-closed-form,
        /// squeezing-for-deficit, eta, dilog, cross-term.
        formula: String,
        #[command(flatten)]
        common: Common,
    },
    /// Numeric against summed perturbative S per level.
    Compare(Common),
    /// Exact, simplified, closed-form and Monte Carlo rates per level.
    Rate(Common),
    /// Monte Carlo waiting times per level.
    RateMc(Common),
}

#[derive(Args, Default)]
struct Common {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the CSV here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write the final pair state as CSV.
    #[arg(long, value_name = "PATH")]
    dump_state: Option<PathBuf>,
    /// Exit with code 4 when a validity flag is down.
    #[arg(long)]
    strict: bool,
    /// Generic override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    cutoff: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long = "p-gen", visible_alias = "pgen")]
    p_gen: Option<String>,
    #[arg(long = "p-con", visible_alias = "pcon")]
    p_con: Option<String>,
    #[arg(long = "n-dc-gen")]
    n_dc_gen: Option<String>,
    #[arg(long = "n-dc-con")]
    n_dc_con: Option<String>,
    /// counting or non-counting.
    #[arg(long)]
    detector: Option<String>,
    /// Number of connection levels.
    #[arg(long)]
    n: Option<String>,
    /// ideal, squeezing, generic, two-pass or one-pass.
    #[arg(long)]
    memory: Option<String>,
    #[arg(long)]
    c1: Option<String>,
    #[arg(long)]
    c2: Option<String>,
    #[arg(long = "c2-phase")]
    c2_phase: Option<String>,
    #[arg(long)]
    c3: Option<String>,
    #[arg(long)]
    b2: Option<String>,
    /// Phase rotation of the memory input mode, radians.
    #[arg(long = "input-phase", allow_hyphen_values = true)]
    input_phase: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    xi: Option<String>,
    #[arg(long)]
    g: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    /// augmented or virtual-source.
    #[arg(long = "dark-model")]
    dark_model: Option<String>,
    #[arg(long = "ps-detector")]
    ps_detector: Option<String>,
    /// Postselection loss, or `auto` for p_con.
    #[arg(long = "ps-loss")]
    ps_loss: Option<String>,
    #[arg(long = "ps-readout", num_args = 0..=1, default_missing_value = "true")]
    ps_readout: Option<String>,
    #[arg(long = "leak-tol")]
    leak_tol: Option<String>,
    #[arg(long = "optimize-angles", num_args = 0..=1, default_missing_value = "true")]
    optimize_angles: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    /// Fixed relative S deficit for `rate`.
    #[arg(long = "fixed-deficit")]
    fixed_deficit: Option<String>,
    /// Annotate `compare` rows with the cross-term regime.
    #[arg(long = "cross-term", num_args = 0..=1, default_missing_value = "true")]
    cross_term: Option<String>,
    #[arg(long = "sweep-param")]
    sweep_param: Option<String>,
    /// Comma-separated values.
    #[arg(long = "sweep-values")]
    sweep_values: Option<String>,
    /// Dilogarithm argument.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Distance in elementary links for `analytic`.
    #[arg(long = "L", visible_alias = "l-over-l0")]
    l_over_l0: Option<String>,
}

impl Common {
    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("seed", &self.seed),
            ("cutoff", &self.cutoff),
            ("r", &self.r),
            ("p_gen", &self.p_gen),
            ("p_con", &self.p_con),
            ("n_dc_gen", &self.n_dc_gen),
            ("n_dc_con", &self.n_dc_con),
            ("detector", &self.detector),
            ("n", &self.n),
            ("memory", &self.memory),
            ("c1", &self.c1),
            ("c2", &self.c2),
            ("c2_phase", &self.c2_phase),
            ("c3", &self.c3),
            ("b2", &self.b2),
            ("input_phase", &self.input_phase),
            ("kappa", &self.kappa),
            ("xi", &self.xi),
            ("g", &self.g),
            ("s", &self.s),
            ("tau", &self.tau),
            ("dark_model", &self.dark_model),
            ("ps_detector", &self.ps_detector),
            ("ps_loss", &self.ps_loss),
            ("ps_readout", &self.ps_readout),
            ("leak_tol", &self.leak_tol),
            ("optimize_angles", &self.optimize_angles),
            ("trials", &self.trials),
            ("fixed_deficit", &self.fixed_deficit),
            ("cross_term", &self.cross_term),
            ("sweep_param", &self.sweep_param),
            ("sweep_values", &self.sweep_values),
            ("x", &self.x),
            ("l_over_l0", &self.l_over_l0),
        ]
    }

    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.load(path).map_err(|e| CliError::Config(e.0))?;
        }
        for (key, value) in self.flags() {
            if let Some(v) = value {
                cfg.set(key, v).map_err(|e| CliError::Config(format!("--{}: {e}", key.replace('_', "-"))))?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, found '{kv}'")))?;
            cfg.set(k.trim(), v).map_err(|e| CliError::Config(format!("--set {}: {e}", k.trim())))?;
        }
        Ok(cfg)
    }
}

fn write(path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let (name, common, formula) = match &cli.command {
        Command::Simulate(c) => ("simulate", c, None),
        Command::Sweep(c) => ("sweep", c, None),
        Command::Analytic { formula, common } => ("analytic", common, Some(formula.as_str())),
        Command::Compare(c) => ("compare", c, None),
        Command::Rate(c) => ("rate", c, None),
        Command::RateMc(c) => ("rate-mc", c, None),
    };
    let cfg = common.resolve()?;
    let report: Report = match (name, formula) {
        ("simulate", _) => commands::simulate(&cfg)?,
        ("sweep", _) => commands::sweep(&cfg)?,
        ("analytic", Some(f)) => commands::analytic(&cfg, f)?,
        ("compare", _) => commands::compare(&cfg)?,
        ("rate", _) => commands::rate_table(&cfg)?,
        _ => commands::rate_mc(&cfg)?,
    };
    let title = match formula {
        Some(f) => format!("{name} {f}"),
        None => name.to_string(),
    };
    write(common.output.as_ref(), &output::render(&title, &cfg, &report.table))?;
    if let Some(path) = &common.dump_state {
        let rho = report
            .state
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("{name} produces no state to dump")))?;
        write(Some(path), &output::render_state(&title, &cfg, rho))?;
    }
    Ok(if common.strict { report.invalid } else { Vec::new() })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(invalid) if invalid.is_empty() => ExitCode::SUCCESS,
        Ok(invalid) => {
            for m in invalid {
                eprintln!("strict: {m}");
            }
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
