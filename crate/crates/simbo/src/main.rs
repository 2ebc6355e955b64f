use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use simbo::harness::{
    asymptotic_errors, emit, preset, run_experiment, suite, EmitFormat, ExperimentConfig,
};
use simbo::imc::{synthesize, SynthesisConfig};
use simbo::problems::{random_b_bar, InternalModel, SignalKind};
use simbo::rls::RlsState;
use simbo::Error;

#[derive(Parser)]
#[command(name = "simbo", version, about = "Online optimization benchmark runner", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config file and emit its trace CSV.
    #[command(after_help = "\
Config keys (TOML): name, seed, horizon; [problem] kind=quadratic|tv_hessian, \
n, lambda_min, lambda_max, ts; [problem.signal] kind=sine|ramp|sine_ramp|\
sine_squared|constant|switch, omega0, omega1, first/second/k_switch; \
[algorithms] ogd, control_based, simbo; [ogd] h; [rls] m, alpha, beta; \
[imc] grid_points, stability_margin, target_radius_schedule, target_pattern; \
[supervisor] theta, patience, change_c, change_floor, burn_in. \
Omitted keys take the documented defaults; `suite` writes fully resolved \
configs next to each trace.")]
    Run {
        /// Path to the experiment config (see `suite` outputs for examples).
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for the trace CSV and resolved config.
        #[arg(long, default_value = "traces")]
        out: PathBuf,
    },
    /// Run a named preset group: quadratic, switching, tv-hessian, or all.
    Suite {
        name: String,
        /// Override the preset seeds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "traces")]
        out: PathBuf,
    },
    /// Identify the internal model of a raw signal and print the estimate
    /// trajectory.
    Identify {
        /// Signal kind: sine, ramp, sine_ramp, sine_squared, constant.
        #[arg(long)]
        signal: String,
        #[arg(long, default_value_t = 1.0)]
        omega0: f64,
        #[arg(long, default_value_t = 10.0)]
        omega1: f64,
        /// Model order; defaults to the signal's true order.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        ts: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        alpha: f64,
        #[arg(long, default_value_t = 1e4)]
        beta: f64,
    },
    /// Synthesize a verified feedback row for given model coefficients and
    /// eigenvalue interval, and report the achieved margin.
    Synth {
        /// Comma-separated low-order coefficients d_0,...,d_{m-1}.
        #[arg(long)]
        coeffs: String,
        #[arg(long)]
        lambda_min: f64,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long, default_value_t = 101)]
        grid_points: usize,
        #[arg(long, default_value_t = 0.02)]
        stability_margin: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            run_and_emit(&cfg, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Suite { name, seed, out } => {
            let mut configs = suite(&name).or_else(|_| preset(&name).map(|c| vec![c]))?;
            println!("{:<26} {:>14} {:>14} {:>14}", "experiment", "ogd", "control_based", "simbo");
            for cfg in &mut configs {
                if let Some(seed) = seed {
                    cfg.seed = seed;
                }
                run_and_emit(cfg, &out)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Identify { signal, omega0, omega1, m, steps, ts, seed, alpha, beta } => {
            let kind = match signal.as_str() {
                "sine" => SignalKind::Sine { omega0 },
                "ramp" => SignalKind::Ramp { b_bar: random_b_bar(1, seed) },
                "sine_ramp" => SignalKind::SineRamp { omega0, b_bar: random_b_bar(1, seed) },
                "sine_squared" => SignalKind::SineSquared { omega1 },
                "constant" => SignalKind::Constant { b_bar: random_b_bar(1, seed) },
                other => return Err(Error::Config(format!("unknown signal kind '{other}'"))),
            };
            let order = m.unwrap_or_else(|| kind.model_order());
            let mut rls = RlsState::init(order, 1, beta, alpha)?;
            if let Ok(truth) = kind.true_denominator(ts) {
                println!("# true d = {:?}", truth.coefficients());
            }
            println!("{:<6} {:>14} estimate", "k", "residual");
            for k in 0..steps {
                let y = kind.value(k, ts, 1);
                if let Some(phi) = rls.regressor_now() {
                    let r = rls.update(&y, &phi);
                    let d: Vec<f64> = rls.estimate().iter().copied().collect();
                    println!("{:<6} {:>14.6e} {:?}", k, r.e, d);
                }
                rls.push(&y);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { coeffs, lambda_min, lambda_max, grid_points, stability_margin } => {
            let d: Result<Vec<f64>, _> =
                coeffs.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let d = d.map_err(|e| Error::Config(format!("bad coefficient list: {e}")))?;
            let model = InternalModel::new(d)?;
            let cfg = SynthesisConfig { grid_points, stability_margin, ..Default::default() };
            match synthesize(&model, lambda_min, lambda_max, 1, &cfg) {
                Ok(ctrl) => {
                    let k: Vec<f64> = ctrl.gain_row().iter().copied().collect();
                    println!("gain row K = {k:?}");
                    println!(
                        "max spectral radius over [{lambda_min}, {lambda_max}] grid: {:.6e}",
                        ctrl.margin()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(Error::Infeasible { .. }) => {
                    println!(
                        "infeasible: no target radius verifies over [{lambda_min}, {lambda_max}]"
                    );
                    Ok(ExitCode::from(2))
                }
                Err(e) => Err(e),
            }
        }
    }
}

fn run_and_emit(cfg: &ExperimentConfig, out: &PathBuf) -> Result<(), Error> {
    let records = run_experiment(cfg)?;
    std::fs::create_dir_all(out)?;
    emit(&records, EmitFormat::Csv, &out.join(format!("{}.csv", cfg.name)))?;
    std::fs::write(out.join(format!("{}.toml", cfg.name)), cfg.to_toml())?;
    let errors = asymptotic_errors(&records);
    let lookup = |name: &str| {
        errors
            .iter()
            .find(|(a, _)| a.name() == name)
            .map(|(_, e)| format!("{e:>14.3e}"))
            .unwrap_or_else(|| format!("{:>14}", "-"))
    };
    println!(
        "{:<26} {} {} {}",
        cfg.name,
        lookup("ogd"),
        lookup("control_based"),
        lookup("simbo")
    );
    Ok(())
}
