use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agc_cli::compare::{run_comparison, tune_controller};
use agc_cli::config::{load_config, ControllerKind, ControllerSpec, RunConfig};
use agc_cli::emit::{dat_trace, emit_all, gain_csv, read_gain_file};
use agc_cli::error::CliError;
use agc_core::{metrics, simulate, Area, Channel, GainMask, Matrix, Scenario};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "agc", version, about = "Two-area load frequency control: tuning and comparison")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tune every configured controller, simulate all scenarios and write the report.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the Riccati equation and print P, the residual and K.
    Lqr {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Which lqr_pi controller's weights to use; the first one by default.
        #[arg(long)]
        controller: Option<String>,
        #[arg(long)]
        gain_out: Option<PathBuf>,
    },
    /// Run one swarm and stream `iter,gbest_fitness`.
    Pso {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MaskArg::Full)]
        mask: MaskArg,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        gain_out: Option<PathBuf>,
    },
    /// Simulate a gain read from a 2 × 11 CSV file and print response metrics.
    Simulate {
        #[arg(long)]
        gain: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        area: u8,
        #[arg(long, default_value_t = 0.01)]
        magnitude: f64,
        #[arg(long, default_value_t = agc_core::simkit::DEFAULT_HORIZON)]
        horizon: f64,
        #[arg(long, default_value_t = agc_core::simkit::DEFAULT_DT)]
        dt: f64,
        #[arg(long)]
        band: Option<f64>,
        /// Directory for the trajectory CSV and `.dat` traces.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskArg {
    Full,
    Integral,
}

fn config_or_default(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn print_matrix(name: &str, m: &Matrix) {
    println!("{name} =");
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:>12.6}")).collect();
        println!("{}", row.join(" "));
    }
}

fn cmd_run(config: Option<PathBuf>, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = config_or_default(config.as_deref())?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    let out = out.unwrap_or_else(|| cfg.output_dir.clone());
    let mut progress = |name: &str, i: usize, f: f64| {
        if i == 1 || i.is_multiple_of(10) {
            eprintln!("[{name}] iteration {i}: gbest {f:e}");
        }
    };
    let report = run_comparison(&cfg, &mut progress)?;
    let written = emit_all(&cfg, &report, &out)?;
    for c in &report.controllers {
        println!("{} ({})", c.name, c.kind);
        print_matrix("K", c.gain.matrix());
    }
    println!("wrote {} files to {}", written.len(), out.display());
    Ok(())
}

fn cmd_lqr(config: Option<PathBuf>, controller: Option<String>, gain_out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = config_or_default(config.as_deref())?;
    let spec = cfg
        .controllers
        .iter()
        .find(|c| {
            matches!(c.kind, ControllerKind::LqrPi { .. }) && controller.as_ref().is_none_or(|n| &c.name == n)
        })
        .cloned()
        .unwrap_or_else(|| ControllerSpec {
            name: "lqr_pi".into(),
            kind: ControllerKind::LqrPi {
                q: Matrix::identity(11),
                r: Matrix::identity(2),
            },
        });
    if let Some(name) = &controller {
        if &spec.name != name {
            return Err(CliError::invalid("controller", format!("no lqr_pi controller named `{name}`")));
        }
    }
    let ControllerKind::LqrPi { q, r } = &spec.kind else { unreachable!() };
    let model = cfg.model.build()?;
    let sol = agc_core::solve_care(&model.a, &model.b, q, r).map_err(|e| CliError::Solver {
        controller: spec.name.clone(),
        message: e.to_string(),
    })?;
    let gain = agc_core::lqr_gain(&sol, &model.b, r).map_err(|e| CliError::Solver {
        controller: spec.name.clone(),
        message: e.to_string(),
    })?;
    print_matrix("P", &sol.p);
    println!("residual = {:e}", sol.residual);
    println!("integration_steps = {}, newton_steps = {}", sol.iterations, sol.newton_steps);
    print_matrix("K", gain.matrix());
    if let Some(p) = gain_out {
        write_text(&p, &gain_csv(gain.matrix()))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_pso(
    config: Option<PathBuf>,
    mask: MaskArg,
    population: Option<usize>,
    iterations: Option<usize>,
    seed: Option<u64>,
    gain_out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = config_or_default(config.as_deref())?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    let wanted = match mask {
        MaskArg::Full => GainMask::Full,
        MaskArg::Integral => GainMask::IntegralOnly,
    };
    // Start from the configured swarm of that kind so config overrides apply.
    let mut swarm = cfg
        .controllers
        .iter()
        .find_map(|c| match (&c.kind, wanted) {
            (ControllerKind::PsoK(s), GainMask::Full) | (ControllerKind::Integral(s), GainMask::IntegralOnly) => {
                Some(s.clone())
            }
            _ => None,
        })
        .unwrap_or_else(|| {
            let mut s = agc_core::SwarmConfig { seed: cfg.seed, ..Default::default() };
            if wanted == GainMask::IntegralOnly {
                s.range_lo = 0.0;
            }
            s
        });
    if let Some(n) = population {
        swarm.population = n;
    }
    if let Some(n) = iterations {
        swarm.iterations = n;
    }
    let spec = ControllerSpec {
        name: match wanted {
            GainMask::Full => "pso_k".into(),
            GainMask::IntegralOnly => "integral".into(),
        },
        kind: match wanted {
            GainMask::Full => ControllerKind::PsoK(swarm),
            GainMask::IntegralOnly => ControllerKind::Integral(swarm),
        },
    };
    let model = cfg.model.build()?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let _ = writeln!(lock, "iter,gbest_fitness");
    let mut progress = |_: &str, i: usize, f: f64| {
        let _ = writeln!(lock, "{i},{f:e}");
        let _ = lock.flush();
    };
    let tuned = tune_controller(&cfg, &model, &spec, &mut progress)?;
    drop(lock);
    print_matrix("K", tuned.gain.matrix());
    if let Some(p) = gain_out {
        write_text(&p, &gain_csv(tuned.gain.matrix()))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    gain: PathBuf,
    config: Option<PathBuf>,
    area: u8,
    magnitude: f64,
    horizon: f64,
    dt: f64,
    band: Option<f64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = config_or_default(config.as_deref())?;
    let k = read_gain_file(&gain)?;
    let area = Area::from_number(area).ok_or_else(|| CliError::invalid("area", "must be 1 or 2"))?;
    let band = band.unwrap_or(cfg.settling_band);
    if !(band.is_finite() && band > 0.0) {
        return Err(CliError::invalid("band", "must be positive"));
    }
    let scenario = Scenario::step(area, magnitude).with_horizon(horizon).with_dt(dt);
    scenario.validate().map_err(|e| CliError::invalid("scenario", e.to_string()))?;
    let model = cfg.model.build()?;
    let name = gain.display().to_string();
    let solver = |e: agc_core::simkit::SimError| CliError::Solver {
        controller: name.clone(),
        message: e.to_string(),
    };
    let traj = simulate(&model, &k, &scenario).map_err(solver)?;
    if let Some(t) = traj.diverged_at {
        return Err(CliError::Solver {
            controller: name.clone(),
            message: format!("closed loop diverged at t = {t} s"),
        });
    }
    println!("channel,undershoot,overshoot,settling,ise");
    for ch in Channel::ALL {
        let m = metrics(&traj, ch, band).map_err(solver)?;
        println!(
            "{},{:.6},{:.6},{},{:e}",
            agc_cli::compare::delf_label(ch, area),
            m.peak_undershoot,
            m.peak_overshoot,
            m.settling_time,
            m.ise
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).map_err(|e| CliError::io("formatting trajectory", e))?;
        let path = dir.join(format!("traj_area{}.csv", area.number()));
        std::fs::write(&path, buf).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        for ch in Channel::ALL {
            let path = dir.join(format!("{}.dat", agc_cli::compare::delf_label(ch, area)));
            write_text(&path, &dat_trace(&traj.times, traj.channel(ch)))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(config, seed, out),
        Command::Lqr { config, controller, gain_out } => cmd_lqr(config, controller, gain_out),
        Command::Pso { config, mask, population, iterations, seed, gain_out } => {
            cmd_pso(config, mask, population, iterations, seed, gain_out)
        }
        Command::Simulate { gain, config, area, magnitude, horizon, dt, band, out } => {
            cmd_simulate(gain, config, area, magnitude, horizon, dt, band, out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
