use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aeroman::aero::{pairwise_clearance, SlipstreamVolume};
use aeroman::allocation::{check_saturation, redistribute, Saturation, WrenchMap};
use aeroman::design::{run_design, OptimizerConfig};
use aeroman::geometry::Vec6;
use aeroman::params::ParameterFile;
use aeroman::sim::{emit_outputs, run_scenario, run_sweep, Scenario, SimOutput};
use aeroman::Error;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

const EXIT_FAILURE: u8 = 1;
const EXIT_ABORT: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "aeroman", version, about = "Thruster design, allocation and tracking simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run closed-loop tracking scenarios.
    Simulate {
        /// Scenario JSON; repeat for several runs.
        #[arg(long, required = true)]
        scenario: Vec<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run all scenarios in parallel, each into `<out>/<scenario name>`.
        #[arg(long)]
        sweep: bool,
    },
    /// Search for a thruster geometry.
    Design {
        /// Optimizer settings; may name a base parameter file under "params".
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "layout.json")]
        out: PathBuf,
        /// Progress CSV; defaults to `<out>` with a `.progress.csv` suffix.
        #[arg(long)]
        progress: Option<PathBuf>,
    },
    /// Allocate a body wrench to thrusts.
    Allocate {
        #[arg(long)]
        layout: PathBuf,
        /// "Fx Fy Fz Tx Ty Tz" in the body frame.
        #[arg(long, allow_hyphen_values = true)]
        wrench: String,
    },
    /// Clearance between two slipstream volumes.
    Clearance {
        #[arg(long)]
        layout: PathBuf,
        /// Thruster numbers, starting at 1.
        #[arg(long, num_args = 2, value_names = ["I", "J"])]
        pair: Vec<usize>,
    },
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NearSingular { .. } => EXIT_ABORT,
            Error::InvalidParameter(_)
            | Error::Json { .. }
            | Error::Io { .. }
            | Error::NotPositiveDefinite(_)
            | Error::DegenerateDirection { .. }
            | Error::Unsolvable { .. }
            | Error::RankDeficient { .. } => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn print_json(v: &Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).expect("serializable");
    // a closed stdout is not an error worth dying over
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn simulate(
    paths: &[PathBuf],
    dt: Option<f64>,
    duration: Option<f64>,
    seed: Option<u64>,
    out: &Path,
    sweep: bool,
) -> Result<u8, Failure> {
    let mut scenarios = Vec::with_capacity(paths.len());
    for p in paths {
        let mut s = Scenario::load(p)?;
        if let Some(dt) = dt {
            s.dt = dt;
        }
        if let Some(d) = duration {
            s.duration = d;
        }
        if let Some(seed) = seed {
            s.seed = seed;
        }
        s.validate()?;
        scenarios.push(s);
    }
    let dirs: Vec<PathBuf> = if sweep || paths.len() > 1 {
        paths
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned());
                out.join(format!("{:02}-{}", i, stem.unwrap_or_default()))
            })
            .collect()
    } else {
        vec![out.to_path_buf()]
    };
    let results: Vec<aeroman::Result<SimOutput>> = if sweep {
        run_sweep(&scenarios)
    } else {
        scenarios.iter().map(run_scenario).collect()
    };
    let mut code = 0;
    for (r, dir) in results.into_iter().zip(&dirs) {
        let r = r?;
        emit_outputs(&r, dir)?;
        if let Some(a) = &r.summary.abort {
            eprintln!("{}: aborted at t = {:.4} s: {}", dir.display(), a.t, a.message);
            code = EXIT_ABORT;
        }
        print_json(&json!({
            "out": dir,
            "completed": r.summary.completed,
            "final_position_error_m": r.summary.final_position_error_m,
            "final_attitude_error_rad": r.summary.final_attitude_error_rad,
        }));
    }
    Ok(code)
}

fn design(
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    progress: Option<&Path>,
) -> Result<u8, Failure> {
    let (mut cfg, base) = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            let mut doc: Value = serde_json::from_str(&text)
                .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            let params = doc.as_object_mut().and_then(|o| o.remove("params"));
            let base = match params {
                Some(Value::String(p)) => {
                    let p = PathBuf::from(p);
                    let p = match path.parent() {
                        Some(dir) if p.is_relative() => dir.join(p),
                        _ => p,
                    };
                    ParameterFile::load(p)?
                }
                Some(_) => return Err(config_error("\"params\" must be a path")),
                None => ParameterFile::reference(),
            };
            (OptimizerConfig::from_json(&doc.to_string())?, base)
        }
        None => (OptimizerConfig::default(), ParameterFile::reference()),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let report = run_design(&cfg)?;
    report.parameter_file(&base)?.save(out)?;
    let progress = progress.map(Path::to_path_buf).unwrap_or_else(|| {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}.progress.csv"))
    });
    report.write_progress(&progress)?;
    print_json(&json!({
        "layout": out,
        "progress": progress,
        "evaluations": report.evals,
        "evaluation": report.evaluation,
    }));
    Ok(0)
}

fn saturation_json(s: &Saturation) -> Value {
    match s {
        Saturation::Ok => json!("ok"),
        Saturation::AtLimit => json!("at_limit"),
        Saturation::OverLimit { excess } => json!({ "over_limit": excess }),
        Saturation::Negative { value } => json!({ "negative": value }),
    }
}

fn allocate(layout: &Path, wrench: &str) -> Result<u8, Failure> {
    let values = wrench
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(str::parse::<f64>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| config_error(format!("bad wrench: {e}")))?;
    if values.len() != 6 {
        return Err(config_error(format!("wrench needs 6 numbers, got {}", values.len())));
    }
    let file = ParameterFile::load(layout)?;
    let layout = file.layout()?;
    let map = WrenchMap::from_poses(&layout.primary);
    let lambda6 = map.solve(&Vec6::from_column_slice(&values))?;
    let lambda7 = redistribute(&lambda6);
    let saturated: Vec<Value> = check_saturation(&lambda7, layout.max_thrust)
        .iter()
        .map(saturation_json)
        .collect();
    print_json(&json!({
        "lambda6": lambda6,
        "lambda7": lambda7,
        "kappa": map.condition_number(),
        "saturated": saturated,
    }));
    Ok(0)
}

fn clearance(layout: &Path, pair: &[usize]) -> Result<u8, Failure> {
    let file = ParameterFile::load(layout)?;
    let poses: Vec<_> = file.layout()?.all().copied().collect();
    let pick = |k: usize| {
        if k == 0 || k > poses.len() {
            Err(config_error(format!("thruster number {k} is outside 1..={}", poses.len())))
        } else {
            Ok(SlipstreamVolume::new(poses[k - 1]))
        }
    };
    let (a, b) = (pick(pair[0])?, pick(pair[1])?);
    let r = pairwise_clearance(&a, &b)?;
    print_json(&json!({
        "distance_m": r.distance,
        "p_i": r.p_i.as_slice(),
        "p_j": r.p_j.as_slice(),
    }));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Simulate {
            scenario,
            dt,
            duration,
            seed,
            out,
            sweep,
        } => simulate(scenario, *dt, *duration, *seed, out, *sweep),
        Command::Design {
            config,
            seed,
            out,
            progress,
        } => design(config.as_deref(), *seed, out, progress.as_deref()),
        Command::Allocate { layout, wrench } => allocate(layout, wrench),
        Command::Clearance { layout, pair } => clearance(layout, pair),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
