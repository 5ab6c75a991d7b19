use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coopnav::output::{emit_metrics, emit_plans_csv, emit_states_csv, emit_trajectory_svg, read_states_csv};
use coopnav::scenario::{bundled, emit_scenario, parse_scenario, parse_scenario_with, BUNDLED};
use coopnav::sim::{compute_metrics, run, Metrics, RunStatus, Scenario, Simulation};

const EXIT_OK: u8 = 0;
const EXIT_PARSE: u8 = 2;
const EXIT_ABORT: u8 = 3;
const EXIT_COLLISION: u8 = 4;

#[derive(Parser)]
#[command(name = "coopnav", version, about = "Cooperative robot and human navigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file (or bundled scenario name) and write its output bundle.
    Run {
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write trajectory.svg.
        #[arg(long)]
        svg: bool,
        /// Dotted-key override, e.g. `planner.gamma_ttc=0`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run every `.scn` file in a directory.
    Batch {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Recompute metrics from a run directory's states.csv and scenario.scn.
    Metrics { dir: PathBuf },
    /// Write the bundled scenarios into a directory.
    Export { dir: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn parse(message: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_PARSE, message: message.to_string() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: EXIT_ABORT, message: format!("{}: {e}", path.display()) }
    }
}

fn status_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Success => EXIT_OK,
        RunStatus::Timeout | RunStatus::Aborted => EXIT_ABORT,
        RunStatus::Collision => EXIT_COLLISION,
    }
}

fn load(source: &str, set: &[String]) -> Result<Scenario, Failure> {
    let path = Path::new(source);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(|e| Failure::io(path, e))?
    } else if let Some(text) = bundled(source) {
        text.to_string()
    } else {
        return Err(Failure::parse(format!("{source}: no such file or bundled scenario")));
    };
    parse_scenario_with(&text, set).map_err(|e| Failure::parse(format!("{source}: {e}")))
}

fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<(), Failure> {
    // build next to the target and rename so a bundle is never half-written
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let staging = parent.join(format!(".{name}.partial"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Failure::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Failure::io(&staging, e))?;
    for (file, body) in files {
        let p = staging.join(file);
        fs::write(&p, body).map_err(|e| Failure::io(&p, e))?;
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| Failure::io(dir, e))
}

fn run_one(scenario: &Scenario, out: &Path, svg: bool) -> Result<(RunStatus, Metrics), Failure> {
    let (log, metrics) = run(scenario).map_err(Failure::parse)?;
    let mut files = vec![
        ("states.csv", emit_states_csv(&log)),
        ("plans.csv", emit_plans_csv(&log)),
        ("metrics.txt", emit_metrics(&metrics, Some(log.status))),
        ("scenario.scn", emit_scenario(scenario)),
    ];
    if svg {
        files.push(("trajectory.svg", emit_trajectory_svg(&log, &scenario.world)));
    }
    write_all(out, &files)?;
    Ok((log.status, metrics))
}

fn report(name: &str, status: RunStatus, m: &Metrics) {
    if status != RunStatus::Success {
        eprintln!(
            "{name}: {} at t={:.1}s (min edge distance {:.3} m)",
            status.as_str(),
            m.duration,
            m.min_edge_distance
        );
    }
}

fn cmd_run(scenario: &str, out: &Path, svg: bool, set: &[String]) -> Result<u8, Failure> {
    let s = load(scenario, set)?;
    let (status, m) = run_one(&s, out, svg)?;
    report(&s.name, status, &m);
    Ok(status_code(status))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |t| format!("{t:.6}"))
}

fn cmd_batch(dir: &Path, out: &Path, svg: bool, set: &[String]) -> Result<u8, Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::parse(format!("{}: no .scn files", dir.display())));
    }
    let mut scenarios = Vec::new();
    for f in &files {
        let stem = f.file_stem().unwrap().to_string_lossy().into_owned();
        scenarios.push((stem, load(&f.to_string_lossy(), set)?));
    }
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let results: Vec<Result<(RunStatus, Metrics), Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|(stem, s)| {
                let target = out.join(stem);
                scope.spawn(move || run_one(s, &target, svg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut table = String::from("scenario,status,success,collision,duration,min_edge_distance,min_ttc,robot_time_to_goal\n");
    let mut code = EXIT_OK;
    for ((stem, _), r) in scenarios.iter().zip(results) {
        let (status, m) = r?;
        report(stem, status, &m);
        code = code.max(status_code(status));
        table.push_str(&format!(
            "{stem},{},{},{},{:.6},{:.6},{},{}\n",
            status.as_str(),
            m.success,
            m.collision,
            m.duration,
            m.min_edge_distance,
            if m.min_ttc.is_finite() { format!("{:.6}", m.min_ttc) } else { "inf".into() },
            fmt_opt(m.robot.time_to_goal)
        ));
    }
    let p = out.join("summary.csv");
    fs::write(&p, table).map_err(|e| Failure::io(&p, e))?;
    Ok(code)
}

fn cmd_metrics(dir: &Path) -> Result<u8, Failure> {
    let scn = dir.join("scenario.scn");
    let text = fs::read_to_string(&scn).map_err(|e| Failure::io(&scn, e))?;
    let s = parse_scenario(&text).map_err(|e| Failure::parse(format!("{}: {e}", scn.display())))?;
    let states = dir.join("states.csv");
    let table = fs::read_to_string(&states).map_err(|e| Failure::io(&states, e))?;
    let agents = Simulation::new(&s).map_err(Failure::parse)?.agents();
    let log = read_states_csv(&table, agents, 1.0 / s.sim.control_hz)
        .map_err(|e| Failure::parse(format!("{}: {e}", states.display())))?;
    let m = compute_metrics(&log);
    print!("{}", emit_metrics(&m, None));
    Ok(if m.collision { EXIT_COLLISION } else { EXIT_OK })
}

fn cmd_export(dir: &Path) -> Result<u8, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    for (name, text) in BUNDLED {
        let p = dir.join(format!("{name}.scn"));
        fs::write(&p, text).map_err(|e| Failure::io(&p, e))?;
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, out, svg, set } => cmd_run(scenario, out, *svg, set),
        Command::Batch { dir, out, svg, set } => cmd_batch(dir, out, *svg, set),
        Command::Metrics { dir } => cmd_metrics(dir),
        Command::Export { dir } => cmd_export(dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
