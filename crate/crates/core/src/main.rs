use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use epitruss::cli::render::render_svg;
use epitruss::cli::run::{self, apply_seed_override, sibling, Command};
use epitruss::cli::verify::{self, Suite};
use epitruss::cli::{exit_code, RunConfig};
use epitruss::solvers::DISPLAY_THRESHOLD;
use epitruss::Result;

#[derive(Parser)]
#[command(name = "epitruss", version, about = "Truss topology optimization with extended generalized eigenvalues")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured solver.
    Solve {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve along `eps_schedule`, warm-starting each step.
    SweepEps {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Bisection on the exact objective.
    Bisect {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Draw the design stored in a result file as SVG.
    Render {
        result: PathBuf,
        #[arg(long, default_value_t = DISPLAY_THRESHOLD)]
        threshold: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run property and closed-form suites; exit 0 iff all pass.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn run_config(path: &Path, command: Command, output: Option<PathBuf>) -> Result<()> {
    let mut cfg = RunConfig::load(path)?;
    apply_seed_override(&mut cfg)?;
    let out = run::execute(&cfg, command)?;
    let result_path = output
        .or_else(|| cfg.output.result.clone())
        .unwrap_or_else(|| sibling(path, "result.json"));
    let history_path = cfg.output.history.clone().unwrap_or_else(|| sibling(&result_path, "history.csv"));
    run::write_record(&result_path, &out.record)?;
    run::write_history(&history_path, &out.history)?;
    if let Some(svg) = &cfg.output.svg {
        write_svg(&out.record, DISPLAY_THRESHOLD, svg)?;
    }
    let r = &out.record.report;
    println!(
        "objective {} (exact {}), {}/{} bars active, {} iterations -> {}",
        r.obj_final,
        r.obj_exact,
        r.active_bars,
        out.record.model.m,
        r.iterations,
        result_path.display()
    );
    Ok(())
}

fn write_svg(record: &run::ResultRecord, threshold: f64, path: &Path) -> Result<()> {
    let rendered = render_svg(record, threshold)?;
    for w in &rendered.warnings {
        log::warn!("{w}");
    }
    std::fs::write(path, rendered.svg)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Solve { config, output } => run_config(&config, Command::Solve, output),
        Cmd::SweepEps { config, output } => run_config(&config, Command::SweepEps, output),
        Cmd::Bisect { config, output } => run_config(&config, Command::Bisect, output),
        Cmd::Render { result, threshold, output } => run::read_record(&result).and_then(|rec| {
            let path = output.unwrap_or_else(|| sibling(&result, "svg"));
            write_svg(&rec, threshold, &path)
        }),
        Cmd::Verify { suite, seed, output } => {
            let seed = match std::env::var(run::SEED_ENV) {
                Ok(v) => match v.trim().parse() {
                    Ok(s) => s,
                    Err(_) => {
                        eprintln!("error: {}: not an unsigned integer: {v}", run::SEED_ENV);
                        return ExitCode::from(2);
                    }
                },
                Err(_) => seed,
            };
            let report = verify::run(suite, seed);
            let text = serde_json::to_string_pretty(&report).expect("report is serializable");
            match output {
                Some(p) => {
                    if let Err(e) = std::fs::write(&p, &text) {
                        eprintln!("error: {e}");
                        return ExitCode::from(1);
                    }
                }
                None => println!("{text}"),
            }
            return if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
