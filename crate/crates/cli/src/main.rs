use clap::{Args, Parser, Subcommand};
use motc_cli::config::{self, Experiment, Overrides};
use motc_cli::presets::{self, PRESETS};
use motc_cli::render::csv_to_markdown;
use motc_cli::run::{self, CheckOutcome, Counts};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

#[derive(Parser)]
#[command(name = "motc", version, about = "Run and report numerical checks of transport-cost and semigroup inequalities")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "MOTC_THREADS")]
    threads: Option<usize>,
    /// Seed overriding `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (a file for `report render`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check of an experiment.
    Run(Source),
    /// Run an experiment once per value of one parameter.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Dotted parameter path, e.g. `sim.T` or `checks.0.p`.
        #[arg(long)]
        param: String,
        /// Comma-separated TOML literals.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Bundled configurations.
    Presets {
        #[command(subcommand)]
        command: PresetCommand,
    },
    /// Report utilities.
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
}

#[derive(Subcommand)]
enum PresetCommand {
    List,
    /// Print a preset's configuration.
    Show { name: String },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Render a CSV file as a markdown table.
    Render {
        csv: PathBuf,
        /// Significant digits of numeric cells.
        #[arg(long, default_value_t = 6)]
        digits: usize,
    },
}

#[derive(Args)]
struct Source {
    /// Experiment configuration file.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a bundled preset.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn read(&self) -> Result<(String, String), String> {
        if let Some(name) = &self.preset {
            let p = presets::find(name).ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
                format!("unknown preset `{name}` (available: {})", names.join(", "))
            })?;
            return Ok((format!("preset:{name}"), p.source.to_string()));
        }
        let path = self.config.as_ref().expect("clap requires a config or a preset");
        let src = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok((path.display().to_string(), src))
    }
}

fn now() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).unwrap_or_default()
}

fn out_dir(cli: &Cli, exp: &Experiment) -> PathBuf {
    cli.out.clone().or_else(|| exp.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| Path::new("out").join(&exp.name))
}

fn print_outcomes(outcomes: &[CheckOutcome]) {
    for o in outcomes {
        if let Some(e) = &o.error {
            println!("{:<28} {:<32} error: {e}", o.label, o.kind);
        }
        for r in &o.reports {
            let tag = if r.near_equality() { " (near equality)" } else { "" };
            println!(
                "{:<28} {:<32} {:<12} lhs={:.6e} rhs={:.6e} se={:.2e}{tag}",
                o.label,
                r.name,
                r.verdict.as_str(),
                r.lhs,
                r.rhs,
                r.combined_se()
            );
        }
    }
}

/// Runs one experiment into `dir` and returns the outcomes.
fn execute(exp: &Experiment, dir: &Path, origin: &str) -> Result<Vec<CheckOutcome>, String> {
    let started = now();
    let clock = Instant::now();
    let outcomes = run::run_checks(exp);
    let counts = Counts::of(&outcomes);
    let metadata = json!({
        "tool": "motc",
        "version": env!("CARGO_PKG_VERSION"),
        "config": origin,
        "started_at": started,
        "finished_at": now(),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "seed": exp.sim.seed,
        "exit_code": counts.exit_code(),
    });
    run::write_outputs(exp, &outcomes, dir, metadata)?;
    Ok(outcomes)
}

fn cmd_run(cli: &Cli, source: &Source) -> Result<u8, String> {
    let (origin, src) = source.read()?;
    let exp = config::load(&src, Overrides { seed: cli.seed }).map_err(|e| format!("{origin}: {e}"))?;
    let dir = out_dir(cli, &exp);
    let outcomes = execute(&exp, &dir, &origin)?;
    print_outcomes(&outcomes);
    let c = Counts::of(&outcomes);
    println!("{} pass, {} fail, {} inconclusive, {} errors -> {}", c.pass, c.fail, c.inconclusive, c.errors, dir.display());
    Ok(c.exit_code())
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.=".contains(c) { c } else { '_' }).collect()
}

fn cmd_sweep(cli: &Cli, source: &Source, param: &str, values: &[String]) -> Result<u8, String> {
    let (origin, src) = source.read()?;
    let base = config::load(&src, Overrides { seed: cli.seed }).map_err(|e| format!("{origin}: {e}"))?;
    let doc: toml::Table = toml::from_str(&src).map_err(|e| format!("{origin}: {e}"))?;
    let root = out_dir(cli, &base);
    let mut header = vec!["param", "value"];
    header.extend(run::SUMMARY_HEADER);
    let mut merged = Vec::new();
    let mut runs = Vec::new();
    let mut code = 0;
    for raw in values {
        let value = config::parse_value(raw.trim());
        let text = value_text(&value);
        let mut d = doc.clone();
        config::set_path(&mut d, param, value).map_err(|e| format!("{origin}: --param: {e}"))?;
        let variant = toml::to_string(&d).map_err(|e| e.to_string())?;
        let exp = config::load(&variant, Overrides { seed: cli.seed }).map_err(|e| format!("{origin} with {param} = {text}: {e}"))?;
        let sub = slug(&format!("{param}={text}"));
        let outcomes = execute(&exp, &root.join(&sub), &format!("{origin} [{param} = {text}]"))?;
        println!("== {param} = {text}");
        print_outcomes(&outcomes);
        let c = Counts::of(&outcomes);
        code = code.max(c.exit_code());
        for row in run::summary_rows(&outcomes) {
            let mut r = vec![param.to_string(), text.clone()];
            r.extend(row);
            merged.push(r);
        }
        runs.push(json!({ "value": text, "dir": sub, "summary": c }));
    }
    std::fs::create_dir_all(&root).map_err(|e| format!("{}: {e}", root.display()))?;
    run::write_csv(&root.join("summary.csv"), &header, &merged).map_err(|e| format!("summary.csv: {e}"))?;
    let sweep = json!({ "name": base.name, "param": param, "runs": runs });
    let text = serde_json::to_string_pretty(&sweep).map_err(|e| e.to_string())? + "\n";
    std::fs::write(root.join("sweep.json"), text).map_err(|e| format!("sweep.json: {e}"))?;
    println!("{} runs -> {}", values.len(), root.display());
    Ok(code)
}

fn cmd_render(cli: &Cli, csv: &Path, digits: usize) -> Result<u8, String> {
    let file = std::fs::File::open(csv).map_err(|e| format!("{}: {e}", csv.display()))?;
    let md = csv_to_markdown(file, digits).map_err(|e| format!("{}: {e}", csv.display()))?;
    match &cli.out {
        Some(p) => std::fs::write(p, md).map_err(|e| format!("{}: {e}", p.display()))?,
        None => print!("{md}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("motc: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Run(source) => cmd_run(&cli, source),
        Command::Sweep { source, param, values } => cmd_sweep(&cli, source, param, values),
        Command::Presets { command: PresetCommand::List } => {
            for p in PRESETS {
                println!("{:<22} {}", p.name, p.description());
            }
            Ok(0)
        }
        Command::Presets { command: PresetCommand::Show { name } } => match presets::find(name) {
            Some(p) => {
                print!("{}", p.source);
                Ok(0)
            }
            None => Err(format!("unknown preset `{name}`")),
        },
        Command::Report { command: ReportCommand::Render { csv, digits } } => cmd_render(&cli, csv, *digits),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("motc: {e}");
            ExitCode::from(2)
        }
    }
}
