use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cardsketch::codec::parse_line;
use cardsketch::harness::{analyze, run_equivalence, run_experiment_timed, AnalyzeGrid, ExperimentConfig};
use cardsketch::{Error, Sketch, SketchParams, SketchType};

#[derive(Parser, Debug)]
#[command(name = "cardsketch", version, about = "Cardinality sketches for data streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a sketch from `<item>[TAB<d>]` lines.
    Sketch {
        #[arg(long = "type")]
        kind: SketchType,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        /// Projection only: reject deletions, skip negligible terms.
        #[arg(long)]
        insert_only: bool,
        /// Input file, or `-` for stdin.
        #[arg(long = "in", default_value = "-")]
        input: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Merge sketches built with the same type, size and seed.
    Merge {
        #[arg(required = true, num_args = 1..)]
        sketches: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Print the cardinality estimate of a sketch as JSON.
    Estimate {
        sketch: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Run a replicated experiment described by a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-replicate records as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Tabulate efficiency and sizing constants over a JSON grid.
    Analyze {
        #[arg(long)]
        grid: PathBuf,
    },
    /// Coupled projection and maximal-term residuals across alphas.
    Equivalence {
        #[arg(long)]
        c: u64,
        #[arg(long)]
        m: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.02])]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Binary,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Domain(_) => 2,
            Error::EmptySketch => 4,
            e if e.is_numeric() => 4,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn data_error(message: String) -> Failure {
    Failure { code: 3, message }
}

fn read_path(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| data_error(format!("{}: {e}", path.display())))
}

fn load_sketch(path: &Path) -> Result<Sketch, Failure> {
    Sketch::decode(&read_path(path)?).map_err(|e| match e {
        Error::Format(m) => data_error(format!("{}: {m}", path.display())),
        other => other.into(),
    })
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_slice(&read_path(path)?).map_err(|e| data_error(format!("{}: {e}", path.display())))
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| data_error(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn encode(s: &Sketch, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut text = s.to_json();
            text.push('\n');
            text.into_bytes()
        }
        Format::Binary => s.to_bytes(),
    }
}

fn build_sketch(kind: SketchType, m: usize, seed: u64, params: &SketchParams, input: &str) -> Result<Sketch, Failure> {
    let mut sketch = Sketch::new(kind, m, seed, params)?;
    let reader: Box<dyn Read> = if input == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(fs::File::open(input).map_err(|e| data_error(format!("{input}: {e}")))?)
    };
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| data_error(format!("line {}: {e}", n + 1)))?;
        let elem = parse_line(&line).map_err(|e| data_error(format!("line {}: {e}", n + 1)))?;
        if let Some(elem) = elem {
            sketch.update_element(&elem).map_err(|e| {
                let mut f = Failure::from(e);
                f.message = format!("line {}: {}", n + 1, f.message);
                f
            })?;
        }
    }
    Ok(sketch)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sketch { kind, m, seed, q, p, alpha, k, insert_only, input, out, format } => {
            let d = SketchParams::default();
            let params = SketchParams {
                q: q.unwrap_or(d.q),
                p: p.unwrap_or(d.p),
                alpha: alpha.unwrap_or(d.alpha),
                k: k.unwrap_or(d.k),
                insert_only,
            };
            cardsketch::codec::validate_params(kind, &params)?;
            let sketch = build_sketch(kind, m, seed, &params, &input)?;
            emit(&encode(&sketch, format), out.as_deref())
        }
        Command::Merge { sketches, out, format } => {
            let mut merged = load_sketch(&sketches[0])?;
            for path in &sketches[1..] {
                merged.merge_from(&load_sketch(path)?)?;
            }
            emit(&encode(&merged, format), out.as_deref())
        }
        Command::Estimate { sketch, level } => {
            let est = load_sketch(&sketch)?.estimate(level)?;
            let mut text = serde_json::to_string_pretty(&est).expect("estimate serializes");
            text.push('\n');
            emit(text.as_bytes(), None)
        }
        Command::Simulate { config, out, csv } => {
            let cfg: ExperimentConfig = load_json(&config)?;
            let (report, timing) = run_experiment_timed(&cfg)?;
            eprintln!(
                "{} elements in {:.3} s ({:.0} elements/s)",
                timing.elements, timing.elapsed_seconds, timing.elements_per_second
            );
            if let Some(path) = csv {
                emit(report.to_csv()?.as_bytes(), Some(&path))?;
            }
            let mut text = report.to_json();
            text.push('\n');
            emit(text.as_bytes(), out.as_deref())
        }
        Command::Analyze { grid } => {
            let grid: AnalyzeGrid = load_json(&grid)?;
            let table = analyze(&grid)?;
            let mut text = serde_json::to_string_pretty(&table).expect("table serializes");
            text.push('\n');
            emit(text.as_bytes(), None)
        }
        Command::Equivalence { c, m, alphas, runs, seed } => {
            let report = run_equivalence(c, m, &alphas, runs, seed)?;
            let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
            text.push('\n');
            emit(text.as_bytes(), None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("cardsketch: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
