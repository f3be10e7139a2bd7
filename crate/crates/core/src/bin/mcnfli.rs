use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mcnfli::approx::{round, solve_bidm, Family, RoundingScheme, SearchMode};
use mcnfli::basis::{build_cert, BasisSpec, RowTag};
use mcnfli::generator::{generate, GenSpec, InterdepMode};
use mcnfli::harness::{run_trials, write_outputs, TrialConfig};
use mcnfli::simplex::{variable_label, TraceLevel, VarLabel};
use mcnfli::{parse, serialize, solve, solve_from_basis, Instance, PricingRule, SolveOptions, SolveStatus};

#[derive(Parser)]
#[command(name = "mcnfli", version, about = "Network flow with linear interdependencies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Dantzig,
    Bland,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Child,
    Parent,
    Fair,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    None,
    Structured,
    Unstructured,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, value_enum, default_value = "dantzig")]
    rule: Rule,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    use_dhat: bool,
    /// Exit with status 3 when the instance is infeasible.
    #[arg(long)]
    require_feasible: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the linear model (binary instances are relaxed).
    Solve(SolveArgs),
    /// Exact binary model by branch and bound.
    SolveBidm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        require_feasible: bool,
    },
    /// Randomized rounding from the linear relaxation.
    Round {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "child")]
        scheme: Scheme,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        max_attempts: usize,
        #[arg(long)]
        require_feasible: bool,
    },
    /// Random instance; writes a provenance sidecar next to --output.
    Generate {
        /// GenSpec JSON; flags below are ignored when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        nodes: usize,
        #[arg(long, default_value_t = 4)]
        arcs_per_node: usize,
        #[arg(long, value_enum, default_value = "unstructured")]
        mode: Mode,
        #[arg(long, default_value_t = 0.05)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Trial batches; writes CSV, JSON summary and TSV plot data to --output.
    Bench {
        /// TrialConfig JSON; otherwise the desk configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "bench_out")]
        output: PathBuf,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.05, 0.10])]
        densities: Vec<f64>,
    },
    /// Per-iteration JSON lines with certificate matrices and potentials.
    Trace {
        #[arg(long)]
        input: PathBuf,
        /// Starting basis JSON (basic_arcs, basic_slacks, upper_arcs).
        #[arg(long)]
        basis: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "dantzig")]
        rule: Rule,
        #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
        use_dhat: bool,
    },
    /// D and D-hat of a basis as CSV.
    DumpBasis {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Solve(String),
    Infeasible,
}

type Outcome = Result<(), Failure>;

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

fn solve_err<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Solve(e.to_string())
}

fn read_instance(path: &Path) -> Result<Instance, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, text: &str) -> Outcome {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn options(rule: Rule, use_dhat: bool) -> SolveOptions {
    SolveOptions {
        rule: match rule {
            Rule::Dantzig => PricingRule::Dantzig,
            Rule::Bland => PricingRule::Bland,
        },
        use_dhat,
        ..Default::default()
    }
}

fn label_text(l: &VarLabel) -> String {
    match l {
        VarLabel::Arc { tail, head, .. } => format!("x({tail};{head})"),
        VarLabel::Slack { index } => format!("s{index}"),
        VarLabel::Artificial { node } => format!("art{node}"),
    }
}

fn cmd_solve(a: SolveArgs) -> Outcome {
    let inst = read_instance(&a.input)?;
    let r = solve(&inst, &options(a.rule, a.use_dhat)).map_err(solve_err)?;
    let text = match a.format {
        Format::Json => json(&r),
        Format::Csv => {
            let mut s = String::from("variable,value\n");
            for (k, f) in r.flows.iter().enumerate() {
                let arc = &inst.arcs()[k];
                let _ = writeln!(s, "x({};{}),{f}", arc.tail, arc.head);
            }
            for (t, v) in r.slacks.iter().enumerate() {
                let _ = writeln!(s, "s{},{v}", t + 1);
            }
            let _ = writeln!(s, "objective,{}", r.objective);
            let _ = writeln!(s, "status,{:?}", r.status);
            s
        }
    };
    emit(a.output.as_deref(), &text)?;
    if a.require_feasible && r.status == SolveStatus::Infeasible {
        return Err(Failure::Infeasible);
    }
    Ok(())
}

fn cmd_trace(input: &Path, basis: Option<&Path>, output: Option<&Path>, rule: Rule, use_dhat: bool) -> Outcome {
    let inst = read_instance(input)?;
    let opts = SolveOptions {
        trace: TraceLevel::Detailed,
        ..options(rule, use_dhat)
    };
    let r = match basis {
        Some(b) => {
            let spec: BasisSpec = read_json(b)?;
            let state = spec.to_state(&inst).map_err(solve_err)?;
            solve_from_basis(&inst, state, &opts)
        }
        None => solve(&inst, &opts),
    }
    .map_err(solve_err)?;
    let mut s = String::new();
    for rec in &r.trace {
        s.push_str(&serde_json::to_string(rec).expect("serializable"));
        s.push('\n');
    }
    emit(output, &s)
}

fn cmd_dump(input: &Path, basis: &Path, output: Option<&Path>) -> Outcome {
    let inst = read_instance(input)?;
    let spec: BasisSpec = read_json(basis)?;
    let state = spec.to_state(&inst).map_err(solve_err)?;
    let cert = build_cert(&state, &inst).map_err(solve_err)?;
    let labels: Vec<String> = cert
        .column_vars
        .iter()
        .map(|&v| label_text(&variable_label(&inst, v)))
        .collect();
    let row_name = |tag: &RowTag| match tag {
        RowTag::Tree(h) => format!("T{}", h + 1),
        RowTag::Interdependence(t) => format!("i{}", t + 1),
    };
    let mut s = String::new();
    let mut block = |name: &str, rows: &[usize], cols: &[usize], m: &mcnfli::linalg::DenseMatrix| {
        let _ = write!(s, "{name}");
        for &c in cols {
            let _ = write!(s, ",{}", labels[c]);
        }
        s.push('\n');
        for (i, &r) in rows.iter().enumerate() {
            let _ = write!(s, "{}", row_name(&cert.row_tags[r]));
            for v in m.row(i) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
    };
    let all_rows: Vec<usize> = (0..cert.row_tags.len()).collect();
    let all_cols: Vec<usize> = (0..cert.column_vars.len()).collect();
    block("D", &all_rows, &all_cols, &cert.d);
    block("Dhat", &cert.dhat_rows, &cert.dhat_columns, &cert.dhat);
    emit(output, &s)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::SolveBidm {
            input,
            output,
            require_feasible,
        } => {
            let inst = read_instance(&input)?;
            let sol = solve_bidm(&inst, SearchMode::Exact).map_err(solve_err)?;
            emit(output.as_deref(), &json(&sol))?;
            if require_feasible && sol.result.status == SolveStatus::Infeasible {
                return Err(Failure::Infeasible);
            }
            Ok(())
        }
        Command::Round {
            input,
            output,
            scheme,
            epsilon,
            seed,
            max_attempts,
            require_feasible,
        } => {
            let inst = read_instance(&input)?;
            let family = match scheme {
                Scheme::Child => Family::Child,
                Scheme::Parent => Family::Parent,
                Scheme::Fair => Family::Fair,
            };
            let mut s = RoundingScheme::new(family, epsilon, seed).map_err(usage)?;
            s.max_attempts = max_attempts;
            let out = match round(&inst, &s, None) {
                Err(e @ mcnfli::approx::ApproxError::RelaxationInfeasible) if require_feasible => {
                    eprintln!("{e}");
                    return Err(Failure::Infeasible);
                }
                r => r.map_err(solve_err)?,
            };
            emit(output.as_deref(), &json(&out))
        }
        Command::Generate {
            config,
            output,
            nodes,
            arcs_per_node,
            mode,
            density,
            seed,
        } => {
            let spec = match config {
                Some(p) => read_json(&p)?,
                None => GenSpec {
                    nodes,
                    arcs_per_node,
                    interdep_mode: match mode {
                        Mode::None => InterdepMode::None,
                        Mode::Structured => InterdepMode::StructuredSinkFrac(density),
                        Mode::Unstructured => InterdepMode::UnstructuredArcFrac(density),
                    },
                    seed,
                    ..Default::default()
                },
            };
            let g = generate(&spec).map_err(|e| match e {
                mcnfli::generator::GenError::InvalidSpec(_) => usage(e),
                _ => solve_err(e),
            })?;
            emit(output.as_deref(), &serialize(&g.instance))?;
            if let Some(p) = output {
                let mut side = p.into_os_string();
                side.push(".provenance.json");
                emit(Some(Path::new(&side)), &json(&g.provenance))?;
            }
            Ok(())
        }
        Command::Bench {
            config,
            output,
            trials,
            seed,
            densities,
        } => {
            let cfg: TrialConfig = match config {
                Some(p) => read_json(&p)?,
                None => TrialConfig::desk(&densities, trials, seed),
            };
            let (records, summaries) = run_trials(&cfg);
            for r in records.iter().filter(|r| r.error.is_some()) {
                eprintln!("group {} trial {}: {}", r.group, r.trial, r.error.as_deref().unwrap_or(""));
            }
            write_outputs(&output, &records, &summaries).map_err(usage)?;
            emit(None, &json(&summaries))
        }
        Command::Trace {
            input,
            basis,
            output,
            rule,
            use_dhat,
        } => cmd_trace(&input, basis.as_deref(), output.as_deref(), rule, use_dhat),
        Command::DumpBasis { input, basis, output } => cmd_dump(&input, &basis, output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Solve(m)) => {
            eprintln!("solve error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Infeasible) => {
            eprintln!("instance is infeasible");
            ExitCode::from(3)
        }
    }
}
