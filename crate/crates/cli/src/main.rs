use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use boltzmap::enumerate::TargetMass;
use boltzmap::harness::{self, ExperimentSpec, Family, FamilySpec, RunConfig};
use boltzmap::mobile_map::build_map;
use boltzmap::sampler::{ConditioningTarget, TargetKind};
use boltzmap::snake_ref;
use boltzmap::weights::{self, Status, WeightSequence};
use boltzmap::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "boltzmap", version, about = "Boltzmann bipartite planar maps through labeled mobiles")]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Directory for result files; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Faces,
    WhiteVertices,
}

impl From<Target> for TargetKind {
    fn from(t: Target) -> Self {
        match t {
            Target::Faces => TargetKind::FaceCount,
            Target::WhiteVertices => TargetKind::VertexCountWhite,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Tune {
    Alpha,
    Beta,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a weight sequence and report its scaling constants.
    Analyze {
        weights: PathBuf,
        /// Also report the factor putting the sequence on the critical line.
        #[arg(long, value_enum)]
        tune: Option<Tune>,
    },
    /// Draw conditioned maps and report per-sample statistics.
    Sample {
        weights: PathBuf,
        #[arg(long, value_enum, default_value_t = Target::Faces)]
        target: Target,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = harness::DEFAULT_MAX_ATTEMPTS)]
        max_attempts: u64,
        /// Include each map as an edge list.
        #[arg(long)]
        emit_edgelist: bool,
    },
    /// Exact conditional law of the mobile for small targets.
    Enumerate {
        weights: PathBuf,
        #[arg(long, value_enum, default_value_t = Target::Faces)]
        target: Target,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 200_000)]
        max_mobiles: usize,
    },
    /// Compare rescaled radii and two-point distances across families and the snake.
    Universality {
        /// Weight files; the quadrangulation and (1/8)^i fixtures when absent.
        #[arg(long = "weights")]
        weights: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Target::Faces)]
        target: Target,
        #[arg(long, default_value_t = 1500)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        replicates: usize,
        #[arg(long, default_value_t = 5000)]
        reference_m: usize,
        #[arg(long, default_value_t = 1000)]
        reference_samples: usize,
        #[arg(long, default_value_t = harness::DEFAULT_MAX_ATTEMPTS)]
        max_attempts: u64,
    },
    /// Reference samples of the discrete snake.
    SnakeRef {
        #[arg(long, default_value_t = 5000)]
        m: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Run the exact oracle suite.
    Verify,
}

enum Failure {
    Verification(String),
    Budget(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BudgetExhausted(_) => Failure::Budget(e.to_string()),
            Error::NotAdmissible
            | Error::NotRegularCritical(_)
            | Error::NotTunable(_)
            | Error::NumericFailure(_)
            | Error::ConsistencyFailure(_)
            | Error::Internal(_) => Failure::Verification(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<Error>() {
            Ok(inner) => inner.into(),
            Err(e) => Failure::Input(format!("{e:#}")),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let (code, msg) = match f {
                Failure::Verification(m) => (1, m),
                Failure::Budget(m) => (2, m),
                Failure::Input(m) => (3, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn read_weights(path: &Path) -> Result<WeightSequence, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::from)?;
    Ok(WeightSequence::from_json(&text)?)
}

/// Writes `body` to `out/name` or stdout.
fn emit(cli: &Cli, name: &str, body: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .and_then(|_| std::fs::write(dir.join(name), body))
                .with_context(|| format!("writing {}", dir.join(name).display()))
                .map_err(Failure::from)?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn to_json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("results serialize") + "\n"
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Analyze { weights, tune } => analyze(cli, weights, *tune),
        Command::Sample {
            weights,
            target,
            n,
            count,
            max_attempts,
            emit_edgelist,
        } => sample(cli, weights, (*target).into(), *n, *count, *max_attempts, *emit_edgelist),
        Command::Enumerate {
            weights,
            target,
            n,
            max_mobiles,
        } => enumerate(cli, weights, (*target).into(), *n, *max_mobiles),
        Command::Universality {
            weights,
            target,
            n,
            replicates,
            reference_m,
            reference_samples,
            max_attempts,
        } => {
            let mut spec = ExperimentSpec::default_pair(*n, *replicates, cli.seed, cli.workers);
            if !weights.is_empty() {
                spec.families = weights
                    .iter()
                    .map(|p| {
                        Ok(FamilySpec {
                            name: p.file_stem().map_or("family".into(), |s| s.to_string_lossy().into_owned()),
                            weights: read_weights(p)?,
                        })
                    })
                    .collect::<Result<_, Failure>>()?;
            }
            spec.target = (*target).into();
            spec.reference_m = *reference_m;
            spec.reference_samples = *reference_samples;
            spec.max_attempts = *max_attempts;
            spec.out = cli.out.clone();
            universality(cli, &spec)
        }
        Command::SnakeRef { m, samples } => snake(cli, *m, *samples),
        Command::Verify => verify(cli),
    }
}

fn analyze(cli: &Cli, path: &Path, tune: Option<Tune>) -> Result<u8, Failure> {
    let q = read_weights(path)?;
    let report = weights::classify(&q)?;
    let constants = if report.status == Status::RegularCritical {
        Some(weights::scaling_constants(&q, &report)?)
    } else {
        None
    };
    let tuning = match tune {
        Some(Tune::Alpha) => Some(weights::tune_alpha(&q)?),
        Some(Tune::Beta) => Some(weights::tune_beta(&q)?),
        None => None,
    };
    let body = match cli.format {
        Format::Json => to_json(&json!({ "report": report, "constants": constants, "tuning": tuning })),
        Format::Csv => {
            let mut rows = vec![
                ("status".to_string(), format!("{:?}", report.status)),
                ("Z".into(), report.z.map_or(String::new(), |z| z.to_string())),
                ("Z_exact".into(), report.z_exact.clone().unwrap_or_default()),
                ("R_q".into(), report.radius_of_convergence.to_string()),
            ];
            if let Some(c) = &constants {
                rows.extend([
                    ("rho".into(), c.rho.to_string()),
                    ("sigma".into(), c.sigma.to_string()),
                    ("Sigma".into(), c.label_sigma.to_string()),
                    ("C_face".into(), c.c_face.to_string()),
                    ("C_vertex".into(), c.c_vertex.to_string()),
                    ("D_face".into(), c.d_face.to_string()),
                ]);
            }
            if let Some(t) = &tuning {
                rows.extend([
                    ("tuning_factor".into(), t.factor.to_string()),
                    ("tuning_factor_exact".into(), t.factor_exact.clone().unwrap_or_default()),
                    ("tuning_z".into(), t.z.to_string()),
                ]);
            }
            let mut s = String::from("key,value\n");
            for (k, v) in rows {
                s.push_str(&format!("{k},{v}\n"));
            }
            s
        }
    };
    emit(cli, &format!("analyze.{}", ext(cli)), &body)?;
    Ok(if report.status == Status::RegularCritical { 0 } else { 1 })
}

fn sample(
    cli: &Cli,
    path: &Path,
    kind: TargetKind,
    n: usize,
    count: usize,
    max_attempts: u64,
    edges: bool,
) -> Result<u8, Failure> {
    let family = Family::prepare("sample", read_weights(path)?)?;
    let cfg = RunConfig {
        max_attempts,
        ..RunConfig::new(cli.seed, cli.workers)
    };
    let draws = harness::sample_mobiles(&family, 0, ConditioningTarget { kind, n }, count, &cfg)?;
    let body = match cli.format {
        Format::Json => {
            let mut s = String::new();
            for (m, rec) in &draws {
                let mut v = json!({ "record": rec, "mobile": serde_json::from_str::<serde_json::Value>(&m.to_json()).unwrap() });
                if edges {
                    let map = build_map(m)?;
                    v["edges"] = json!(map.as_map().map_or(String::new(), |x| x.to_edge_list()));
                }
                s.push_str(&serde_json::to_string(&v).unwrap());
                s.push('\n');
            }
            s
        }
        Format::Csv => {
            let mut s = String::from("replicate,radius,two_point,vertices,faces,attempts,profile\n");
            for (_, r) in &draws {
                let profile: Vec<String> = r.profile.iter().map(|c| c.to_string()).collect();
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.replicate,
                    r.radius,
                    r.two_point,
                    r.vertices,
                    r.faces,
                    r.attempts,
                    profile.join(";")
                ));
            }
            s
        }
    };
    let ext = if cli.format == Format::Json { "jsonl" } else { "csv" };
    emit(cli, &format!("samples.{ext}"), &body)?;
    if edges {
        if let Some(dir) = &cli.out {
            for (m, rec) in &draws {
                if let Some(map) = build_map(m)?.as_map() {
                    std::fs::write(dir.join(format!("map_{}.edges", rec.replicate)), map.to_edge_list())
                        .context("writing edge list")
                        .map_err(Failure::from)?;
                }
            }
        }
    }
    Ok(0)
}

fn enumerate(cli: &Cli, path: &Path, kind: TargetKind, n: usize, max_mobiles: usize) -> Result<u8, Failure> {
    let q = read_weights(path)?;
    let law = harness::conditional_law(&q, ConditioningTarget { kind, n }, max_mobiles)?;
    let d = &law.distribution;
    let body = match cli.format {
        Format::Json => d.to_json() + "\n",
        Format::Csv => {
            let mut s = String::from("mobile,probability\n");
            let rows: Vec<(String, String)> = match d.probabilities() {
                Some(p) => p.iter().map(|(k, v)| (k.clone(), weights::format_rational(v))).collect(),
                None => d.probabilities_f64().iter().map(|(k, v)| (k.clone(), v.to_string())).collect(),
            };
            for (k, v) in rows {
                s.push_str(&format!("\"{}\",{}\n", k.replace('"', "\"\""), v));
            }
            if let TargetMass::Approx(t) = d.total {
                s.push_str(&format!("# enumeration cut at {} white vertices; target mass {t}\n", law.white_cap.unwrap_or(0)));
            }
            s
        }
    };
    emit(cli, &format!("enumerate.{}", ext(cli)), &body)?;
    Ok(0)
}

fn ext(cli: &Cli) -> &'static str {
    match cli.format {
        Format::Json => "json",
        Format::Csv => "csv",
    }
}

fn universality(cli: &Cli, spec: &ExperimentSpec) -> Result<u8, Failure> {
    let start = std::time::Instant::now();
    let result = harness::run_universality(spec)?;
    eprintln!("universality finished in {:.1} s", start.elapsed().as_secs_f64());
    if cli.out.is_none() {
        match cli.format {
            Format::Json => print!("{}", to_json(&result)),
            Format::Csv => {
                println!("comparison,a,b,statistic,p_value,passed");
                for (kind, list) in [
                    ("pairwise", &result.pairwise),
                    ("reference", &result.reference),
                    ("two_point", &result.two_point_reference),
                    ("negative_control", &result.negative_control),
                ] {
                    for c in list {
                        println!("{kind},{},{},{},{},{}", c.a, c.b, c.statistic, c.p_value, c.passed);
                    }
                }
            }
        }
    }
    Ok(if result.passed() { 0 } else { 1 })
}

fn snake(cli: &Cli, m: usize, samples: usize) -> Result<u8, Failure> {
    let stats = harness::with_workers(cli.workers, || match &cli.out {
        Some(dir) => snake_ref::load_or_compute(dir, samples, m, cli.seed),
        None => snake_ref::reference_statistics(samples, m, cli.seed, &snake_ref::profile_test_function),
    })??;
    if cli.out.is_some() {
        return Ok(0);
    }
    match cli.format {
        Format::Json => print!("{}", to_json(&stats)),
        Format::Csv => {
            println!("sample_id,statistic,value");
            for i in 0..stats.len() {
                for (name, col) in [
                    ("delta", &stats.delta),
                    ("delta_plus", &stats.delta_plus),
                    ("neg_delta_minus", &stats.neg_delta_minus),
                    ("profile_exp", &stats.profile),
                ] {
                    println!("{i},{name},{}", col[i]);
                }
            }
        }
    }
    Ok(0)
}

fn verify(cli: &Cli) -> Result<u8, Failure> {
    let checks = harness::verify_with(&harness::VerifyOptions {
        seed: cli.seed,
        ..Default::default()
    });
    let body = match cli.format {
        Format::Json => to_json(&checks),
        Format::Csv => {
            let mut s = String::from("check,passed,detail\n");
            for c in &checks {
                s.push_str(&format!("\"{}\",{},\"{}\"\n", c.name, c.passed, c.detail.replace('"', "'")));
            }
            s
        }
    };
    emit(cli, &format!("verify.{}", ext(cli)), &body)?;
    Ok(if harness::all_passed(&checks) { 0 } else { 1 })
}
