use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use clique::bench::{bench_grid, Generator, GridSpec};
use clique::{read_matrix_file, run_clusmat, run_hmst, verify, write_matrix, write_tree};
use clique_core::clusmat::{ClusmatOptions, Orientation};
use clique_core::gen::{gen_clustered, gen_uniform, GenSpec};
use clique_core::hmst::{HmstOptions, DEFAULT_EPSILON, DEFAULT_KAPPA};
use clique_core::{CliqueConfig, RoutingMode};

#[derive(Parser)]
#[command(
    name = "clique",
    version,
    about = "Congested clique matrix product and Hamming MST protocols"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Clustered,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolKind {
    Clusmat,
    Hmst,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a matrix file.
    Gen {
        #[arg(long, value_enum, default_value = "clustered")]
        kind: Kind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        clusters: usize,
        #[arg(long, default_value_t = 0)]
        spread: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output path; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a protocol and print its JSON report.
    Run {
        #[arg(long, value_enum, default_value = "clusmat")]
        protocol: ProtocolKind,
        #[arg(long)]
        a: PathBuf,
        /// Right matrix, required for clusmat.
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long, default_value = "auto")]
        orientation: Orientation,
        #[arg(long, default_value = "simulated")]
        routing: RoutingMode,
        #[arg(long, default_value_t = DEFAULT_KAPPA)]
        kappa: f64,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Broadcast a seed instead of the projection matrices.
        #[arg(long)]
        seed_mode: bool,
        /// Use W = ⌈log₂ n⌉ + 16 instead of 64.
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, env = "CLIQUE_MAX_ROUNDS")]
        max_rounds: Option<u64>,
        /// Where to write the product (clusmat) or tree (hmst).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Where to write the report; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check C = A∘B against the naive product.
    Verify {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        c: PathBuf,
    },
    /// Run a benchmark grid.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [64usize, 128, 256])]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 4, 16])]
        clusters: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 4, 16])]
        spreads: Vec<usize>,
        /// Uniform baseline densities.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5f64])]
        uniform: Vec<f64>,
        /// Skip the uniform baseline.
        #[arg(long)]
        no_uniform: bool,
        #[arg(long, value_delimiter = ',', default_values_t = [1u64])]
        seeds: Vec<u64>,
        #[arg(long, default_value = "accounted")]
        routing: RoutingMode,
        #[arg(long, default_value = "auto")]
        orientation: Orientation,
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, path: Option<&PathBuf>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn config(n: usize, seed: u64, strict: bool, routing: RoutingMode, max_rounds: Option<u64>) -> CliqueConfig {
    let cfg = if strict {
        CliqueConfig::strict(n, seed)
    } else {
        CliqueConfig::new(n, seed)
    };
    let cfg = cfg.with_routing(routing);
    match max_rounds {
        Some(m) => cfg.with_max_rounds(m),
        None => cfg,
    }
}

fn real_main() -> Result<bool> {
    match Cli::parse().cmd {
        Cmd::Gen {
            kind,
            n,
            clusters,
            spread,
            density,
            seed,
            out,
        } => {
            let m = match kind {
                Kind::Clustered => {
                    let mut spec = GenSpec::new(n, clusters, spread, seed);
                    spec.density = density;
                    gen_clustered(&spec)?
                }
                Kind::Uniform => gen_uniform(n, density, seed)?,
            };
            emit(&write_matrix(&m), out.as_ref())?;
            Ok(true)
        }
        Cmd::Run {
            protocol,
            a,
            b,
            orientation,
            routing,
            kappa,
            epsilon,
            seed_mode,
            strict,
            seed,
            max_rounds,
            output,
            report,
        } => {
            let a = read_matrix_file(&a).with_context(|| format!("reading {}", a.display()))?;
            let cfg = config(a.n(), seed, strict, routing, max_rounds);
            let hmst = HmstOptions {
                kappa,
                epsilon,
                seed_mode,
            };
            let (result, rep) = match protocol {
                ProtocolKind::Clusmat => {
                    let Some(b) = b else {
                        bail!("--b is required for clusmat")
                    };
                    let b = read_matrix_file(&b).with_context(|| format!("reading {}", b.display()))?;
                    let (run, rep) = run_clusmat(&a, &b, cfg, &ClusmatOptions { orientation, hmst })?;
                    (write_matrix(&run.product), rep)
                }
                ProtocolKind::Hmst => {
                    let (out, rep) = run_hmst(&a, cfg, &hmst)?;
                    (write_tree(&out.tree), rep)
                }
            };
            if let Some(p) = &output {
                emit(&result, Some(p))?;
            }
            emit(&(serde_json::to_string_pretty(&rep)? + "\n"), report.as_ref())?;
            Ok(rep.correct)
        }
        Cmd::Verify { a, b, c } => {
            let (a, b, c) = (read_matrix_file(&a)?, read_matrix_file(&b)?, read_matrix_file(&c)?);
            let ok = verify(&c, &a, &b)?;
            println!("{ok}");
            Ok(ok)
        }
        Cmd::Bench {
            n,
            clusters,
            spreads,
            uniform,
            no_uniform,
            seeds,
            routing,
            orientation,
            strict,
            threads,
            format,
            out,
        } => {
            let mut generators = Vec::new();
            for &c in &clusters {
                for &s in &spreads {
                    generators.push(Generator::Clustered { clusters: c, spread: s });
                }
            }
            if !no_uniform {
                generators.extend(uniform.iter().map(|&density| Generator::Uniform { density }));
            }
            let spec = GridSpec {
                ns: n,
                generators,
                seeds,
                routing,
                orientation,
                strict,
                threads,
                ..GridSpec::default()
            };
            let report = bench_grid(&spec);
            let text = match format {
                Format::Json => report.to_json()? + "\n",
                Format::Csv => report.to_csv()?,
            };
            emit(&text, out.as_ref())?;
            for r in report.rows.iter().filter(|r| !r.correct) {
                eprintln!(
                    "incorrect cell: n={} {} seed={} {}",
                    r.n,
                    r.generator,
                    r.seed,
                    r.error.as_deref().unwrap_or("product mismatch")
                );
            }
            Ok(report.all_correct())
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
