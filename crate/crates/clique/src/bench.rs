//! Benchmark grids over generated instances.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use clique_core::clusmat::{ClusmatOptions, Orientation};
use clique_core::gen::{gen_clustered, gen_uniform, GenSpec};
use clique_core::hmst::HmstOptions;
use clique_core::{BooleanMatrix, CliqueConfig, Result, RoutingMode};
use serde::{Deserialize, Serialize};

use crate::run::{exact_mst_cost, run_clusmat};

/// How the left matrix of a cell is generated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Generator {
    Clustered { clusters: usize, spread: usize },
    Uniform { density: f64 },
}

impl Generator {
    pub fn generate(&self, n: usize, seed: u64) -> Result<BooleanMatrix> {
        match *self {
            Generator::Clustered { clusters, spread } => gen_clustered(&GenSpec::new(n, clusters, spread, seed)),
            Generator::Uniform { density } => gen_uniform(n, density, seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub ns: Vec<usize>,
    pub generators: Vec<Generator>,
    pub seeds: Vec<u64>,
    pub routing: RoutingMode,
    pub orientation: Orientation,
    pub strict: bool,
    /// Density of the uniform right matrix.
    pub b_density: f64,
    pub hmst: HmstOptions,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        let mut generators = Vec::new();
        for clusters in [1, 4, 16] {
            for spread in [0, 1, 4, 16] {
                generators.push(Generator::Clustered { clusters, spread });
            }
        }
        generators.push(Generator::Uniform { density: 0.5 });
        Self {
            ns: vec![64, 128, 256],
            generators,
            seeds: vec![1],
            routing: RoutingMode::Accounted,
            orientation: Orientation::Auto,
            strict: false,
            b_density: 0.5,
            hmst: HmstOptions::default(),
            threads: 0,
        }
    }
}

impl GridSpec {
    pub fn cells(&self) -> Vec<(usize, Generator, u64)> {
        let mut out = Vec::new();
        for &n in &self.ns {
            for &g in &self.generators {
                for &s in &self.seeds {
                    out.push((n, g, s));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub generator: String,
    pub clusters: Option<usize>,
    pub spread: Option<usize>,
    pub density: Option<f64>,
    pub seed: u64,
    pub routing: String,
    pub orientation: Option<String>,
    /// Exact MST cost of the points the chosen orientation clusters.
    pub mst_cost: Option<u64>,
    #[serde(rename = "M")]
    pub m: Option<u64>,
    pub t: Option<usize>,
    pub blocks: Option<usize>,
    pub rounds: Option<u64>,
    pub messages: Option<u64>,
    pub bits: Option<u64>,
    pub work: Option<u64>,
    pub correct: bool,
    pub error: Option<String>,
}

/// `C` values such that `measured ≈ C·model` per row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    /// Geometric mean of the ratios.
    pub constant: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl Fit {
    pub fn from_ratios(ratios: &[f64]) -> Option<Fit> {
        if ratios.is_empty() {
            return None;
        }
        let log_mean = ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64;
        Some(Fit {
            constant: log_mean.exp(),
            min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Rounds against `√(M/n+1)·log³n`.
    pub round_fit: Option<Fit>,
    /// Total work against `n(n+M)·log³n`.
    pub work_fit: Option<Fit>,
}

fn log3(n: usize) -> f64 {
    (n as f64).log2().powi(3)
}

pub fn round_model(n: usize, m: u64) -> f64 {
    (m as f64 / n as f64 + 1.0).sqrt() * log3(n)
}

pub fn work_model(n: usize, m: u64) -> f64 {
    n as f64 * (n as f64 + m as f64) * log3(n)
}

impl BenchReport {
    pub fn all_correct(&self) -> bool {
        self.rows.iter().all(|r| r.correct)
    }

    fn fit_with(&self, value: impl Fn(&BenchRow) -> Option<u64>, model: fn(usize, u64) -> f64) -> Option<Fit> {
        let ratios: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.correct)
            .filter_map(|r| Some(value(r)? as f64 / model(r.n, r.m?)))
            .filter(|x| *x > 0.0)
            .collect();
        Fit::from_ratios(&ratios)
    }

    pub fn refit(&mut self) {
        self.round_fit = self.fit_with(|r| r.rounds, round_model);
        self.work_fit = self.fit_with(|r| r.work, work_model);
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn empty_row(n: usize, g: Generator, seed: u64, routing: RoutingMode) -> BenchRow {
    let (generator, clusters, spread, density) = match g {
        Generator::Clustered { clusters, spread } => ("clustered", Some(clusters), Some(spread), None),
        Generator::Uniform { density } => ("uniform", None, None, Some(density)),
    };
    BenchRow {
        n,
        generator: generator.to_string(),
        clusters,
        spread,
        density,
        seed,
        routing: routing.to_string(),
        orientation: None,
        mst_cost: None,
        m: None,
        t: None,
        blocks: None,
        rounds: None,
        messages: None,
        bits: None,
        work: None,
        correct: false,
        error: None,
    }
}

/// Right-matrix seed, kept apart from the left one.
fn b_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn run_cell(spec: &GridSpec, n: usize, g: Generator, seed: u64) -> BenchRow {
    let mut row = empty_row(n, g, seed, spec.routing);
    if let Err(e) = fill_row(spec, n, g, seed, &mut row) {
        row.correct = false;
        row.error = Some(e.to_string());
    }
    row
}

fn fill_row(spec: &GridSpec, n: usize, g: Generator, seed: u64, row: &mut BenchRow) -> Result<()> {
    let a = g.generate(n, seed)?;
    let b = gen_uniform(n, spec.b_density, b_seed(seed))?;
    let base = if spec.strict {
        CliqueConfig::strict(n, seed)
    } else {
        CliqueConfig::new(n, seed)
    };
    let cfg = base.with_routing(spec.routing);
    let opts = ClusmatOptions {
        orientation: spec.orientation,
        hmst: spec.hmst,
    };
    let (run, report) = run_clusmat(&a, &b, cfg, &opts)?;
    let points = if run.orientation == Orientation::BA {
        b.transpose()
    } else {
        a
    };
    row.orientation = Some(run.orientation.to_string());
    row.mst_cost = Some(exact_mst_cost(&points)?);
    row.m = Some(run.plan.m);
    row.t = Some(run.plan.t);
    row.blocks = Some(run.plan.blocks);
    row.rounds = Some(report.rounds);
    row.messages = Some(report.messages);
    row.bits = Some(report.bits);
    row.work = Some(report.work_total);
    row.correct = report.correct;
    Ok(())
}

/// Runs every cell; a failing cell becomes a row with `correct = false`.
/// Rows come back in grid order whatever the thread count.
pub fn bench_grid(spec: &GridSpec) -> BenchReport {
    let cells = spec.cells();
    let threads = match spec.threads {
        0 => thread::available_parallelism().map(|p| p.get()).unwrap_or(1),
        t => t,
    }
    .min(cells.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; cells.len()]);
    thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(n, g, seed)) = cells.get(i) else { break };
                let row = run_cell(spec, n, g, seed);
                slots.lock().expect("no poisoned slots")[i] = Some(row);
            });
        }
    });
    let rows = slots
        .into_inner()
        .expect("no poisoned slots")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect();
    let mut report = BenchReport {
        rows,
        ..Default::default()
    };
    report.refit();
    report
}
