//! JSON run reports.

use std::collections::BTreeMap;

use clique_core::clusmat::ClusmatRun;
use clique_core::hmst::HmstOutput;
use clique_core::{BooleanMatrix, CliqueConfig, RoundLedger, Tree};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::format::{write_matrix, write_tree};

pub const CLUSMAT_STEPS: usize = 10;
pub const HMST_STEPS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub protocol: String,
    pub n: usize,
    #[serde(rename = "W")]
    pub capacity: usize,
    pub strict: bool,
    pub seed: u64,
    pub routing: String,
    pub rounds: u64,
    pub messages: u64,
    pub bits: u64,
    pub work_total: u64,
    pub work_max_node: u64,
    /// SHA-256 of the result in its text format.
    pub result_digest: String,
    /// Rounds per protocol step, every step present.
    pub steps: BTreeMap<String, u64>,
    pub primitives: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusmat: Option<ClusmatFigures>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hmst: Option<HmstFigures>,
    /// Checked against a sequential oracle.
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusmatFigures {
    pub orientation: String,
    #[serde(rename = "M_realized")]
    pub m_realized: u64,
    pub t: usize,
    pub blocks: usize,
    pub column_blocks: usize,
    pub estimated_cost_ab: Option<u64>,
    pub estimated_cost_ba: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmstFigures {
    pub k: usize,
    pub estimated_cost: u64,
    /// Cost of the returned tree under true Hamming distances.
    pub true_cost: u64,
    pub mst_cost: u64,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn matrix_digest(m: &BooleanMatrix) -> String {
    sha256_hex(&write_matrix(m))
}

pub fn tree_digest(t: &Tree) -> String {
    sha256_hex(&write_tree(t))
}

fn step_rounds(ledger: &RoundLedger, steps: usize) -> BTreeMap<String, u64> {
    (1..=steps)
        .map(|s| {
            let name = format!("step{s}");
            let r = ledger.section_rounds(&name);
            (name, r)
        })
        .collect()
}

fn base(
    protocol: &str,
    cfg: &CliqueConfig,
    ledger: &RoundLedger,
    steps: usize,
    digest: String,
    correct: bool,
) -> RunReport {
    RunReport {
        protocol: protocol.to_string(),
        n: cfg.n,
        capacity: cfg.capacity,
        strict: cfg.strict,
        seed: cfg.seed,
        routing: cfg.routing.to_string(),
        rounds: ledger.rounds,
        messages: ledger.messages,
        bits: ledger.bits,
        work_total: ledger.work_total(),
        work_max_node: ledger.work_max_node(),
        result_digest: digest,
        steps: step_rounds(ledger, steps),
        primitives: ledger.primitives.clone(),
        clusmat: None,
        hmst: None,
        correct,
    }
}

pub fn clusmat_report(cfg: &CliqueConfig, run: &ClusmatRun, correct: bool) -> RunReport {
    let mut r = base(
        "clusmat",
        cfg,
        &run.ledger,
        CLUSMAT_STEPS,
        matrix_digest(&run.product),
        correct,
    );
    r.clusmat = Some(ClusmatFigures {
        orientation: run.orientation.to_string(),
        m_realized: run.plan.m,
        t: run.plan.t,
        blocks: run.plan.blocks,
        column_blocks: run.plan.column_blocks,
        estimated_cost_ab: run.estimated_costs.0,
        estimated_cost_ba: run.estimated_costs.1,
    });
    r
}

pub fn hmst_report(
    cfg: &CliqueConfig,
    out: &HmstOutput,
    ledger: &RoundLedger,
    k: usize,
    true_cost: u64,
    mst_cost: u64,
    correct: bool,
) -> RunReport {
    let mut r = base("hmst", cfg, ledger, HMST_STEPS, tree_digest(&out.tree), correct);
    r.hmst = Some(HmstFigures {
        k,
        estimated_cost: out.estimated_cost(),
        true_cost,
        mst_cost,
    });
    r
}
