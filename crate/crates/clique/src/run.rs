//! One protocol run plus its oracle check.

use clique_core::bits::{boolean_product_naive, hamming_distance};
use clique_core::clusmat::{clusmat_protocol, ClusmatOptions, ClusmatRun};
use clique_core::hmst::{hmst_protocol, HmstOptions, HmstOutput, ProjectionConfig};
use clique_core::{local_mst, BooleanMatrix, CliqueConfig, IntMatrix, Result, Tree};

use crate::report::{clusmat_report, hmst_report, RunReport};

/// True iff `c` is the Boolean product of `a` and `b`.
pub fn verify(c: &BooleanMatrix, a: &BooleanMatrix, b: &BooleanMatrix) -> Result<bool> {
    let expected = boolean_product_naive(a, b)?;
    if c.n() != expected.n() {
        return Err(clique_core::Error::Dimension {
            expected: expected.n(),
            found: c.n(),
        });
    }
    Ok(*c == expected)
}

/// Pairwise Hamming distances between rows, computed directly.
pub fn exact_distances(p: &BooleanMatrix) -> IntMatrix {
    let rows = p.rows();
    IntMatrix::from_fn(p.n(), |i, j| {
        hamming_distance(&rows[i - 1], &rows[j - 1]).expect("equal lengths") as u64
    })
}

/// Exact MST cost of the rows of `p`.
pub fn exact_mst_cost(p: &BooleanMatrix) -> Result<u64> {
    Ok(local_mst(&exact_distances(p))?.cost())
}

/// Cost of `tree`'s topology under true distances.
pub fn true_tree_cost(tree: &Tree, p: &BooleanMatrix) -> u64 {
    let rows = p.rows();
    tree.reweighted(|u, v| hamming_distance(&rows[u - 1], &rows[v - 1]).expect("equal lengths") as u64)
        .cost()
}

pub fn run_clusmat(
    a: &BooleanMatrix,
    b: &BooleanMatrix,
    cfg: CliqueConfig,
    opts: &ClusmatOptions,
) -> Result<(ClusmatRun, RunReport)> {
    let run = clusmat_protocol(a, b, cfg.clone(), opts)?;
    let correct = verify(&run.product, a, b)?;
    let report = clusmat_report(&cfg, &run, correct);
    Ok((run, report))
}

/// Runs HMST on the rows of `points`. `correct` means the tree is an MST of the
/// estimated graph node 1 assembled; the approximation quality is reported apart.
pub fn run_hmst(points: &BooleanMatrix, cfg: CliqueConfig, opts: &HmstOptions) -> Result<(HmstOutput, RunReport)> {
    let (out, ledger) = hmst_protocol(points.rows(), cfg.clone(), opts)?;
    let k = ProjectionConfig::new(points.n(), opts.kappa, opts.epsilon)?.k;
    let correct = out.tree.n() == points.n() && out.estimates.tree()? == out.tree;
    let true_cost = true_tree_cost(&out.tree, points);
    let mst_cost = exact_mst_cost(points)?;
    let report = hmst_report(&cfg, &out, &ledger, k, true_cost, mst_cost, correct);
    Ok((out, report))
}
