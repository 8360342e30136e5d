//! File formats, run reports and benchmark grids around `clique-core`.

pub mod bench;
pub mod format;
pub mod report;
pub mod run;

pub use bench::{bench_grid, BenchReport, BenchRow, Fit, Generator, GridSpec};
pub use format::{parse_matrix, parse_tree, read_matrix_file, write_matrix, write_tree, FormatError};
pub use report::RunReport;
pub use run::{exact_distances, exact_mst_cost, run_clusmat, run_hmst, true_tree_cost, verify};
