use clique::bench::{bench_grid, round_model, Generator, GridSpec};
use clique::{exact_mst_cost, verify};
use clique_core::bits::boolean_product_naive;
use clique_core::clusmat::Orientation;
use clique_core::gen::gen_uniform;
use clique_core::RoutingMode;

fn small(ns: Vec<usize>, generators: Vec<Generator>, seeds: Vec<u64>) -> GridSpec {
    GridSpec {
        ns,
        generators,
        seeds,
        ..GridSpec::default()
    }
}

#[test]
fn three_seeds_three_correct_rows() {
    let spec = small(
        vec![64],
        vec![Generator::Clustered { clusters: 2, spread: 2 }],
        vec![1, 2, 3],
    );
    let report = bench_grid(&spec);
    assert_eq!(report.rows.len(), 3);
    assert!(report.all_correct());
    assert_eq!(report.rows.iter().map(|r| r.seed).collect::<Vec<_>>(), [1, 2, 3]);
    for r in &report.rows {
        let a = Generator::Clustered { clusters: 2, spread: 2 }
            .generate(64, r.seed)
            .unwrap();
        assert_eq!(r.mst_cost, Some(exact_mst_cost(&a).unwrap()));
    }
}

#[test]
fn empty_grid_gives_empty_report() {
    let report = bench_grid(&small(vec![], vec![], vec![]));
    assert!(report.rows.is_empty());
    assert!(report.round_fit.is_none() && report.work_fit.is_none());
    assert_eq!(report.to_csv().unwrap(), "");
}

#[test]
fn failing_cells_do_not_abort_the_grid() {
    let spec = small(
        vec![8],
        vec![
            Generator::Clustered {
                clusters: 20,
                spread: 0,
            },
            Generator::Clustered { clusters: 1, spread: 1 },
        ],
        vec![1],
    );
    let report = bench_grid(&spec);
    assert_eq!(report.rows.len(), 2);
    assert!(!report.rows[0].correct && report.rows[0].error.is_some());
    assert!(report.rows[1].correct && report.rows[1].error.is_none());
    assert!(!report.all_correct());
}

#[test]
fn thread_count_does_not_change_rows() {
    let mut spec = small(
        vec![16, 32],
        vec![
            Generator::Clustered { clusters: 1, spread: 3 },
            Generator::Uniform { density: 0.5 },
        ],
        vec![1, 2],
    );
    spec.threads = 1;
    let serial = bench_grid(&spec);
    spec.threads = 4;
    assert_eq!(bench_grid(&spec), serial);
}

#[test]
fn sixteen_fold_m_costs_little_extra() {
    let n = 64;
    let spec = small(
        vec![n],
        vec![
            Generator::Clustered { clusters: 1, spread: 1 },
            Generator::Clustered {
                clusters: 1,
                spread: 32,
            },
        ],
        vec![3],
    );
    let rows = bench_grid(&spec).rows;
    let (lo, hi) = (&rows[0], &rows[1]);
    assert!(hi.m.unwrap() >= 16 * lo.m.unwrap());
    let ratio = hi.rounds.unwrap() as f64 / lo.rounds.unwrap() as f64;
    let model = round_model(n, hi.m.unwrap()) / round_model(n, lo.m.unwrap());
    assert!(ratio >= 1.0 && ratio <= 4.0 * model, "{ratio} vs model ratio {model}");
}

#[test]
fn simulated_grid_matches_oracle() {
    let mut spec = small(vec![16], vec![Generator::Uniform { density: 0.3 }], vec![5]);
    spec.routing = RoutingMode::Simulated;
    spec.orientation = Orientation::BA;
    let report = bench_grid(&spec);
    assert!(report.all_correct());
    assert_eq!(report.rows[0].orientation.as_deref(), Some("ba"));
}

#[test]
fn verify_examples() {
    let a = gen_uniform(12, 0.4, 1).unwrap();
    let b = gen_uniform(12, 0.4, 2).unwrap();
    let mut c = boolean_product_naive(&a, &b).unwrap();
    assert!(verify(&c, &a, &b).unwrap());
    c.set(2, 5, !c.get(2, 5));
    assert!(!verify(&c, &a, &b).unwrap());
    assert!(verify(&c, &a, &gen_uniform(11, 0.4, 2).unwrap()).is_err());
}
