use clique_core::bits::hamming_distance;
use clique_core::gen::{gen_clustered, gen_uniform, GenSpec};
use clique_core::{local_mst, BooleanMatrix, IntMatrix};

fn mst_cost(p: &BooleanMatrix) -> u64 {
    let rows = p.rows();
    local_mst(&IntMatrix::from_fn(p.n(), |i, j| {
        hamming_distance(&rows[i - 1], &rows[j - 1]).unwrap() as u64
    }))
    .unwrap()
    .cost()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, v.sqrt())
}

#[test]
fn one_center_no_spread_gives_equal_rows() {
    let p = gen_clustered(&GenSpec::new(40, 1, 0, 3)).unwrap();
    assert!(p.rows().iter().all(|r| r == p.row(1)));
    assert_eq!(mst_cost(&p), 0);
}

#[test]
fn one_center_unit_spread_is_cheap() {
    for seed in 0..10 {
        let p = gen_clustered(&GenSpec::new(64, 1, 1, seed)).unwrap();
        assert!(mst_cost(&p) <= 2 * 64);
    }
}

#[test]
fn many_centers_approach_the_uniform_baseline() {
    let n = 64;
    let uniform: Vec<f64> = (0..20)
        .map(|s| mst_cost(&gen_uniform(n, 0.5, 100 + s).unwrap()) as f64)
        .collect();
    let clustered: Vec<f64> = (0..20)
        .map(|s| mst_cost(&gen_clustered(&GenSpec::new(n, n, 0, 200 + s)).unwrap()) as f64)
        .collect();
    let few: Vec<f64> = (0..20)
        .map(|s| mst_cost(&gen_clustered(&GenSpec::new(n, 4, 0, 300 + s)).unwrap()) as f64)
        .collect();
    let (u, _) = mean_sd(&uniform);
    let (c, _) = mean_sd(&clustered);
    let (f, _) = mean_sd(&few);
    // Centers drawn with replacement leave about 1 − 1/e of the rows distinct.
    assert!(c < u && c > 0.5 * u, "{c} vs {u}");
    assert!(f < 0.1 * u, "{f} vs {u}");
}

#[test]
fn uniform_mst_cost_within_three_sigma_of_repeated_seeds() {
    let n = 64;
    let costs: Vec<f64> = (0..40)
        .map(|s| mst_cost(&gen_uniform(n, 0.5, s).unwrap()) as f64)
        .collect();
    let (m, sd) = mean_sd(&costs);
    for s in 1000..1005 {
        let c = mst_cost(&gen_uniform(n, 0.5, s).unwrap()) as f64;
        assert!((c - m).abs() <= 3.0 * sd, "{c} vs {m} ± {sd}");
    }
}

#[test]
fn uniform_extremes() {
    assert_eq!(gen_uniform(12, 0.0, 1).unwrap(), BooleanMatrix::zeros(12));
    let ones = gen_uniform(12, 1.0, 1).unwrap();
    assert!(ones.rows().iter().all(|r| r.count_ones() == 12));
    assert_eq!(mst_cost(&ones), 0);
}

#[test]
fn generators_are_deterministic_and_validated() {
    let spec = GenSpec::new(30, 3, 5, 8);
    assert_eq!(gen_clustered(&spec).unwrap(), gen_clustered(&spec).unwrap());
    assert_ne!(
        gen_clustered(&spec).unwrap(),
        gen_clustered(&GenSpec::new(30, 3, 5, 9)).unwrap()
    );
    assert_eq!(gen_uniform(30, 0.3, 2).unwrap(), gen_uniform(30, 0.3, 2).unwrap());
    assert!(gen_clustered(&GenSpec::new(30, 0, 1, 1)).is_err());
    assert!(gen_clustered(&GenSpec::new(30, 31, 1, 1)).is_err());
    assert!(gen_clustered(&GenSpec::new(30, 1, 31, 1)).is_err());
    let mut bad = GenSpec::new(30, 1, 1, 1);
    bad.density = 1.5;
    assert!(gen_clustered(&bad).is_err());
    assert!(gen_uniform(30, -0.1, 1).is_err());
}
