use clique_core::bits::{boolean_product_naive, hamming_distance, witnesses};
use clique_core::clusmat::{
    assign_pairs, block_count_bound, block_multiply, clusmat_protocol, distribute_witnesses, plan_blocks,
    ClusmatOptions, Orientation, WitnessPacket,
};
use clique_core::gen::{gen_clustered, gen_uniform, GenSpec};
use clique_core::{
    euler_traversal, local_mst, BitVector, BooleanMatrix, Clique, CliqueConfig, IntMatrix, RoutingMode, Tree,
    WeightedEdge,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact_tree(p: &BooleanMatrix) -> Tree {
    let rows = p.rows();
    local_mst(&IntMatrix::from_fn(p.n(), |i, j| {
        hamming_distance(&rows[i - 1], &rows[j - 1]).unwrap() as u64
    }))
    .unwrap()
}

fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> Tree {
    let edges = (2..=n).map(|v| WeightedEdge::new(rng.gen_range(1..v), v, 0)).collect();
    Tree::new(n, edges).unwrap()
}

#[test]
fn plan_invariants_on_random_tours() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..400 {
        let n = rng.gen_range(2..200);
        let tree = random_tree(n, &mut rng);
        let tour = euler_traversal(&tree, 1).unwrap();
        let scale = [0, 1, 3, n as u64][trial % 4];
        let costs: Vec<u64> = (0..tour.len()).map(|_| rng.gen_range(0..=scale)).collect();
        let plan = plan_blocks(&tour, &costs, n).unwrap();
        let m: u64 = costs.iter().sum();
        assert_eq!(plan.m, m);
        assert_eq!(plan.t, block_count_bound(m, n));
        let t = plan.t as u64;
        assert!(t * t * n as u64 >= m + n as u64);
        assert!(t == 1 || (t - 1) * (t - 1) * (n as u64) < m + n as u64);

        // Tour blocks partition the tour positions in order.
        assert!(plan.blocks.len() <= plan.t);
        assert_eq!(plan.blocks[0].start, 0);
        assert_eq!(plan.blocks.last().unwrap().end, tour.len());
        for w in plan.blocks.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        let limit = m.div_ceil(t);
        let max_edge = costs.iter().copied().max().unwrap_or(0);
        for (r, &c) in plan.blocks.iter().zip(&plan.block_costs) {
            assert!(!r.is_empty());
            assert_eq!(c, costs[r.clone()].iter().sum::<u64>());
            assert!(c <= limit + max_edge && c <= limit + n as u64);
        }

        // Column groups partition 1..=n into ⌊n/t⌋ near-equal ranges.
        let q = n / plan.t;
        assert_eq!(plan.column_blocks.len(), q);
        assert_eq!(plan.column_blocks[0].start, 1);
        assert_eq!(plan.column_blocks.last().unwrap().end, n + 1);
        for w in plan.column_blocks.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        let sizes: Vec<usize> = plan.column_blocks.iter().map(|r| r.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        if plan.t * plan.t <= n {
            assert!(sizes.iter().all(|&s| s <= plan.t + 1));
        }

        // Every vertex lies in some block.
        let mut seen = vec![false; n + 1];
        for b in 0..plan.blocks.len() {
            let walk = plan.walk(b);
            assert_eq!(walk.len(), plan.blocks[b].len() + 1);
            assert_eq!(walk[0], plan.start_vertex(b));
            for v in plan.block_vertices(b) {
                seen[v] = true;
            }
        }
        assert!(seen[1..].iter().all(|&s| s));

        // Same inputs, same plan and assignment, bit for bit.
        assert_eq!(plan_blocks(&tour, &costs, n).unwrap(), plan);
        let a = assign_pairs(&plan).unwrap();
        assert_eq!(assign_pairs(&plan).unwrap(), a);
        let mut used = vec![false; n + 1];
        for b in 1..=a.blocks {
            for c in 1..=a.q {
                let node = a.node(b, c);
                assert!(!std::mem::replace(&mut used[node.get()], true));
                assert_eq!(a.pair(node), Some((b, c)));
            }
        }
    }
}

fn packets_for(tree: &Tree, p: &BooleanMatrix) -> Vec<Option<WitnessPacket>> {
    let n = p.n();
    (1..=n)
        .map(|i| {
            (i < n).then(|| {
                let e = tree.edge(i);
                WitnessPacket {
                    edge: i,
                    witnesses: witnesses(p.row(e.u), p.row(e.v)).unwrap(),
                }
            })
        })
        .collect()
}

#[test]
fn witness_delivery_matches_direct_union() {
    for (seed, clusters, spread) in [(1, 2, 3), (2, 1, 6), (3, 4, 1), (4, 16, 8), (5, 1, 0)] {
        let n = 16;
        let p = gen_clustered(&GenSpec::new(n, clusters, spread, seed)).unwrap();
        let tree = exact_tree(&p);
        let tour = euler_traversal(&tree, 1).unwrap();
        let costs: Vec<u64> = tour
            .directed_edges
            .iter()
            .map(|&(u, v)| hamming_distance(p.row(u), p.row(v)).unwrap() as u64)
            .collect();
        let plan = plan_blocks(&tour, &costs, n).unwrap();
        let assign = assign_pairs(&plan).unwrap();
        for mode in [RoutingMode::Simulated, RoutingMode::Accounted] {
            let mut clique = Clique::new(CliqueConfig::new(n, seed).with_routing(mode)).unwrap();
            let got = distribute_witnesses(&mut clique, &tree, &plan, &assign, packets_for(&tree, &p)).unwrap();
            if plan.m == 0 {
                assert_eq!(clique.ledger().rounds, 0);
            }
            for (i, entry) in got.iter().enumerate() {
                let node = clique_core::NodeId::from_idx(i);
                let Some((b, _)) = assign.pair(node) else {
                    assert!(entry.is_none());
                    continue;
                };
                let (gb, lists) = entry.as_ref().unwrap();
                assert_eq!(*gb, b);
                // Direct oracle: each tree edge of the block once, first appearance order.
                let mut want: Vec<(usize, Vec<usize>)> = Vec::new();
                for &(x, y) in &tour.directed_edges[plan.blocks[b - 1].clone()] {
                    let e = tree.edge_index(x, y).unwrap();
                    if want.iter().all(|w| w.0 != e) {
                        let te = tree.edge(e);
                        want.push((e, witnesses(p.row(te.u), p.row(te.v)).unwrap()));
                    }
                }
                assert_eq!(lists, &want, "seed {seed}, node {}", i + 1);
            }
        }
    }
}

#[test]
fn block_multiply_matches_naive_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 32;
    for _ in 0..40 {
        let a = gen_clustered(&GenSpec::new(n, 2, 4, rng.gen())).unwrap();
        let b = gen_uniform(n, rng.gen_range(0.05..0.6), rng.gen()).unwrap();
        let c = boolean_product_naive(&a, &b).unwrap();
        let len = rng.gen_range(1..20);
        let walk: Vec<usize> = (0..len).map(|_| rng.gen_range(1..=n)).collect();
        let steps: Vec<Vec<usize>> = walk
            .windows(2)
            .map(|w| witnesses(a.row(w[0]), a.row(w[1])).unwrap())
            .collect();
        let step_refs: Vec<&[usize]> = steps.iter().map(Vec::as_slice).collect();
        let bt = b.transpose();
        let cols: Vec<(usize, BitVector)> = (1..=n)
            .filter(|_| rng.gen_bool(0.5))
            .map(|j| (j, bt.row(j).clone()))
            .collect();
        let entries = block_multiply(a.row(walk[0]), &walk, &step_refs, &cols).unwrap();
        assert_eq!(entries.len(), walk.len() * cols.len());
        for e in entries {
            assert_eq!(e.bit(), c.get(e.row, e.col));
            assert_eq!(e.overlap, a.row(e.row).and_count(bt.row(e.col)));
        }
    }
}

#[test]
fn block_multiply_rejects_bad_witnesses() {
    let r = BitVector::parse01("1010").unwrap();
    let col = (1, BitVector::parse01("0101").unwrap());
    assert!(block_multiply(&r, &[1, 2], &[&[5]], std::slice::from_ref(&col)).is_err());
    assert!(block_multiply(&r, &[1, 2], &[&[0]], std::slice::from_ref(&col)).is_err());
    assert!(block_multiply(&r, &[1], &[&[2]], &[col]).is_err());
}

fn cfg(n: usize, seed: u64, mode: RoutingMode) -> CliqueConfig {
    CliqueConfig::new(n, seed).with_routing(mode)
}

#[test]
fn identity_left_factor_returns_b() {
    for seed in 0..4 {
        let n = 16;
        let b = gen_uniform(n, 0.4, seed).unwrap();
        for orientation in [Orientation::AB, Orientation::BA, Orientation::Auto] {
            let opts = ClusmatOptions {
                orientation,
                ..Default::default()
            };
            let run = clusmat_protocol(
                &BooleanMatrix::identity(n),
                &b,
                cfg(n, seed, RoutingMode::Simulated),
                &opts,
            )
            .unwrap();
            assert_eq!(run.product, b);
        }
    }
}

#[test]
fn products_are_exact_in_every_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..24 {
        let n = [4, 8, 16, 32][trial % 4];
        let a = if trial % 3 == 0 {
            gen_uniform(n, 0.5, rng.gen()).unwrap()
        } else {
            gen_clustered(&GenSpec::new(n, rng.gen_range(1..=3), rng.gen_range(0..4), rng.gen())).unwrap()
        };
        let b = gen_uniform(n, rng.gen_range(0.1..0.9), rng.gen()).unwrap();
        let want = boolean_product_naive(&a, &b).unwrap();
        for orientation in [Orientation::AB, Orientation::BA] {
            for (mode, strict) in [
                (RoutingMode::Simulated, false),
                (RoutingMode::Simulated, true),
                (RoutingMode::Accounted, false),
            ] {
                let c = if strict {
                    CliqueConfig::strict(n, trial as u64)
                } else {
                    cfg(n, trial as u64, mode)
                };
                let opts = ClusmatOptions {
                    orientation,
                    ..Default::default()
                };
                let run = clusmat_protocol(&a, &b, c, &opts).unwrap();
                assert_eq!(run.product, want, "trial {trial} {orientation} {mode} strict={strict}");
                assert_eq!(run.orientation, orientation);
            }
        }
    }
}

#[test]
fn orientation_follows_estimated_costs() {
    let n = 16;
    // Identical rows of A against random columns of B: AB must win.
    let a = gen_clustered(&GenSpec::new(n, 1, 0, 3)).unwrap();
    let b = gen_uniform(n, 0.5, 4).unwrap();
    let run = clusmat_protocol(&a, &b, cfg(n, 1, RoutingMode::Accounted), &ClusmatOptions::default()).unwrap();
    assert_eq!(run.orientation, Orientation::AB);
    assert_eq!(run.estimated_costs.0, Some((n - 1) as u64));
    // Identical columns of B against random rows of A: BA.
    let run = clusmat_protocol(
        &b,
        &a.transpose(),
        cfg(n, 1, RoutingMode::Accounted),
        &ClusmatOptions::default(),
    )
    .unwrap();
    assert_eq!(run.orientation, Orientation::BA);
    assert_eq!(run.product, boolean_product_naive(&b, &a.transpose()).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ties = 0;
    for trial in 0..12 {
        let a = gen_clustered(&GenSpec::new(n, 2, rng.gen_range(0..5), rng.gen())).unwrap();
        let b = if trial % 2 == 0 {
            a.transpose()
        } else {
            gen_clustered(&GenSpec::new(n, 2, 3, rng.gen())).unwrap().transpose()
        };
        let run = clusmat_protocol(
            &a,
            &b,
            cfg(n, trial, RoutingMode::Accounted),
            &ClusmatOptions::default(),
        )
        .unwrap();
        let (Some(ab), Some(ba)) = run.estimated_costs else {
            panic!("auto computes both costs")
        };
        ties += usize::from(ab == ba);
        let want = if ab <= ba { Orientation::AB } else { Orientation::BA };
        assert_eq!(run.orientation, want);
        assert_eq!(run.product, boolean_product_naive(&a, &b).unwrap());
    }
    assert!(ties > 0, "some instance should tie");
}

#[test]
fn ledger_decomposes_into_steps() {
    for (spread, mode) in [
        (0, RoutingMode::Simulated),
        (3, RoutingMode::Simulated),
        (3, RoutingMode::Accounted),
    ] {
        let n = 32;
        let clusters = if spread == 0 { 1 } else { 2 };
        let a = gen_clustered(&GenSpec::new(n, clusters, spread, 9)).unwrap();
        let b = gen_uniform(n, 0.5, 10).unwrap();
        let run = clusmat_protocol(&a, &b, cfg(n, 2, mode), &ClusmatOptions::default()).unwrap();
        let steps: Vec<u64> = (1..=10)
            .map(|s| run.ledger.section_rounds(&format!("step{s}")))
            .collect();
        assert_eq!(steps.iter().sum::<u64>(), run.ledger.rounds);
        assert_eq!(steps[5], 0, "planning is local");
        if spread == 0 {
            assert_eq!(run.plan.m, 0);
            assert_eq!(run.plan.t, 1);
            assert!(steps[1] * 2 > run.ledger.rounds, "HMST dominates when M = 0: {steps:?}");
        }
    }
}
