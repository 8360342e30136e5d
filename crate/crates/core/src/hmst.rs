//! Approximate minimum spanning tree of `n` points in `{0,1}^n`.
//!
//! Node 1 draws one random binary `k×n` matrix per scale `r = 1, 2, 4, .., 2^L`
//! (`L = ⌈log₂ n⌉`) and ships them to everyone. Each node projects its point at every
//! scale over GF(2) and sends the sketches to node 1, which estimates every pairwise
//! distance by the smallest scale whose sketches are close, then takes the MST of
//! those estimates.
//!
//! Entries of the scale-`r` matrix are 1 with probability `δ(r) = (1 − 2^{−1/r})/2`.
//! A sketch coordinate then differs between two points at distance `h` with
//! probability `(1 − 2^{−h/r})/2`, which is `1/4` at `h = r`. A scale passes when at
//! most `τ·k` coordinates differ, `τ = (1 − 2^{−1.3})/2`, so points closer than
//! `r` pass and points farther than about `1.45·r` fail.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::{hamming_distance, BitVector, IntMatrix};
use crate::codec::{decode_bits, encode_bits, BitReader, BitWriter};
use crate::error::{Error, Result};
use crate::routing::{bounded_route, vector_multicast, MulticastVector, Packet};
use crate::sim::{ceil_log2, Clique, CliqueConfig, NodeId, Payload, RoundLedger};
use crate::tree::{local_mst, Tree};

pub const DEFAULT_KAPPA: f64 = 8.0;
pub const DEFAULT_EPSILON: f64 = 0.45;

/// Probability that one coordinate of a scale-`r` matrix is 1.
pub fn delta(r: u64) -> f64 {
    (1.0 - libm::exp2(-1.0 / r as f64)) / 2.0
}

/// Fraction of differing sketch coordinates below which a scale passes.
pub fn pass_ratio() -> f64 {
    (1.0 - libm::exp2(-1.3)) / 2.0
}

/// Expected fraction of differing sketch coordinates for points at distance `h`
/// under scale `r`.
pub fn collision_ratio(h: u64, r: u64) -> f64 {
    (1.0 - libm::exp2(-(h as f64) / r as f64)) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionConfig {
    pub n: usize,
    /// Sketch length per scale.
    pub k: usize,
    pub kappa: f64,
    pub epsilon: f64,
}

impl ProjectionConfig {
    /// `k = ⌈κ·log₂ n / ε²⌉`.
    pub fn new(n: usize, kappa: f64, epsilon: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config("projection needs n >= 2".into()));
        }
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::Config("epsilon must lie in (0, 1/2)".into()));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Config("kappa must be positive".into()));
        }
        let k = libm::ceil(kappa * libm::log2(n as f64) / (epsilon * epsilon)) as usize;
        Ok(Self {
            n,
            k: k.max(1),
            kappa,
            epsilon,
        })
    }

    pub fn default_for(n: usize) -> Result<Self> {
        Self::new(n, DEFAULT_KAPPA, DEFAULT_EPSILON)
    }

    /// Number of scales, `⌈log₂ n⌉ + 1`.
    pub fn scales(&self) -> usize {
        ceil_log2(self.n) + 1
    }

    /// Scale `s` (0-based) is `r = 2^s`.
    pub fn scale(&self, s: usize) -> u64 {
        1 << s
    }

    /// Largest scale, returned when no scale passes.
    pub fn fallback(&self) -> u64 {
        self.scale(self.scales() - 1)
    }

    /// Largest number of differing coordinates that still passes.
    pub fn threshold(&self) -> usize {
        libm::floor(pass_ratio() * self.k as f64) as usize
    }
}

/// `k` rows of length `n`, each entry 1 with probability [`delta`]`(r)`.
pub fn gen_projection<R: Rng + ?Sized>(r: u64, k: usize, n: usize, rng: &mut R) -> Vec<BitVector> {
    let d = delta(r);
    (0..k)
        .map(|_| {
            let mut row = BitVector::zeros(n);
            for c in 1..=n {
                if rng.gen_bool(d) {
                    row.set(c, true);
                }
            }
            row
        })
        .collect()
}

/// `A·x` over GF(2).
pub fn project(a: &[BitVector], x: &BitVector) -> Result<BitVector> {
    let mut out = BitVector::zeros(a.len().max(1));
    if a.is_empty() {
        return Err(Error::Dimension { expected: 1, found: 0 });
    }
    for (j, row) in a.iter().enumerate() {
        if row.len() != x.len() {
            return Err(Error::Dimension {
                expected: row.len(),
                found: x.len(),
            });
        }
        if row.dot_parity(x) {
            out.set(j + 1, true);
        }
    }
    Ok(out)
}

/// Smallest scale whose sketches differ in at most `threshold` coordinates, or the
/// fallback scale.
pub fn estimate_distance(si: &[BitVector], sj: &[BitVector], cfg: &ProjectionConfig) -> Result<u64> {
    let scales = cfg.scales();
    if si.len() != scales || sj.len() != scales {
        return Err(Error::MalformedSketch("sketch set does not cover every scale"));
    }
    if si.iter().chain(sj).any(|s| s.len() != cfg.k) {
        return Err(Error::MalformedSketch("sketch has the wrong length"));
    }
    let limit = cfg.threshold();
    for s in 0..scales {
        if hamming_distance(&si[s], &sj[s])? <= limit {
            return Ok(cfg.scale(s));
        }
    }
    Ok(cfg.fallback())
}

/// Power-of-two distance estimates between all pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EstimatedGraph {
    pub weights: IntMatrix,
}

impl EstimatedGraph {
    pub fn from_sketches(sketches: &[Vec<BitVector>], cfg: &ProjectionConfig) -> Result<Self> {
        let n = sketches.len();
        let mut weights = IntMatrix::zeros(n);
        for i in 1..=n {
            for j in i + 1..=n {
                let w = estimate_distance(&sketches[i - 1], &sketches[j - 1], cfg)?;
                weights.set(i, j, w);
                weights.set(j, i, w);
            }
        }
        Ok(Self { weights })
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.weights.get(i, j)
    }

    /// Exact MST of the estimates.
    pub fn tree(&self) -> Result<Tree> {
        local_mst(&self.weights)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HmstOptions {
    pub kappa: f64,
    pub epsilon: f64,
    /// Broadcast a 64-bit seed instead of the projection matrices.
    pub seed_mode: bool,
}

impl Default for HmstOptions {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            epsilon: DEFAULT_EPSILON,
            seed_mode: false,
        }
    }
}

/// Node 1's result.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HmstOutput {
    /// MST of the estimated graph; edge weights are the estimates.
    pub tree: Tree,
    pub estimates: EstimatedGraph,
}

impl HmstOutput {
    /// Sum of estimated weights along the tree.
    pub fn estimated_cost(&self) -> u64 {
        self.tree.cost()
    }
}

/// Runs the protocol on a fresh clique; point `i` starts at node `i`.
pub fn hmst_protocol(points: &[BitVector], cfg: CliqueConfig, opts: &HmstOptions) -> Result<(HmstOutput, RoundLedger)> {
    let mut clique = Clique::new(cfg)?;
    let out = run_hmst(&mut clique, points, opts, Some(["step1", "step2", "step3"]))?;
    Ok((out, clique.into_ledger()))
}

#[derive(Default)]
struct HmstNode {
    point: BitVector,
    /// Per scale, the `k` projection rows.
    matrices: Vec<Vec<BitVector>>,
    seed: Option<u64>,
    sketches: Vec<BitVector>,
    /// Node 1 only: sketch chunks per origin.
    gathered: Vec<Vec<Payload>>,
}

/// Runs the protocol inside `clique`. With `sections` set, rounds are attributed to
/// the three named steps; otherwise to whatever section the caller selected.
pub(crate) fn run_hmst(
    clique: &mut Clique,
    points: &[BitVector],
    opts: &HmstOptions,
    sections: Option<[&str; 3]>,
) -> Result<HmstOutput> {
    let n = clique.n();
    if points.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: points.len(),
        });
    }
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            found: p.len(),
        });
    }
    let pc = ProjectionConfig::new(n, opts.kappa, opts.epsilon)?;
    let (k, scales) = (pc.k, pc.scales());
    let w = clique.capacity();
    let words = n.div_ceil(64) as u64;
    let mut nodes: Vec<HmstNode> = points
        .iter()
        .map(|p| HmstNode {
            point: p.clone(),
            ..HmstNode::default()
        })
        .collect();

    // Step 1: node 1 draws the matrices and ships them (or a seed) to everyone.
    if let Some(s) = sections {
        clique.set_section(s[0]);
    }
    clique.local(&mut nodes, |ctx, st| {
        if ctx.id().get() == 1 {
            if opts.seed_mode {
                st.seed = Some(ctx.rng().gen());
            } else {
                st.matrices = (0..scales)
                    .map(|s| gen_projection(pc.scale(s), k, n, ctx.rng()))
                    .collect();
                ctx.charge_work(scales as u64 * k as u64 * n as u64);
            }
        }
        Ok(())
    })?;
    let everyone_else: Vec<NodeId> = (2..=n).map(NodeId::new).collect();
    if opts.seed_mode {
        let seed = nodes[0].seed.expect("node 1 drew a seed");
        let mut bits = BitWriter::new();
        bits.push(seed, 64);
        let v = MulticastVector {
            sender: NodeId::new(1),
            chunks: bits.into_chunks(w),
            recipients: everyone_else.clone(),
        };
        let out = vector_multicast(clique, &[v])?;
        for (i, st) in nodes.iter_mut().enumerate().skip(1) {
            let (_, chunks) = &out.received[i][0];
            st.seed = Some(BitReader::new(chunks).read(64)?);
        }
        clique.local(&mut nodes, |ctx, st| {
            let mut rng = ChaCha8Rng::seed_from_u64(st.seed.expect("seed delivered"));
            st.matrices = (0..scales)
                .map(|s| gen_projection(pc.scale(s), k, n, &mut rng))
                .collect();
            ctx.charge_work(scales as u64 * k as u64 * n as u64);
            Ok(())
        })?;
    } else {
        for st in nodes.iter_mut().skip(1) {
            st.matrices = vec![Vec::with_capacity(k); scales];
        }
        for s in 0..scales {
            for j in 0..k {
                let v = MulticastVector {
                    sender: NodeId::new(1),
                    chunks: encode_bits(&nodes[0].matrices[s][j], w),
                    recipients: everyone_else.clone(),
                };
                let out = vector_multicast(clique, &[v])?;
                for (i, st) in nodes.iter_mut().enumerate().skip(1) {
                    let (_, chunks) = &out.received[i][0];
                    st.matrices[s].push(decode_bits(chunks, n, w)?);
                }
            }
        }
    }

    // Step 2: every node sketches its point and sends the sketches to node 1.
    if let Some(s) = sections {
        clique.set_section(s[1]);
    }
    clique.local(&mut nodes, |ctx, st| {
        st.sketches = st
            .matrices
            .iter()
            .map(|a| project(a, &st.point))
            .collect::<Result<_>>()?;
        ctx.charge_work(scales as u64 * k as u64 * words);
        Ok(())
    })?;
    let mut batch: Vec<Vec<Packet>> = Vec::with_capacity(n);
    for (i, st) in nodes.iter().enumerate() {
        let me = NodeId::from_idx(i);
        if i == 0 {
            batch.push(Vec::new());
            continue;
        }
        let mut bits = BitWriter::new();
        for sk in &st.sketches {
            push_bits(&mut bits, sk);
        }
        batch.push(
            bits.into_chunks(w)
                .into_iter()
                .enumerate()
                .map(|(c, p)| Packet::new(me, NodeId::new(1), c as u32, p))
                .collect(),
        );
    }
    let per_node = batch[1].len();
    let received = bounded_route(clique, batch, per_node.div_ceil(n).max(1), per_node.max(1))?;
    nodes[0].gathered = vec![Vec::new(); n];
    for p in &received[0] {
        nodes[0].gathered[p.origin.idx()].push(p.payload);
    }

    // Step 3: node 1 estimates all distances and builds the tree.
    if let Some(s) = sections {
        clique.set_section(s[2]);
    }
    let node1 = &nodes[0];
    let mut all = Vec::with_capacity(n);
    all.push(node1.sketches.clone());
    for chunks in &node1.gathered[1..] {
        let mut r = BitReader::new(chunks);
        let mut sk = Vec::with_capacity(scales);
        for _ in 0..scales {
            sk.push(read_bits(&mut r, k)?);
        }
        all.push(sk);
    }
    let estimates = EstimatedGraph::from_sketches(&all, &pc)?;
    let tree = estimates.tree()?;
    let pairs = (n * (n - 1) / 2) as u64;
    clique.charge_work(
        NodeId::new(1),
        pairs * scales as u64 * k.div_ceil(64) as u64 + pairs * ceil_log2(n).max(1) as u64,
    );
    Ok(HmstOutput { tree, estimates })
}

fn push_bits(w: &mut BitWriter, v: &BitVector) {
    let mut left = v.len();
    for &word in v.words() {
        let width = left.min(64);
        w.push(if width == 64 { word } else { word & ((1 << width) - 1) }, width);
        left -= width;
    }
}

fn read_bits(r: &mut BitReader, len: usize) -> Result<BitVector> {
    let mut words = Vec::with_capacity(len.div_ceil(64));
    let mut left = len;
    while left > 0 {
        let width = left.min(64);
        words.push(
            r.read(width)
                .map_err(|_| Error::MalformedSketch("sketch stream too short"))?,
        );
        left -= width;
    }
    Ok(BitVector::from_words(words, len))
}
