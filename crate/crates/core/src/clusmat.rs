//! Boolean matrix product guided by a spanning tree of the rows of `A`.
//!
//! Rows of `A` that are close in Hamming distance are cheap to derive from one
//! another. An approximate MST of the rows is walked as an Euler tour, the tour is
//! cut into at most `t` blocks of roughly equal cost and the columns of `B` into
//! `⌊n/t⌋` groups. Each (tour block, column group) pair goes to its own node, which
//! rebuilds the rows of its block from one starting row plus the differing
//! coordinates along the tour, and updates per-column overlap counts only where a
//! row changes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::bits::{witnesses, BitVector, BooleanMatrix};
use crate::codec::{decode_bits, encode_bits, BitReader, BitWriter};
use crate::error::{Error, Result};
use crate::hmst::{run_hmst, HmstOptions, HmstOutput};
use crate::routing::{bounded_route, vector_multicast, MulticastVector, Packet};
use crate::sim::{index_bits, Clique, CliqueConfig, NodeId, Payload, RoundLedger, Status};
use crate::tree::{euler_traversal, Traversal, Tree, WeightedEdge};

const TAG_DECISION: u16 = 0x200;
const TAG_PARENT: u16 = 0x201;
const TAG_TREE: u16 = 0x202;
const TAG_DIST: u16 = 0x203;

/// Smallest `t ≥ 1` with `t² ≥ M/n + 1`.
pub fn block_count_bound(m: u64, n: usize) -> usize {
    let need = m + n as u64;
    let mut t = libm::sqrt(need as f64 / n as f64) as u64;
    while t * t * (n as u64) < need {
        t += 1;
    }
    while t > 1 && (t - 1) * (t - 1) * (n as u64) >= need {
        t -= 1;
    }
    t.max(1) as usize
}

/// Tour blocks, column groups and the quantities they derive from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TraversalPlan {
    pub n: usize,
    pub traversal: Traversal,
    /// Total cost of the tour.
    pub m: u64,
    pub t: usize,
    /// Consecutive ranges of tour edge positions (0-based).
    pub blocks: Vec<Range<usize>>,
    pub block_costs: Vec<u64>,
    /// Consecutive 1-based column ranges, `⌊n/t⌋` of them.
    pub column_blocks: Vec<Range<usize>>,
}

impl TraversalPlan {
    /// Vertices visited by block `b` (0-based) in walk order, repeats included.
    pub fn walk(&self, b: usize) -> Vec<usize> {
        let r = &self.blocks[b];
        let edges = &self.traversal.directed_edges[r.clone()];
        let mut walk = Vec::with_capacity(edges.len() + 1);
        walk.push(edges[0].0);
        walk.extend(edges.iter().map(|e| e.1));
        walk
    }

    pub fn start_vertex(&self, b: usize) -> usize {
        self.traversal.directed_edges[self.blocks[b].start].0
    }

    /// Distinct vertices of block `b` in order of first visit.
    pub fn block_vertices(&self, b: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n + 1];
        self.walk(b)
            .into_iter()
            .filter(|&v| !core::mem::replace(&mut seen[v], true))
            .collect()
    }
}

/// Cuts the tour greedily: a block closes once its cost reaches `⌈M/t⌉`, and after
/// `t − 1` closed blocks the remainder forms the last one.
pub fn plan_blocks(traversal: &Traversal, costs: &[u64], n: usize) -> Result<TraversalPlan> {
    if costs.len() != traversal.len() {
        return Err(Error::InvalidPlan(format!(
            "{} costs for a tour of {} edges",
            costs.len(),
            traversal.len()
        )));
    }
    if n < 2 || traversal.is_empty() {
        return Err(Error::InvalidPlan("planning needs n >= 2 and a non-empty tour".into()));
    }
    let m: u64 = costs.iter().sum();
    let t = block_count_bound(m, n);
    let q = n / t;
    if q == 0 {
        return Err(Error::InvalidPlan(format!("tour cost {m} is too large for n = {n}")));
    }
    let limit = m.div_ceil(t as u64);
    let mut blocks = Vec::with_capacity(t);
    let mut block_costs = Vec::with_capacity(t);
    let (mut start, mut acc) = (0, 0u64);
    for (i, &c) in costs.iter().enumerate() {
        acc += c;
        if blocks.len() + 1 < t && acc >= limit && limit > 0 {
            blocks.push(start..i + 1);
            block_costs.push(acc);
            start = i + 1;
            acc = 0;
        }
    }
    if start < costs.len() {
        blocks.push(start..costs.len());
        block_costs.push(acc);
    }
    let (base, extra) = (n / q, n % q);
    let mut column_blocks = Vec::with_capacity(q);
    let mut first = 1;
    for c in 0..q {
        let size = base + usize::from(c < extra);
        column_blocks.push(first..first + size);
        first += size;
    }
    let mut traversal = traversal.clone();
    traversal.costs = costs.to_vec();
    Ok(TraversalPlan {
        n,
        traversal,
        m,
        t,
        blocks,
        block_costs,
        column_blocks,
    })
}

/// Block pair `(b, c)` (1-based) runs on node `(b − 1)·q + c`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockAssignment {
    pub blocks: usize,
    pub q: usize,
}

impl BlockAssignment {
    pub fn node(&self, b: usize, c: usize) -> NodeId {
        debug_assert!((1..=self.blocks).contains(&b) && (1..=self.q).contains(&c));
        NodeId::new((b - 1) * self.q + c)
    }

    /// The pair handled by `node`, if any.
    pub fn pair(&self, node: NodeId) -> Option<(usize, usize)> {
        let i = node.idx();
        (i < self.blocks * self.q).then(|| (i / self.q + 1, i % self.q + 1))
    }

    pub fn pairs(&self) -> usize {
        self.blocks * self.q
    }

    /// Nodes of block `b` (1-based), one per column group.
    pub fn block_nodes(&self, b: usize) -> impl Iterator<Item = NodeId> + '_ {
        (1..=self.q).map(move |c| self.node(b, c))
    }
}

pub fn assign_pairs(plan: &TraversalPlan) -> Result<BlockAssignment> {
    let a = BlockAssignment {
        blocks: plan.blocks.len(),
        q: plan.column_blocks.len(),
    };
    if a.pairs() > plan.n || a.q == 0 || a.blocks == 0 {
        return Err(Error::InvalidPlan(format!(
            "{} block pairs for {} nodes",
            a.pairs(),
            plan.n
        )));
    }
    Ok(a)
}

/// The differing coordinates of the endpoint rows of tree edge `edge` (1-based).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WitnessPacket {
    pub edge: usize,
    pub witnesses: Vec<usize>,
}

/// Where the witnesses of one tour block live once laid out in a single list.
#[derive(Clone, Debug, PartialEq, Eq)]
struct BlockLayout {
    /// Tree edges of the block, each once, in order of first appearance.
    edges: Vec<usize>,
    /// Start position of each edge's witnesses; one extra entry holds the total.
    starts: Vec<usize>,
    /// Witnesses held by one representative.
    cap: usize,
    /// Positions of earlier blocks, making `offset + position` unique.
    offset: usize,
}

impl BlockLayout {
    fn total(&self) -> usize {
        *self.starts.last().expect("starts is never empty")
    }

    fn reps(&self) -> usize {
        self.total().div_ceil(self.cap)
    }

    fn segment(&self, rep: usize) -> Range<usize> {
        rep * self.cap..((rep + 1) * self.cap).min(self.total())
    }

    /// Index into `edges` of the edge holding position `p`.
    fn edge_at(&self, p: usize) -> usize {
        self.starts.partition_point(|&s| s <= p) - 1
    }
}

fn layouts(plan: &TraversalPlan, tree: &Tree, dists: &[u64]) -> Vec<BlockLayout> {
    let q = plan.column_blocks.len();
    let mut offset = 0;
    let mut out = Vec::with_capacity(plan.blocks.len());
    for r in &plan.blocks {
        let mut seen = BTreeMap::new();
        let mut edges = Vec::new();
        for &(x, y) in &plan.traversal.directed_edges[r.clone()] {
            let e = tree.edge_index(x, y).expect("tour follows tree edges");
            if seen.insert(e, ()).is_none() {
                edges.push(e);
            }
        }
        let mut starts = Vec::with_capacity(edges.len() + 1);
        let mut acc = 0;
        starts.push(0);
        for &e in &edges {
            acc += dists[e - 1] as usize;
            starts.push(acc);
        }
        let cap = plan.n.max(acc.div_ceil(q));
        out.push(BlockLayout {
            edges,
            starts,
            cap,
            offset,
        });
        offset += acc;
    }
    out
}

/// One product entry: `overlap` counts coordinates where the row and column are both 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockEntry {
    pub row: usize,
    pub col: usize,
    pub overlap: usize,
}

impl BlockEntry {
    pub fn bit(&self) -> bool {
        self.overlap > 0
    }
}

/// Walks a block: `walk[0]` has row `start_row`, and row `walk[s + 1]` differs from row
/// `walk[s]` exactly at `steps[s]`. Emits one entry per walk position and column.
pub fn block_multiply(
    start_row: &BitVector,
    walk: &[usize],
    steps: &[&[usize]],
    columns: &[(usize, BitVector)],
) -> Result<Vec<BlockEntry>> {
    if walk.len() != steps.len() + 1 {
        return Err(Error::Dimension {
            expected: steps.len() + 1,
            found: walk.len(),
        });
    }
    let n = start_row.len();
    if let Some((_, c)) = columns.iter().find(|(_, c)| c.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            found: c.len(),
        });
    }
    let mut row = start_row.clone();
    let mut counts: Vec<usize> = columns.iter().map(|(_, c)| row.and_count(c)).collect();
    let mut out = Vec::with_capacity(walk.len() * columns.len());
    let emit = |out: &mut Vec<BlockEntry>, v: usize, counts: &[usize]| {
        for ((j, _), &overlap) in columns.iter().zip(counts) {
            out.push(BlockEntry {
                row: v,
                col: *j,
                overlap,
            });
        }
    };
    emit(&mut out, walk[0], &counts);
    for (s, w) in steps.iter().enumerate() {
        for &x in w.iter() {
            if x == 0 || x > n {
                return Err(Error::InvalidWitness { index: x, len: n });
            }
            let now = !row.get(x);
            row.set(x, now);
            for ((_, c), count) in columns.iter().zip(counts.iter_mut()) {
                if c.get(x) {
                    if now {
                        *count += 1;
                    } else {
                        *count -= 1;
                    }
                }
            }
        }
        emit(&mut out, walk[s + 1], &counts);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Orientation {
    /// Pick the side whose rows (of `A`) or columns (of `B`) have the cheaper tree.
    #[default]
    Auto,
    AB,
    BA,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Auto => "auto",
            Orientation::AB => "ab",
            Orientation::BA => "ba",
        })
    }
}

impl core::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "ab" => Ok(Self::AB),
            "ba" => Ok(Self::BA),
            other => Err(Error::Config(format!("unknown orientation {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ClusmatOptions {
    pub orientation: Orientation,
    pub hmst: HmstOptions,
}

/// Plan figures of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct PlanStats {
    /// Tour cost in true Hamming distances.
    pub m: u64,
    pub t: usize,
    pub blocks: usize,
    pub column_blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusmatRun {
    pub product: BooleanMatrix,
    /// `AB` or `BA`, never `Auto`.
    pub orientation: Orientation,
    pub plan: PlanStats,
    /// Estimated tree costs for the rows of `A` and the columns of `B`, when computed.
    pub estimated_costs: (Option<u64>, Option<u64>),
    pub ledger: RoundLedger,
}

/// Runs the protocol on a fresh clique. Node `i` starts with row `i` of `A` and row
/// `i` of `B`, and ends with row `i` of the product.
pub fn clusmat_protocol(
    a: &BooleanMatrix,
    b: &BooleanMatrix,
    cfg: CliqueConfig,
    opts: &ClusmatOptions,
) -> Result<ClusmatRun> {
    let n = cfg.n;
    if a.n() != n || b.n() != n {
        return Err(Error::Dimension {
            expected: n,
            found: if a.n() != n { a.n() } else { b.n() },
        });
    }
    let mut clique = Clique::new(cfg)?;
    let (rows, orientation, plan, estimated_costs) = run_clusmat(&mut clique, a, b, opts)?;
    Ok(ClusmatRun {
        product: BooleanMatrix::from_rows(rows)?,
        orientation,
        plan,
        estimated_costs,
        ledger: clique.into_ledger(),
    })
}

/// [`clusmat_protocol`] with the orientation chosen by comparing estimated tree costs.
pub fn choose_orientation(
    a: &BooleanMatrix,
    b: &BooleanMatrix,
    cfg: CliqueConfig,
    opts: &ClusmatOptions,
) -> Result<ClusmatRun> {
    let opts = ClusmatOptions {
        orientation: Orientation::Auto,
        ..*opts
    };
    clusmat_protocol(a, b, cfg, &opts)
}

/// Moves bit `(i, j)` from node `i` to node `j`, for every `j ≠ i`.
fn transpose_bits(clique: &mut Clique, rows: &[BitVector]) -> Result<Vec<BitVector>> {
    let n = clique.n();
    let batch: Vec<Vec<Packet>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let me = NodeId::from_idx(i);
            (1..=n)
                .filter(|&j| j != i + 1)
                .map(|j| Packet::new(me, NodeId::new(j), j as u32, Payload::bit(r.get(j))))
                .collect()
        })
        .collect();
    let got = bounded_route(clique, batch, 1, 1)?;
    let mut out = Vec::with_capacity(n);
    for (i, items) in got.into_iter().enumerate() {
        let mut col = BitVector::zeros(n);
        col.set(i + 1, rows[i].get(i + 1));
        for p in items {
            col.set(p.origin.get(), p.payload.value() == 1);
        }
        out.push(col);
    }
    Ok(out)
}

type Outcome = (Vec<BitVector>, Orientation, PlanStats, (Option<u64>, Option<u64>));

fn run_clusmat(clique: &mut Clique, a: &BooleanMatrix, b: &BooleanMatrix, opts: &ClusmatOptions) -> Result<Outcome> {
    let n = clique.n();
    clique.set_section("step1");
    let a_rows: Vec<BitVector> = a.rows().to_vec();
    let b_cols = transpose_bits(clique, b.rows())?;

    clique.set_section("step2");
    let (orientation, tree, costs) = match opts.orientation {
        Orientation::AB => {
            let h = run_hmst(clique, &a_rows, &opts.hmst, None)?;
            let c = h.estimated_cost();
            (Orientation::AB, h, (Some(c), None))
        }
        Orientation::BA => {
            let h = run_hmst(clique, &b_cols, &opts.hmst, None)?;
            let c = h.estimated_cost();
            (Orientation::BA, h, (None, Some(c)))
        }
        Orientation::Auto => {
            let ha = run_hmst(clique, &a_rows, &opts.hmst, None)?;
            let hb = run_hmst(clique, &b_cols, &opts.hmst, None)?;
            let (ca, cb) = (ha.estimated_cost(), hb.estimated_cost());
            let pick_ab = ca <= cb;
            announce_decision(clique, pick_ab)?;
            if pick_ab {
                (Orientation::AB, ha, (Some(ca), Some(cb)))
            } else {
                (Orientation::BA, hb, (Some(ca), Some(cb)))
            }
        }
    };
    let (rows, cols) = match orientation {
        Orientation::BA => (b_cols, a_rows),
        _ => (a_rows, b_cols),
    };
    let (mut result, plan) = tree_multiply(clique, rows, cols, tree)?;
    if orientation == Orientation::BA {
        result = transpose_bits(clique, &result)?;
    }
    debug_assert_eq!(result.len(), n);
    Ok((result, orientation, plan, costs))
}

/// Node 1 tells everyone which orientation won: one bit per node.
fn announce_decision(clique: &mut Clique, pick_ab: bool) -> Result<()> {
    // (decision heard, already sent)
    let mut nodes = vec![(None, false); clique.n()];
    nodes[0].0 = Some(pick_ab);
    clique.run_phase(&mut nodes, |ctx, st| {
        for m in ctx.inbox() {
            if m.tag == TAG_DECISION {
                st.0 = Some(m.payload.value() == 1);
            }
        }
        if ctx.id().get() == 1 && !core::mem::replace(&mut st.1, true) {
            let bit = Payload::bit(st.0 == Some(true));
            for d in (2..=ctx.n()).map(NodeId::new) {
                ctx.post(d, TAG_DECISION, d.idx() as u32, bit)?;
            }
        }
        Ok(Status::Done)
    })?;
    if nodes.iter().any(|h| h.0 != Some(pick_ab)) {
        return Err(Error::Protocol("orientation decision did not reach every node".into()));
    }
    Ok(())
}

#[derive(Default)]
struct TmNode {
    row: BitVector,
    col: BitVector,
    /// Parent of this node's vertex in the tree rooted at 1.
    parent: Option<usize>,
    /// Parents of all vertices 2..=n, index 0 unused.
    parents: Vec<usize>,
    tree: Option<Tree>,
    /// Rows of this node's tree edge endpoints.
    endpoint_rows: Vec<(usize, BitVector)>,
    packet: Option<WitnessPacket>,
    dists: Vec<u64>,
    plan: Option<TraversalPlan>,
    assign: Option<BlockAssignment>,
    layouts: Vec<BlockLayout>,
    start_row: Option<BitVector>,
    /// Representative: its own witness segment.
    segment: Vec<usize>,
    /// Block pair: the whole witness list of its block.
    store: Vec<usize>,
    /// Scratch flag for one-shot sends within a phase.
    flag: bool,
    columns: Vec<(usize, BitVector)>,
    result: BitVector,
}

impl TmNode {
    fn plan(&self) -> &TraversalPlan {
        self.plan.as_ref().expect("plan computed")
    }

    fn assign(&self) -> &BlockAssignment {
        self.assign.as_ref().expect("assignment computed")
    }
}

/// The tree-guided multiplication proper: rows of the left factor and columns of the
/// right one are at their nodes, node 1 holds the tree.
fn tree_multiply(
    clique: &mut Clique,
    rows: Vec<BitVector>,
    cols: Vec<BitVector>,
    hmst: HmstOutput,
) -> Result<(Vec<BitVector>, PlanStats)> {
    let n = clique.n();
    let w = clique.capacity();
    let ib = index_bits(n);
    let words = n.div_ceil(64) as u64;
    let mut nodes: Vec<TmNode> = rows
        .into_iter()
        .zip(cols)
        .map(|(row, col)| TmNode {
            row,
            col,
            result: BitVector::zeros(n),
            ..TmNode::default()
        })
        .collect();

    // Step 3: node 1 tells each vertex its parent, then every vertex tells everyone.
    clique.set_section("step3");
    let mut parents = vec![0usize; n + 1];
    {
        let t = &hmst.tree;
        let tour = euler_traversal(t, 1)?;
        for &(x, y) in &tour.directed_edges {
            if y != 1 && parents[y] == 0 {
                parents[y] = x;
            }
        }
    }
    nodes[0].parents = parents;
    clique.run_phase(&mut nodes, |ctx, st| {
        let me = ctx.id();
        for m in ctx.inbox() {
            let v = m.payload.value() as usize + 1;
            match m.tag {
                TAG_PARENT => st.parent = Some(v),
                TAG_TREE => {
                    if st.parents.is_empty() {
                        st.parents = vec![0; ctx.n() + 1];
                    }
                    st.parents[m.src.get()] = v;
                }
                t => return Err(Error::Protocol(format!("unexpected tag {t:#x} in tree broadcast"))),
            }
        }
        if me.get() == 1 && !core::mem::replace(&mut st.flag, true) {
            for v in 2..=ctx.n() {
                let p = Payload::new(st.parents[v] as u64 - 1, ib)?;
                ctx.post(NodeId::new(v), TAG_PARENT, v as u32, p)?;
            }
            return Ok(Status::Done);
        }
        if let Some(p) = st.parent.take() {
            if st.parents.is_empty() {
                st.parents = vec![0; ctx.n() + 1];
            }
            st.parents[me.get()] = p;
            let payload = Payload::new(p as u64 - 1, ib)?;
            for d in (1..=ctx.n()).filter(|&d| d != me.get()).map(NodeId::new) {
                ctx.post(d, TAG_TREE, d.idx() as u32, payload)?;
            }
        }
        Ok(Status::Done)
    })?;
    clique.local(&mut nodes, |ctx, st| {
        if st.parents.len() != n + 1 || st.parents[2..].contains(&0) {
            return Err(Error::Protocol("tree broadcast incomplete".into()));
        }
        let edges = (2..=n).map(|v| WeightedEdge::new(v, st.parents[v], 0)).collect();
        st.tree = Some(Tree::new(n, edges)?);
        ctx.charge_work(n as u64);
        Ok(())
    })?;

    // Step 4: row owners push their rows to the owners of their tree edges.
    clique.set_section("step4");
    let mut vectors = Vec::new();
    for (i, st) in nodes.iter().enumerate() {
        let me = i + 1;
        let tree = st.tree.as_ref().expect("tree rebuilt");
        let recipients: Vec<NodeId> = tree
            .edges()
            .iter()
            .enumerate()
            .filter(|(j, e)| e.touches(me) && j + 1 != me)
            .map(|(j, _)| NodeId::new(j + 1))
            .collect();
        if !recipients.is_empty() {
            vectors.push(MulticastVector {
                sender: NodeId::new(me),
                chunks: encode_bits(&st.row, w),
                recipients,
            });
        }
    }
    let out = vector_multicast(clique, &vectors)?;
    for (st, got) in nodes.iter_mut().zip(out.received) {
        for (src, chunks) in got {
            st.endpoint_rows.push((src.get(), decode_bits(&chunks, n, w)?));
        }
    }

    // Step 5: edge owners compute witnesses and announce edge lengths.
    clique.set_section("step5");
    clique.local(&mut nodes, |ctx, st| {
        let me = ctx.id().get();
        if me < n {
            let e = *st.tree.as_ref().expect("tree rebuilt").edge(me);
            let find = |v: usize| -> Result<&BitVector> {
                if v == me {
                    return Ok(&st.row);
                }
                st.endpoint_rows
                    .iter()
                    .find(|(u, _)| *u == v)
                    .map(|(_, r)| r)
                    .ok_or_else(|| Error::Protocol(format!("edge owner {me} lacks row {v}")))
            };
            let ws = witnesses(find(e.u)?, find(e.v)?)?;
            ctx.charge_work(words);
            st.packet = Some(WitnessPacket {
                edge: me,
                witnesses: ws,
            });
        }
        st.endpoint_rows.clear();
        Ok(())
    })?;
    let dist_bits = index_bits(n + 1);
    for st in &mut nodes {
        st.flag = false;
        st.dists = vec![u64::MAX; n - 1];
        if let Some(p) = &st.packet {
            st.dists[p.edge - 1] = p.witnesses.len() as u64;
        }
    }
    clique.run_phase(&mut nodes, |ctx, st| {
        for m in ctx.inbox() {
            if m.tag != TAG_DIST {
                return Err(Error::Protocol("unexpected tag in distance broadcast".into()));
            }
            st.dists[m.src.idx()] = m.payload.value();
        }
        if !core::mem::replace(&mut st.flag, true) {
            if let Some(p) = &st.packet {
                let payload = Payload::new(p.witnesses.len() as u64, dist_bits)?;
                let me = ctx.id();
                for d in (1..=ctx.n()).filter(|&d| d != me.get()).map(NodeId::new) {
                    ctx.post(d, TAG_DIST, d.idx() as u32, payload)?;
                }
            }
        }
        Ok(Status::Done)
    })?;

    // Step 6: every node plans independently.
    clique.set_section("step6");
    clique.local(&mut nodes, |ctx, st| {
        if st.dists.contains(&u64::MAX) {
            return Err(Error::Protocol("edge lengths missing after broadcast".into()));
        }
        let tree = st.tree.as_ref().expect("tree rebuilt");
        let tour = euler_traversal(tree, 1)?;
        let costs: Vec<u64> = tour
            .directed_edges
            .iter()
            .map(|&(x, y)| st.dists[tree.edge_index(x, y).expect("tree edge") - 1])
            .collect();
        let plan = plan_blocks(&tour, &costs, n)?;
        st.assign = Some(assign_pairs(&plan)?);
        st.layouts = layouts(&plan, tree, &st.dists);
        st.plan = Some(plan);
        ctx.charge_work(2 * n as u64);
        Ok(())
    })?;
    let stats = {
        let p = nodes[0].plan();
        PlanStats {
            m: p.m,
            t: p.t,
            blocks: p.blocks.len(),
            column_blocks: p.column_blocks.len(),
        }
    };

    // Step 7: the row at the start of each block goes to that block's pair nodes.
    clique.set_section("step7");
    let mut vectors = Vec::new();
    for (i, st) in nodes.iter().enumerate() {
        let me = NodeId::from_idx(i);
        let (plan, assign) = (st.plan(), st.assign());
        let mut recipients = Vec::new();
        for b in 0..plan.blocks.len() {
            if plan.start_vertex(b) == me.get() {
                recipients.extend(assign.block_nodes(b + 1).filter(|&d| d != me));
            }
        }
        if !recipients.is_empty() {
            vectors.push(MulticastVector {
                sender: me,
                chunks: encode_bits(&st.row, w),
                recipients,
            });
        }
    }
    let out = vector_multicast(clique, &vectors)?;
    for (i, (st, got)) in nodes.iter_mut().zip(out.received).enumerate() {
        let me = NodeId::from_idx(i);
        if let Some((b, _)) = st.assign().pair(me) {
            let start = st.plan().start_vertex(b - 1);
            st.start_row = Some(if start == me.get() {
                st.row.clone()
            } else {
                let (_, chunks) = got
                    .iter()
                    .find(|(s, _)| s.get() == start)
                    .ok_or_else(|| Error::Protocol(format!("node {me} missed its start row")))?;
                decode_bits(chunks, n, w)?
            });
        }
    }

    // Step 8: witnesses reach every pair node of their block.
    clique.set_section("step8");
    distribute_witnesses_inner(clique, &mut nodes)?;

    // Step 9: column owners send their columns to every pair node of their group.
    clique.set_section("step9");
    let mut vectors = Vec::new();
    for (i, st) in nodes.iter().enumerate() {
        let me = NodeId::from_idx(i);
        let (plan, assign) = (st.plan(), st.assign());
        let c = plan
            .column_blocks
            .iter()
            .position(|r| r.contains(&me.get()))
            .expect("column groups cover all columns");
        let recipients: Vec<NodeId> = (1..=assign.blocks)
            .map(|b| assign.node(b, c + 1))
            .filter(|&d| d != me)
            .collect();
        if !recipients.is_empty() {
            vectors.push(MulticastVector {
                sender: me,
                chunks: encode_bits(&st.col, w),
                recipients,
            });
        }
    }
    let out = vector_multicast(clique, &vectors)?;
    for (i, (st, got)) in nodes.iter_mut().zip(out.received).enumerate() {
        let me = NodeId::from_idx(i);
        if let Some((_, c)) = st.assign().pair(me) {
            let range = st.plan().column_blocks[c - 1].clone();
            for j in range {
                let col = if j == me.get() {
                    st.col.clone()
                } else {
                    let (_, chunks) = got
                        .iter()
                        .find(|(s, _)| s.get() == j)
                        .ok_or_else(|| Error::Protocol(format!("node {me} missed column {j}")))?;
                    decode_bits(chunks, n, w)?
                };
                st.columns.push((j, col));
            }
        }
    }

    // Step 10: pair nodes multiply and send row segments to the row owners.
    clique.set_section("step10");
    let mut batch: Vec<Vec<Packet>> = vec![Vec::new(); n];
    for (i, st) in nodes.iter_mut().enumerate() {
        let me = NodeId::from_idx(i);
        let Some((b, _)) = st.assign().pair(me) else {
            continue;
        };
        let plan = st.plan();
        let layout = &st.layouts[b - 1];
        let tree = st.tree.as_ref().expect("tree rebuilt");
        let walk = plan.walk(b - 1);
        let steps: Vec<&[usize]> = plan.traversal.directed_edges[plan.blocks[b - 1].clone()]
            .iter()
            .map(|&(x, y)| {
                let e = tree.edge_index(x, y).expect("tree edge");
                let k = layout.edges.iter().position(|&f| f == e).expect("block edge");
                &st.store[layout.starts[k]..layout.starts[k + 1]]
            })
            .collect();
        let start_row = st
            .start_row
            .as_ref()
            .ok_or_else(|| Error::Protocol("start row missing".into()))?;
        let entries = block_multiply(start_row, &walk, &steps, &st.columns)?;
        let cols = st.columns.len() as u64;
        let work = (words + layout.total() as u64) * cols + entries.len() as u64;
        // one segment per distinct vertex, columns in ascending order
        let mut segments: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
        for e in &entries {
            segments.entry(e.row).or_insert_with(|| vec![false; st.columns.len()]);
        }
        for (pos, e) in entries.iter().enumerate() {
            let seg = segments.get_mut(&e.row).expect("segment exists");
            seg[pos % st.columns.len()] = e.bit();
        }
        let per = st.columns.len().div_ceil(w);
        let mut items = Vec::new();
        for (v, bits) in segments {
            if v == me.get() {
                for (pos, &(j, _)) in st.columns.iter().enumerate() {
                    if bits[pos] {
                        st.result.set(j, true);
                    }
                }
                continue;
            }
            let bv = BitVector::from_bools(&bits);
            for (c, p) in encode_bits(&bv, w).into_iter().enumerate() {
                items.push(Packet::new(me, NodeId::new(v), ((v - 1) * per + c) as u32, p));
            }
        }
        clique.charge_work(me, work);
        batch[i] = items;
    }
    let max_sends = batch.iter().map(Vec::len).max().unwrap_or(0);
    let mut recvs = vec![0usize; n];
    for p in batch.iter().flatten() {
        recvs[p.target.idx()] += 1;
    }
    let max_recvs = recvs.into_iter().max().unwrap_or(0);
    let got = bounded_route(
        clique,
        batch,
        max_sends.div_ceil(n).max(1),
        max_recvs.div_ceil(n).max(1),
    )?;
    for (i, (st, items)) in nodes.iter_mut().zip(got).enumerate() {
        let me = i + 1;
        let assign = st.assign().clone();
        let mut by_src: BTreeMap<NodeId, Vec<Payload>> = BTreeMap::new();
        for p in items {
            by_src.entry(p.origin).or_default().push(p.payload);
        }
        for (src, chunks) in by_src {
            let (b, c) = assign
                .pair(src)
                .ok_or_else(|| Error::Protocol(format!("row segment from non-pair node {src}")))?;
            let plan = st.plan();
            if !plan.walk(b - 1).contains(&me) {
                return Err(Error::Protocol(format!("node {src} sent a row segment to node {me}")));
            }
            let range = plan.column_blocks[c - 1].clone();
            let seg = decode_bits(&chunks, range.len(), w)?;
            for (pos, j) in range.enumerate() {
                if seg.get(pos + 1) {
                    st.result.set(j, true);
                }
            }
        }
    }
    Ok((nodes.into_iter().map(|st| st.result).collect(), stats))
}

/// Two-stage witness delivery. Stage 1: each edge owner sends every witness of its
/// edge, for every block that uses the edge, to the representative holding that
/// position of the block's witness list. Stage 2: each representative multicasts
/// its segment to the other pair nodes of its block.
fn distribute_witnesses_inner(clique: &mut Clique, nodes: &mut [TmNode]) -> Result<()> {
    let n = clique.n();
    let w = clique.capacity();
    let ib = index_bits(n);
    let per = (w / ib).max(1);

    let mut batch: Vec<Vec<Packet>> = vec![Vec::new(); n];
    for (i, st) in nodes.iter().enumerate() {
        let me = NodeId::from_idx(i);
        let Some(packet) = &st.packet else {
            continue;
        };
        let assign = st.assign();
        for (b, layout) in st.layouts.iter().enumerate() {
            let Some(k) = layout.edges.iter().position(|&e| e == packet.edge) else {
                continue;
            };
            let (lo, hi) = (layout.starts[k], layout.starts[k + 1]);
            let mut p = lo;
            while p < hi {
                let rep = p / layout.cap;
                let run_end = hi.min((rep + 1) * layout.cap);
                let take = per.min(run_end - p);
                let mut bits = BitWriter::new();
                for &x in &packet.witnesses[p - lo..p - lo + take] {
                    bits.push(x as u64 - 1, ib);
                }
                let chunks = bits.into_chunks(w);
                if chunks.len() != 1 {
                    return Err(Error::Scheduling("witness chunk exceeds capacity".into()));
                }
                let target = assign.node(b + 1, rep + 1);
                batch[i].push(Packet::new(me, target, (layout.offset + p) as u32, chunks[0]));
                p += take;
            }
        }
    }
    let max_sends = batch.iter().map(Vec::len).max().unwrap_or(0);
    let mut recvs = vec![0usize; n];
    for p in batch.iter().flatten() {
        recvs[p.target.idx()] += 1;
    }
    let max_recvs = recvs.into_iter().max().unwrap_or(0);
    let got = bounded_route(
        clique,
        batch,
        max_sends.div_ceil(n).max(1),
        max_recvs.div_ceil(n).max(1),
    )?;
    for (i, (st, items)) in nodes.iter_mut().zip(got).enumerate() {
        let me = NodeId::from_idx(i);
        if items.is_empty() {
            continue;
        }
        let (b, c) = st
            .assign()
            .pair(me)
            .ok_or_else(|| Error::Scheduling(format!("witnesses sent to non-pair node {me}")))?;
        let layout = &st.layouts[b - 1];
        let seg = layout.segment(c - 1);
        let mut slots: Vec<Option<usize>> = vec![None; seg.len()];
        for p in items {
            let pos = (p.seq as usize)
                .checked_sub(layout.offset)
                .filter(|pos| seg.contains(pos))
                .ok_or_else(|| Error::Scheduling(format!("witness position outside node {me}'s segment")))?;
            let k = layout.edge_at(pos);
            let run_end = layout.starts[k + 1].min(seg.end);
            let take = per.min(run_end - pos);
            let mut r = BitReader::new(&[p.payload]);
            for s in 0..take {
                slots[pos - seg.start + s] = Some(r.read(ib)? as usize + 1);
            }
        }
        st.segment = slots
            .into_iter()
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| Error::Scheduling(format!("node {me} is missing witnesses of its segment")))?;
    }

    // Stage 2.
    let chunk_cap = |len: usize| (len * ib).div_ceil(w);
    let substages = nodes[0]
        .layouts
        .iter()
        .map(|l| chunk_cap(l.cap.min(l.total())).div_ceil(n))
        .max()
        .unwrap_or(0);
    let mut streams: Vec<Vec<Payload>> = nodes
        .iter()
        .map(|st| {
            let mut bits = BitWriter::new();
            for &x in &st.segment {
                bits.push(x as u64 - 1, ib);
            }
            bits.into_chunks(w)
        })
        .collect();
    let mut gathered: Vec<BTreeMap<usize, Vec<Payload>>> = vec![BTreeMap::new(); n];
    for s in 0..substages {
        let mut vectors = Vec::new();
        for (i, st) in nodes.iter().enumerate() {
            let me = NodeId::from_idx(i);
            let Some((b, c)) = st.assign().pair(me) else {
                continue;
            };
            if c > st.layouts[b - 1].reps() {
                continue;
            }
            let stream = &streams[i];
            let lo = (s * n).min(stream.len());
            let hi = ((s + 1) * n).min(stream.len());
            if lo == hi {
                continue;
            }
            let recipients: Vec<NodeId> = st.assign().block_nodes(b).filter(|&d| d != me).collect();
            if recipients.is_empty() {
                continue;
            }
            vectors.push(MulticastVector {
                sender: me,
                chunks: stream[lo..hi].to_vec(),
                recipients,
            });
        }
        let out = vector_multicast(clique, &vectors)?;
        for (g, got) in gathered.iter_mut().zip(out.received) {
            for (src, chunks) in got {
                g.entry(src.idx()).or_default().extend(chunks);
            }
        }
    }
    for (i, st) in nodes.iter_mut().enumerate() {
        let me = NodeId::from_idx(i);
        let Some((b, c)) = st.assign().pair(me) else {
            continue;
        };
        let layout = st.layouts[b - 1].clone();
        let mut store = Vec::with_capacity(layout.total());
        for rep in 0..layout.reps() {
            if rep + 1 == c {
                store.extend_from_slice(&st.segment);
                continue;
            }
            let src = st.assign().node(b, rep + 1).idx();
            let len = layout.segment(rep).len();
            let chunks = gathered[i]
                .get(&src)
                .ok_or_else(|| Error::Scheduling(format!("node {me} missed the segment of node {}", src + 1)))?;
            let mut r = BitReader::new(chunks);
            for _ in 0..len {
                store.push(r.read(ib)? as usize + 1);
            }
        }
        st.store = store;
        streams[i].clear();
    }
    Ok(())
}

/// Witness lists per pair node after delivery: `(block, list)` where the list holds,
/// for each tree edge of the block in order of first appearance, its witnesses.
pub type BlockWitnesses = Vec<Option<(usize, Vec<(usize, Vec<usize>)>)>>;

/// Runs only the witness delivery inside `clique`, given a tree, the rows held by
/// each node and a plan every node agrees on. Node `i < n` must hold the packet of
/// tree edge `i`.
pub fn distribute_witnesses(
    clique: &mut Clique,
    tree: &Tree,
    plan: &TraversalPlan,
    assignment: &BlockAssignment,
    packets: Vec<Option<WitnessPacket>>,
) -> Result<BlockWitnesses> {
    let n = clique.n();
    if packets.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: packets.len(),
        });
    }
    let mut dists = vec![0u64; n - 1];
    for (i, p) in packets.iter().enumerate() {
        if let Some(p) = p {
            if p.edge != i + 1 || p.edge >= n {
                return Err(Error::Precondition(format!(
                    "node {} holds the packet of edge {}",
                    i + 1,
                    p.edge
                )));
            }
            dists[i] = p.witnesses.len() as u64;
        }
    }
    let lay = layouts(plan, tree, &dists);
    let mut nodes: Vec<TmNode> = packets
        .into_iter()
        .map(|packet| TmNode {
            packet,
            tree: Some(tree.clone()),
            plan: Some(plan.clone()),
            assign: Some(assignment.clone()),
            layouts: lay.clone(),
            ..TmNode::default()
        })
        .collect();
    distribute_witnesses_inner(clique, &mut nodes)?;
    Ok(nodes
        .into_iter()
        .enumerate()
        .map(|(i, st)| {
            let (b, _) = assignment.pair(NodeId::from_idx(i))?;
            let l = &lay[b - 1];
            let lists = l
                .edges
                .iter()
                .enumerate()
                .map(|(k, &e)| (e, st.store[l.starts[k]..l.starts[k + 1]].to_vec()))
                .collect();
            Some((b, lists))
        })
        .collect())
}
