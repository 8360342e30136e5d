//! Message distribution primitives built on the clique engine.
//!
//! Every primitive has a simulated backend that schedules each message through
//! [`Clique::run_phase`], and an accounted backend that hands items straight to
//! their destinations and charges a closed-form round count instead.
//!
//! Batches are given per node: `outgoing[i]` lists the items held by node `i + 1`,
//! and each returned vector lists what that node ends up holding. Node `i` only
//! ever looks at entry `i`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::mem;

use crate::error::{Error, Result};
use crate::sim::{ceil_log2, index_bits, Clique, Message, NodeId, Payload, RoutingMode, Status};

const TAG_SPREAD: u16 = 0x100;
const TAG_DELIVER: u16 = 0x101;
const TAG_ANNOUNCE: u16 = 0x102;
const TAG_ACCEPT: u16 = 0x103;
const TAG_MC_SENDERS: u16 = 0x110;
const TAG_MC_SUBTASK: u16 = 0x111;

/// One routed item. `(origin, seq)` must be unique within a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Packet {
    pub origin: NodeId,
    pub target: NodeId,
    pub seq: u32,
    pub payload: Payload,
}

impl Packet {
    pub fn new(origin: NodeId, target: NodeId, seq: u32, payload: Payload) -> Self {
        Self {
            origin,
            target,
            seq,
            payload,
        }
    }

    fn from_message(m: &Message) -> Self {
        Self::new(m.origin, m.target, m.seq, m.payload)
    }

    fn to_message(self, src: NodeId, dst: NodeId, tag: u16) -> Message {
        Message {
            src,
            dst,
            tag,
            seq: self.seq,
            origin: self.origin,
            target: self.target,
            payload: self.payload,
        }
    }
}

/// Rounds charged for one relaxed IDT.
pub fn idt_charge(c_idt: u64, items: usize) -> u64 {
    if items == 0 {
        0
    } else {
        c_idt
    }
}

/// Rounds charged for a bounded route whose nodes send at most `max_sends` and
/// receive at most `max_recvs` items over links.
pub fn bounded_charge(n: usize, c_idt: u64, max_sends: usize, max_recvs: usize) -> u64 {
    if max_sends == 0 {
        return 0;
    }
    let k = max_sends.div_ceil(n) as u64;
    let l = max_recvs.div_ceil(n).max(1) as u64;
    if k == 1 && l == 1 {
        c_idt
    } else {
        k * l * (c_idt + 2)
    }
}

/// Rounds charged for a vector multicast where each recipient hears from at most
/// `ell` senders.
pub fn multicast_charge(n: usize, c_idt: u64, ell: usize) -> u64 {
    if ell == 0 {
        return 0;
    }
    let phase = bounded_charge(n, c_idt, 2 * n, n);
    1 + ell as u64 * (1 + ceil_log2(n) as u64 * phase)
}

/// Per-node link loads of a batch, ignoring items a node keeps for itself.
struct Loads {
    max_sends: usize,
    max_recvs: usize,
    travelling: usize,
}

fn check_batch(clique: &Clique, outgoing: &[Vec<Packet>], k: usize, l: usize) -> Result<Loads> {
    let n = clique.n();
    if outgoing.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: outgoing.len(),
        });
    }
    let mut recvs = vec![0usize; n];
    let (mut max_sends, mut travelling) = (0, 0);
    for (i, items) in outgoing.iter().enumerate() {
        let me = NodeId::from_idx(i);
        let mut seqs: Vec<u32> = Vec::with_capacity(items.len());
        let mut sends = 0;
        for p in items {
            if p.origin != me {
                return Err(Error::Precondition(format!(
                    "node {me} holds an item with origin {}",
                    p.origin
                )));
            }
            if p.target.get() == 0 || p.target.get() > n {
                return Err(Error::Precondition(format!("target {} out of range", p.target)));
            }
            if p.payload.len() > clique.capacity() {
                return Err(Error::Capacity {
                    len: p.payload.len(),
                    capacity: clique.capacity(),
                });
            }
            seqs.push(p.seq);
            if p.target != me {
                sends += 1;
                recvs[p.target.idx()] += 1;
            }
        }
        seqs.sort_unstable();
        if let Some(w) = seqs.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Precondition(format!(
                "node {me} uses sequence number {} twice",
                w[0]
            )));
        }
        if sends > k * n {
            return Err(Error::Precondition(format!(
                "node {me} sends {sends} items, bound is {}",
                k * n
            )));
        }
        max_sends = max_sends.max(sends);
        travelling += sends;
    }
    let max_recvs = recvs.iter().copied().max().unwrap_or(0);
    if let Some(r) = recvs.iter().position(|&r| r > l * n) {
        return Err(Error::Precondition(format!(
            "node {} receives {} items, bound is {}",
            r + 1,
            recvs[r],
            l * n
        )));
    }
    Ok(Loads {
        max_sends,
        max_recvs,
        travelling,
    })
}

/// Hands every item to its target directly, charging `rounds`.
fn deliver_direct(clique: &mut Clique, outgoing: Vec<Vec<Packet>>, rounds: u64) -> Vec<Vec<Packet>> {
    let mut received = vec![Vec::new(); clique.n()];
    let mut links = Vec::new();
    for p in outgoing.into_iter().flatten() {
        if p.origin != p.target {
            links.push((p.origin, p.target, p.payload.len()));
        }
        received[p.target.idx()].push(p);
    }
    clique.charge_delivery(rounds, links);
    sort_received(&mut received);
    received
}

fn sort_received(received: &mut [Vec<Packet>]) {
    for r in received {
        r.sort_unstable_by_key(|p| (p.origin, p.seq));
    }
}

/// Relaxed information distribution: every node sends and receives at most `n` items.
///
/// The simulated backend spreads item `j` of node `i` (items sorted by target, then
/// sequence number) to intermediate `((i + j − 1) mod n) + 1`, and each intermediate
/// then forwards one item per distinct target per round.
pub fn solve_relaxed_idt(clique: &mut Clique, outgoing: Vec<Vec<Packet>>) -> Result<Vec<Vec<Packet>>> {
    let loads = check_batch(clique, &outgoing, 1, 1)?;
    let entered = clique.primitive_enter("idt");
    let out = match clique.routing() {
        RoutingMode::Accounted => {
            let rounds = idt_charge(clique.config().c_idt, loads.travelling);
            Ok(deliver_direct(clique, outgoing, rounds))
        }
        RoutingMode::Simulated => idt_simulated(clique, outgoing),
    };
    clique.primitive_exit(entered);
    out
}

struct IdtNode {
    outgoing: Vec<Packet>,
    held: Vec<Packet>,
    received: Vec<Packet>,
    spread: bool,
}

fn idt_simulated(clique: &mut Clique, outgoing: Vec<Vec<Packet>>) -> Result<Vec<Vec<Packet>>> {
    let n = clique.n();
    let mut locals: Vec<IdtNode> = outgoing
        .into_iter()
        .map(|mut o| {
            o.sort_unstable_by_key(|p| (p.target, p.seq));
            IdtNode {
                outgoing: o,
                held: Vec::new(),
                received: Vec::new(),
                spread: false,
            }
        })
        .collect();
    clique.run_phase(&mut locals, |ctx, st| {
        let me = ctx.id();
        for m in ctx.inbox() {
            let p = Packet::from_message(m);
            match m.tag {
                TAG_SPREAD if p.target == me => st.received.push(p),
                TAG_SPREAD => st.held.push(p),
                TAG_DELIVER => st.received.push(p),
                t => return Err(Error::Protocol(format!("unexpected tag {t:#x} during routing"))),
            }
        }
        if !st.spread {
            st.spread = true;
            let items = mem::take(&mut st.outgoing);
            ctx.charge_work(items.len() as u64);
            let (own, away): (Vec<Packet>, Vec<Packet>) = items.into_iter().partition(|p| p.target == me);
            st.received.extend(own);
            for (j, p) in away.into_iter().enumerate() {
                let mid = NodeId::from_idx((me.idx() + j + 1) % n);
                if mid == me {
                    st.held.push(p);
                } else {
                    ctx.post_message(p.to_message(me, mid, TAG_SPREAD))?;
                }
            }
        } else if !st.held.is_empty() {
            st.held.sort_unstable_by_key(|p| (p.target, p.origin, p.seq));
            let mut keep = Vec::with_capacity(st.held.len());
            let mut last = None;
            for p in st.held.drain(..) {
                if last == Some(p.target) {
                    keep.push(p);
                } else {
                    last = Some(p.target);
                    ctx.post_message(p.to_message(me, p.target, TAG_DELIVER))?;
                }
            }
            ctx.charge_work(keep.len() as u64 + 1);
            st.held = keep;
        }
        Ok(if st.held.is_empty() {
            Status::Done
        } else {
            Status::Continue
        })
    })?;
    let mut received: Vec<Vec<Packet>> = locals.into_iter().map(|l| l.received).collect();
    sort_received(&mut received);
    Ok(received)
}

/// Routing where each node sends at most `k·n` and receives at most `ℓ·n` items.
///
/// The simulated backend repeats: senders announce per-target counts (at most `n`
/// in total), receivers accept announced counts in ascending sender order up to `n`
/// and reply, then the accepted items move in one relaxed IDT. It stops once an
/// announcement pass finds nothing left to send.
pub fn bounded_route(clique: &mut Clique, outgoing: Vec<Vec<Packet>>, k: usize, l: usize) -> Result<Vec<Vec<Packet>>> {
    if k == 0 || l == 0 {
        return Err(Error::Precondition("k and l must be positive".into()));
    }
    let loads = check_batch(clique, &outgoing, k, l)?;
    let entered = clique.primitive_enter("bounded_route");
    let out = match clique.routing() {
        RoutingMode::Accounted => {
            let rounds = bounded_charge(clique.n(), clique.config().c_idt, loads.max_sends, loads.max_recvs);
            Ok(deliver_direct(clique, outgoing, rounds))
        }
        RoutingMode::Simulated => bounded_simulated(clique, outgoing),
    };
    clique.primitive_exit(entered);
    out
}

struct RouteNode {
    pending: Vec<Packet>,
    accepted: Vec<(NodeId, usize)>,
    announced: bool,
}

fn bounded_simulated(clique: &mut Clique, outgoing: Vec<Vec<Packet>>) -> Result<Vec<Vec<Packet>>> {
    let n = clique.n();
    let count_bits = index_bits(n + 1);
    let mut received: Vec<Vec<Packet>> = vec![Vec::new(); n];
    let mut locals: Vec<RouteNode> = outgoing
        .into_iter()
        .enumerate()
        .map(|(i, items)| {
            let me = NodeId::from_idx(i);
            let (own, mut away): (Vec<Packet>, Vec<Packet>) = items.into_iter().partition(|p| p.target == me);
            received[i].extend(own);
            away.sort_unstable_by_key(|p| (p.target, p.seq));
            RouteNode {
                pending: away,
                accepted: Vec::new(),
                announced: false,
            }
        })
        .collect();
    loop {
        for st in &mut locals {
            st.announced = false;
            st.accepted.clear();
        }
        let rounds = clique.run_phase(&mut locals, |ctx, st| {
            let mut requests = Vec::new();
            for m in ctx.inbox() {
                match m.tag {
                    TAG_ANNOUNCE => requests.push((m.src, m.payload.value() as usize)),
                    TAG_ACCEPT => st.accepted.push((m.src, m.payload.value() as usize)),
                    t => return Err(Error::Protocol(format!("unexpected tag {t:#x} in preamble"))),
                }
            }
            if !st.announced {
                st.announced = true;
                let mut budget = n;
                let mut i = 0;
                while i < st.pending.len() && budget > 0 {
                    let target = st.pending[i].target;
                    let run = st.pending[i..].iter().take_while(|p| p.target == target).count();
                    let a = run.min(budget);
                    budget -= a;
                    ctx.post(
                        target,
                        TAG_ANNOUNCE,
                        target.idx() as u32,
                        Payload::new(a as u64, count_bits)?,
                    )?;
                    i += run;
                }
            }
            let mut room = n;
            for (src, want) in requests {
                let take = want.min(room);
                room -= take;
                if take > 0 {
                    ctx.post(
                        src,
                        TAG_ACCEPT,
                        src.idx() as u32,
                        Payload::new(take as u64, count_bits)?,
                    )?;
                }
            }
            Ok(Status::Done)
        })?;
        if rounds == 0 {
            break;
        }
        let mut batch = Vec::with_capacity(n);
        for st in &mut locals {
            let mut out = Vec::new();
            let mut rest = Vec::with_capacity(st.pending.len());
            let mut accepted = st.accepted.iter().copied().peekable();
            let mut i = 0;
            while i < st.pending.len() {
                let target = st.pending[i].target;
                let run = st.pending[i..].iter().take_while(|p| p.target == target).count();
                while accepted.peek().is_some_and(|&(t, _)| t < target) {
                    accepted.next();
                }
                let take = match accepted.peek() {
                    Some(&(t, c)) if t == target => c.min(run),
                    _ => 0,
                };
                out.extend_from_slice(&st.pending[i..i + take]);
                rest.extend_from_slice(&st.pending[i + take..i + run]);
                i += run;
            }
            st.pending = rest;
            batch.push(out);
        }
        let got = idt_simulated(clique, batch)?;
        for (r, g) in received.iter_mut().zip(got) {
            r.extend(g);
        }
    }
    sort_received(&mut received);
    Ok(received)
}

/// One sender's vector and the nodes that must receive it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MulticastVector {
    pub sender: NodeId,
    /// At most `n` chunks.
    pub chunks: Vec<Payload>,
    pub recipients: Vec<NodeId>,
}

/// What each node holds after a multicast.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MulticastOutcome {
    /// Per node: `(sender, vector)` pairs sorted by sender.
    pub received: Vec<Vec<(NodeId, Vec<Payload>)>>,
    /// Sub-tasks run (the largest number of senders any node hears from).
    pub subtasks: usize,
    /// Doubling phases summed over sub-tasks.
    pub doubling_phases: usize,
}

/// Number of doubling groups needed for `m` recipients: group `g` holds the
/// zero-based ranks `2^g − 2 .. 2^{g+1} − 2`.
pub fn doubling_groups(m: usize) -> usize {
    let mut g = 0;
    while (1usize << (g + 1)) - 2 < m {
        g += 1;
    }
    g
}

fn check_vectors(clique: &Clique, vectors: &[MulticastVector]) -> Result<Vec<MulticastVector>> {
    let n = clique.n();
    let mut seen = vec![false; n];
    let mut out = Vec::with_capacity(vectors.len());
    for v in vectors {
        if v.sender.get() == 0 || v.sender.get() > n {
            return Err(Error::Precondition(format!("sender {} out of range", v.sender)));
        }
        if mem::replace(&mut seen[v.sender.idx()], true) {
            return Err(Error::Precondition(format!("node {} sends two vectors", v.sender)));
        }
        if v.chunks.len() > n {
            return Err(Error::Precondition(format!(
                "vector of node {} has {} chunks, bound is {n}",
                v.sender,
                v.chunks.len()
            )));
        }
        if let Some(p) = v.chunks.iter().find(|p| p.len() > clique.capacity()) {
            return Err(Error::Capacity {
                len: p.len(),
                capacity: clique.capacity(),
            });
        }
        let mut r = v.recipients.clone();
        r.sort_unstable();
        if r.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Precondition(format!(
                "node {} lists a recipient twice",
                v.sender
            )));
        }
        if r.iter().any(|&x| x == v.sender || x.get() == 0 || x.get() > n) {
            return Err(Error::Precondition(format!(
                "node {} has an invalid recipient",
                v.sender
            )));
        }
        out.push(MulticastVector {
            sender: v.sender,
            chunks: v.chunks.clone(),
            recipients: r,
        });
    }
    out.sort_unstable_by_key(|v| v.sender);
    Ok(out)
}

/// Multicast by doubling. Recipients first learn their senders; the `s`-th sender
/// (ascending) of every recipient is served in sub-task `s`, where recipient sets are
/// disjoint. Within a sub-task the sender reaches ranks 0 and 1 of its ascending
/// recipient list, and each later phase doubles the set of holders.
pub fn vector_multicast(clique: &mut Clique, vectors: &[MulticastVector]) -> Result<MulticastOutcome> {
    let vectors = check_vectors(clique, vectors)?;
    let entered = clique.primitive_enter("vector_multicast");
    let out = match clique.routing() {
        RoutingMode::Accounted => Ok(multicast_accounted(clique, &vectors)),
        RoutingMode::Simulated => multicast_simulated(clique, &vectors, false),
    };
    clique.primitive_exit(entered);
    out
}

/// A single sub-task: recipient sets must be pairwise disjoint.
pub fn multicast_subtask(clique: &mut Clique, vectors: &[MulticastVector]) -> Result<MulticastOutcome> {
    let vectors = check_vectors(clique, vectors)?;
    let mut owner = vec![None; clique.n()];
    for v in &vectors {
        for r in &v.recipients {
            if let Some(other) = owner[r.idx()].replace(v.sender) {
                return Err(Error::Precondition(format!(
                    "recipient {r} shared by senders {other} and {}",
                    v.sender
                )));
            }
        }
    }
    let entered = clique.primitive_enter("vector_multicast");
    let out = match clique.routing() {
        RoutingMode::Accounted => Ok(multicast_accounted(clique, &vectors)),
        RoutingMode::Simulated => multicast_simulated(clique, &vectors, true),
    };
    clique.primitive_exit(entered);
    out
}

fn fan_in(n: usize, vectors: &[MulticastVector]) -> usize {
    let mut senders = vec![0usize; n];
    for v in vectors {
        for r in &v.recipients {
            senders[r.idx()] += 1;
        }
    }
    senders.into_iter().max().unwrap_or(0)
}

fn multicast_accounted(clique: &mut Clique, vectors: &[MulticastVector]) -> MulticastOutcome {
    let n = clique.n();
    let ell = fan_in(n, vectors);
    let mut received = vec![Vec::new(); n];
    let mut links = Vec::new();
    for v in vectors {
        for &r in &v.recipients {
            links.extend(v.chunks.iter().map(|p| (v.sender, r, p.len())));
            received[r.idx()].push((v.sender, v.chunks.clone()));
        }
    }
    clique.charge_delivery(multicast_charge(n, clique.config().c_idt, ell), links);
    let doubling_phases = vectors
        .iter()
        .map(|v| doubling_groups(v.recipients.len()))
        .max()
        .unwrap_or(0)
        * ell;
    MulticastOutcome {
        received,
        subtasks: ell,
        doubling_phases,
    }
}

#[derive(Default)]
struct McastNode {
    /// The vector this node sends, if it is a sender.
    own: Option<Vec<Payload>>,
    own_recipients: Vec<NodeId>,
    /// `(sender, chunk count)` learned from the announcement, ascending by sender.
    senders: Vec<(NodeId, usize)>,
    /// Vectors fully received so far.
    done: Vec<(NodeId, Vec<Payload>)>,
    /// Sub-task view: per sender, its ascending recipient list.
    lists: Vec<(NodeId, Vec<NodeId>)>,
    /// Sub-task sender of this node and the chunks gathered for it.
    current: Option<(NodeId, Vec<Option<Payload>>)>,
    announced: bool,
}

fn multicast_simulated(clique: &mut Clique, vectors: &[MulticastVector], single: bool) -> Result<MulticastOutcome> {
    let n = clique.n();
    let w_idx = index_bits(n);
    let w_cnt = index_bits(n + 1);
    let mut locals: Vec<McastNode> = (0..n).map(|_| McastNode::default()).collect();
    for v in vectors {
        let st = &mut locals[v.sender.idx()];
        st.own = Some(v.chunks.clone());
        st.own_recipients = v.recipients.clone();
    }

    // Senders tell each recipient the length of the vector coming its way.
    clique.run_phase(&mut locals, |ctx, st| {
        for m in ctx.inbox() {
            if m.tag != TAG_MC_SENDERS {
                return Err(Error::Protocol("unexpected tag in multicast announcement".into()));
            }
            st.senders.push((m.src, m.payload.value() as usize));
        }
        if !st.announced {
            st.announced = true;
            if let Some(chunks) = &st.own {
                let len = Payload::new(chunks.len() as u64, w_cnt)?;
                for &r in &st.own_recipients {
                    ctx.post(r, TAG_MC_SENDERS, r.idx() as u32, len)?;
                }
            }
        }
        Ok(Status::Done)
    })?;

    let (mut subtasks, mut phases_total) = (0, 0);
    for s in 0.. {
        if single && s > 0 {
            break;
        }
        // Each recipient with an s-th sender tells every node which sender it takes.
        for st in &mut locals {
            st.lists.clear();
            st.current = st.senders.get(s).map(|&(x, len)| (x, vec![None; len]));
            st.announced = false;
        }
        let rounds = clique.run_phase(&mut locals, |ctx, st| {
            for m in ctx.inbox() {
                if m.tag != TAG_MC_SUBTASK {
                    return Err(Error::Protocol("unexpected tag in sub-task announcement".into()));
                }
                let sender = NodeId::from_idx(m.payload.value() as usize);
                match st.lists.binary_search_by_key(&sender, |l| l.0) {
                    Ok(i) => st.lists[i].1.push(m.src),
                    Err(i) => st.lists.insert(i, (sender, vec![m.src])),
                }
            }
            if !st.announced {
                st.announced = true;
                if let Some((x, _)) = st.current {
                    let p = Payload::new(x.idx() as u64, w_idx)?;
                    let me = ctx.id();
                    for d in (1..=ctx.n()).map(NodeId::new).filter(|&d| d != me) {
                        ctx.post(d, TAG_MC_SUBTASK, d.idx() as u32, p)?;
                    }
                }
            }
            Ok(Status::Done)
        })?;
        if rounds == 0 {
            break;
        }
        subtasks += 1;
        // Every node sees the same lists, except that a node is absent from its own
        // recipient position; add it back locally.
        for (i, st) in locals.iter_mut().enumerate() {
            if let Some((x, _)) = st.current {
                let me = NodeId::from_idx(i);
                let pos = st.lists.binary_search_by_key(&x, |l| l.0);
                match pos {
                    Ok(j) => {
                        let list = &mut st.lists[j].1;
                        let at = list.binary_search(&me).unwrap_or_else(|e| e);
                        list.insert(at, me);
                    }
                    Err(j) => st.lists.insert(j, (x, vec![me])),
                }
            }
        }
        let groups = locals[0]
            .lists
            .iter()
            .map(|l| doubling_groups(l.1.len()))
            .max()
            .unwrap_or(0);
        for g in 1..=groups {
            let mut batch: Vec<Vec<Packet>> = Vec::with_capacity(n);
            for (i, st) in locals.iter().enumerate() {
                let me = NodeId::from_idx(i);
                batch.push(doubling_sends(me, st, g)?);
            }
            let got = bounded_simulated(clique, batch)?;
            for (st, items) in locals.iter_mut().zip(got) {
                if items.is_empty() {
                    continue;
                }
                let Some((_, slots)) = &mut st.current else {
                    return Err(Error::Protocol("chunk for a node without a sender".into()));
                };
                for p in items {
                    let c = (p.seq / 2) as usize;
                    match slots.get_mut(c) {
                        Some(slot) => *slot = Some(p.payload),
                        None => return Err(Error::Protocol("chunk index out of range".into())),
                    }
                }
            }
        }
        phases_total += groups;
        for st in &mut locals {
            if let Some((x, slots)) = st.current.take() {
                let chunks: Option<Vec<Payload>> = slots.into_iter().collect();
                let chunks =
                    chunks.ok_or_else(|| Error::Protocol(format!("vector from node {x} arrived incomplete")))?;
                st.done.push((x, chunks));
            }
        }
    }
    for st in &locals {
        if st.done.len() != st.senders.len() {
            return Err(Error::Scheduling("multicast ended with undelivered vectors".into()));
        }
    }
    Ok(MulticastOutcome {
        received: locals.into_iter().map(|st| st.done).collect(),
        subtasks,
        doubling_phases: phases_total,
    })
}

/// Items node `me` sends in doubling phase `g` of the current sub-task.
fn doubling_sends(me: NodeId, st: &McastNode, g: usize) -> Result<Vec<Packet>> {
    let mut out = Vec::new();
    let mut send = |list: &[NodeId], first: usize, chunks: &[Payload]| {
        for copy in 0..2 {
            if let Some(&r) = list.get(first + copy) {
                for (c, &p) in chunks.iter().enumerate() {
                    out.push(Packet::new(me, r, (2 * c + copy) as u32, p));
                }
            }
        }
    };
    if g == 1 {
        if let (Some(chunks), Ok(j)) = (&st.own, st.lists.binary_search_by_key(&me, |l| l.0)) {
            send(&st.lists[j].1, 0, chunks);
        }
        return Ok(out);
    }
    let Some((x, slots)) = &st.current else {
        return Ok(out);
    };
    let j = st
        .lists
        .binary_search_by_key(x, |l| l.0)
        .map_err(|_| Error::Protocol("sub-task sender missing from lists".into()))?;
    let list = &st.lists[j].1;
    let rank = list
        .binary_search(&me)
        .map_err(|_| Error::Protocol("node missing from its sender's list".into()))?;
    let (lo, hi) = ((1usize << (g - 1)) - 2, (1usize << g) - 2);
    if rank >= lo && rank < hi {
        let chunks: Vec<Payload> = slots
            .iter()
            .map(|s| s.ok_or_else(|| Error::Protocol("forwarding an incomplete vector".into())))
            .collect::<Result<_>>()?;
        send(list, hi + 2 * (rank - lo), &chunks);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::CliqueConfig;

    fn node(i: usize) -> NodeId {
        NodeId::new(i)
    }

    #[test]
    fn group_counts() {
        assert_eq!(
            [1, 2, 3, 6, 7, 14, 15, 30, 31].map(doubling_groups),
            [1, 1, 2, 2, 3, 3, 4, 4, 5]
        );
        assert_eq!(doubling_groups(0), 0);
    }

    #[test]
    fn empty_idt_takes_no_rounds() {
        let mut c = Clique::new(CliqueConfig::new(8, 0)).unwrap();
        let got = solve_relaxed_idt(&mut c, vec![Vec::new(); 8]).unwrap();
        assert!(got.iter().all(Vec::is_empty));
        assert_eq!(c.ledger().rounds, 0);
    }

    #[test]
    fn idt_shift_by_one() {
        let mut c = Clique::new(CliqueConfig::new(8, 0)).unwrap();
        let batch = (1..=8)
            .map(|i| {
                vec![Packet::new(
                    node(i),
                    node(i % 8 + 1),
                    0,
                    Payload::new(i as u64, 4).unwrap(),
                )]
            })
            .collect();
        let got = solve_relaxed_idt(&mut c, batch).unwrap();
        for i in 1..=8 {
            let from = (i + 6) % 8 + 1;
            assert_eq!(got[i - 1].len(), 1);
            assert_eq!(got[i - 1][0].payload.value(), from as u64);
        }
        assert!(c.ledger().rounds <= 3);
    }

    #[test]
    fn accounted_idt_charges_constant() {
        let mut c = Clique::new(CliqueConfig::new(8, 0).with_routing(RoutingMode::Accounted)).unwrap();
        let batch = (1..=8)
            .map(|i| vec![Packet::new(node(i), node(9 - i), 3, Payload::bit(true))])
            .collect();
        solve_relaxed_idt(&mut c, batch).unwrap();
        assert_eq!(c.ledger().rounds, 16);
        assert_eq!(c.ledger().primitives.get("idt"), Some(&16));
    }

    #[test]
    fn overloaded_sender_rejected() {
        let mut c = Clique::new(CliqueConfig::new(4, 0)).unwrap();
        let mut batch = vec![Vec::new(); 4];
        for s in 0..9u32 {
            batch[0].push(Packet::new(node(1), node(2 + (s as usize % 3)), s, Payload::bit(false)));
        }
        assert!(matches!(
            bounded_route(&mut c, batch.clone(), 2, 3),
            Err(Error::Precondition(_))
        ));
        batch[0].pop();
        assert!(bounded_route(&mut c, batch, 2, 3).is_ok());
    }

    #[test]
    fn charges_monotone() {
        for n in [4, 16, 64] {
            for s in 0..4 * n {
                for r in 0..4 * n {
                    let base = bounded_charge(n, 16, s, r);
                    assert!(bounded_charge(n, 16, s + 1, r) >= base);
                    if s > 0 {
                        assert!(bounded_charge(n, 16, s, r + 1) >= base);
                    }
                }
            }
        }
        assert_eq!(bounded_charge(8, 16, 16, 24), 6 * 18);
    }

    #[test]
    fn broadcast_uses_log_phases() {
        let mut c = Clique::new(CliqueConfig::new(16, 0)).unwrap();
        let chunks: Vec<Payload> = (0..5).map(|x| Payload::new(x, 8).unwrap()).collect();
        let v = MulticastVector {
            sender: node(3),
            chunks: chunks.clone(),
            recipients: (1..=16).filter(|&i| i != 3).map(node).collect(),
        };
        let out = vector_multicast(&mut c, &[v]).unwrap();
        assert_eq!(out.subtasks, 1);
        assert!(out.doubling_phases <= 4);
        for i in (1..=16).filter(|&i| i != 3) {
            assert_eq!(out.received[i - 1], vec![(node(3), chunks.clone())]);
        }
        assert!(out.received[2].is_empty());
    }

    #[test]
    fn single_recipient_single_phase() {
        let mut c = Clique::new(CliqueConfig::new(4, 0)).unwrap();
        let v = MulticastVector {
            sender: node(2),
            chunks: vec![Payload::bit(true)],
            recipients: vec![node(4)],
        };
        let out = vector_multicast(&mut c, &[v]).unwrap();
        assert_eq!(out.doubling_phases, 1);
        assert_eq!(out.received[3], vec![(node(2), vec![Payload::bit(true)])]);
    }

    #[test]
    fn subtask_rejects_overlap() {
        let mut c = Clique::new(CliqueConfig::new(4, 0)).unwrap();
        let vs = [
            MulticastVector {
                sender: node(1),
                chunks: vec![Payload::bit(true)],
                recipients: vec![node(2), node(3)],
            },
            MulticastVector {
                sender: node(4),
                chunks: vec![Payload::bit(false)],
                recipients: vec![node(3)],
            },
        ];
        assert!(matches!(multicast_subtask(&mut c, &vs), Err(Error::Precondition(_))));
        let out = vector_multicast(&mut c, &vs).unwrap();
        assert_eq!(out.subtasks, 2);
        assert_eq!(out.received[2].len(), 2);
    }
}
