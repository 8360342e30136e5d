//! Synchronous congested clique engine.
//!
//! `n` nodes exchange messages in rounds. In one round every ordered pair of
//! distinct nodes carries at most one message whose payload fits the capacity
//! `W`. Messages posted during a round are delivered together at the round
//! boundary. Node code runs through [`NodeCtx`], which exposes only the
//! node's own inbox, outbox and random stream; per-node protocol state lives in
//! a slice handed to [`Clique::run_phase`], one element per node.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default per-phase round limit.
pub const DEFAULT_MAX_ROUNDS: u64 = 1_000_000;
/// Default accounted cost of one relaxed information distribution task.
pub const DEFAULT_C_IDT: u64 = 16;
/// Extra capacity on top of `⌈log₂ n⌉` in strict mode.
pub const STRICT_SLACK: usize = 16;

/// `⌈log₂ x⌉` for `x ≥ 1`.
pub fn ceil_log2(x: usize) -> usize {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as usize
    }
}

/// Bits needed to address one of `n` nodes or coordinates (values `0..n`).
pub fn index_bits(n: usize) -> usize {
    ceil_log2(n).max(1)
}

/// A clique node, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    /// # Panics
    /// Panics if `index` is zero.
    pub fn new(index: usize) -> Self {
        assert!(index >= 1, "node ids are 1-based");
        Self(index as u32)
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// 0-based position in per-node vectors.
    pub fn idx(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_idx(i: usize) -> Self {
        Self(i as u32 + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// At most 64 payload bits, low bits first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Payload {
    value: u64,
    len: u8,
}

impl Payload {
    /// `len` must be in `1..=64` and `value` must fit in `len` bits.
    pub fn new(value: u64, len: usize) -> Result<Self> {
        if len == 0 || len > 64 {
            return Err(Error::Capacity { len, capacity: 64 });
        }
        if len < 64 && value >> len != 0 {
            return Err(Error::Capacity {
                len: 64 - value.leading_zeros() as usize,
                capacity: len,
            });
        }
        Ok(Self { value, len: len as u8 })
    }

    /// Single-bit payload.
    pub fn bit(b: bool) -> Self {
        Self {
            value: u64::from(b),
            len: 1,
        }
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn len(self) -> usize {
        self.len as usize
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }
}

/// A message on one clique link. `origin`/`target` name the end points of a routed
/// item and equal `src`/`dst` for direct messages; like `tag` and `seq` they travel
/// out of band and are not charged against the capacity. Within one round a node's
/// messages must have distinct `(tag, origin, seq)`, which for direct messages is
/// `(src, tag, seq)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Message {
    pub src: NodeId,
    pub dst: NodeId,
    pub tag: u16,
    pub seq: u32,
    pub origin: NodeId,
    pub target: NodeId,
    pub payload: Payload,
}

impl Message {
    pub fn direct(src: NodeId, dst: NodeId, tag: u16, seq: u32, payload: Payload) -> Self {
        Self {
            src,
            dst,
            tag,
            seq,
            origin: src,
            target: dst,
            payload,
        }
    }
}

/// How routing primitives move their items.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum RoutingMode {
    /// Schedule every message through the engine.
    #[default]
    Simulated,
    /// Deliver directly and charge the analytic round bound.
    Accounted,
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoutingMode::Simulated => "simulated",
            RoutingMode::Accounted => "accounted",
        })
    }
}

impl core::str::FromStr for RoutingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulated" => Ok(Self::Simulated),
            "accounted" => Ok(Self::Accounted),
            other => Err(Error::Config(format!("unknown routing mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliqueConfig {
    pub n: usize,
    /// Payload capacity `W` in bits.
    pub capacity: usize,
    pub strict: bool,
    pub seed: u64,
    pub routing: RoutingMode,
    /// Accounted rounds for one relaxed information distribution task.
    pub c_idt: u64,
    /// Abort a communication phase after this many rounds.
    pub max_rounds: u64,
}

impl CliqueConfig {
    /// Default capacity of 64 bits.
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            capacity: 64,
            strict: false,
            seed,
            routing: RoutingMode::Simulated,
            c_idt: DEFAULT_C_IDT,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }

    /// Capacity `⌈log₂ n⌉ + 16`.
    pub fn strict(n: usize, seed: u64) -> Self {
        Self {
            capacity: ceil_log2(n) + STRICT_SLACK,
            strict: true,
            ..Self::new(n, seed)
        }
    }

    pub fn with_routing(mut self, routing: RoutingMode) -> Self {
        self.routing = routing;
        self
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity;
        self.strict = false;
        self
    }

    pub fn with_max_rounds(mut self, max_rounds: u64) -> Self {
        self.max_rounds = max_rounds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("need at least 2 nodes, got {}", self.n)));
        }
        if self.n > u32::MAX as usize {
            return Err(Error::Config("node count exceeds u32".to_string()));
        }
        let min = ceil_log2(self.n) + 1;
        if self.capacity < min || self.capacity > 64 {
            return Err(Error::Config(format!(
                "capacity {} outside {min}..=64 for n = {}",
                self.capacity, self.n
            )));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be positive".to_string()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SectionTotals {
    pub rounds: u64,
    pub messages: u64,
    pub bits: u64,
}

/// Counters for one run. All counters only grow.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RoundLedger {
    pub rounds: u64,
    pub messages: u64,
    pub bits: u64,
    /// Local work units per node, index 0 is node 1.
    pub work: Vec<u64>,
    /// Totals per protocol section (`step1`, `hmst.step2`, ...).
    pub sections: BTreeMap<String, SectionTotals>,
    /// Rounds spent inside each outermost routing primitive.
    pub primitives: BTreeMap<String, u64>,
}

impl RoundLedger {
    pub fn work_total(&self) -> u64 {
        self.work.iter().sum()
    }

    pub fn work_max_node(&self) -> u64 {
        self.work.iter().copied().max().unwrap_or(0)
    }

    pub fn section_rounds(&self, name: &str) -> u64 {
        self.sections.get(name).map_or(0, |s| s.rounds)
    }
}

/// Returned by node step functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Continue,
    Done,
}

/// One step invocation seen by the audit hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuditRecord {
    pub tick: u64,
    pub node: NodeId,
    pub inbox_len: usize,
    /// Inbox messages not addressed to `node`; always zero.
    pub foreign: usize,
}

/// A node's view during one step: its id, inbox, outbox and random stream.
pub struct NodeCtx<'a> {
    id: NodeId,
    n: usize,
    capacity: usize,
    tick: u64,
    can_post: bool,
    inbox: &'a [Message],
    outbox: &'a mut Vec<Message>,
    stamps: &'a mut [u64],
    rng: &'a mut ChaCha8Rng,
    work: &'a mut u64,
}

impl<'a> NodeCtx<'a> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Messages delivered at the last round boundary, ordered by sender.
    pub fn inbox(&self) -> &'a [Message] {
        self.inbox
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    /// Adds local computation units to this node's work counter.
    pub fn charge_work(&mut self, units: u64) {
        *self.work += units;
    }

    pub fn post(&mut self, dst: NodeId, tag: u16, seq: u32, payload: Payload) -> Result<()> {
        self.post_message(Message::direct(self.id, dst, tag, seq, payload))
    }

    pub fn post_message(&mut self, m: Message) -> Result<()> {
        if !self.can_post {
            return Err(Error::PostOutsideRound { node: self.id.get() });
        }
        if m.src != self.id {
            return Err(Error::Protocol(format!(
                "node {} posted a message with source {}",
                self.id, m.src
            )));
        }
        check_message(&m, self.n, self.capacity)?;
        let slot = &mut self.stamps[m.dst.idx()];
        if *slot == self.tick + 1 {
            return Err(Error::PairConflict {
                src: m.src.get(),
                dst: m.dst.get(),
            });
        }
        *slot = self.tick + 1;
        self.outbox.push(m);
        Ok(())
    }
}

fn check_message(m: &Message, n: usize, capacity: usize) -> Result<()> {
    if m.dst.get() == 0 || m.dst.get() > n {
        return Err(Error::Protocol(format!("destination {} out of range", m.dst)));
    }
    if m.src == m.dst {
        return Err(Error::SelfMessage { node: m.src.get() });
    }
    if m.payload.len() > capacity {
        return Err(Error::Capacity {
            len: m.payload.len(),
            capacity,
        });
    }
    Ok(())
}

/// The clique: configuration, per-node buffers and random streams, and the ledger.
pub struct Clique {
    cfg: CliqueConfig,
    ledger: RoundLedger,
    inboxes: Vec<Vec<Message>>,
    outboxes: Vec<Vec<Message>>,
    stamps: Vec<u64>,
    rngs: Vec<ChaCha8Rng>,
    tick: u64,
    section: String,
    primitive: Option<(String, u64)>,
    audit: Option<Vec<AuditRecord>>,
}

impl Clique {
    /// Node `i` draws from the ChaCha8 stream `i` of the master seed.
    pub fn new(cfg: CliqueConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let rngs = (0..n)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
                r.set_stream(i as u64 + 1);
                r
            })
            .collect();
        Ok(Self {
            ledger: RoundLedger {
                work: vec![0; n],
                ..RoundLedger::default()
            },
            inboxes: vec![Vec::new(); n],
            outboxes: vec![Vec::new(); n],
            stamps: vec![0; n * n],
            rngs,
            tick: 0,
            section: "main".to_string(),
            primitive: None,
            audit: None,
            cfg,
        })
    }

    pub fn config(&self) -> &CliqueConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    pub fn capacity(&self) -> usize {
        self.cfg.capacity
    }

    pub fn routing(&self) -> RoutingMode {
        self.cfg.routing
    }

    pub fn ledger(&self) -> &RoundLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> RoundLedger {
        self.ledger
    }

    /// Attributes subsequent rounds to `name`.
    pub fn set_section(&mut self, name: &str) {
        self.section.clear();
        self.section.push_str(name);
    }

    pub fn section(&self) -> &str {
        &self.section
    }

    pub fn enable_audit(&mut self) {
        self.audit = Some(Vec::new());
    }

    pub fn audit_log(&self) -> &[AuditRecord] {
        self.audit.as_deref().unwrap_or(&[])
    }

    /// Messages currently delivered to `node`.
    pub fn inbox(&self, node: NodeId) -> &[Message] {
        &self.inboxes[node.idx()]
    }

    /// Queues `m` for delivery at the next round boundary.
    pub fn post_message(&mut self, m: Message) -> Result<()> {
        let n = self.cfg.n;
        if m.src.get() == 0 || m.src.get() > n {
            return Err(Error::Protocol(format!("source {} out of range", m.src)));
        }
        check_message(&m, n, self.cfg.capacity)?;
        let slot = &mut self.stamps[m.src.idx() * n + m.dst.idx()];
        if *slot == self.tick + 1 {
            return Err(Error::PairConflict {
                src: m.src.get(),
                dst: m.dst.get(),
            });
        }
        *slot = self.tick + 1;
        self.outboxes[m.src.idx()].push(m);
        Ok(())
    }

    pub fn pending_messages(&self) -> usize {
        self.outboxes.iter().map(Vec::len).sum()
    }

    /// Delivers every buffered message and closes the round.
    pub fn advance_round(&mut self) {
        let w = self.cfg.capacity as u64;
        for inbox in &mut self.inboxes {
            inbox.clear();
        }
        let (mut msgs, mut bits) = (0u64, 0u64);
        for src in 0..self.cfg.n {
            let out = core::mem::take(&mut self.outboxes[src]);
            for m in &out {
                msgs += 1;
                bits += m.payload.len() as u64;
                self.ledger.work[src] += w;
                self.ledger.work[m.dst.idx()] += w;
                self.inboxes[m.dst.idx()].push(*m);
            }
            self.outboxes[src] = out;
            self.outboxes[src].clear();
        }
        self.record(1, msgs, bits);
    }

    /// Charges `rounds` together with already-delivered messages `(src, dst, bits)`
    /// without scheduling them. Used by accounted routing.
    pub fn charge_delivery(&mut self, rounds: u64, delivered: impl IntoIterator<Item = (NodeId, NodeId, usize)>) {
        let w = self.cfg.capacity as u64;
        let (mut msgs, mut bits) = (0u64, 0u64);
        for (src, dst, b) in delivered {
            msgs += 1;
            bits += b as u64;
            self.ledger.work[src.idx()] += w;
            self.ledger.work[dst.idx()] += w;
        }
        self.record(rounds, msgs, bits);
    }

    /// Adds local work to `node`.
    pub fn charge_work(&mut self, node: NodeId, units: u64) {
        self.ledger.work[node.idx()] += units;
    }

    fn record(&mut self, rounds: u64, msgs: u64, bits: u64) {
        self.tick += 1;
        self.ledger.rounds += rounds;
        self.ledger.messages += msgs;
        self.ledger.bits += bits;
        let s = self.ledger.sections.entry(self.section.clone()).or_default();
        s.rounds += rounds;
        s.messages += msgs;
        s.bits += bits;
    }

    /// Enters a routing primitive; only the outermost one is attributed.
    pub(crate) fn primitive_enter(&mut self, name: &str) -> bool {
        if self.primitive.is_some() {
            return false;
        }
        self.primitive = Some((name.to_string(), self.ledger.rounds));
        true
    }

    pub(crate) fn primitive_exit(&mut self, entered: bool) {
        if !entered {
            return;
        }
        if let Some((name, start)) = self.primitive.take() {
            *self.ledger.primitives.entry(name).or_default() += self.ledger.rounds - start;
        }
    }

    /// Runs node-local computation on every node; no messages may be posted.
    pub fn local<L>(
        &mut self,
        locals: &mut [L],
        mut f: impl FnMut(&mut NodeCtx<'_>, &mut L) -> Result<()>,
    ) -> Result<()> {
        self.check_locals(locals.len())?;
        let n = self.cfg.n;
        for (i, local) in locals.iter_mut().enumerate() {
            let mut ctx = NodeCtx {
                id: NodeId::from_idx(i),
                n,
                capacity: self.cfg.capacity,
                tick: self.tick,
                can_post: false,
                inbox: &[],
                outbox: &mut self.outboxes[i],
                stamps: &mut self.stamps[i * n..(i + 1) * n],
                rng: &mut self.rngs[i],
                work: &mut self.ledger.work[i],
            };
            f(&mut ctx, local)?;
        }
        Ok(())
    }

    /// Runs a communication phase: every round each node's `step` sees the messages
    /// delivered at the previous boundary and may post new ones. The phase ends,
    /// without consuming a further round, once every node returns [`Status::Done`] in
    /// the same pass and nothing is buffered. Returns the rounds used.
    pub fn run_phase<L>(
        &mut self,
        locals: &mut [L],
        mut step: impl FnMut(&mut NodeCtx<'_>, &mut L) -> Result<Status>,
    ) -> Result<u64> {
        self.check_locals(locals.len())?;
        let n = self.cfg.n;
        let mut used = 0u64;
        loop {
            let mut all_done = true;
            for (i, local) in locals.iter_mut().enumerate() {
                if let Some(log) = &mut self.audit {
                    let inbox = &self.inboxes[i];
                    log.push(AuditRecord {
                        tick: self.tick,
                        node: NodeId::from_idx(i),
                        inbox_len: inbox.len(),
                        foreign: inbox.iter().filter(|m| m.dst.idx() != i).count(),
                    });
                }
                let mut ctx = NodeCtx {
                    id: NodeId::from_idx(i),
                    n,
                    capacity: self.cfg.capacity,
                    tick: self.tick,
                    can_post: true,
                    inbox: &self.inboxes[i],
                    outbox: &mut self.outboxes[i],
                    stamps: &mut self.stamps[i * n..(i + 1) * n],
                    rng: &mut self.rngs[i],
                    work: &mut self.ledger.work[i],
                };
                if step(&mut ctx, local)? == Status::Continue {
                    all_done = false;
                }
                check_unique_sequences(&self.outboxes[i])?;
            }
            if all_done && self.pending_messages() == 0 {
                for inbox in &mut self.inboxes {
                    inbox.clear();
                }
                return Ok(used);
            }
            if used >= self.cfg.max_rounds {
                return Err(Error::MaxRounds {
                    limit: self.cfg.max_rounds,
                });
            }
            self.advance_round();
            used += 1;
        }
    }

    fn check_locals(&self, len: usize) -> Result<()> {
        if len != self.cfg.n {
            return Err(Error::Dimension {
                expected: self.cfg.n,
                found: len,
            });
        }
        Ok(())
    }
}

fn check_unique_sequences(out: &[Message]) -> Result<()> {
    if out.len() < 2 {
        return Ok(());
    }
    let mut keys: Vec<(u16, NodeId, u32)> = out.iter().map(|m| (m.tag, m.origin, m.seq)).collect();
    keys.sort_unstable();
    if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateSequence {
            src: out[0].src.get(),
            tag: w[0].0,
            seq: w[0].2,
        });
    }
    Ok(())
}

/// A protocol expressed as one per-node step function.
pub trait Protocol {
    type State;

    fn step(&self, ctx: &mut NodeCtx<'_>, state: &mut Self::State) -> Result<Status>;
}

/// Runs `protocol` from the given per-node initial states until all nodes finish.
pub fn run_protocol<P: Protocol>(
    protocol: &P,
    mut inputs: Vec<P::State>,
    cfg: CliqueConfig,
) -> Result<(Vec<P::State>, RoundLedger)> {
    let mut clique = Clique::new(cfg)?;
    clique.run_phase(&mut inputs, |ctx, s| protocol.step(ctx, s))?;
    Ok((inputs, clique.into_ledger()))
}
