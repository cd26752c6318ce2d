//! Deterministic discrete-event network.
//!
//! Messages advance hop-by-hop along the routed path with a fixed per-hop
//! latency. Interceptable messages are consumed by the first OSP member
//! strictly after the sender; everything else is delivered at its addressed
//! destination. Loss is decided once per transmission from a content-keyed
//! hash of the run seed, so the same message faces the same fate regardless
//! of event interleaving. The full event trace is SHA-256 hashed: identical
//! (topology, scenario, seed) triples produce byte-identical traces.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::codec::{Addr, PeerIdentity, SaMessage, SessionId, SfStatusElement, WireMessage};
use crate::discovery::{DeliveryMeta, DiscoveryAction, DiscoveryEngine, GossipTimer};
use crate::distribution::{
    DistAction, DistTimer, DistributionEngine, SessionKey, StRole, SubmitError,
};
use crate::topology::{NodeId, Topology};

/// Simulated time in microseconds.
pub type Micros = u64;

pub const MILLIS: Micros = 1_000;
pub const SECONDS: Micros = 1_000_000;

/// Per-packet transport overhead the byte ledger adds on top of the encoded
/// message: IPv4 (20) + UDP (8). The testbed this emulates measured traffic
/// at the IP layer, so the ledger does too.
pub const IP_UDP_OVERHEAD: u64 = 28;

#[derive(Clone, Copy, Debug, serde::Deserialize, serde::Serialize)]
pub struct SimConfig {
    pub per_hop_latency: Micros,
    pub loss_probability: f64,
    pub rng_seed: u64,
    pub sim_time_limit: Micros,
    /// Unsynchronized gossip phases: each node starts its cycle at an
    /// independent random offset in [0, T).
    pub phase_jitter: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            per_hop_latency: 10 * MILLIS,
            loss_probability: 0.0,
            rng_seed: 1,
            sim_time_limit: 3_600 * SECONDS,
            phase_jitter: true,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NodeTimer {
    Gossip(GossipTimer),
    Dist(DistTimer),
}

#[derive(Clone, Debug)]
enum EventKind {
    Deliver {
        wire: Arc<Vec<u8>>,
        path: Arc<Vec<NodeId>>,
        hop: usize,
        interceptable: bool,
        label: &'static str,
        session: Option<SessionId>,
    },
    Timer {
        node: NodeId,
        timer: NodeTimer,
    },
    Cycle {
        node: NodeId,
    },
}

#[derive(Clone, Debug)]
struct SimEvent {
    at: Micros,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for SimEvent {}
impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// One OSP-running node: both protocol engines plus its gossip period.
#[derive(Clone, Debug)]
pub struct SimNode {
    pub id: NodeId,
    pub identity: PeerIdentity,
    pub discovery: DiscoveryEngine,
    pub distribution: DistributionEngine,
    pub gossip_period: Micros,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct KindTotals {
    pub count: u64,
    pub bytes: u64,
    pub byte_hops: u64,
}

/// Byte-hop accounting, the simulator's stand-in for interface counters.
#[derive(Clone, Debug, Default)]
pub struct Ledger {
    per_kind: BTreeMap<&'static str, KindTotals>,
    per_session: BTreeMap<SessionId, u64>,
}

impl Ledger {
    fn account(
        &mut self,
        label: &'static str,
        encoded: u64,
        hops: u64,
        session: Option<SessionId>,
    ) {
        let bytes = encoded + IP_UDP_OVERHEAD;
        let t = self.per_kind.entry(label).or_default();
        t.count += 1;
        t.bytes += bytes;
        t.byte_hops += bytes * hops;
        if let Some(sid) = session {
            *self.per_session.entry(sid).or_default() += bytes * hops;
        }
    }

    pub fn kind(&self, label: &str) -> KindTotals {
        self.per_kind.get(label).copied().unwrap_or_default()
    }

    pub fn kinds(&self) -> impl Iterator<Item = (&'static str, KindTotals)> + '_ {
        self.per_kind.iter().map(|(k, v)| (*k, *v))
    }

    /// Total byte·hops a distribution session put on the wire.
    pub fn session_bytes(&self, session: SessionId) -> u64 {
        self.per_session.get(&session).copied().unwrap_or_default()
    }

    pub fn total_byte_hops(&self) -> u64 {
        self.per_kind.values().map(|t| t.byte_hops).sum()
    }
}

/// Initiator-side result of a distribution session.
#[derive(Clone, Debug)]
pub struct AppResult {
    pub stack: Vec<SfStatusElement>,
    pub result: Vec<SfStatusElement>,
    pub complete: bool,
    pub at: Micros,
}

#[derive(Clone, Copy, Debug)]
pub struct ClosureRecord {
    pub key: SessionKey,
    pub node: NodeId,
    pub role: StRole,
    pub n: u32,
    pub resp_counter: u32,
    pub error_counter: u32,
    pub timed_out: bool,
    pub at: Micros,
}

/// Observable protocol outcomes collected while the simulation runs.
#[derive(Clone, Debug, Default)]
pub struct SimMetrics {
    /// How many times each node's SA processed Data for a session.
    pub sa_data: BTreeMap<(SessionKey, NodeId), u32>,
    /// Upstream peer from which the last processed Data arrived.
    pub tree_parent: BTreeMap<(SessionKey, NodeId), NodeId>,
    /// Abort-and-replace events per node and session.
    pub replacements: BTreeMap<(SessionKey, NodeId), u32>,
    pub app_results: BTreeMap<SessionKey, AppResult>,
    pub closures: Vec<ClosureRecord>,
}

impl SimMetrics {
    /// Nodes whose SA processed Data for the session, the realized coverage.
    pub fn coverage(&self, key: SessionKey) -> std::collections::BTreeSet<NodeId> {
        self.sa_data
            .iter()
            .filter(|((k, _), &c)| *k == key && c > 0)
            .map(|((_, n), _)| *n)
            .collect()
    }
}

struct TraceSink {
    hasher: Sha256,
    lines: u64,
    out: Option<Box<dyn Write + Send>>,
}

impl TraceSink {
    fn new() -> Self {
        TraceSink {
            hasher: Sha256::new(),
            lines: 0,
            out: None,
        }
    }

    fn record(&mut self, line: std::fmt::Arguments<'_>) {
        let s = format!("{line}\n");
        self.hasher.update(s.as_bytes());
        self.lines += 1;
        if let Some(w) = &mut self.out {
            let _ = w.write_all(s.as_bytes());
        }
    }
}

/// Digest of a full event trace; equality means byte-identical traces.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TraceDigest {
    pub sha256: [u8; 32],
    pub lines: u64,
}

impl std::fmt::Display for TraceDigest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.sha256 {
            write!(f, "{b:02x}")?;
        }
        write!(f, " ({} lines)", self.lines)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RunOutcome {
    Quiescent { at: Micros },
    /// The time limit cut the run short; flagged so experiments can reject it.
    TimeLimited { at: Micros },
}

/// What a single `step` processed, for external monitors.
#[derive(Clone, Copy, Debug)]
pub enum Stepped {
    Node { node: NodeId, at: Micros },
    Dropped { at: Micros },
}

pub struct Simulation {
    pub topo: Arc<Topology>,
    cfg: SimConfig,
    nodes: BTreeMap<NodeId, SimNode>,
    queue: BinaryHeap<Reverse<SimEvent>>,
    seq: u64,
    now: Micros,
    pub ledger: Ledger,
    pub metrics: SimMetrics,
    trace: TraceSink,
    phase_rng: ChaCha12Rng,
}

impl Simulation {
    pub fn new(topo: Arc<Topology>, cfg: SimConfig) -> Self {
        let phase_rng = ChaCha12Rng::seed_from_u64(cfg.rng_seed ^ 0x9E37_79B9_7F4A_7C15);
        Simulation {
            topo,
            cfg,
            nodes: BTreeMap::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            ledger: Ledger::default(),
            metrics: SimMetrics::default(),
            trace: TraceSink::new(),
            phase_rng,
        }
    }

    /// Rebuilds a simulation around already-initialized nodes (for example a
    /// converged snapshot), with fresh clocks, queues, and ledgers.
    pub fn with_nodes(
        topo: Arc<Topology>,
        cfg: SimConfig,
        nodes: BTreeMap<NodeId, SimNode>,
    ) -> Self {
        let mut sim = Simulation::new(topo, cfg);
        sim.nodes = nodes;
        sim
    }

    pub fn add_node(&mut self, node: SimNode) {
        self.nodes.insert(node.id, node);
    }

    pub fn node(&self, id: NodeId) -> &SimNode {
        &self.nodes[&id]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &SimNode> {
        self.nodes.values()
    }

    pub fn snapshot_nodes(&self) -> BTreeMap<NodeId, SimNode> {
        self.nodes.clone()
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Streams trace lines to a writer in addition to hashing them.
    pub fn set_trace_writer(&mut self, w: Box<dyn Write + Send>) {
        self.trace.out = Some(w);
    }

    pub fn trace_digest(&self) -> TraceDigest {
        TraceDigest {
            sha256: self.trace.hasher.clone().finalize().into(),
            lines: self.trace.lines,
        }
    }

    fn push(&mut self, at: Micros, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(SimEvent { at, seq, kind }));
    }

    /// Schedules the periodic gossip cycle of every node, each with an
    /// independent random initial phase in [0, T) unless jitter is off.
    pub fn schedule_cycles(&mut self) {
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        for id in ids {
            let period = self.nodes[&id].gossip_period;
            let phase = if self.cfg.phase_jitter {
                self.phase_rng.random_range(0..period)
            } else {
                0
            };
            self.push(phase, EventKind::Cycle { node: id });
        }
    }

    /// Content-keyed Bernoulli loss: independent of event interleaving.
    fn lost(&mut self, from: NodeId, to: NodeId, kind: u8, session: u64) -> bool {
        if self.cfg.loss_probability <= 0.0 {
            return false;
        }
        fn mix(mut x: u64) -> u64 {
            x ^= x >> 30;
            x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
            x ^= x >> 27;
            x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
            x ^= x >> 31;
            x
        }
        let h = mix(self.cfg.rng_seed)
            .wrapping_add(mix(((from.0 as u64) << 32) | to.0 as u64))
            .wrapping_add(mix(session.wrapping_add(kind as u64)));
        let roll = mix(h) as f64 / u64::MAX as f64;
        roll < self.cfg.loss_probability
    }

    fn send(
        &mut self,
        from: NodeId,
        to: Addr,
        msg: &WireMessage,
        interceptable: bool,
        exempt_loss: bool,
    ) {
        let Some(dest) = to.node() else {
            return;
        };
        if dest.index() >= self.topo.node_count() || dest == from {
            return;
        }
        let wire = msg.encode().expect("engine-built messages encode");
        let label = msg.kind_label();
        let session_id = msg.session_id();
        let session = match msg {
            WireMessage::St(_) => Some(session_id),
            WireMessage::Gossip(_) => None,
        };
        if !exempt_loss && self.lost(from, dest, wire[0], session_id) {
            self.trace.record(format_args!(
                "t={} node={} drop-loss kind={} session={:016x}",
                self.now, from.0, label, session_id
            ));
            self.ledger.account(label, wire.len() as u64, 0, session);
            return;
        }
        let path = Arc::new(self.topo.shortest_path(from, dest).hops);
        let at = self.now + self.cfg.per_hop_latency;
        self.push(
            at,
            EventKind::Deliver {
                wire: Arc::new(wire),
                path,
                hop: 1,
                interceptable,
                label,
                session,
            },
        );
    }

    /// Processes one event. Returns `None` when the queue is empty or the
    /// time limit is reached.
    pub fn step(&mut self) -> Option<Stepped> {
        let Reverse(ev) = self.queue.peek()?.clone();
        if ev.at > self.cfg.sim_time_limit {
            return None;
        }
        self.queue.pop();
        debug_assert!(ev.at >= self.now, "clock monotonicity");
        self.now = ev.at;
        match ev.kind {
            EventKind::Cycle { node } => {
                let period = self.nodes[&node].gossip_period;
                self.push(self.now + period, EventKind::Cycle { node });
                let actions = {
                    let n = self.nodes.get_mut(&node).unwrap();
                    n.discovery.on_cycle(ev.at)
                };
                let cycles = self.nodes[&node].discovery.cycles();
                self.trace
                    .record(format_args!("t={} node={} cycle n={}", ev.at, node.0, cycles));
                self.apply_discovery(node, actions);
                Some(Stepped::Node { node, at: ev.at })
            }
            EventKind::Timer { node, timer } => {
                let actions = match timer {
                    NodeTimer::Gossip(t) => {
                        let n = self.nodes.get_mut(&node).unwrap();
                        n.discovery
                            .on_timer(t, ev.at)
                            .into_iter()
                            .map(ApplyAction::Gossip)
                            .collect::<Vec<_>>()
                    }
                    NodeTimer::Dist(t) => {
                        let n = self.nodes.get_mut(&node).unwrap();
                        let pet = n.discovery.pet();
                        n.distribution
                            .on_timer(t, pet, ev.at)
                            .into_iter()
                            .map(ApplyAction::Dist)
                            .collect()
                    }
                };
                if !actions.is_empty() {
                    self.trace
                        .record(format_args!("t={} node={} timer fired", ev.at, node.0));
                }
                self.apply_mixed(node, actions, None);
                Some(Stepped::Node { node, at: ev.at })
            }
            EventKind::Deliver {
                wire,
                path,
                hop,
                interceptable,
                label,
                session,
            } => {
                let node = path[hop];
                let last = hop == path.len() - 1;
                let member = self.topo.is_member(node);
                let consume = (interceptable && member) || last;
                if !consume {
                    let at = self.now + self.cfg.per_hop_latency;
                    self.push(
                        at,
                        EventKind::Deliver {
                            wire,
                            path,
                            hop: hop + 1,
                            interceptable,
                            label,
                            session,
                        },
                    );
                    return Some(Stepped::Node { node, at: ev.at });
                }
                if !member {
                    // dead end: interceptable traffic that found no OSP node
                    self.ledger
                        .account(label, wire.len() as u64, hop as u64, session);
                    self.trace.record(format_args!(
                        "t={} node={} drop-dead-end kind={} bytes={} hops={}",
                        ev.at,
                        node.0,
                        label,
                        wire.len(),
                        hop
                    ));
                    return Some(Stepped::Dropped { at: ev.at });
                }
                self.ledger
                    .account(label, wire.len() as u64, hop as u64, session);
                let msg = WireMessage::decode(&wire).expect("wire messages decode");
                self.trace.record(format_args!(
                    "t={} node={} recv kind={} session={:016x} bytes={} hops={}",
                    ev.at,
                    node.0,
                    label,
                    msg.session_id(),
                    wire.len(),
                    hop
                ));
                self.dispatch(node, msg, hop as u32);
                Some(Stepped::Node { node, at: ev.at })
            }
        }
    }

    fn dispatch(&mut self, node: NodeId, msg: WireMessage, hops: u32) {
        match msg {
            WireMessage::Gossip(g) => {
                let actions = {
                    let n = self.nodes.get_mut(&node).unwrap();
                    n.discovery.on_message(&g, DeliveryMeta { hops, now: self.now })
                };
                self.apply_discovery(node, actions);
            }
            WireMessage::St(m) => {
                let data_parent = match &m {
                    crate::codec::StMessage::Data { source_addr, .. } => source_addr.node(),
                    _ => None,
                };
                let actions = {
                    let n = self.nodes.get_mut(&node).unwrap();
                    let now = self.now;
                    let pet = n.discovery.pet();
                    n.distribution.on_message(&m, pet, now)
                };
                self.apply_dist(node, actions, data_parent);
            }
        }
    }

    fn apply_discovery(&mut self, node: NodeId, actions: Vec<DiscoveryAction>) {
        self.apply_mixed(node, actions.into_iter().map(ApplyAction::Gossip).collect(), None);
    }

    fn apply_dist(&mut self, node: NodeId, actions: Vec<DistAction>, data_parent: Option<NodeId>) {
        self.apply_mixed(
            node,
            actions.into_iter().map(ApplyAction::Dist).collect(),
            data_parent,
        );
    }

    fn apply_mixed(
        &mut self,
        node: NodeId,
        actions: Vec<ApplyAction>,
        data_parent: Option<NodeId>,
    ) {
        for action in actions {
            match action {
                ApplyAction::Gossip(DiscoveryAction::Send {
                    msg,
                    to,
                    interceptable,
                }) => {
                    self.send(node, to, &WireMessage::Gossip(msg), interceptable, false);
                }
                ApplyAction::Gossip(DiscoveryAction::SetTimer { timer, at }) => {
                    self.push(
                        at,
                        EventKind::Timer {
                            node,
                            timer: NodeTimer::Gossip(timer),
                        },
                    );
                }
                ApplyAction::Dist(a) => match a {
                    DistAction::Send {
                        msg,
                        to,
                        interceptable,
                        exempt_loss,
                    } => {
                        self.send(node, to, &WireMessage::St(msg), interceptable, exempt_loss);
                    }
                    DistAction::SetTimer { timer, at } => {
                        self.push(
                            at,
                            EventKind::Timer {
                                node,
                                timer: NodeTimer::Dist(timer),
                            },
                        );
                    }
                    DistAction::SaData { key } => {
                        *self.metrics.sa_data.entry((key, node)).or_default() += 1;
                        if let Some(parent) = data_parent {
                            self.metrics.tree_parent.insert((key, node), parent);
                        }
                        self.trace.record(format_args!(
                            "t={} node={} sa-data session={}",
                            self.now, node.0, key
                        ));
                    }
                    DistAction::AppDeliver {
                        key,
                        stack,
                        result,
                        complete,
                    } => {
                        self.trace.record(format_args!(
                            "t={} node={} app-deliver session={} elements={} complete={}",
                            self.now,
                            node.0,
                            key,
                            stack.len(),
                            complete
                        ));
                        self.metrics.app_results.insert(
                            key,
                            AppResult {
                                stack,
                                result,
                                complete,
                                at: self.now,
                            },
                        );
                    }
                    DistAction::Transition { key, layer, from, to } => {
                        self.trace.record(format_args!(
                            "t={} node={} {} {}->{} session={}",
                            self.now, node.0, layer, from, to, key
                        ));
                    }
                    DistAction::SessionReplaced { key } => {
                        *self.metrics.replacements.entry((key, node)).or_default() += 1;
                        self.trace.record(format_args!(
                            "t={} node={} session-replaced session={}",
                            self.now, node.0, key
                        ));
                    }
                    DistAction::SessionClosed {
                        key,
                        role,
                        n,
                        resp_counter,
                        error_counter,
                        timed_out,
                    } => {
                        self.trace.record(format_args!(
                            "t={} node={} session-closed session={} role={:?} n={} resp={} err={} timeout={}",
                            self.now, node.0, key, role, n, resp_counter, error_counter, timed_out
                        ));
                        self.metrics.closures.push(ClosureRecord {
                            key,
                            node,
                            role,
                            n,
                            resp_counter,
                            error_counter,
                            timed_out,
                            at: self.now,
                        });
                    }
                },
            }
        }
    }

    /// Application-level entry: start a distribution session at `initiator`.
    pub fn submit(
        &mut self,
        initiator: NodeId,
        key: SessionKey,
        request: SaMessage,
        destination: NodeId,
        radius: u32,
    ) -> Result<(), SubmitError> {
        let actions = {
            let n = self.nodes.get_mut(&initiator).unwrap();
            let now = self.now;
            let pet = n.discovery.pet();
            n.distribution
                .submit(key, request, destination, radius, pet, now)?
        };
        self.trace.record(format_args!(
            "t={} node={} submit session={} dest={} r={}",
            self.now, initiator.0, key, destination.0, radius
        ));
        self.apply_dist(initiator, actions, None);
        Ok(())
    }

    /// Runs until the event queue drains or the time limit is hit.
    pub fn run_to_quiescence(&mut self) -> RunOutcome {
        while self.step().is_some() {}
        if self.queue.is_empty() {
            RunOutcome::Quiescent { at: self.now }
        } else {
            RunOutcome::TimeLimited { at: self.now }
        }
    }

    /// True when every node's distribution machinery is back in IDLE.
    pub fn all_idle(&self) -> bool {
        self.nodes.values().all(|n| n.distribution.idle())
    }
}

enum ApplyAction {
    Gossip(DiscoveryAction),
    Dist(DistAction),
}
