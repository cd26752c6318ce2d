//! Gossip-based peer discovery at the ST layer.
//!
//! Each node periodically initiates a three-way gossip exchange
//! (Registration / RegResponse / Ack). Registrations are scope-1: the first
//! OSP node on the IP path toward the selected destination intercepts and
//! answers them, which is what lets the initiator measure its hop distance
//! to the responder and classify the original destination as out of scope.
//! The peer table (PeT) is soft state with an adaptive lifetime.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::codec::{Addr, GossipExchange, GossipMessage, PeerId, PeerIdentity, SessionId};
use crate::simnet::Micros;
use crate::topology::NodeId;

#[derive(Clone, Debug)]
pub struct GossipConfig {
    /// Gossip period T.
    pub period: Micros,
    /// Session timeout; the supporting choice is `gossip_timer == period`.
    pub gossip_timer: Micros,
    /// Number of peer identities shared per Registration/RegResponse.
    pub pts_size: usize,
    /// PeT entry lifetime = factor × |PeT| × period.
    pub entry_lifetime_factor: f64,
    /// Optional LRU bound on stored unreachable peers.
    pub unreachable_capacity: Option<usize>,
    /// Main-text reading of the timeout rule: an unanswered Registration
    /// marks the destination out of scope. Off by default; the detailed
    /// protocol description leaves statuses unaltered.
    pub timeout_marks_out_of_scope: bool,
}

impl Default for GossipConfig {
    fn default() -> Self {
        GossipConfig {
            period: 5_000_000,
            gossip_timer: 5_000_000,
            pts_size: 2,
            entry_lifetime_factor: 2.0,
            unreachable_capacity: None,
            timeout_marks_out_of_scope: false,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PeerClass {
    Neighbor,
    Unreachable,
    Unknown,
}

/// One PeT row. Class is derived from the contacted flag and the metric,
/// never stored separately.
#[derive(Clone, Debug)]
pub struct PetEntry {
    pub peer: PeerIdentity,
    /// Measured hop distance, or -1 when not significant.
    pub ip_hops: i32,
    /// Measured round-trip time in microseconds, or -1.
    pub latency_rtt: i64,
    /// Time of the last gossip session involving this peer.
    pub timestamp: Micros,
    /// Reachability flag: true once the peer was gossiped to.
    pub contacted: bool,
}

impl PetEntry {
    pub fn class(&self) -> PeerClass {
        match (self.contacted, self.ip_hops >= 0) {
            (true, true) => PeerClass::Neighbor,
            (true, false) => PeerClass::Unreachable,
            (false, _) => PeerClass::Unknown,
        }
    }
}

/// Per-node soft-state peer table.
#[derive(Clone, Debug)]
pub struct PeerTable {
    own: PeerId,
    entries: BTreeMap<PeerId, PetEntry>,
    unreachable_capacity: Option<usize>,
}

impl PeerTable {
    pub fn new(own: PeerId, unreachable_capacity: Option<usize>) -> Self {
        PeerTable {
            own,
            entries: BTreeMap::new(),
            unreachable_capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, pid: PeerId) -> Option<&PetEntry> {
        self.entries.get(&pid)
    }

    pub fn entries(&self) -> impl Iterator<Item = &PetEntry> {
        self.entries.values()
    }

    pub fn neighbors(&self) -> impl Iterator<Item = &PetEntry> {
        self.entries
            .values()
            .filter(|e| e.class() == PeerClass::Neighbor)
    }

    /// Neighbor set as topology nodes, for convergence checks.
    pub fn neighbor_nodes(&self) -> std::collections::BTreeSet<NodeId> {
        self.neighbors()
            .filter_map(|e| e.peer.addr.node())
            .collect()
    }

    /// Mean IP distance to neighbors, the v_i of the overhead formula.
    pub fn mean_neighbor_distance(&self) -> Option<f64> {
        let (mut sum, mut n) = (0u64, 0u64);
        for e in self.neighbors() {
            sum += e.ip_hops as u64;
            n += 1;
        }
        if n == 0 {
            None
        } else {
            Some(sum as f64 / n as f64)
        }
    }

    /// Stores a newly learned identity as unknown. Own identity and already
    /// known peers are left untouched.
    pub fn insert_unknown(&mut self, peer: PeerIdentity, now: Micros) -> bool {
        if peer.pid == self.own || self.entries.contains_key(&peer.pid) {
            return false;
        }
        self.entries.insert(
            peer.pid,
            PetEntry {
                peer,
                ip_hops: -1,
                latency_rtt: -1,
                timestamp: now,
                contacted: false,
            },
        );
        true
    }

    pub fn set_neighbor(&mut self, peer: PeerIdentity, ip_hops: u32, rtt: Micros, now: Micros) {
        debug_assert!(ip_hops >= 1);
        if peer.pid == self.own {
            return;
        }
        self.entries.insert(
            peer.pid,
            PetEntry {
                peer,
                ip_hops: ip_hops as i32,
                latency_rtt: rtt as i64,
                timestamp: now,
                contacted: true,
            },
        );
    }

    pub fn set_unreachable(&mut self, peer: PeerIdentity, now: Micros) {
        if peer.pid == self.own {
            return;
        }
        self.entries.insert(
            peer.pid,
            PetEntry {
                peer,
                ip_hops: -1,
                latency_rtt: -1,
                timestamp: now,
                contacted: true,
            },
        );
        if let Some(cap) = self.unreachable_capacity {
            loop {
                let unreachable: Vec<_> = self
                    .entries
                    .values()
                    .filter(|e| e.class() == PeerClass::Unreachable)
                    .map(|e| (e.timestamp, e.peer.pid))
                    .collect();
                if unreachable.len() <= cap {
                    break;
                }
                let (_, oldest) = unreachable.iter().min().copied().unwrap();
                self.entries.remove(&oldest);
            }
        }
    }

    pub fn touch(&mut self, pid: PeerId, now: Micros) {
        if let Some(e) = self.entries.get_mut(&pid) {
            e.timestamp = now;
        }
    }

    /// Drops entries idle longer than `lifetime`; returns the evicted pids.
    pub fn expire(&mut self, now: Micros, lifetime: Micros) -> Vec<PeerId> {
        let dead: Vec<PeerId> = self
            .entries
            .values()
            .filter(|e| now.saturating_sub(e.timestamp) > lifetime)
            .map(|e| e.peer.pid)
            .collect();
        for pid in &dead {
            self.entries.remove(pid);
        }
        dead
    }
}

/// Uniform over unknown peers when any exist, otherwise uniform over the
/// contacted (neighbor or unreachable) ones.
pub fn select_gossip_destination(pet: &PeerTable, rng: &mut ChaCha12Rng) -> Option<PeerIdentity> {
    let unknown: Vec<PeerIdentity> = pet
        .entries()
        .filter(|e| e.class() == PeerClass::Unknown)
        .map(|e| e.peer)
        .collect();
    let pool = if unknown.is_empty() {
        pet.entries().map(|e| e.peer).collect()
    } else {
        unknown
    };
    if pool.is_empty() {
        return None;
    }
    Some(pool[rng.random_range(0..pool.len())])
}

/// Up to `pts_size` identities sampled uniformly without replacement from
/// the whole PeT, excluding the exchange counterpart.
pub fn select_pts(
    pet: &PeerTable,
    counterpart: PeerId,
    pts_size: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<PeerIdentity> {
    let pool: Vec<PeerIdentity> = pet
        .entries()
        .filter(|e| e.peer.pid != counterpart)
        .map(|e| e.peer)
        .collect();
    let amount = pts_size.min(pool.len());
    if amount == 0 {
        return Vec::new();
    }
    rand::seq::index::sample(rng, pool.len(), amount)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GossipTimer {
    InitiatorDeadline { session_id: SessionId },
    ResponderDeadline { session_id: SessionId },
}

#[derive(Clone, Debug)]
pub enum DiscoveryAction {
    Send {
        msg: GossipMessage,
        to: Addr,
        interceptable: bool,
    },
    SetTimer {
        timer: GossipTimer,
        at: Micros,
    },
}

#[derive(Clone, Debug)]
struct InitiatorSession {
    session_id: SessionId,
    destination: PeerIdentity,
    started_at: Micros,
}

#[derive(Clone, Debug)]
struct ResponderSession {
    initiator: PeerIdentity,
}

/// Hop count and arrival time the network reports with a delivery. The hop
/// count stands in for what a real stack would read from OSP and IP headers.
#[derive(Clone, Copy, Debug)]
pub struct DeliveryMeta {
    pub hops: u32,
    pub now: Micros,
}

/// Single-threaded gossip state machine for one node, advanced only by
/// cycle, message, and timer events.
#[derive(Clone, Debug)]
pub struct DiscoveryEngine {
    identity: PeerIdentity,
    cfg: GossipConfig,
    pet: PeerTable,
    rng: ChaCha12Rng,
    initiator: Option<InitiatorSession>,
    responders: BTreeMap<SessionId, ResponderSession>,
    cycles: u64,
    active_cycles: u64,
}

impl DiscoveryEngine {
    /// A fresh node knows only the tracker. The tracker node itself starts
    /// with an empty PeT and learns peers from intercepted registrations.
    pub fn new(
        identity: PeerIdentity,
        tracker: PeerIdentity,
        cfg: GossipConfig,
        rng: ChaCha12Rng,
    ) -> Self {
        let mut pet = PeerTable::new(identity.pid, cfg.unreachable_capacity);
        pet.insert_unknown(tracker, 0);
        DiscoveryEngine {
            identity,
            cfg,
            pet,
            rng,
            initiator: None,
            responders: BTreeMap::new(),
            cycles: 0,
            active_cycles: 0,
        }
    }

    pub fn identity(&self) -> PeerIdentity {
        self.identity
    }

    pub fn pet(&self) -> &PeerTable {
        &self.pet
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    /// Cycles that actually initiated a gossip exchange. An empty PeT makes
    /// a cycle a no-op, which does not count toward discovery time.
    pub fn active_cycles(&self) -> u64 {
        self.active_cycles
    }

    pub fn has_open_session(&self) -> bool {
        self.initiator.is_some() || !self.responders.is_empty()
    }

    fn lifetime(&self) -> Micros {
        (self.cfg.entry_lifetime_factor * self.pet.len() as f64 * self.cfg.period as f64) as Micros
    }

    fn abort_initiator(&mut self) {
        if let Some(s) = self.initiator.take() {
            if self.cfg.timeout_marks_out_of_scope {
                self.pet.set_unreachable(s.destination, s.started_at);
            }
        }
    }

    /// One gossip cycle: abort any still-pending session, expire stale
    /// entries, then gossip toward a freshly selected destination.
    pub fn on_cycle(&mut self, now: Micros) -> Vec<DiscoveryAction> {
        self.cycles += 1;
        self.abort_initiator();
        let lifetime = self.lifetime();
        self.pet.expire(now, lifetime);
        let Some(destination) = select_gossip_destination(&self.pet, &mut self.rng) else {
            return Vec::new();
        };
        self.active_cycles += 1;
        let session_id: SessionId = self.rng.random();
        let pts = select_pts(&self.pet, destination.pid, self.cfg.pts_size, &mut self.rng);
        self.initiator = Some(InitiatorSession {
            session_id,
            destination,
            started_at: now,
        });
        vec![
            DiscoveryAction::Send {
                msg: GossipMessage::Registration(GossipExchange {
                    source: self.identity.pid,
                    destination: destination.pid,
                    source_addr: self.identity.addr,
                    session_id,
                    metric_value: -1,
                    pts,
                }),
                to: destination.addr,
                interceptable: true,
            },
            DiscoveryAction::SetTimer {
                timer: GossipTimer::InitiatorDeadline { session_id },
                at: now + self.cfg.gossip_timer,
            },
        ]
    }

    pub fn on_message(&mut self, msg: &GossipMessage, meta: DeliveryMeta) -> Vec<DiscoveryAction> {
        match msg {
            GossipMessage::Registration(x) => self.on_registration(x, meta),
            GossipMessage::RegResponse(x) => self.on_reg_response(x, meta),
            GossipMessage::Ack {
                source, session_id, ..
            } => {
                self.on_ack(*source, *session_id, meta.now);
                Vec::new()
            }
        }
    }

    /// Responder side: the registration was intercepted (or addressed to us)
    /// and is consumed here. The initiator is stored as unknown until we
    /// gossip toward it ourselves.
    fn on_registration(&mut self, x: &GossipExchange, meta: DeliveryMeta) -> Vec<DiscoveryAction> {
        let initiator = PeerIdentity {
            pid: x.source,
            addr: x.source_addr,
        };
        self.pet.insert_unknown(initiator, meta.now);
        for p in &x.pts {
            self.pet.insert_unknown(*p, meta.now);
        }
        let pts = select_pts(&self.pet, x.source, self.cfg.pts_size, &mut self.rng);
        self.responders
            .insert(x.session_id, ResponderSession { initiator });
        vec![
            DiscoveryAction::Send {
                msg: GossipMessage::RegResponse(GossipExchange {
                    source: self.identity.pid,
                    destination: x.source,
                    source_addr: self.identity.addr,
                    session_id: x.session_id,
                    metric_value: meta.hops as i32,
                    pts,
                }),
                to: initiator.addr,
                interceptable: false,
            },
            DiscoveryAction::SetTimer {
                timer: GossipTimer::ResponderDeadline {
                    session_id: x.session_id,
                },
                at: meta.now + self.cfg.gossip_timer,
            },
        ]
    }

    /// Initiator side: the responder becomes a measured neighbor; when it is
    /// not the queried destination, the destination goes out of scope.
    fn on_reg_response(&mut self, x: &GossipExchange, meta: DeliveryMeta) -> Vec<DiscoveryAction> {
        let matches = self
            .initiator
            .as_ref()
            .is_some_and(|s| s.session_id == x.session_id);
        if !matches {
            return Vec::new(); // stale or foreign response
        }
        let session = self.initiator.take().unwrap();
        let responder = PeerIdentity {
            pid: x.source,
            addr: x.source_addr,
        };
        let hops = if x.metric_value >= 1 {
            x.metric_value as u32
        } else {
            meta.hops
        };
        let rtt = meta.now - session.started_at;
        self.pet.set_neighbor(responder, hops, rtt, meta.now);
        if responder.pid != session.destination.pid {
            self.pet.set_unreachable(session.destination, meta.now);
        }
        for p in &x.pts {
            self.pet.insert_unknown(*p, meta.now);
        }
        vec![DiscoveryAction::Send {
            msg: GossipMessage::Ack {
                source: self.identity.pid,
                destination: responder.pid,
                session_id: x.session_id,
            },
            to: responder.addr,
            interceptable: false,
        }]
    }

    /// Responder side close. The initiator entry keeps its class; only the
    /// session timestamp is refreshed.
    fn on_ack(&mut self, source: PeerId, session_id: SessionId, now: Micros) {
        if let Some(sess) = self.responders.get(&session_id) {
            if sess.initiator.pid == source {
                let pid = sess.initiator.pid;
                self.responders.remove(&session_id);
                self.pet.touch(pid, now);
            }
        }
    }

    pub fn on_timer(&mut self, timer: GossipTimer, _now: Micros) -> Vec<DiscoveryAction> {
        match timer {
            GossipTimer::InitiatorDeadline { session_id } => {
                if self
                    .initiator
                    .as_ref()
                    .is_some_and(|s| s.session_id == session_id)
                {
                    self.abort_initiator();
                }
            }
            GossipTimer::ResponderDeadline { session_id } => {
                self.responders.remove(&session_id);
            }
        }
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ident(i: u32) -> PeerIdentity {
        PeerIdentity {
            pid: PeerId([i as u8; 8]),
            addr: Addr::for_node(NodeId(i)),
        }
    }

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn engine(node: u32, tracker: u32, cfg: GossipConfig) -> DiscoveryEngine {
        DiscoveryEngine::new(ident(node), ident(tracker), cfg, rng(42 + node as u64))
    }

    fn sent(actions: &[DiscoveryAction]) -> Vec<&GossipMessage> {
        actions
            .iter()
            .filter_map(|a| match a {
                DiscoveryAction::Send { msg, .. } => Some(msg),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn boot_cycle_targets_tracker() {
        let mut e = engine(1, 9, GossipConfig::default());
        let actions = e.on_cycle(0);
        match sent(&actions)[0] {
            GossipMessage::Registration(x) => {
                assert_eq!(x.destination, ident(9).pid);
                assert!(x.pts.is_empty()); // only the tracker is known, and it is excluded
            }
            other => panic!("expected registration, got {other:?}"),
        }
        assert_eq!(e.cycles(), 1);
    }

    #[test]
    fn tracker_node_has_empty_pet_and_idles() {
        let mut e = engine(9, 9, GossipConfig::default());
        assert!(e.pet().is_empty());
        assert!(e.on_cycle(0).is_empty());
    }

    #[test]
    fn unknown_peers_have_absolute_priority() {
        let mut pet = PeerTable::new(ident(0).pid, None);
        pet.insert_unknown(ident(1), 0);
        for i in 2..7 {
            pet.set_neighbor(ident(i), 1, 100, 0);
        }
        let mut r = rng(7);
        for _ in 0..200 {
            assert_eq!(select_gossip_destination(&pet, &mut r).unwrap().pid, ident(1).pid);
        }
    }

    #[test]
    fn contacted_selection_is_uniform() {
        // 3 neighbors + 2 unreachable, no unknowns: each should be drawn
        // 1/5 of the time. Chi-square over 10^4 seeded draws, 4 degrees of
        // freedom, 1% critical value 13.277.
        let mut pet = PeerTable::new(ident(0).pid, None);
        for i in 1..=3 {
            pet.set_neighbor(ident(i), 1, 100, 0);
        }
        pet.set_unreachable(ident(4), 0);
        pet.set_unreachable(ident(5), 0);
        let mut r = rng(11);
        let mut counts = BTreeMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            let d = select_gossip_destination(&pet, &mut r).unwrap();
            *counts.entry(d.pid).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 5);
        let expected = draws as f64 / 5.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 13.277, "chi2 = {chi2}");
    }

    #[test]
    fn pts_respects_bounds() {
        let mut pet = PeerTable::new(ident(0).pid, None);
        pet.insert_unknown(ident(1), 0);
        pet.insert_unknown(ident(2), 0);
        let mut r = rng(3);
        // counterpart excluded, one eligible entry left
        assert_eq!(select_pts(&pet, ident(2).pid, 2, &mut r).len(), 1);
        assert!(select_pts(&pet, ident(2).pid, 0, &mut r).is_empty());
    }

    #[test]
    fn pts_pairs_are_uniform() {
        // 10 eligible peers, pts_size 2: all 45 unordered pairs equally
        // likely. Chi-square over 10^4 draws, df 44, 1% critical 68.71.
        let mut pet = PeerTable::new(ident(0).pid, None);
        for i in 1..=10 {
            pet.insert_unknown(ident(i), 0);
        }
        let mut r = rng(5);
        let mut counts: BTreeMap<(PeerId, PeerId), u64> = BTreeMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            let pts = select_pts(&pet, ident(99).pid, 2, &mut r);
            assert_eq!(pts.len(), 2);
            let (mut a, mut b) = (pts[0].pid, pts[1].pid);
            if b < a {
                std::mem::swap(&mut a, &mut b);
            }
            assert_ne!(a, b);
            *counts.entry((a, b)).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 45);
        let expected = draws as f64 / 45.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 68.71, "chi2 = {chi2}");
    }

    #[test]
    fn responder_stores_initiator_as_unknown() {
        let mut responder = engine(3, 9, GossipConfig::default());
        let reg = GossipExchange {
            source: ident(1).pid,
            destination: ident(9).pid,
            source_addr: ident(1).addr,
            session_id: 77,
            metric_value: -1,
            pts: vec![ident(5)],
        };
        let actions = responder.on_message(
            &GossipMessage::Registration(reg),
            DeliveryMeta { hops: 2, now: 100 },
        );
        match sent(&actions)[0] {
            GossipMessage::RegResponse(x) => {
                assert_eq!(x.destination, ident(1).pid);
                assert_eq!(x.metric_value, 2);
            }
            other => panic!("expected reg-response, got {other:?}"),
        }
        let entry = responder.pet().get(ident(1).pid).unwrap();
        assert_eq!(entry.class(), PeerClass::Unknown);
        // shared identities merged as unknown too
        assert_eq!(responder.pet().get(ident(5).pid).unwrap().class(), PeerClass::Unknown);
    }

    #[test]
    fn pts_with_own_pid_is_ignored() {
        let mut responder = engine(3, 9, GossipConfig::default());
        let reg = GossipExchange {
            source: ident(1).pid,
            destination: ident(9).pid,
            source_addr: ident(1).addr,
            session_id: 77,
            metric_value: -1,
            pts: vec![ident(3)], // responder's own identity
        };
        responder.on_message(
            &GossipMessage::Registration(reg),
            DeliveryMeta { hops: 1, now: 0 },
        );
        assert!(responder.pet().get(ident(3).pid).is_none());
    }

    fn run_initiation(e: &mut DiscoveryEngine, now: Micros) -> SessionId {
        let actions = e.on_cycle(now);
        match sent(&actions)[0] {
            GossipMessage::Registration(x) => x.session_id,
            other => panic!("expected registration, got {other:?}"),
        }
    }

    #[test]
    fn interception_classifies_destination_out_of_scope() {
        let mut e = engine(1, 9, GossipConfig::default());
        let sid = run_initiation(&mut e, 1_000);
        // responder 3 intercepted the registration toward tracker 9
        let resp = GossipExchange {
            source: ident(3).pid,
            destination: ident(1).pid,
            source_addr: ident(3).addr,
            session_id: sid,
            metric_value: 2,
            pts: vec![ident(7)],
        };
        let actions = e.on_message(
            &GossipMessage::RegResponse(resp),
            DeliveryMeta { hops: 2, now: 41_000 },
        );
        match sent(&actions)[0] {
            GossipMessage::Ack { destination, .. } => assert_eq!(*destination, ident(3).pid),
            other => panic!("expected ack, got {other:?}"),
        }
        let responder = e.pet().get(ident(3).pid).unwrap();
        assert_eq!(responder.class(), PeerClass::Neighbor);
        assert_eq!(responder.ip_hops, 2);
        assert_eq!(responder.latency_rtt, 40_000);
        let dest = e.pet().get(ident(9).pid).unwrap();
        assert_eq!(dest.class(), PeerClass::Unreachable);
        assert_eq!(dest.ip_hops, -1);
        assert_eq!(e.pet().get(ident(7).pid).unwrap().class(), PeerClass::Unknown);
        assert!(!e.has_open_session());
    }

    #[test]
    fn direct_answer_writes_only_neighbor() {
        let mut e = engine(1, 9, GossipConfig::default());
        let sid = run_initiation(&mut e, 0);
        let resp = GossipExchange {
            source: ident(9).pid, // tracker answered itself
            destination: ident(1).pid,
            source_addr: ident(9).addr,
            session_id: sid,
            metric_value: 1,
            pts: vec![],
        };
        e.on_message(&GossipMessage::RegResponse(resp), DeliveryMeta { hops: 1, now: 20_000 });
        assert_eq!(e.pet().get(ident(9).pid).unwrap().class(), PeerClass::Neighbor);
        assert_eq!(e.pet().len(), 1);
    }

    #[test]
    fn stale_response_is_discarded() {
        let mut e = engine(1, 9, GossipConfig::default());
        let _sid = run_initiation(&mut e, 0);
        let resp = GossipExchange {
            source: ident(3).pid,
            destination: ident(1).pid,
            source_addr: ident(3).addr,
            session_id: 0xBAD,
            metric_value: 2,
            pts: vec![],
        };
        let actions = e.on_message(&GossipMessage::RegResponse(resp), DeliveryMeta { hops: 2, now: 10 });
        assert!(actions.is_empty());
        assert!(e.pet().get(ident(3).pid).is_none());
    }

    #[test]
    fn ack_closes_responder_session_and_refreshes_timestamp() {
        let mut responder = engine(3, 9, GossipConfig::default());
        let reg = GossipExchange {
            source: ident(1).pid,
            destination: ident(9).pid,
            source_addr: ident(1).addr,
            session_id: 42,
            metric_value: -1,
            pts: vec![],
        };
        responder.on_message(&GossipMessage::Registration(reg), DeliveryMeta { hops: 1, now: 5 });
        assert!(responder.has_open_session());
        let ack = GossipMessage::Ack {
            source: ident(1).pid,
            destination: ident(3).pid,
            session_id: 42,
        };
        responder.on_message(&ack, DeliveryMeta { hops: 1, now: 900 });
        assert!(!responder.has_open_session());
        let entry = responder.pet().get(ident(1).pid).unwrap();
        assert_eq!(entry.class(), PeerClass::Unknown); // still unmeasured
        assert_eq!(entry.timestamp, 900);
        // duplicate ack: discarded
        let ack2 = GossipMessage::Ack {
            source: ident(1).pid,
            destination: ident(3).pid,
            session_id: 42,
        };
        responder.on_message(&ack2, DeliveryMeta { hops: 1, now: 1_000 });
        assert_eq!(responder.pet().get(ident(1).pid).unwrap().timestamp, 900);
    }

    #[test]
    fn lost_ack_expires_responder_session_with_same_end_state() {
        let mut responder = engine(3, 9, GossipConfig::default());
        let reg = GossipExchange {
            source: ident(1).pid,
            destination: ident(9).pid,
            source_addr: ident(1).addr,
            session_id: 42,
            metric_value: -1,
            pts: vec![],
        };
        responder.on_message(&GossipMessage::Registration(reg), DeliveryMeta { hops: 1, now: 5 });
        responder.on_timer(GossipTimer::ResponderDeadline { session_id: 42 }, 5_000_005);
        assert!(!responder.has_open_session());
        assert_eq!(
            responder.pet().get(ident(1).pid).unwrap().class(),
            PeerClass::Unknown
        );
    }

    #[test]
    fn timeout_leaves_statuses_unaltered_by_default() {
        let mut e = engine(1, 9, GossipConfig::default());
        let sid = run_initiation(&mut e, 0);
        e.on_timer(GossipTimer::InitiatorDeadline { session_id: sid }, 5_000_000);
        assert!(!e.has_open_session());
        assert_eq!(e.pet().get(ident(9).pid).unwrap().class(), PeerClass::Unknown);
    }

    #[test]
    fn timeout_flag_marks_destination_out_of_scope() {
        let cfg = GossipConfig {
            timeout_marks_out_of_scope: true,
            ..GossipConfig::default()
        };
        let mut e = engine(1, 9, cfg);
        let sid = run_initiation(&mut e, 0);
        e.on_timer(GossipTimer::InitiatorDeadline { session_id: sid }, 5_000_000);
        assert_eq!(
            e.pet().get(ident(9).pid).unwrap().class(),
            PeerClass::Unreachable
        );
    }

    #[test]
    fn pending_session_aborted_by_next_cycle() {
        let mut e = engine(1, 9, GossipConfig::default());
        let sid1 = run_initiation(&mut e, 0);
        // no answer arrives; next cycle aborts and starts fresh
        let sid2 = run_initiation(&mut e, 5_000_000);
        assert_ne!(sid1, sid2);
        assert_eq!(e.pet().get(ident(9).pid).unwrap().class(), PeerClass::Unknown);
        assert_eq!(e.cycles(), 2);
    }

    #[test]
    fn expiry_is_linear_in_table_size() {
        let mut pet = PeerTable::new(ident(0).pid, None);
        pet.set_neighbor(ident(1), 1, 10, 0);
        // lifetime with one entry: factor 2 × 1 × period
        let period = 5_000_000u64;
        let lifetime1 = (2.0 * 1.0 * period as f64) as u64;
        assert!(pet.expire(lifetime1, lifetime1).is_empty());
        assert_eq!(pet.expire(lifetime1 + 1, lifetime1), vec![ident(1).pid]);

        // with two entries the same age survives a doubled horizon
        pet.set_neighbor(ident(1), 1, 10, 0);
        pet.set_neighbor(ident(2), 1, 10, 0);
        let lifetime2 = (2.0 * 2.0 * period as f64) as u64;
        assert!(pet.expire(lifetime1 + 1, lifetime2).is_empty());
        assert_eq!(pet.expire(lifetime2 + 1, lifetime2).len(), 2);
    }

    #[test]
    fn unreachable_lru_capacity() {
        let mut pet = PeerTable::new(ident(0).pid, Some(2));
        pet.set_unreachable(ident(1), 10);
        pet.set_unreachable(ident(2), 20);
        pet.set_unreachable(ident(3), 30);
        assert!(pet.get(ident(1).pid).is_none(), "oldest unreachable evicted");
        assert!(pet.get(ident(2).pid).is_some());
        assert!(pet.get(ident(3).pid).is_some());
        // neighbors are never LRU-evicted
        pet.set_neighbor(ident(4), 1, 10, 5);
        pet.set_unreachable(ident(5), 40);
        assert!(pet.get(ident(4).pid).is_some());
        assert!(pet.get(ident(2).pid).is_none());
    }

    #[test]
    fn empty_pet_cycle_is_noop() {
        let cfg = GossipConfig {
            entry_lifetime_factor: 0.0, // everything expires instantly
            ..GossipConfig::default()
        };
        let mut e = engine(1, 9, cfg);
        let actions = e.on_cycle(1);
        assert!(actions.is_empty());
        assert_eq!(e.cycles(), 1);
    }
}
