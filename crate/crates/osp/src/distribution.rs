//! Two-layer signaling distribution.
//!
//! The ST layer delivers a session's signaling on-path (hop-by-hop
//! re-origination toward the final destination, each query intercepted by
//! the next OSP node) and off-path (every PeT neighbor within the remaining
//! radius gets a new query with the radius reduced by its distance). The SA
//! layer owns the response stack: a node that finishes its subtree pushes
//! its own status element with depth 0 and sends the stack upstream, where
//! every element's depth grows by one per forwarding step.
//!
//! Duplicate deliveries are suppressed with ST error messages: a second
//! query for a known session is rejected unless it carries a strictly
//! larger radius, in which case the old session is aborted and replaced.

use std::collections::BTreeMap;

use crate::codec::{
    Addr, PeerId, PeerIdentity, SaMessage, SessionId, SfStatusElement, StMessage,
};
use crate::discovery::PeerTable;
use crate::simnet::Micros;
use crate::topology::NodeId;

pub const STATUS_ABSENT: u8 = 0x00;
pub const STATUS_PRESENT: u8 = 0x01;

/// Error codes carried in ST error messages.
pub const ERR_DUPLICATE_SESSION: u8 = 0x01;
pub const ERR_ONPATH_DUPLICATE: u8 = 0x02;

/// SA response codes.
pub const SA_CODE_COMPLETE: u8 = 0x00;
pub const SA_CODE_PARTIAL: u8 = 0x01;

#[derive(Clone, Copy, Debug)]
pub struct DistributionConfig {
    pub wait_resp_timeout: Micros,
    pub st_session_timeout: Micros,
    /// When set, Data and Data-Response travel as if over a reliable
    /// per-peering transport and are exempt from the loss model.
    pub reliable_data_mode: bool,
}

impl Default for DistributionConfig {
    fn default() -> Self {
        DistributionConfig {
            wait_resp_timeout: 500_000,
            st_session_timeout: 2_000_000,
            reliable_data_mode: false,
        }
    }
}

/// A distribution session is identified by the served SA protocol and the
/// session identifier chosen by the initiator.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct SessionKey {
    pub sa_id: u16,
    pub session_id: SessionId,
}

impl std::fmt::Display for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{:016x}", self.sa_id, self.session_id)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StRole {
    Initiator,
    OnPath,
    OffPath,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StState {
    Idle,
    Active,
    OnPathForwarder,
    OffPathForwarder,
    OnPathActive,
    OffPathActive,
}

impl StState {
    pub fn name(self) -> &'static str {
        match self {
            StState::Idle => "IDLE",
            StState::Active => "ACTIVE",
            StState::OnPathForwarder => "ON_PATH_FWD",
            StState::OffPathForwarder => "OFF_PATH_FWD",
            StState::OnPathActive => "ON_PATH_ACTIVE",
            StState::OffPathActive => "OFF_PATH_ACTIVE",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SaState {
    Idle,
    WaitNotification,
    WaitResponses,
}

impl SaState {
    pub fn name(self) -> &'static str {
        match self {
            SaState::Idle => "IDLE",
            SaState::WaitNotification => "WAIT_NOTIFICATION",
            SaState::WaitResponses => "WAIT_RESPONSES",
        }
    }
}

/// Mock local NFV instance: which service types this node hosts.
#[derive(Clone, Debug, Default)]
pub struct SfRegistry {
    services: BTreeMap<u16, u8>,
}

impl SfRegistry {
    pub fn with_services<I: IntoIterator<Item = u16>>(services: I) -> Self {
        SfRegistry {
            services: services.into_iter().map(|s| (s, STATUS_PRESENT)).collect(),
        }
    }

    /// Lookup is total: a missing service reports the absent status.
    pub fn lookup(&self, service_type: u16) -> u8 {
        self.services
            .get(&service_type)
            .copied()
            .unwrap_or(STATUS_ABSENT)
    }

    /// Applies an SA action and returns the status to report.
    pub fn apply(&mut self, msg: &SaMessage) -> u8 {
        match msg {
            SaMessage::Probe { service_type, .. } => self.lookup(*service_type),
            SaMessage::Setup { service_type, .. } => {
                self.services.insert(*service_type, STATUS_PRESENT);
                STATUS_PRESENT
            }
            SaMessage::Remove { service_type, .. } => {
                if self.services.remove(service_type).is_some() {
                    STATUS_PRESENT
                } else {
                    STATUS_ABSENT
                }
            }
            SaMessage::Response { .. } => STATUS_ABSENT,
        }
    }
}

#[derive(Clone, Debug)]
enum SlotTarget {
    /// The re-originated (or initial) on-path query; the responder is
    /// whichever OSP node intercepts it.
    OnPath,
    OffPath {
        peer: PeerIdentity,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum SlotOutcome {
    Pending,
    /// Positive response received; Data sent; waiting for the data response.
    Accepted(PeerId),
    Responded,
    Errored,
}

#[derive(Clone, Debug)]
struct Slot {
    target: SlotTarget,
    outcome: SlotOutcome,
}

impl Slot {
    fn resolved(&self) -> bool {
        matches!(self.outcome, SlotOutcome::Responded | SlotOutcome::Errored)
    }
}

#[derive(Clone, Debug)]
struct StSession {
    role: StRole,
    state: StState,
    epoch: u64,
    upstream: Option<PeerIdentity>,
    /// Final signaling destination, used for on-path re-origination.
    final_dest: Option<(PeerId, Addr)>,
    radius: u32,
    slots: Vec<Slot>,
    resp_counter: u32,
    error_counter: u32,
    payload: Vec<u8>,
}

/// Completed-session residue: the soft state that keeps rejecting duplicate
/// peering requests until the session timer expires, as the duplicate rule
/// applies "before the time out" rather than until completion.
#[derive(Clone, Copy, Debug)]
struct Tombstone {
    radius: u32,
    epoch: u64,
    role: StRole,
}

#[derive(Clone, Debug)]
struct SaSession {
    state: SaState,
    epoch: u64,
    stack: Vec<SfStatusElement>,
    request: SaMessage,
    is_initiator: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DistTimer {
    WaitResp { key: SessionKey, epoch: u64 },
    StSession { key: SessionKey, epoch: u64 },
}

#[derive(Clone, Debug)]
pub enum DistAction {
    Send {
        msg: StMessage,
        to: Addr,
        interceptable: bool,
        exempt_loss: bool,
    },
    SetTimer {
        timer: DistTimer,
        at: Micros,
    },
    /// SA accepted signaling data; fired once per session instance.
    SaData {
        key: SessionKey,
    },
    /// Initiator-side result for the querying application. `stack` is the
    /// raw reverse-path stack, `result` the same deduplicated by node.
    AppDeliver {
        key: SessionKey,
        stack: Vec<SfStatusElement>,
        result: Vec<SfStatusElement>,
        complete: bool,
    },
    /// State-machine edge, recorded for traces and FSM checks.
    Transition {
        key: SessionKey,
        layer: &'static str,
        from: &'static str,
        to: &'static str,
    },
    /// An existing session was aborted and replaced in place (larger-radius
    /// off-path query, or an on-path query over an off-path session).
    SessionReplaced {
        key: SessionKey,
    },
    /// A session instance left IDLE-bound state; counters at that moment.
    SessionClosed {
        key: SessionKey,
        role: StRole,
        n: u32,
        resp_counter: u32,
        error_counter: u32,
        timed_out: bool,
    },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error("session {0} already active")]
    SessionExists(SessionKey),
}

/// Per-node ST + SA machinery for signaling distribution. Sessions are
/// independent keyed records; one engine instance serves one node.
#[derive(Clone, Debug)]
pub struct DistributionEngine {
    identity: PeerIdentity,
    node: NodeId,
    cfg: DistributionConfig,
    registry: SfRegistry,
    st: BTreeMap<SessionKey, StSession>,
    sa: BTreeMap<SessionKey, SaSession>,
    closed: BTreeMap<SessionKey, Tombstone>,
    next_epoch: u64,
}

impl DistributionEngine {
    pub fn new(
        node: NodeId,
        identity: PeerIdentity,
        cfg: DistributionConfig,
        registry: SfRegistry,
    ) -> Self {
        DistributionEngine {
            identity,
            node,
            cfg,
            registry,
            st: BTreeMap::new(),
            sa: BTreeMap::new(),
            closed: BTreeMap::new(),
            next_epoch: 0,
        }
    }

    pub fn registry(&self) -> &SfRegistry {
        &self.registry
    }

    /// Swaps the configuration, used when forking a converged world into a
    /// differently configured experiment (e.g. reliable data mode).
    pub fn set_config(&mut self, cfg: DistributionConfig) {
        self.cfg = cfg;
    }

    pub fn idle(&self) -> bool {
        self.st.is_empty() && self.sa.is_empty()
    }

    pub fn open_sessions(&self) -> usize {
        self.st.len()
    }

    fn epoch(&mut self) -> u64 {
        self.next_epoch += 1;
        self.next_epoch
    }

    fn st_transition(
        out: &mut Vec<DistAction>,
        key: SessionKey,
        session: &mut StSession,
        to: StState,
    ) {
        if session.state != to {
            out.push(DistAction::Transition {
                key,
                layer: "st",
                from: session.state.name(),
                to: to.name(),
            });
            session.state = to;
        }
    }

    fn sa_transition(
        out: &mut Vec<DistAction>,
        key: SessionKey,
        session: &mut SaSession,
        to: SaState,
    ) {
        if session.state != to {
            out.push(DistAction::Transition {
                key,
                layer: "sa",
                from: session.state.name(),
                to: to.name(),
            });
            session.state = to;
        }
    }

    /// Application entry point: start a signaling session toward
    /// `destination` with off-path radius `radius`.
    pub fn submit(
        &mut self,
        key: SessionKey,
        request: SaMessage,
        destination: NodeId,
        radius: u32,
        pet: &PeerTable,
        now: Micros,
    ) -> Result<Vec<DistAction>, SubmitError> {
        if self.st.contains_key(&key) {
            return Err(SubmitError::SessionExists(key));
        }
        let mut out = Vec::new();
        let epoch = self.epoch();
        let payload = request.encode().expect("sa request encodes");
        let mut st = StSession {
            role: StRole::Initiator,
            state: StState::Idle,
            epoch,
            upstream: None,
            final_dest: Some((PeerId::ZERO, Addr::for_node(destination))),
            radius,
            slots: Vec::new(),
            resp_counter: 0,
            error_counter: 0,
            payload,
        };
        let mut sa = SaSession {
            state: SaState::Idle,
            epoch,
            stack: Vec::new(),
            request,
            is_initiator: true,
        };
        Self::sa_transition(&mut out, key, &mut sa, SaState::WaitNotification);
        Self::st_transition(&mut out, key, &mut st, StState::Active);
        out.push(DistAction::SaData { key });
        self.issue_queries(key, &mut st, pet, &mut out);
        Self::sa_transition(&mut out, key, &mut sa, SaState::WaitResponses);
        out.push(DistAction::SetTimer {
            timer: DistTimer::StSession { key, epoch },
            at: now + self.cfg.st_session_timeout,
        });
        if st.slots.is_empty() {
            // degenerate single-node domain: answer the probe locally
            self.sa.insert(key, sa);
            self.st.insert(key, st);
            self.complete(key, false, &mut out);
        } else {
            out.push(DistAction::SetTimer {
                timer: DistTimer::WaitResp { key, epoch },
                at: now + self.cfg.wait_resp_timeout,
            });
            self.sa.insert(key, sa);
            self.st.insert(key, st);
        }
        Ok(out)
    }

    /// Downstream fan-out once SA data is available: one on-path query
    /// re-originated toward the final destination when this node is on-path
    /// and not the destination itself, plus one off-path query per PeT
    /// neighbor within the remaining radius (upstream excluded), with the
    /// radius reduced by the neighbor's distance.
    fn issue_queries(
        &self,
        key: SessionKey,
        st: &mut StSession,
        pet: &PeerTable,
        out: &mut Vec<DistAction>,
    ) {
        debug_assert!(st.slots.is_empty());
        if st.role != StRole::OffPath {
            if let Some((dest_pid, dest_addr)) = st.final_dest {
                if dest_addr != self.identity.addr {
                    st.slots.push(Slot {
                        target: SlotTarget::OnPath,
                        outcome: SlotOutcome::Pending,
                    });
                    out.push(DistAction::Send {
                        msg: StMessage::Query {
                            source: self.identity.pid,
                            destination: dest_pid,
                            source_addr: self.identity.addr,
                            destination_addr: dest_addr,
                            session_id: key.session_id,
                            on_path: true,
                            metric: Default::default(),
                            radius: st.radius,
                            sa_id: key.sa_id,
                        },
                        to: dest_addr,
                        interceptable: true,
                        exempt_loss: false,
                    });
                }
            }
        }
        let upstream = st.upstream.map(|u| u.pid);
        for entry in pet.neighbors() {
            let d = entry.ip_hops as u32;
            if d > st.radius || Some(entry.peer.pid) == upstream {
                continue;
            }
            st.slots.push(Slot {
                target: SlotTarget::OffPath { peer: entry.peer },
                outcome: SlotOutcome::Pending,
            });
            out.push(DistAction::Send {
                msg: StMessage::Query {
                    source: self.identity.pid,
                    destination: entry.peer.pid,
                    source_addr: self.identity.addr,
                    destination_addr: entry.peer.addr,
                    session_id: key.session_id,
                    on_path: false,
                    metric: Default::default(),
                    radius: st.radius - d,
                    sa_id: key.sa_id,
                },
                to: entry.peer.addr,
                interceptable: false,
                exempt_loss: false,
            });
        }
    }

    pub fn on_message(
        &mut self,
        msg: &StMessage,
        pet: &PeerTable,
        now: Micros,
    ) -> Vec<DistAction> {
        match msg {
            StMessage::Query { on_path: true, .. } => self.on_onpath_query(msg, now),
            StMessage::Query { on_path: false, .. } => self.on_offpath_query(msg, now),
            StMessage::Response { .. } => self.on_response(msg),
            StMessage::Error { .. } => self.on_error(msg),
            StMessage::Data { .. } => self.on_data(msg, pet, now),
            StMessage::DataResponse { .. } => self.on_data_response(msg),
        }
    }

    /// Every OSP node must accept an on-path peering request. An existing
    /// off-path session for the same key is aborted and replaced, since the
    /// on-path radius is always the application-selected maximum.
    fn on_onpath_query(&mut self, msg: &StMessage, now: Micros) -> Vec<DistAction> {
        let &StMessage::Query {
            source,
            destination,
            source_addr,
            destination_addr,
            session_id,
            radius,
            sa_id,
            ..
        } = msg
        else {
            unreachable!()
        };
        let key = SessionKey { sa_id, session_id };
        let mut out = Vec::new();
        if let Some(existing) = self.st.get(&key) {
            match existing.role {
                StRole::Initiator | StRole::OnPath => {
                    out.push(DistAction::Send {
                        msg: StMessage::Error {
                            source: self.identity.pid,
                            destination: source,
                            session_id,
                            source_addr: self.identity.addr,
                            destination_addr: source_addr,
                            code: ERR_ONPATH_DUPLICATE,
                        },
                        to: source_addr,
                        interceptable: false,
                        exempt_loss: false,
                    });
                    return out;
                }
                StRole::OffPath => {
                    out.push(DistAction::SessionReplaced { key });
                    self.abort_session(key, &mut out);
                }
            }
        } else if let Some(t) = self.closed.get(&key).copied() {
            match t.role {
                StRole::Initiator | StRole::OnPath => {
                    out.push(DistAction::Send {
                        msg: StMessage::Error {
                            source: self.identity.pid,
                            destination: source,
                            session_id,
                            source_addr: self.identity.addr,
                            destination_addr: source_addr,
                            code: ERR_ONPATH_DUPLICATE,
                        },
                        to: source_addr,
                        interceptable: false,
                        exempt_loss: false,
                    });
                    return out;
                }
                StRole::OffPath => {
                    self.closed.remove(&key);
                    out.push(DistAction::SessionReplaced { key });
                }
            }
        }
        let epoch = self.epoch();
        let mut st = StSession {
            role: StRole::OnPath,
            state: StState::Idle,
            epoch,
            upstream: Some(PeerIdentity {
                pid: source,
                addr: source_addr,
            }),
            final_dest: Some((destination, destination_addr)),
            radius,
            slots: Vec::new(),
            resp_counter: 0,
            error_counter: 0,
            payload: Vec::new(),
        };
        Self::st_transition(&mut out, key, &mut st, StState::OnPathForwarder);
        out.push(DistAction::Send {
            msg: StMessage::Response {
                source: self.identity.pid,
                destination: source,
                source_addr: self.identity.addr,
                destination_addr: source_addr,
                session_id,
                sa_id,
            },
            to: source_addr,
            interceptable: false,
            exempt_loss: false,
        });
        out.push(DistAction::SetTimer {
            timer: DistTimer::StSession { key, epoch },
            at: now + self.cfg.st_session_timeout,
        });
        self.st.insert(key, st);
        out
    }

    /// Off-path peering: accept when the session is new; reject with an
    /// error when a session with radius at least as large exists; abort and
    /// re-establish when the incoming radius is strictly larger.
    fn on_offpath_query(&mut self, msg: &StMessage, now: Micros) -> Vec<DistAction> {
        let &StMessage::Query {
            source,
            source_addr,
            session_id,
            radius,
            sa_id,
            ..
        } = msg
        else {
            unreachable!()
        };
        let key = SessionKey { sa_id, session_id };
        let mut out = Vec::new();
        if let Some(existing) = self.st.get(&key) {
            if radius <= existing.radius {
                out.push(DistAction::Send {
                    msg: StMessage::Error {
                        source: self.identity.pid,
                        destination: source,
                        session_id,
                        source_addr: self.identity.addr,
                        destination_addr: source_addr,
                        code: ERR_DUPLICATE_SESSION,
                    },
                    to: source_addr,
                    interceptable: false,
                    exempt_loss: false,
                });
                return out;
            }
            out.push(DistAction::SessionReplaced { key });
            self.abort_session(key, &mut out);
        } else if let Some(t) = self.closed.get(&key).copied() {
            if radius <= t.radius {
                out.push(DistAction::Send {
                    msg: StMessage::Error {
                        source: self.identity.pid,
                        destination: source,
                        session_id,
                        source_addr: self.identity.addr,
                        destination_addr: source_addr,
                        code: ERR_DUPLICATE_SESSION,
                    },
                    to: source_addr,
                    interceptable: false,
                    exempt_loss: false,
                });
                return out;
            }
            self.closed.remove(&key);
            out.push(DistAction::SessionReplaced { key });
        }
        let epoch = self.epoch();
        let mut st = StSession {
            role: StRole::OffPath,
            state: StState::Idle,
            epoch,
            upstream: Some(PeerIdentity {
                pid: source,
                addr: source_addr,
            }),
            final_dest: None,
            radius,
            slots: Vec::new(),
            resp_counter: 0,
            error_counter: 0,
            payload: Vec::new(),
        };
        Self::st_transition(&mut out, key, &mut st, StState::OffPathForwarder);
        out.push(DistAction::Send {
            msg: StMessage::Response {
                source: self.identity.pid,
                destination: source,
                source_addr: self.identity.addr,
                destination_addr: source_addr,
                session_id,
                sa_id,
            },
            to: source_addr,
            interceptable: false,
            exempt_loss: false,
        });
        out.push(DistAction::SetTimer {
            timer: DistTimer::StSession { key, epoch },
            at: now + self.cfg.st_session_timeout,
        });
        self.st.insert(key, st);
        out
    }

    /// Positive peering response: deliver the SA data to that peer.
    fn on_response(&mut self, msg: &StMessage) -> Vec<DistAction> {
        let &StMessage::Response {
            source,
            source_addr,
            session_id,
            sa_id,
            ..
        } = msg
        else {
            unreachable!()
        };
        let key = SessionKey { sa_id, session_id };
        let mut out = Vec::new();
        let Some(st) = self.st.get_mut(&key) else {
            return out;
        };
        let responder = PeerIdentity {
            pid: source,
            addr: source_addr,
        };
        // Attribute to the on-path slot first: the on-path query is always
        // issued before the off-path one toward the same node.
        let idx = st
            .slots
            .iter()
            .position(|s| {
                matches!(s.target, SlotTarget::OnPath) && s.outcome == SlotOutcome::Pending
            })
            .or_else(|| {
                st.slots.iter().position(|s| {
                    matches!(&s.target, SlotTarget::OffPath { peer } if peer.pid == source)
                        && s.outcome == SlotOutcome::Pending
                })
            });
        let Some(idx) = idx else {
            return out; // stale response
        };
        st.slots[idx].outcome = SlotOutcome::Accepted(source);
        out.push(DistAction::Send {
            msg: StMessage::Data {
                source: self.identity.pid,
                destination: source,
                source_addr: self.identity.addr,
                destination_addr: source_addr,
                session_id,
                sa_id,
                payload: st.payload.clone(),
            },
            to: responder.addr,
            interceptable: false,
            exempt_loss: self.cfg.reliable_data_mode,
        });
        out
    }

    /// SA data arrived from upstream: hand it to the SA layer and fan out.
    fn on_data(&mut self, msg: &StMessage, pet: &PeerTable, now: Micros) -> Vec<DistAction> {
        let StMessage::Data {
            source,
            session_id,
            sa_id,
            payload,
            ..
        } = msg
        else {
            unreachable!()
        };
        let key = SessionKey {
            sa_id: *sa_id,
            session_id: *session_id,
        };
        let mut out = Vec::new();
        let Some(st) = self.st.get_mut(&key) else {
            return out; // data without session
        };
        if st.upstream.map(|u| u.pid) != Some(*source) || !st.slots.is_empty() {
            return out; // not our upstream, or data already processed
        }
        let Ok(request) = SaMessage::decode(payload) else {
            return out; // malformed SA payload
        };
        let epoch = st.epoch;
        st.payload = payload.clone();
        let mut sa = SaSession {
            state: SaState::Idle,
            epoch,
            stack: Vec::new(),
            request,
            is_initiator: false,
        };
        Self::sa_transition(&mut out, key, &mut sa, SaState::WaitNotification);
        out.push(DistAction::SaData { key });
        let mut st = self.st.remove(&key).unwrap();
        self.issue_queries(key, &mut st, pet, &mut out);
        let n = st.slots.len();
        let active = match st.role {
            StRole::OnPath => StState::OnPathActive,
            _ => StState::OffPathActive,
        };
        Self::st_transition(&mut out, key, &mut st, active);
        Self::sa_transition(&mut out, key, &mut sa, SaState::WaitResponses);
        self.st.insert(key, st);
        self.sa.insert(key, sa);
        if n == 0 {
            // leaf of the distribution: answer immediately
            self.complete(key, false, &mut out);
        } else {
            out.push(DistAction::SetTimer {
                timer: DistTimer::WaitResp { key, epoch },
                at: now + self.cfg.wait_resp_timeout,
            });
        }
        out
    }

    /// Reverse-path aggregation: push the received elements with their depth
    /// incremented, and close the session once every queried peer answered
    /// or erred.
    fn on_data_response(&mut self, msg: &StMessage) -> Vec<DistAction> {
        let StMessage::DataResponse {
            source,
            session_id,
            sa_id,
            payload,
            ..
        } = msg
        else {
            unreachable!()
        };
        let key = SessionKey {
            sa_id: *sa_id,
            session_id: *session_id,
        };
        let mut out = Vec::new();
        let Some(st) = self.st.get_mut(&key) else {
            return out;
        };
        let Some(slot) = st.slots.iter_mut().find(|s| {
            s.outcome == SlotOutcome::Accepted(*source)
        }) else {
            return out; // duplicate or foreign data response
        };
        let Ok(SaMessage::Response { elements, .. }) = SaMessage::decode(payload) else {
            return out;
        };
        slot.outcome = SlotOutcome::Responded;
        st.resp_counter += 1;
        if let Some(sa) = self.sa.get_mut(&key) {
            if sa.state == SaState::WaitResponses {
                for e in elements {
                    sa.stack.push(SfStatusElement {
                        node: e.node,
                        status: e.status,
                        depth: e.depth + 1,
                    });
                }
            }
        }
        self.try_complete(key, &mut out);
        out
    }

    /// ST error: counted toward completion exactly like a response. Error
    /// messages carry no SA identifier on the wire, so the session is found
    /// by its session id alone.
    fn on_error(&mut self, msg: &StMessage) -> Vec<DistAction> {
        let &StMessage::Error {
            source, session_id, ..
        } = msg
        else {
            unreachable!()
        };
        let mut out = Vec::new();
        let Some(key) = self
            .st
            .keys()
            .copied()
            .find(|k| k.session_id == session_id)
        else {
            return out;
        };
        let st = self.st.get_mut(&key).unwrap();
        // The error answers one of our queries to that node: prefer the
        // off-path slot (duplicate suppression is its normal cause).
        let idx = st
            .slots
            .iter()
            .position(|s| {
                matches!(&s.target, SlotTarget::OffPath { peer } if peer.pid == source)
                    && s.outcome == SlotOutcome::Pending
            })
            .or_else(|| {
                st.slots.iter().position(|s| {
                    matches!(s.target, SlotTarget::OnPath) && s.outcome == SlotOutcome::Pending
                })
            });
        let Some(idx) = idx else {
            return out;
        };
        st.slots[idx].outcome = SlotOutcome::Errored;
        st.error_counter += 1;
        self.try_complete(key, &mut out);
        out
    }

    fn try_complete(&mut self, key: SessionKey, out: &mut Vec<DistAction>) {
        let Some(st) = self.st.get(&key) else { return };
        if st.slots.iter().all(Slot::resolved) {
            self.complete(key, false, out);
        }
    }

    /// Finishes a session: the SA queries the local NFV instance, pushes its
    /// own element with depth 0, and the stack goes upstream (or to the
    /// querying application at the initiator). All state returns to IDLE.
    fn complete(&mut self, key: SessionKey, timed_out: bool, out: &mut Vec<DistAction>) {
        let Some(mut st) = self.st.remove(&key) else {
            return;
        };
        let Some(mut sa) = self.sa.remove(&key) else {
            self.st.insert(key, st);
            return;
        };
        let own_status = self.registry.apply(&sa.request);
        sa.stack.push(SfStatusElement {
            node: self.node,
            status: own_status,
            depth: 0,
        });
        // the forwarder leaves Active on the last notification and reaches
        // IDLE once the data response has gone upstream
        match st.state {
            StState::OnPathActive => Self::st_transition(out, key, &mut st, StState::OnPathForwarder),
            StState::OffPathActive => Self::st_transition(out, key, &mut st, StState::OffPathForwarder),
            _ => {}
        }
        let code = if timed_out {
            SA_CODE_PARTIAL
        } else {
            SA_CODE_COMPLETE
        };
        if sa.is_initiator {
            let mut seen = std::collections::BTreeSet::new();
            let result: Vec<SfStatusElement> = sa
                .stack
                .iter()
                .copied()
                .filter(|e| seen.insert(e.node))
                .collect();
            out.push(DistAction::AppDeliver {
                key,
                stack: sa.stack.clone(),
                result,
                complete: !timed_out,
            });
        } else {
            let upstream = st.upstream.expect("forwarder has an upstream");
            let payload = SaMessage::Response {
                code,
                elements: sa.stack.clone(),
            }
            .encode()
            .expect("sa response encodes");
            out.push(DistAction::Send {
                msg: StMessage::DataResponse {
                    source: self.identity.pid,
                    destination: upstream.pid,
                    source_addr: self.identity.addr,
                    destination_addr: upstream.addr,
                    session_id: key.session_id,
                    sa_id: key.sa_id,
                    payload,
                },
                to: upstream.addr,
                interceptable: false,
                exempt_loss: self.cfg.reliable_data_mode,
            });
        }
        Self::sa_transition(out, key, &mut sa, SaState::Idle);
        Self::st_transition(out, key, &mut st, StState::Idle);
        self.closed.insert(
            key,
            Tombstone {
                radius: st.radius,
                epoch: st.epoch,
                role: st.role,
            },
        );
        out.push(DistAction::SessionClosed {
            key,
            role: st.role,
            n: st.slots.len() as u32,
            resp_counter: st.resp_counter,
            error_counter: st.error_counter,
            timed_out,
        });
    }

    /// Abort without sending anything upstream: the SA is notified and all
    /// state for the instance is deleted.
    fn abort_session(&mut self, key: SessionKey, out: &mut Vec<DistAction>) {
        if let Some(mut st) = self.st.remove(&key) {
            out.push(DistAction::SessionClosed {
                key,
                role: st.role,
                n: st.slots.len() as u32,
                resp_counter: st.resp_counter,
                error_counter: st.error_counter,
                timed_out: false,
            });
            Self::st_transition(out, key, &mut st, StState::Idle);
        }
        if let Some(mut sa) = self.sa.remove(&key) {
            Self::sa_transition(out, key, &mut sa, SaState::Idle);
        }
    }

    pub fn on_timer(&mut self, timer: DistTimer, _pet: &PeerTable, _now: Micros) -> Vec<DistAction> {
        let mut out = Vec::new();
        match timer {
            DistTimer::WaitResp { key, epoch } => {
                let live = self
                    .sa
                    .get(&key)
                    .is_some_and(|sa| sa.epoch == epoch && sa.state == SaState::WaitResponses);
                if live {
                    self.complete(key, true, &mut out);
                }
            }
            DistTimer::StSession { key, epoch } => {
                if self.st.get(&key).is_some_and(|st| st.epoch == epoch) {
                    self.abort_session(key, &mut out);
                }
                if self.closed.get(&key).is_some_and(|t| t.epoch == epoch) {
                    self.closed.remove(&key);
                }
            }
        }
        out
    }
}
