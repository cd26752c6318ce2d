//! Bit-exact wire representation of OSP messages.
//!
//! All integers are big-endian. Every message starts with a 1-byte type;
//! peer identifiers are 8 bytes, addresses 4 bytes, session identifiers
//! 8 bytes. Lists (PTS, status stacks) are length-prefixed. The full byte
//! layout is documented in `docs/wire_format.md` at the repository root.
//!
//! Analytic overhead formulas use the nominal gossip message sizes from
//! [`NominalSizes`], not the encoded sizes, so that Eq.-style bandwidth
//! numbers stay comparable across encodings; the ledger reports actual
//! encoded sizes side by side.

use thiserror::Error;

use crate::topology::NodeId;

/// Unique peer identifier carried in all OSP messages.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerId(pub [u8; 8]);

impl PeerId {
    pub const ZERO: PeerId = PeerId([0; 8]);
}

impl std::fmt::Debug for PeerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Synthetic 4-byte node address (10.0.0.0/8, host part = node index + 1).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Addr(pub u32);

impl Addr {
    const BASE: u32 = 0x0A00_0000;

    pub fn for_node(node: NodeId) -> Addr {
        Addr(Self::BASE + node.0 + 1)
    }

    pub fn node(self) -> Option<NodeId> {
        if self.0 > Self::BASE {
            Some(NodeId(self.0 - Self::BASE - 1))
        } else {
            None
        }
    }
}

impl std::fmt::Debug for Addr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [a, b, c, d] = self.0.to_be_bytes();
        write!(f, "{a}.{b}.{c}.{d}")
    }
}

pub type SessionId = u64;

/// A peer as known to other peers: identifier plus address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct PeerIdentity {
    pub pid: PeerId,
    pub addr: Addr,
}

// Message type bytes. Gossip and ST share one space; SA messages are nested
// inside ST payloads and use their own.
pub const TYPE_REGISTRATION: u8 = 0x01;
pub const TYPE_REG_RESPONSE: u8 = 0x02;
pub const TYPE_ACK: u8 = 0x03;
pub const TYPE_QUERY: u8 = 0x10;
pub const TYPE_RESPONSE: u8 = 0x11;
pub const TYPE_ERROR: u8 = 0x12;
pub const TYPE_DATA: u8 = 0x13;
pub const TYPE_DATA_RESPONSE: u8 = 0x14;
pub const SA_TYPE_SETUP: u8 = 0x01;
pub const SA_TYPE_REMOVE: u8 = 0x02;
pub const SA_TYPE_PROBE: u8 = 0x03;
pub const SA_TYPE_RESPONSE: u8 = 0x04;

const ADDR_TYPE_IPV4: u8 = 0x04;
const METRIC_TYPE_HOP_COUNT: u8 = 0x01;

/// Metric announced in ST queries. Only the IP hop count is defined.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum MetricType {
    #[default]
    HopCount,
}

/// Fields shared by Registration and RegResponse.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GossipExchange {
    pub source: PeerId,
    pub destination: PeerId,
    pub source_addr: Addr,
    pub session_id: SessionId,
    /// Hop count measured by the responder, or -1 when not significant.
    pub metric_value: i32,
    /// Peer-to-share list. Never contains the sender itself.
    pub pts: Vec<PeerIdentity>,
}

/// Three-way gossip set. The Ack variant structurally carries no PTS.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum GossipMessage {
    Registration(GossipExchange),
    RegResponse(GossipExchange),
    Ack {
        source: PeerId,
        destination: PeerId,
        session_id: SessionId,
    },
}

/// Signaling-transport distribution set.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum StMessage {
    Query {
        source: PeerId,
        destination: PeerId,
        source_addr: Addr,
        destination_addr: Addr,
        session_id: SessionId,
        on_path: bool,
        metric: MetricType,
        radius: u32,
        sa_id: u16,
    },
    Response {
        source: PeerId,
        destination: PeerId,
        source_addr: Addr,
        destination_addr: Addr,
        session_id: SessionId,
        sa_id: u16,
    },
    Error {
        source: PeerId,
        destination: PeerId,
        session_id: SessionId,
        source_addr: Addr,
        destination_addr: Addr,
        code: u8,
    },
    Data {
        source: PeerId,
        destination: PeerId,
        source_addr: Addr,
        destination_addr: Addr,
        session_id: SessionId,
        sa_id: u16,
        payload: Vec<u8>,
    },
    DataResponse {
        source: PeerId,
        destination: PeerId,
        source_addr: Addr,
        destination_addr: Addr,
        session_id: SessionId,
        sa_id: u16,
        payload: Vec<u8>,
    },
}

impl StMessage {
    pub fn session_id(&self) -> SessionId {
        match self {
            StMessage::Query { session_id, .. }
            | StMessage::Response { session_id, .. }
            | StMessage::Error { session_id, .. }
            | StMessage::Data { session_id, .. }
            | StMessage::DataResponse { session_id, .. } => *session_id,
        }
    }

    pub fn source(&self) -> PeerId {
        match self {
            StMessage::Query { source, .. }
            | StMessage::Response { source, .. }
            | StMessage::Error { source, .. }
            | StMessage::Data { source, .. }
            | StMessage::DataResponse { source, .. } => *source,
        }
    }
}

/// One probe result: which node answered, its status byte, and how many
/// reverse-path forwarding steps the element has taken (0 at its origin).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SfStatusElement {
    pub node: NodeId,
    pub status: u8,
    pub depth: u32,
}

/// Signaling-application set, carried opaquely in ST Data/Data-Response.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SaMessage {
    Setup { service_type: u16, payload: Vec<u8> },
    Remove { service_type: u16, payload: Vec<u8> },
    Probe { service_type: u16, payload: Vec<u8> },
    Response { code: u8, elements: Vec<SfStatusElement> },
}

/// Any message the simulated network can carry.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum WireMessage {
    Gossip(GossipMessage),
    St(StMessage),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated buffer at offset {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("unknown message type {ty:#04x} at offset {offset}")]
    UnknownType { offset: usize, ty: u8 },
    #[error("unknown address type {ty:#04x} at offset {offset}")]
    UnknownAddrType { offset: usize, ty: u8 },
    #[error("unknown metric type {ty:#04x} at offset {offset}")]
    UnknownMetricType { offset: usize, ty: u8 },
    #[error("invalid flag byte {value:#04x} at offset {offset}")]
    InvalidFlag { offset: usize, value: u8 },
    #[error("{len} trailing bytes after message at offset {offset}")]
    TrailingBytes { offset: usize, len: usize },
    #[error("field {field} value {value} exceeds its wire width")]
    FieldOverflow { field: &'static str, value: u64 },
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn pid(&mut self, p: PeerId) {
        self.buf.extend_from_slice(&p.0);
    }
    fn addr(&mut self, a: Addr) {
        self.u32(a.0);
    }
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn narrow_u8(&mut self, field: &'static str, v: u32) -> Result<(), CodecError> {
        let b = u8::try_from(v).map_err(|_| CodecError::FieldOverflow {
            field,
            value: v as u64,
        })?;
        self.u8(b);
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::Truncated {
                offset: self.pos,
                needed: n - (self.buf.len() - self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32, CodecError> {
        Ok(i32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn pid(&mut self) -> Result<PeerId, CodecError> {
        Ok(PeerId(self.take(8)?.try_into().unwrap()))
    }
    fn addr(&mut self) -> Result<Addr, CodecError> {
        Ok(Addr(self.u32()?))
    }
    fn finish(self) -> Result<(), CodecError> {
        if self.pos != self.buf.len() {
            return Err(CodecError::TrailingBytes {
                offset: self.pos,
                len: self.buf.len() - self.pos,
            });
        }
        Ok(())
    }
}

impl GossipMessage {
    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        let mut w = Writer::new();
        match self {
            GossipMessage::Registration(x) | GossipMessage::RegResponse(x) => {
                w.u8(match self {
                    GossipMessage::Registration(_) => TYPE_REGISTRATION,
                    _ => TYPE_REG_RESPONSE,
                });
                w.pid(x.source);
                w.pid(x.destination);
                w.addr(x.source_addr);
                w.u64(x.session_id);
                w.i32(x.metric_value);
                let n = u8::try_from(x.pts.len()).map_err(|_| CodecError::FieldOverflow {
                    field: "pts length",
                    value: x.pts.len() as u64,
                })?;
                w.u8(n);
                for p in &x.pts {
                    w.pid(p.pid);
                    w.u8(ADDR_TYPE_IPV4);
                    w.addr(p.addr);
                }
            }
            GossipMessage::Ack {
                source,
                destination,
                session_id,
            } => {
                w.u8(TYPE_ACK);
                w.pid(*source);
                w.pid(*destination);
                w.u64(*session_id);
            }
        }
        Ok(w.buf)
    }

    pub fn decode(buf: &[u8]) -> Result<GossipMessage, CodecError> {
        let mut r = Reader::new(buf);
        let msg = Self::decode_inner(&mut r)?;
        r.finish()?;
        Ok(msg)
    }

    fn decode_inner(r: &mut Reader) -> Result<GossipMessage, CodecError> {
        let ty = r.u8()?;
        Self::decode_after_type(ty, r)
    }

    fn decode_after_type(ty: u8, r: &mut Reader) -> Result<GossipMessage, CodecError> {
        match ty {
            TYPE_REGISTRATION | TYPE_REG_RESPONSE => {
                let source = r.pid()?;
                let destination = r.pid()?;
                let source_addr = r.addr()?;
                let session_id = r.u64()?;
                let metric_value = r.i32()?;
                let n = r.u8()? as usize;
                let mut pts = Vec::with_capacity(n);
                for _ in 0..n {
                    let pid = r.pid()?;
                    let at = r.u8()?;
                    if at != ADDR_TYPE_IPV4 {
                        return Err(CodecError::UnknownAddrType {
                            offset: r.pos - 1,
                            ty: at,
                        });
                    }
                    let addr = r.addr()?;
                    pts.push(PeerIdentity { pid, addr });
                }
                let x = GossipExchange {
                    source,
                    destination,
                    source_addr,
                    session_id,
                    metric_value,
                    pts,
                };
                Ok(if ty == TYPE_REGISTRATION {
                    GossipMessage::Registration(x)
                } else {
                    GossipMessage::RegResponse(x)
                })
            }
            TYPE_ACK => Ok(GossipMessage::Ack {
                source: r.pid()?,
                destination: r.pid()?,
                session_id: r.u64()?,
            }),
            ty => Err(CodecError::UnknownType { offset: 0, ty }),
        }
    }
}

impl StMessage {
    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        let mut w = Writer::new();
        match self {
            StMessage::Query {
                source,
                destination,
                source_addr,
                destination_addr,
                session_id,
                on_path,
                metric: MetricType::HopCount,
                radius,
                sa_id,
            } => {
                w.u8(TYPE_QUERY);
                w.pid(*source);
                w.pid(*destination);
                w.addr(*source_addr);
                w.addr(*destination_addr);
                w.u64(*session_id);
                w.u8(*on_path as u8);
                w.u8(METRIC_TYPE_HOP_COUNT);
                w.narrow_u8("radius", *radius)?;
                w.u16(*sa_id);
            }
            StMessage::Response {
                source,
                destination,
                source_addr,
                destination_addr,
                session_id,
                sa_id,
            } => {
                w.u8(TYPE_RESPONSE);
                w.pid(*source);
                w.pid(*destination);
                w.addr(*source_addr);
                w.addr(*destination_addr);
                w.u64(*session_id);
                w.u16(*sa_id);
            }
            StMessage::Error {
                source,
                destination,
                session_id,
                source_addr,
                destination_addr,
                code,
            } => {
                w.u8(TYPE_ERROR);
                w.pid(*source);
                w.pid(*destination);
                w.u64(*session_id);
                w.addr(*source_addr);
                w.addr(*destination_addr);
                w.u8(*code);
            }
            StMessage::Data {
                source,
                destination,
                source_addr,
                destination_addr,
                session_id,
                sa_id,
                payload,
            }
            | StMessage::DataResponse {
                source,
                destination,
                source_addr,
                destination_addr,
                session_id,
                sa_id,
                payload,
            } => {
                w.u8(match self {
                    StMessage::Data { .. } => TYPE_DATA,
                    _ => TYPE_DATA_RESPONSE,
                });
                w.pid(*source);
                w.pid(*destination);
                w.addr(*source_addr);
                w.addr(*destination_addr);
                w.u64(*session_id);
                w.u16(*sa_id);
                let len = u32::try_from(payload.len()).map_err(|_| CodecError::FieldOverflow {
                    field: "payload length",
                    value: payload.len() as u64,
                })?;
                w.u32(len);
                w.bytes(payload);
            }
        }
        Ok(w.buf)
    }

    pub fn decode(buf: &[u8]) -> Result<StMessage, CodecError> {
        let mut r = Reader::new(buf);
        let ty = r.u8()?;
        let msg = Self::decode_after_type(ty, &mut r)?;
        r.finish()?;
        Ok(msg)
    }

    fn decode_after_type(ty: u8, r: &mut Reader) -> Result<StMessage, CodecError> {
        match ty {
            TYPE_QUERY => {
                let source = r.pid()?;
                let destination = r.pid()?;
                let source_addr = r.addr()?;
                let destination_addr = r.addr()?;
                let session_id = r.u64()?;
                let flag_off = r.pos;
                let on_path = match r.u8()? {
                    0 => false,
                    1 => true,
                    value => {
                        return Err(CodecError::InvalidFlag {
                            offset: flag_off,
                            value,
                        })
                    }
                };
                let mt_off = r.pos;
                let mt = r.u8()?;
                if mt != METRIC_TYPE_HOP_COUNT {
                    return Err(CodecError::UnknownMetricType {
                        offset: mt_off,
                        ty: mt,
                    });
                }
                let radius = r.u8()? as u32;
                let sa_id = r.u16()?;
                Ok(StMessage::Query {
                    source,
                    destination,
                    source_addr,
                    destination_addr,
                    session_id,
                    on_path,
                    metric: MetricType::HopCount,
                    radius,
                    sa_id,
                })
            }
            TYPE_RESPONSE => Ok(StMessage::Response {
                source: r.pid()?,
                destination: r.pid()?,
                source_addr: r.addr()?,
                destination_addr: r.addr()?,
                session_id: r.u64()?,
                sa_id: r.u16()?,
            }),
            TYPE_ERROR => Ok(StMessage::Error {
                source: r.pid()?,
                destination: r.pid()?,
                session_id: r.u64()?,
                source_addr: r.addr()?,
                destination_addr: r.addr()?,
                code: r.u8()?,
            }),
            TYPE_DATA | TYPE_DATA_RESPONSE => {
                let source = r.pid()?;
                let destination = r.pid()?;
                let source_addr = r.addr()?;
                let destination_addr = r.addr()?;
                let session_id = r.u64()?;
                let sa_id = r.u16()?;
                let len = r.u32()? as usize;
                let payload = r.take(len)?.to_vec();
                Ok(if ty == TYPE_DATA {
                    StMessage::Data {
                        source,
                        destination,
                        source_addr,
                        destination_addr,
                        session_id,
                        sa_id,
                        payload,
                    }
                } else {
                    StMessage::DataResponse {
                        source,
                        destination,
                        source_addr,
                        destination_addr,
                        session_id,
                        sa_id,
                        payload,
                    }
                })
            }
            ty => Err(CodecError::UnknownType { offset: 0, ty }),
        }
    }
}

impl SaMessage {
    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        let mut w = Writer::new();
        match self {
            SaMessage::Setup { service_type, payload }
            | SaMessage::Remove { service_type, payload }
            | SaMessage::Probe { service_type, payload } => {
                w.u8(match self {
                    SaMessage::Setup { .. } => SA_TYPE_SETUP,
                    SaMessage::Remove { .. } => SA_TYPE_REMOVE,
                    _ => SA_TYPE_PROBE,
                });
                w.u16(*service_type);
                let len = u32::try_from(payload.len()).map_err(|_| CodecError::FieldOverflow {
                    field: "sf payload length",
                    value: payload.len() as u64,
                })?;
                w.u32(len);
                w.bytes(payload);
            }
            SaMessage::Response { code, elements } => {
                w.u8(SA_TYPE_RESPONSE);
                w.u8(*code);
                let n = u16::try_from(elements.len()).map_err(|_| CodecError::FieldOverflow {
                    field: "status element count",
                    value: elements.len() as u64,
                })?;
                w.u16(n);
                for e in elements {
                    w.addr(Addr::for_node(e.node));
                    w.u8(e.status);
                    w.narrow_u8("depth", e.depth)?;
                }
            }
        }
        Ok(w.buf)
    }

    pub fn decode(buf: &[u8]) -> Result<SaMessage, CodecError> {
        let mut r = Reader::new(buf);
        let msg = Self::decode_inner(&mut r)?;
        r.finish()?;
        Ok(msg)
    }

    fn decode_inner(r: &mut Reader) -> Result<SaMessage, CodecError> {
        let ty = r.u8()?;
        match ty {
            SA_TYPE_SETUP | SA_TYPE_REMOVE | SA_TYPE_PROBE => {
                let service_type = r.u16()?;
                let len = r.u32()? as usize;
                let payload = r.take(len)?.to_vec();
                Ok(match ty {
                    SA_TYPE_SETUP => SaMessage::Setup { service_type, payload },
                    SA_TYPE_REMOVE => SaMessage::Remove { service_type, payload },
                    _ => SaMessage::Probe { service_type, payload },
                })
            }
            SA_TYPE_RESPONSE => {
                let code = r.u8()?;
                let n = r.u16()? as usize;
                let mut elements = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    let addr_off = r.pos;
                    let addr = r.addr()?;
                    let node = addr.node().ok_or(CodecError::UnknownAddrType {
                        offset: addr_off,
                        ty: 0,
                    })?;
                    let status = r.u8()?;
                    let depth = r.u8()? as u32;
                    elements.push(SfStatusElement { node, status, depth });
                }
                Ok(SaMessage::Response { code, elements })
            }
            ty => Err(CodecError::UnknownType { offset: 0, ty }),
        }
    }

    pub fn service_type(&self) -> Option<u16> {
        match self {
            SaMessage::Setup { service_type, .. }
            | SaMessage::Remove { service_type, .. }
            | SaMessage::Probe { service_type, .. } => Some(*service_type),
            SaMessage::Response { .. } => None,
        }
    }
}

impl WireMessage {
    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        match self {
            WireMessage::Gossip(g) => g.encode(),
            WireMessage::St(s) => s.encode(),
        }
    }

    /// Decodes any top-level message, dispatching on the type byte.
    pub fn decode(buf: &[u8]) -> Result<WireMessage, CodecError> {
        let mut r = Reader::new(buf);
        let ty = r.u8()?;
        let msg = match ty {
            TYPE_REGISTRATION | TYPE_REG_RESPONSE | TYPE_ACK => {
                WireMessage::Gossip(GossipMessage::decode_after_type(ty, &mut r)?)
            }
            TYPE_QUERY | TYPE_RESPONSE | TYPE_ERROR | TYPE_DATA | TYPE_DATA_RESPONSE => {
                WireMessage::St(StMessage::decode_after_type(ty, &mut r)?)
            }
            ty => return Err(CodecError::UnknownType { offset: 0, ty }),
        };
        r.finish()?;
        Ok(msg)
    }

    /// Short label for traces and the byte ledger.
    pub fn kind_label(&self) -> &'static str {
        match self {
            WireMessage::Gossip(GossipMessage::Registration(_)) => "registration",
            WireMessage::Gossip(GossipMessage::RegResponse(_)) => "reg-response",
            WireMessage::Gossip(GossipMessage::Ack { .. }) => "ack",
            WireMessage::St(StMessage::Query { on_path: true, .. }) => "query-on-path",
            WireMessage::St(StMessage::Query { on_path: false, .. }) => "query-off-path",
            WireMessage::St(StMessage::Response { .. }) => "response",
            WireMessage::St(StMessage::Error { .. }) => "error",
            WireMessage::St(StMessage::Data { .. }) => "data",
            WireMessage::St(StMessage::DataResponse { .. }) => "data-response",
        }
    }

    pub fn session_id(&self) -> SessionId {
        match self {
            WireMessage::Gossip(GossipMessage::Registration(x))
            | WireMessage::Gossip(GossipMessage::RegResponse(x)) => x.session_id,
            WireMessage::Gossip(GossipMessage::Ack { session_id, .. }) => *session_id,
            WireMessage::St(m) => m.session_id(),
        }
    }
}

/// Nominal gossip message sizes used by the analytic overhead formula
/// (registration G, response R, ack A), independent of the codec's encoding.
#[derive(Clone, Copy, Debug, serde::Deserialize, serde::Serialize)]
pub struct NominalSizes {
    pub registration: u32,
    pub response: u32,
    pub ack: u32,
}

impl Default for NominalSizes {
    fn default() -> Self {
        NominalSizes {
            registration: 184,
            response: 184,
            ack: 112,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GossipKind {
    Registration,
    RegResponse,
    Ack,
}

/// Nominal size of a gossip message kind under `sizes`.
pub fn nominal_size(kind: GossipKind, sizes: &NominalSizes) -> u32 {
    match kind {
        GossipKind::Registration => sizes.registration,
        GossipKind::RegResponse => sizes.response,
        GossipKind::Ack => sizes.ack,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pid(b: u8) -> PeerId {
        PeerId([b; 8])
    }

    fn sample_exchange(pts: usize) -> GossipExchange {
        GossipExchange {
            source: pid(1),
            destination: pid(2),
            source_addr: Addr(0x0A000001),
            session_id: 0xDEAD_BEEF_0123,
            metric_value: -1,
            pts: (0..pts)
                .map(|i| PeerIdentity {
                    pid: pid(10 + i as u8),
                    addr: Addr(0x0A000002 + i as u32),
                })
                .collect(),
        }
    }

    #[test]
    fn ack_has_constant_length() {
        let a = GossipMessage::Ack {
            source: pid(1),
            destination: pid(2),
            session_id: 7,
        };
        let b = GossipMessage::Ack {
            source: pid(9),
            destination: pid(8),
            session_id: u64::MAX,
        };
        assert_eq!(a.encode().unwrap().len(), 25);
        assert_eq!(b.encode().unwrap().len(), 25);
    }

    #[test]
    fn pts_entries_add_fixed_width() {
        let one = GossipMessage::Registration(sample_exchange(1)).encode().unwrap();
        let two = GossipMessage::Registration(sample_exchange(2)).encode().unwrap();
        assert_eq!(two.len(), one.len() + 13);
    }

    #[test]
    fn empty_buffer_is_error() {
        assert!(matches!(
            WireMessage::decode(&[]),
            Err(CodecError::Truncated { .. })
        ));
    }

    #[test]
    fn unknown_type_is_error() {
        assert!(matches!(
            WireMessage::decode(&[0xEE, 0, 0]),
            Err(CodecError::UnknownType { ty: 0xEE, .. })
        ));
    }

    #[test]
    fn truncation_anywhere_is_error_never_panic() {
        let msgs: Vec<Vec<u8>> = vec![
            GossipMessage::Registration(sample_exchange(2)).encode().unwrap(),
            StMessage::Query {
                source: pid(1),
                destination: pid(2),
                source_addr: Addr(1),
                destination_addr: Addr(2),
                session_id: 3,
                on_path: true,
                metric: MetricType::HopCount,
                radius: 2,
                sa_id: 700,
            }
            .encode()
            .unwrap(),
            StMessage::Data {
                source: pid(1),
                destination: pid(2),
                source_addr: Addr(1),
                destination_addr: Addr(2),
                session_id: 3,
                sa_id: 700,
                payload: vec![9; 32],
            }
            .encode()
            .unwrap(),
        ];
        for m in msgs {
            for cut in 0..m.len() {
                assert!(WireMessage::decode(&m[..cut]).is_err());
            }
            assert!(WireMessage::decode(&m).is_ok());
        }
    }

    #[test]
    fn radius_overflow_rejected() {
        let q = StMessage::Query {
            source: pid(1),
            destination: pid(2),
            source_addr: Addr(1),
            destination_addr: Addr(2),
            session_id: 3,
            on_path: true,
            metric: MetricType::HopCount,
            radius: 256,
            sa_id: 0,
        };
        assert!(matches!(
            q.encode(),
            Err(CodecError::FieldOverflow { field: "radius", .. })
        ));
    }

    #[test]
    fn nominal_sizes_default_and_override() {
        let d = NominalSizes::default();
        assert_eq!(nominal_size(GossipKind::Registration, &d), 184);
        assert_eq!(nominal_size(GossipKind::RegResponse, &d), 184);
        assert_eq!(nominal_size(GossipKind::Ack, &d), 112);
        let o = NominalSizes {
            registration: 200,
            ..d
        };
        assert_eq!(nominal_size(GossipKind::Registration, &o), 200);
    }

    #[test]
    fn addr_node_mapping_roundtrip() {
        for i in [0u32, 1, 72, 500] {
            let n = NodeId(i);
            assert_eq!(Addr::for_node(n).node(), Some(n));
        }
        assert_eq!(Addr(0).node(), None);
    }

    fn arb_pid() -> BoxedStrategy<PeerId> {
        any::<[u8; 8]>().prop_map(PeerId).boxed()
    }

    fn arb_identity() -> BoxedStrategy<PeerIdentity> {
        (arb_pid(), 1u32..2000)
            .prop_map(|(pid, a)| PeerIdentity {
                pid,
                addr: Addr(0x0A00_0000 + a),
            })
            .boxed()
    }

    fn arb_gossip() -> BoxedStrategy<GossipMessage> {
        let exchange = (
            arb_pid(),
            arb_pid(),
            1u32..2000,
            any::<u64>(),
            -1i32..64,
            prop::collection::vec(arb_identity(), 0..9),
        )
            .prop_map(|(s, d, a, sid, m, pts)| GossipExchange {
                source: s,
                destination: d,
                source_addr: Addr(0x0A00_0000 + a),
                session_id: sid,
                metric_value: m,
                pts,
            })
            .boxed();
        prop_oneof![
            exchange.clone().prop_map(GossipMessage::Registration),
            exchange.prop_map(GossipMessage::RegResponse),
            (arb_pid(), arb_pid(), any::<u64>()).prop_map(|(s, d, sid)| GossipMessage::Ack {
                source: s,
                destination: d,
                session_id: sid,
            }),
        ]
        .boxed()
    }

    fn arb_st() -> BoxedStrategy<StMessage> {
        let hdr = (arb_pid(), arb_pid(), 1u32..2000, 1u32..2000, any::<u64>()).boxed();
        prop_oneof![
            (hdr.clone(), any::<bool>(), 0u32..256, any::<u16>()).prop_map(
                |((s, d, sa, da, sid), on_path, radius, said)| StMessage::Query {
                    source: s,
                    destination: d,
                    source_addr: Addr(0x0A00_0000 + sa),
                    destination_addr: Addr(0x0A00_0000 + da),
                    session_id: sid,
                    on_path,
                    metric: MetricType::HopCount,
                    radius,
                    sa_id: said,
                }
            ),
            (hdr.clone(), any::<u16>()).prop_map(|((s, d, sa, da, sid), said)| {
                StMessage::Response {
                    source: s,
                    destination: d,
                    source_addr: Addr(0x0A00_0000 + sa),
                    destination_addr: Addr(0x0A00_0000 + da),
                    session_id: sid,
                    sa_id: said,
                }
            }),
            (hdr.clone(), any::<u8>()).prop_map(|((s, d, sa, da, sid), code)| StMessage::Error {
                source: s,
                destination: d,
                session_id: sid,
                source_addr: Addr(0x0A00_0000 + sa),
                destination_addr: Addr(0x0A00_0000 + da),
                code,
            }),
            (
                hdr.clone(),
                any::<u16>(),
                prop::collection::vec(any::<u8>(), 0..64),
                any::<bool>()
            )
                .prop_map(|((s, d, sa, da, sid), said, payload, data)| {
                    let (source_addr, destination_addr) =
                        (Addr(0x0A00_0000 + sa), Addr(0x0A00_0000 + da));
                    if data {
                        StMessage::Data {
                            source: s,
                            destination: d,
                            source_addr,
                            destination_addr,
                            session_id: sid,
                            sa_id: said,
                            payload,
                        }
                    } else {
                        StMessage::DataResponse {
                            source: s,
                            destination: d,
                            source_addr,
                            destination_addr,
                            session_id: sid,
                            sa_id: said,
                            payload,
                        }
                    }
                }),
        ]
        .boxed()
    }

    fn arb_sa() -> impl Strategy<Value = SaMessage> {
        let elem = (0u32..4000, any::<u8>(), 0u32..256).prop_map(|(n, status, depth)| {
            SfStatusElement {
                node: NodeId(n),
                status,
                depth,
            }
        });
        prop_oneof![
            (any::<u16>(), prop::collection::vec(any::<u8>(), 0..64), 0u8..3).prop_map(
                |(service_type, payload, k)| match k {
                    0 => SaMessage::Setup { service_type, payload },
                    1 => SaMessage::Remove { service_type, payload },
                    _ => SaMessage::Probe { service_type, payload },
                }
            ),
            (any::<u8>(), prop::collection::vec(elem, 0..32))
                .prop_map(|(code, elements)| SaMessage::Response { code, elements }),
        ]
    }

    proptest! {
        #[test]
        fn wire_roundtrip(msg in prop_oneof![
            arb_gossip().prop_map(WireMessage::Gossip),
            arb_st().prop_map(WireMessage::St),
        ]) {
            let bytes = msg.encode().unwrap();
            prop_assert_eq!(WireMessage::decode(&bytes).unwrap(), msg);
        }

        #[test]
        fn sa_roundtrip(msg in arb_sa()) {
            let bytes = msg.encode().unwrap();
            prop_assert_eq!(SaMessage::decode(&bytes).unwrap(), msg);
        }

        #[test]
        fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
            let _ = WireMessage::decode(&bytes);
            let _ = SaMessage::decode(&bytes);
        }

        #[test]
        fn size_is_pure_function_of_shape(x in arb_gossip(), y in arb_gossip()) {
            // Two gossip messages of the same kind and PTS length encode to
            // the same number of bytes.
            let same_shape = match (&x, &y) {
                (GossipMessage::Registration(a), GossipMessage::Registration(b))
                | (GossipMessage::RegResponse(a), GossipMessage::RegResponse(b)) => {
                    a.pts.len() == b.pts.len()
                }
                (GossipMessage::Ack { .. }, GossipMessage::Ack { .. }) => true,
                _ => false,
            };
            if same_shape {
                prop_assert_eq!(x.encode().unwrap().len(), y.encode().unwrap().len());
            }
        }
    }
}
