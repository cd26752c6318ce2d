//! Off-path signaling protocol (OSP).
//!
//! OSP locates service-function instances close to IP data paths. It is
//! organized in two layers: the signaling transport (ST), which discovers
//! peers through three-way gossip and distributes messages by on-path
//! interception plus radius-scoped off-path flooding, and the signaling
//! application (SA), which probes service functions and stacks the results
//! on the reverse path.
//!
//! The crate ships the protocol engines ([`discovery`], [`distribution`]),
//! the wire codec ([`codec`]), a deterministic discrete-event network
//! simulator ([`simnet`]), and an experiment harness ([`harness`]) that
//! reproduces discovery-time, coverage, and overhead measurements as CSV
//! tables.

pub mod codec;
pub mod discovery;
pub mod distribution;
pub mod harness;
pub mod scenario;
pub mod simnet;
pub mod stats;
pub mod topology;

pub use codec::{Addr, PeerId, PeerIdentity, SessionId};
pub use simnet::Micros;
pub use topology::{NodeId, Topology};
