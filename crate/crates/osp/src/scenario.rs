//! Scenario files: structured key-value documents binding a topology file
//! to an overlay (membership, tracker, server attachments), protocol
//! configuration, and an experiment description.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Addr, PeerId, PeerIdentity};
use crate::discovery::{DiscoveryEngine, GossipConfig};
use crate::distribution::{DistributionConfig, DistributionEngine, SfRegistry};
use crate::simnet::{SimConfig, SimNode, Simulation, MILLIS, SECONDS};
use crate::topology::{self, NodeId, NodeRole, Topology, TopologyError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("unknown node {0:?} referenced by scenario")]
    UnknownNode(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct TopologySection {
    pub file: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum MembersSpec {
    Keyword(String),
    List(Vec<String>),
}

impl Default for MembersSpec {
    fn default() -> Self {
        MembersSpec::Keyword("all".into())
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ServerSpec {
    pub name: String,
    pub attach: String,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default)]
pub struct OverlaySection {
    pub tracker: Option<String>,
    pub members: MembersSpec,
    pub servers: Vec<ServerSpec>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default)]
pub struct GossipSection {
    pub period_ms: u64,
    pub gossip_timer_ms: Option<u64>,
    pub pts_size: usize,
    pub entry_lifetime_factor: f64,
    pub unreachable_capacity: usize,
    pub timeout_marks_out_of_scope: bool,
}

impl Default for GossipSection {
    fn default() -> Self {
        GossipSection {
            period_ms: 5_000,
            gossip_timer_ms: None,
            pts_size: 2,
            entry_lifetime_factor: 2.0,
            unreachable_capacity: 0,
            timeout_marks_out_of_scope: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default)]
pub struct DistributionSection {
    pub wait_resp_timeout_ms: u64,
    pub st_session_timeout_ms: u64,
    pub reliable_data_mode: bool,
}

impl Default for DistributionSection {
    fn default() -> Self {
        DistributionSection {
            wait_resp_timeout_ms: 500,
            st_session_timeout_ms: 2_000,
            reliable_data_mode: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default)]
pub struct SimSection {
    pub per_hop_latency_ms: u64,
    pub loss_probability: f64,
    pub sim_time_limit_s: u64,
    pub phase_jitter: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            per_hop_latency_ms: 10,
            loss_probability: 0.0,
            sim_time_limit_s: 3_600,
            phase_jitter: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Discover,
    Distribute,
    Overhead,
    Partial,
    Sweep,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub repetitions: usize,
    /// Explicit per-repetition seeds; when empty they derive from the base
    /// seed as seed, seed+1, ...
    pub seeds: Vec<u64>,
    pub pts_sweep: Vec<usize>,
    pub radii: Vec<u32>,
    pub payload_bytes: usize,
    pub pairs_per_group: usize,
    pub fractions: Vec<f64>,
    pub subsets_per_fraction: usize,
    pub probe_service: u16,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            kind: ExperimentKind::Discover,
            repetitions: 20,
            seeds: Vec::new(),
            pts_sweep: vec![1, 2, 4, 8],
            radii: vec![0, 1, 2, 3],
            payload_bytes: 1024,
            pairs_per_group: 30,
            fractions: vec![0.25, 0.5, 0.75, 1.0],
            subsets_per_fraction: 5,
            probe_service: 1,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum HostsSpec {
    Keyword(String),
    List(Vec<String>),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default)]
pub struct ServicesSection {
    pub hosts: HostsSpec,
    pub types: Vec<u16>,
}

impl Default for ServicesSection {
    fn default() -> Self {
        ServicesSection {
            hosts: HostsSpec::Keyword("servers".into()),
            types: vec![1],
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct Scenario {
    pub topology: TopologySection,
    #[serde(default)]
    pub overlay: OverlaySection,
    #[serde(default)]
    pub gossip: GossipSection,
    #[serde(default)]
    pub distribution: DistributionSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub services: ServicesSection,
}

impl Scenario {
    /// Parses and validates scenario text without touching the filesystem.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if !(0.0..=1.0).contains(&self.sim.loss_probability) {
            return Err(ScenarioError::Invalid(format!(
                "loss_probability {} outside [0, 1]",
                self.sim.loss_probability
            )));
        }
        if self.gossip.period_ms == 0 {
            return Err(ScenarioError::Invalid("gossip period must be > 0".into()));
        }
        if self.experiment.repetitions == 0 {
            return Err(ScenarioError::Invalid("repetitions must be >= 1".into()));
        }
        if !self.experiment.seeds.is_empty()
            && self.experiment.seeds.len() != self.experiment.repetitions
        {
            return Err(ScenarioError::Invalid(format!(
                "seeds list has {} entries for {} repetitions",
                self.experiment.seeds.len(),
                self.experiment.repetitions
            )));
        }
        if let MembersSpec::Keyword(k) = &self.overlay.members {
            if k != "all" {
                return Err(ScenarioError::Invalid(format!(
                    "members keyword must be \"all\", got {k:?}"
                )));
            }
        }
        for f in &self.experiment.fractions {
            if !(0.0..=1.0).contains(f) || *f <= 0.0 {
                return Err(ScenarioError::Invalid(format!("bad fraction {f}")));
            }
        }
        Ok(())
    }

    /// A minimal scenario around a bare topology file, defaults everywhere.
    pub fn for_topology(file: &str) -> Scenario {
        Scenario {
            topology: TopologySection { file: file.into() },
            overlay: OverlaySection::default(),
            gossip: GossipSection::default(),
            distribution: DistributionSection::default(),
            sim: SimSection::default(),
            experiment: ExperimentSection::default(),
            services: ServicesSection::default(),
        }
    }
}

/// A scenario resolved against its topology: servers attached, membership
/// applied, tracker picked, configs converted to engine units.
#[derive(Clone, Debug)]
pub struct BuiltScenario {
    pub topo: Arc<Topology>,
    pub tracker: NodeId,
    pub gossip: GossipConfig,
    pub dist: DistributionConfig,
    pub sim: SimConfig,
    pub experiment: ExperimentSection,
    pub services: BTreeMap<NodeId, Vec<u16>>,
    /// When set, every simulation appends its event trace to this file.
    pub trace_path: Option<PathBuf>,
}

/// Loads a scenario file and resolves it; the topology path is interpreted
/// relative to the scenario file's directory.
pub fn load_scenario(path: &Path) -> Result<BuiltScenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let scenario = Scenario::parse(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    build_scenario(&scenario, dir)
}

/// Resolves a parsed scenario against `base_dir`.
pub fn build_scenario(scenario: &Scenario, base_dir: &Path) -> Result<BuiltScenario, ScenarioError> {
    let topo_path: PathBuf = base_dir.join(&scenario.topology.file);
    let topo = topology::load_topology(&topo_path)?;
    build_scenario_with_topology(scenario, topo)
}

/// Same resolution but with the base topology supplied directly.
pub fn build_scenario_with_topology(
    scenario: &Scenario,
    base: Topology,
) -> Result<BuiltScenario, ScenarioError> {
    // Re-assemble the graph so server attachments become real nodes.
    let mut builder = topology::TopologyBuilder::new();
    for n in base.nodes() {
        builder
            .add_node(base.name(n), base.role(n))
            .map_err(ScenarioError::Topology)?;
    }
    for a in base.nodes() {
        for &b in base.neighbors(a) {
            if a < b {
                builder.add_edge(a, b)?;
            }
        }
    }
    for server in &scenario.overlay.servers {
        let attach = base
            .node_by_name(&server.attach)
            .ok_or_else(|| ScenarioError::UnknownNode(server.attach.clone()))?;
        let id = builder.add_node(&server.name, NodeRole::Server)?;
        builder.add_edge(id, attach)?;
    }
    let mut topo = builder.build()?;

    match &scenario.overlay.members {
        MembersSpec::Keyword(_) => {} // all nodes are members by default
        MembersSpec::List(names) => {
            let mut set = BTreeSet::new();
            for name in names {
                let id = topo
                    .node_by_name(name)
                    .ok_or_else(|| ScenarioError::UnknownNode(name.clone()))?;
                set.insert(id);
            }
            topo.set_members(&set);
        }
    }

    let tracker = match &scenario.overlay.tracker {
        Some(name) => topo
            .node_by_name(name)
            .ok_or_else(|| ScenarioError::UnknownNode(name.clone()))?,
        None => *topo
            .members()
            .first()
            .ok_or_else(|| ScenarioError::Invalid("no OSP members".into()))?,
    };
    if !topo.is_member(tracker) {
        return Err(ScenarioError::Invalid(format!(
            "tracker {:?} is not an OSP member",
            topo.name(tracker)
        )));
    }

    let mut services: BTreeMap<NodeId, Vec<u16>> = BTreeMap::new();
    let hosts: Vec<NodeId> = match &scenario.services.hosts {
        HostsSpec::Keyword(k) if k == "servers" => topo
            .nodes()
            .filter(|&n| topo.role(n) == NodeRole::Server)
            .collect(),
        HostsSpec::Keyword(k) if k == "all" => topo.nodes().collect(),
        HostsSpec::Keyword(k) => {
            return Err(ScenarioError::Invalid(format!(
                "services.hosts keyword must be \"servers\" or \"all\", got {k:?}"
            )))
        }
        HostsSpec::List(names) => {
            let mut out = Vec::new();
            for name in names {
                out.push(
                    topo.node_by_name(name)
                        .ok_or_else(|| ScenarioError::UnknownNode(name.clone()))?,
                );
            }
            out
        }
    };
    for h in hosts {
        services.insert(h, scenario.services.types.clone());
    }

    let gossip = GossipConfig {
        period: scenario.gossip.period_ms * MILLIS,
        gossip_timer: scenario
            .gossip
            .gossip_timer_ms
            .unwrap_or(scenario.gossip.period_ms)
            * MILLIS,
        pts_size: scenario.gossip.pts_size,
        entry_lifetime_factor: scenario.gossip.entry_lifetime_factor,
        unreachable_capacity: match scenario.gossip.unreachable_capacity {
            0 => None,
            n => Some(n),
        },
        timeout_marks_out_of_scope: scenario.gossip.timeout_marks_out_of_scope,
    };
    let dist = DistributionConfig {
        wait_resp_timeout: scenario.distribution.wait_resp_timeout_ms * MILLIS,
        st_session_timeout: scenario.distribution.st_session_timeout_ms * MILLIS,
        reliable_data_mode: scenario.distribution.reliable_data_mode,
    };
    let sim = SimConfig {
        per_hop_latency: scenario.sim.per_hop_latency_ms * MILLIS,
        loss_probability: scenario.sim.loss_probability,
        rng_seed: 0, // filled per run
        sim_time_limit: scenario.sim.sim_time_limit_s * SECONDS,
        phase_jitter: scenario.sim.phase_jitter,
    };

    Ok(BuiltScenario {
        topo: Arc::new(topo),
        tracker,
        gossip,
        dist,
        sim,
        experiment: scenario.experiment.clone(),
        services,
        trace_path: None,
    })
}

impl BuiltScenario {
    /// Per-repetition seeds: explicit list, or base, base+1, ...
    pub fn run_seeds(&self, base: u64) -> Vec<u64> {
        if self.experiment.seeds.is_empty() {
            (0..self.experiment.repetitions as u64)
                .map(|i| base.wrapping_add(i))
                .collect()
        } else {
            self.experiment.seeds.clone()
        }
    }

    /// Clone of this scenario restricted to an explicit member subset. The
    /// tracker falls back to the lowest member when the configured one is
    /// not in the subset.
    pub fn with_members(&self, members: &BTreeSet<NodeId>) -> BuiltScenario {
        let mut topo = (*self.topo).clone();
        topo.set_members(members);
        let tracker = if members.contains(&self.tracker) {
            self.tracker
        } else {
            *members.iter().next().expect("non-empty member set")
        };
        BuiltScenario {
            topo: Arc::new(topo),
            tracker,
            ..self.clone()
        }
    }

    /// Builds the simulation world for one run: every OSP member gets a
    /// peer identity (PID drawn from the seeded run RNG) and both protocol
    /// engines, with the tracker preconfigured as the bootstrap peer.
    pub fn build_simulation(&self, seed: u64, schedule_gossip: bool) -> Simulation {
        let mut run_rng = ChaCha12Rng::seed_from_u64(seed);
        let members = self.topo.members();
        let mut identities: BTreeMap<NodeId, PeerIdentity> = BTreeMap::new();
        for &m in &members {
            let mut pid = [0u8; 8];
            run_rng.fill(&mut pid);
            identities.insert(
                m,
                PeerIdentity {
                    pid: PeerId(pid),
                    addr: Addr::for_node(m),
                },
            );
        }
        let tracker_ident = identities[&self.tracker];
        let mut sim = Simulation::new(
            self.topo.clone(),
            SimConfig {
                rng_seed: seed,
                ..self.sim
            },
        );
        for &m in &members {
            let identity = identities[&m];
            let node_rng = ChaCha12Rng::seed_from_u64(run_rng.random());
            let registry = match self.services.get(&m) {
                Some(types) => SfRegistry::with_services(types.iter().copied()),
                None => SfRegistry::default(),
            };
            sim.add_node(SimNode {
                id: m,
                identity,
                discovery: DiscoveryEngine::new(
                    identity,
                    tracker_ident,
                    self.gossip.clone(),
                    node_rng,
                ),
                distribution: DistributionEngine::new(m, identity, self.dist, registry),
                gossip_period: self.gossip.period,
            });
        }
        if schedule_gossip {
            sim.schedule_cycles();
        }
        self.attach_trace(&mut sim);
        sim
    }

    /// Attaches the scenario's trace file (append mode) to a simulation.
    pub fn attach_trace(&self, sim: &mut Simulation) {
        if let Some(path) = &self.trace_path {
            if let Ok(f) = std::fs::OpenOptions::new().create(true).append(true).open(path) {
                sim.set_trace_writer(Box::new(f));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [topology]
        file = "line5.txt"
    "#;

    #[test]
    fn minimal_scenario_applies_defaults() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.gossip.period_ms, 5_000);
        assert_eq!(s.gossip.pts_size, 2);
        assert_eq!(s.distribution.wait_resp_timeout_ms, 500);
        assert_eq!(s.sim.per_hop_latency_ms, 10);
        assert_eq!(s.experiment.repetitions, 20);
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(Scenario::parse("[topology]\nfile=\"x\"\n[sim]\nloss_probability = 1.5").is_err());
        assert!(Scenario::parse("[topology]\nfile=\"x\"\n[gossip]\nperiod_ms = 0").is_err());
        assert!(Scenario::parse("[topology]\nfile=\"x\"\n[experiment]\nrepetitions = 0").is_err());
        assert!(Scenario::parse(
            "[topology]\nfile=\"x\"\n[experiment]\nrepetitions = 2\nseeds = [1]"
        )
        .is_err());
        assert!(Scenario::parse("[topology]\nfile=\"x\"\n[overlay]\nmembers = \"some\"").is_err());
        assert!(Scenario::parse("not toml at all ][").is_err());
    }

    #[test]
    fn shipped_geant_scenario_builds_73_members() {
        let built = load_scenario(Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../scenarios/geant.toml"
        )))
        .unwrap();
        assert_eq!(built.topo.node_count(), 73);
        assert_eq!(built.topo.member_count(), 73);
        assert_eq!(built.topo.name(built.tracker), "srv-il");
        // the overlay's maximum degree: DE with 8 router links and 2 servers
        let de = built.topo.node_by_name("DE").unwrap();
        assert_eq!(built.topo.degree(de), 10);
        let max_deg = built
            .topo
            .nodes()
            .map(|n| built.topo.degree(n))
            .max()
            .unwrap();
        assert_eq!(max_deg, 10);
        // servers must be degree-1 leaves
        for n in built.topo.nodes() {
            if built.topo.role(n) == NodeRole::Server {
                assert_eq!(built.topo.degree(n), 1);
            }
        }
        // the longest member-to-member path is 9 IP hops
        let max_l = built
            .topo
            .nodes()
            .flat_map(|a| built.topo.nodes().map(move |b| (a, b)))
            .map(|(a, b)| built.topo.ip_distance(a, b))
            .max()
            .unwrap();
        assert_eq!(max_l, 9);
    }

    #[test]
    fn unknown_attach_point_is_error() {
        let s = Scenario::parse(
            r#"
            [topology]
            file = "line5.txt"
            [overlay]
            servers = [ { name = "srv", attach = "nope" } ]
        "#,
        )
        .unwrap();
        let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"));
        assert!(matches!(
            build_scenario(&s, dir),
            Err(ScenarioError::UnknownNode(_))
        ));
    }

    #[test]
    fn member_subset_and_tracker_fallback() {
        let s = Scenario::parse(MINIMAL).unwrap();
        let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"));
        let built = build_scenario(&s, dir).unwrap();
        let subset: BTreeSet<NodeId> = [NodeId(2), NodeId(4)].into_iter().collect();
        let partial = built.with_members(&subset);
        assert_eq!(partial.topo.member_count(), 2);
        assert_eq!(partial.tracker, NodeId(2)); // original tracker n0 excluded
    }

    #[test]
    fn build_simulation_is_seed_deterministic() {
        let s = Scenario::parse(MINIMAL).unwrap();
        let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"));
        let built = build_scenario(&s, dir).unwrap();
        let a = built.build_simulation(5, false);
        let b = built.build_simulation(5, false);
        let c = built.build_simulation(6, false);
        let pid = |sim: &Simulation, n: u32| sim.node(NodeId(n)).identity.pid;
        assert_eq!(pid(&a, 0), pid(&b, 0));
        assert_ne!(pid(&a, 0), pid(&c, 0));
    }
}
