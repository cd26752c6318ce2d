//! Experiment runner: discovery convergence, distribution coverage and
//! overhead, analytic bandwidth, partial deployment, and CSV emission.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::codec::{NominalSizes, SaMessage, SfStatusElement};
use crate::distribution::SessionKey;
use crate::scenario::{BuiltScenario, ExperimentKind, ScenarioError};
use crate::simnet::{Micros, RunOutcome, SimMetrics, SimNode, Simulation, Stepped, TraceDigest};
use crate::stats;
use crate::topology::{NodeId, Topology};

/// SA protocol identifier used by the probing application.
pub const SA_PROTOCOL_PROBE: u16 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("discovery did not converge: node {0} never completed its neighbor set")]
    Unconverged(String),
    #[error("PeT of node {0} is not converged; mean neighbor distance undefined")]
    UnconvergedPet(String),
    #[error(
        "zero-loss coverage mismatch for src={src} dst={dst} r={r}: missing {missing:?}, extra {extra:?}"
    )]
    CoverageMismatch {
        src: u32,
        dst: u32,
        r: u32,
        missing: Vec<u32>,
        extra: Vec<u32>,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("io error writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// True OSP adjacency of every member, the convergence target of discovery.
pub fn oracle_adjacency(topo: &Topology) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    topo.members()
        .into_iter()
        .map(|m| (m, topo.osp_adjacency(m)))
        .collect()
}

/// Outcome of one seeded discovery run.
#[derive(Clone, Debug)]
pub struct DiscoveryRun {
    pub seed: u64,
    pub pts_size: usize,
    /// Gossip cycles each node needed until its neighbor set first matched
    /// its true OSP adjacency.
    pub ngc: BTreeMap<NodeId, u64>,
    /// Mean per-node cycle count within this run.
    pub mean_node_ngc: f64,
    /// Network n_GC: cycles until the slowest node converged.
    pub max_ngc: u64,
    /// Network discovery time, exactly max_ngc × T.
    pub t_gd: Micros,
    pub trace: TraceDigest,
}

/// Runs gossip discovery until every member's neighbor set equals its true
/// OSP adjacency; returns the converged world alongside the measurements.
pub fn run_discovery(
    built: &BuiltScenario,
    seed: u64,
) -> Result<(Simulation, DiscoveryRun), HarnessError> {
    let oracle = oracle_adjacency(&built.topo);
    let mut sim = built.build_simulation(seed, true);
    let mut remaining: BTreeSet<NodeId> = oracle.keys().copied().collect();
    let mut ngc: BTreeMap<NodeId, u64> = BTreeMap::new();
    while !remaining.is_empty() {
        match sim.step() {
            None => {
                let stuck = remaining.iter().next().unwrap();
                return Err(HarnessError::Unconverged(
                    built.topo.name(*stuck).to_string(),
                ));
            }
            Some(Stepped::Node { node, .. }) if remaining.contains(&node) => {
                let n = sim.node(node);
                if n.discovery.pet().neighbor_nodes() == oracle[&node] {
                    ngc.insert(node, n.discovery.active_cycles());
                    remaining.remove(&node);
                }
            }
            Some(_) => {}
        }
    }
    let mean_node_ngc = stats::mean(&ngc.values().map(|&v| v as f64).collect::<Vec<_>>());
    let max_ngc = ngc.values().copied().max().unwrap_or(0);
    let run = DiscoveryRun {
        seed,
        pts_size: built.gossip.pts_size,
        mean_node_ngc,
        max_ngc,
        t_gd: max_ngc * built.gossip.period,
        trace: sim.trace_digest(),
        ngc,
    };
    Ok((sim, run))
}

/// Analytic gossip bandwidth overhead in bit/s with an explicit uniform
/// mean neighbor distance: K · v · (G+R+A) · 8 / T.
pub fn eta_uniform(k: usize, v: f64, sizes: &NominalSizes, period: Micros) -> f64 {
    let per_session = (sizes.registration + sizes.response + sizes.ack) as f64 * 8.0;
    let t_seconds = period as f64 / 1_000_000.0;
    k as f64 * v * per_session / t_seconds
}

/// Analytic overhead evaluated on converged peer tables: every member
/// contributes v_i, its measured mean neighbor distance.
pub fn eta_from_simulation(
    sim: &Simulation,
    sizes: &NominalSizes,
    period: Micros,
) -> Result<f64, HarnessError> {
    let oracle = oracle_adjacency(&sim.topo);
    let per_session = (sizes.registration + sizes.response + sizes.ack) as f64 * 8.0;
    let t_seconds = period as f64 / 1_000_000.0;
    let mut sum_v = 0.0;
    for node in sim.nodes() {
        if node.discovery.pet().neighbor_nodes() != oracle[&node.id] {
            return Err(HarnessError::UnconvergedPet(
                sim.topo.name(node.id).to_string(),
            ));
        }
        let v = node
            .discovery
            .pet()
            .mean_neighbor_distance()
            .ok_or_else(|| HarnessError::UnconvergedPet(sim.topo.name(node.id).to_string()))?;
        sum_v += v;
    }
    Ok(sum_v * per_session / t_seconds)
}

/// One distribution session on a converged world snapshot.
#[derive(Clone, Debug)]
pub struct DistCase {
    pub src: NodeId,
    pub dst: NodeId,
    pub l: u32,
    pub r: u32,
    pub coverage: BTreeSet<NodeId>,
    pub oracle: BTreeSet<NodeId>,
    pub coverage_fraction: f64,
    /// Byte·hops the session put on the wire, actual codec sizes.
    pub bytes_on_wire: u64,
    pub completion: Option<Micros>,
    pub complete: bool,
    pub stack: Vec<SfStatusElement>,
    pub result: Vec<SfStatusElement>,
    pub metrics: SimMetrics,
    pub all_idle: bool,
    pub quiescent: bool,
    pub trace: TraceDigest,
}

#[allow(clippy::too_many_arguments)]
pub fn run_distribution_case(
    built: &BuiltScenario,
    base_nodes: &BTreeMap<NodeId, SimNode>,
    seed: u64,
    src: NodeId,
    dst: NodeId,
    r: u32,
    session_id: u64,
    loss: f64,
    reliable: bool,
) -> DistCase {
    let mut nodes = base_nodes.clone();
    if reliable {
        let mut cfg = built.dist;
        cfg.reliable_data_mode = true;
        for n in nodes.values_mut() {
            n.distribution.set_config(cfg);
        }
    }
    let mut sim = Simulation::with_nodes(
        built.topo.clone(),
        crate::simnet::SimConfig {
            rng_seed: seed,
            loss_probability: loss,
            sim_time_limit: 60 * crate::simnet::SECONDS,
            ..built.sim
        },
        nodes,
    );
    built.attach_trace(&mut sim);
    let key = SessionKey {
        sa_id: SA_PROTOCOL_PROBE,
        session_id,
    };
    let request = SaMessage::Probe {
        service_type: built.experiment.probe_service,
        payload: vec![0x5A; built.experiment.payload_bytes],
    };
    sim.submit(src, key, request, dst, r)
        .expect("fresh session key");
    let outcome = sim.run_to_quiescence();
    let path = sim.topo.shortest_path(src, dst);
    let oracle = sim.topo.off_path_domain_oracle(&path, r);
    let coverage = sim.metrics.coverage(key);
    let covered_in_domain = coverage.intersection(&oracle).count();
    let app = sim.metrics.app_results.get(&key).cloned();
    let trace = sim.trace_digest();
    DistCase {
        src,
        dst,
        l: path.len_edges(),
        r,
        coverage_fraction: covered_in_domain as f64 / oracle.len().max(1) as f64,
        coverage,
        oracle,
        bytes_on_wire: sim.ledger.session_bytes(session_id),
        completion: app.as_ref().map(|a| a.at),
        complete: app.as_ref().map(|a| a.complete).unwrap_or(false),
        stack: app.as_ref().map(|a| a.stack.clone()).unwrap_or_default(),
        result: app.map(|a| a.result).unwrap_or_default(),
        all_idle: sim.all_idle(),
        quiescent: matches!(outcome, RunOutcome::Quiescent { .. }),
        metrics: sim.metrics,
        trace,
    }
}

fn mix(a: u64, b: u64) -> u64 {
    let mut x = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x
}

/// Member pairs grouped by IP distance, each group sampled down to
/// `per_group` deterministically (exhaustive when small enough).
pub fn sample_pairs_by_distance(
    topo: &Topology,
    per_group: usize,
    seed: u64,
) -> BTreeMap<u32, Vec<(NodeId, NodeId)>> {
    let members = topo.members();
    let mut groups: BTreeMap<u32, Vec<(NodeId, NodeId)>> = BTreeMap::new();
    for (i, &a) in members.iter().enumerate() {
        for &b in &members[i + 1..] {
            groups.entry(topo.ip_distance(a, b)).or_default().push((a, b));
        }
    }
    groups.remove(&0);
    for (l, pairs) in groups.iter_mut() {
        if pairs.len() > per_group {
            let mut rng = ChaCha12Rng::seed_from_u64(mix(seed, *l as u64));
            let picked = rand::seq::index::sample(&mut rng, pairs.len(), per_group);
            let mut sampled: Vec<(NodeId, NodeId)> =
                picked.into_iter().map(|i| pairs[i]).collect();
            sampled.sort();
            *pairs = sampled;
        }
    }
    groups
}

/// Averaged distribution measurements for one (L, r) group.
#[derive(Clone, Debug)]
pub struct DistGroupRecord {
    pub l: u32,
    pub r: u32,
    pub cases: usize,
    pub mean_bytes: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_completion_ms: f64,
    pub mean_coverage_fraction: f64,
}

pub struct DistributionExperiment {
    pub groups: Vec<DistGroupRecord>,
    pub cases: Vec<DistCase>,
    pub traces: Vec<TraceDigest>,
}

/// Fig-4-style experiment: pre-converge discovery, then probe sampled pairs
/// grouped by path length for every configured radius. Under zero loss any
/// coverage/oracle mismatch is a protocol bug and fails the run.
pub fn run_distribution_experiment(
    built: &BuiltScenario,
    base_seed: u64,
) -> Result<DistributionExperiment, HarnessError> {
    let seeds = built.run_seeds(base_seed);
    let mut cases: Vec<DistCase> = Vec::new();
    let mut traces = Vec::new();
    let mut session_counter = 1u64;
    for &seed in &seeds {
        let (sim, run) = run_discovery(built, seed)?;
        traces.push(run.trace);
        let snapshot = sim.snapshot_nodes();
        let groups = sample_pairs_by_distance(&built.topo, built.experiment.pairs_per_group, seed);
        for (_, pairs) in groups {
            for (src, dst) in pairs {
                for &r in &built.experiment.radii {
                    let case = run_distribution_case(
                        built,
                        &snapshot,
                        seed,
                        src,
                        dst,
                        r,
                        session_counter,
                        built.sim.loss_probability,
                        built.dist.reliable_data_mode,
                    );
                    session_counter += 1;
                    if built.sim.loss_probability == 0.0 && case.coverage != case.oracle {
                        let missing: Vec<u32> =
                            case.oracle.difference(&case.coverage).map(|n| n.0).collect();
                        let extra: Vec<u32> =
                            case.coverage.difference(&case.oracle).map(|n| n.0).collect();
                        return Err(HarnessError::CoverageMismatch {
                            src: src.0,
                            dst: dst.0,
                            r,
                            missing,
                            extra,
                        });
                    }
                    traces.push(case.trace);
                    cases.push(case);
                }
            }
        }
    }
    let mut groups = Vec::new();
    let mut keys: Vec<(u32, u32)> = cases.iter().map(|c| (c.l, c.r)).collect();
    keys.sort();
    keys.dedup();
    for (l, r) in keys {
        let sel: Vec<&DistCase> = cases.iter().filter(|c| c.l == l && c.r == r).collect();
        let bytes: Vec<f64> = sel.iter().map(|c| c.bytes_on_wire as f64).collect();
        let (mean_bytes, ci_lo, ci_hi) = stats::ci95(&bytes);
        let completion: Vec<f64> = sel
            .iter()
            .filter_map(|c| c.completion.map(|t| t as f64 / 1_000.0))
            .collect();
        let cover: Vec<f64> = sel.iter().map(|c| c.coverage_fraction).collect();
        groups.push(DistGroupRecord {
            l,
            r,
            cases: sel.len(),
            mean_bytes,
            ci_lo,
            ci_hi,
            mean_completion_ms: stats::mean(&completion),
            mean_coverage_fraction: stats::mean(&cover),
        });
    }
    Ok(DistributionExperiment { groups, cases, traces })
}

/// Aggregated discovery statistics for one PTS setting. The n_GC columns
/// describe the network-level value (slowest node per run), so that
/// T_GD = n_GC × T holds exactly in every record.
#[derive(Clone, Debug)]
pub struct SweepRecord {
    pub pts_size: usize,
    pub runs: usize,
    pub mean_ngc: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Mean network discovery time in seconds, exactly mean_ngc × T.
    pub mean_t_gd_s: f64,
}

pub fn aggregate_discovery(period: Micros, pts_size: usize, runs: &[DiscoveryRun]) -> SweepRecord {
    let maxes: Vec<f64> = runs.iter().map(|r| r.max_ngc as f64).collect();
    let (mean_ngc, ci_lo, ci_hi) = stats::ci95(&maxes);
    SweepRecord {
        pts_size,
        runs: runs.len(),
        mean_ngc,
        ci_lo,
        ci_hi,
        mean_t_gd_s: mean_ngc * period as f64 / 1_000_000.0,
    }
}

/// Discovery experiment at the scenario's PTS setting.
pub fn run_discovery_experiment(
    built: &BuiltScenario,
    base_seed: u64,
) -> Result<(SweepRecord, Vec<DiscoveryRun>), HarnessError> {
    let mut runs = Vec::new();
    for seed in built.run_seeds(base_seed) {
        let (_, run) = run_discovery(built, seed)?;
        runs.push(run);
    }
    Ok((aggregate_discovery(built.gossip.period, built.gossip.pts_size, &runs), runs))
}

/// PTS sweep: the discovery experiment repeated per PTS size.
pub fn run_sweep_experiment(
    built: &BuiltScenario,
    base_seed: u64,
) -> Result<Vec<(SweepRecord, Vec<DiscoveryRun>)>, HarnessError> {
    let mut out = Vec::new();
    for &pts in &built.experiment.pts_sweep {
        let mut b = built.clone();
        b.gossip.pts_size = pts;
        out.push(run_discovery_experiment(&b, base_seed)?);
    }
    Ok(out)
}

/// Analytic and codec-measured gossip overhead after convergence.
#[derive(Clone, Debug)]
pub struct OverheadRecord {
    pub k: usize,
    pub mean_v: f64,
    pub period_s: f64,
    pub eta_analytic_bit_s: f64,
    /// Same formula with the codec's mean encoded sizes instead of the
    /// nominal ones, reported side by side.
    pub eta_codec_bit_s: f64,
    pub runs: usize,
}

pub fn run_overhead_experiment(
    built: &BuiltScenario,
    base_seed: u64,
) -> Result<(OverheadRecord, Vec<TraceDigest>), HarnessError> {
    let sizes = NominalSizes::default();
    let mut etas = Vec::new();
    let mut etas_codec = Vec::new();
    let mut mean_vs = Vec::new();
    let mut traces = Vec::new();
    let seeds = built.run_seeds(base_seed);
    for &seed in &seeds {
        let (sim, run) = run_discovery(built, seed)?;
        traces.push(run.trace);
        etas.push(eta_from_simulation(&sim, &sizes, built.gossip.period)?);
        let vs: Vec<f64> = sim
            .nodes()
            .map(|n| n.discovery.pet().mean_neighbor_distance().unwrap())
            .collect();
        mean_vs.push(stats::mean(&vs));
        let measured = |label: &str| {
            let t = sim.ledger.kind(label);
            if t.count == 0 {
                0.0
            } else {
                t.bytes as f64 / t.count as f64
            }
        };
        let codec_sizes = NominalSizes {
            registration: measured("registration") as u32,
            response: measured("reg-response") as u32,
            ack: measured("ack") as u32,
        };
        etas_codec.push(eta_from_simulation(&sim, &codec_sizes, built.gossip.period)?);
    }
    Ok((
        OverheadRecord {
            k: built.topo.member_count(),
            mean_v: stats::mean(&mean_vs),
            period_s: built.gossip.period as f64 / 1_000_000.0,
            eta_analytic_bit_s: stats::mean(&etas),
            eta_codec_bit_s: stats::mean(&etas_codec),
            runs: seeds.len(),
        },
        traces,
    ))
}

/// Partial-deployment record: means over random member subsets.
#[derive(Clone, Debug)]
pub struct PartialRecord {
    pub fraction: f64,
    pub configs: usize,
    pub mean_eta_bit_s: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn run_partial_experiment(
    built: &BuiltScenario,
    base_seed: u64,
) -> Result<(Vec<PartialRecord>, Vec<TraceDigest>), HarnessError> {
    let sizes = NominalSizes::default();
    let all: Vec<NodeId> = built.topo.nodes().collect();
    let mut out = Vec::new();
    let mut traces = Vec::new();
    for (fi, &fraction) in built.experiment.fractions.iter().enumerate() {
        let count = ((fraction * all.len() as f64).round() as usize)
            .clamp(2, all.len());
        let subsets = if count == all.len() {
            1
        } else {
            built.experiment.subsets_per_fraction
        };
        let mut etas = Vec::new();
        for s in 0..subsets {
            let members: BTreeSet<NodeId> = if count == all.len() {
                all.iter().copied().collect()
            } else {
                let mut rng =
                    ChaCha12Rng::seed_from_u64(mix(base_seed, (fi as u64) << 32 | s as u64));
                rand::seq::index::sample(&mut rng, all.len(), count)
                    .into_iter()
                    .map(|i| all[i])
                    .collect()
            };
            let partial = built.with_members(&members);
            let (sim, run) = run_discovery(&partial, base_seed.wrapping_add(s as u64))?;
            traces.push(run.trace);
            etas.push(eta_from_simulation(&sim, &sizes, built.gossip.period)?);
        }
        let (mean_eta, ci_lo, ci_hi) = stats::ci95(&etas);
        out.push(PartialRecord {
            fraction,
            configs: subsets,
            mean_eta_bit_s: mean_eta,
            ci_lo,
            ci_hi,
        });
    }
    Ok((out, traces))
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

pub fn write_csv(
    path: &Path,
    header: &str,
    rows: &[Vec<String>],
) -> Result<(), HarnessError> {
    let mut buf = String::new();
    buf.push_str(header);
    buf.push('\n');
    for row in rows {
        buf.push_str(&row.join(","));
        buf.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(buf.as_bytes()).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn sweep_csv_rows(records: &[SweepRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.pts_size.to_string(),
                fmt(r.mean_ngc),
                fmt(r.ci_lo),
                fmt(r.ci_hi),
                fmt(r.mean_t_gd_s),
            ]
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "pts_size,mean_ngc,ci95_lo,ci95_hi,t_gd_s";

pub fn distribute_csv_rows(records: &[DistGroupRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|g| {
            vec![
                g.l.to_string(),
                g.r.to_string(),
                g.cases.to_string(),
                fmt(g.mean_bytes),
                fmt(g.ci_lo),
                fmt(g.ci_hi),
                fmt(g.mean_completion_ms),
                fmt(g.mean_coverage_fraction),
            ]
        })
        .collect()
}

pub const DISTRIBUTE_CSV_HEADER: &str =
    "l,r,cases,mean_bytes_on_wire,ci95_lo,ci95_hi,mean_completion_ms,mean_coverage_fraction";

pub const OVERHEAD_CSV_HEADER: &str =
    "k,mean_v,period_s,g_bytes,r_bytes,a_bytes,eta_analytic_bit_s,eta_codec_bit_s";

pub fn overhead_csv_rows(r: &OverheadRecord) -> Vec<Vec<String>> {
    let sizes = NominalSizes::default();
    vec![vec![
        r.k.to_string(),
        fmt(r.mean_v),
        fmt(r.period_s),
        sizes.registration.to_string(),
        sizes.response.to_string(),
        sizes.ack.to_string(),
        fmt(r.eta_analytic_bit_s),
        fmt(r.eta_codec_bit_s),
    ]]
}

pub const PARTIAL_CSV_HEADER: &str = "fraction,configs,mean_eta_bit_s,ci95_lo,ci95_hi";

pub fn partial_csv_rows(records: &[PartialRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                fmt(r.fraction),
                r.configs.to_string(),
                fmt(r.mean_eta_bit_s),
                fmt(r.ci_lo),
                fmt(r.ci_hi),
            ]
        })
        .collect()
}

/// Outcome of a full experiment execution: summary lines for the console
/// and trace digests for determinism checks.
pub struct ExecSummary {
    pub lines: Vec<String>,
    pub traces: Vec<TraceDigest>,
    pub csv_files: Vec<String>,
}

/// Runs the scenario's experiment and writes its CSV into `out_dir`.
pub fn execute(
    built: &BuiltScenario,
    base_seed: u64,
    out_dir: &Path,
) -> Result<ExecSummary, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut lines = Vec::new();
    let mut traces = Vec::new();
    let mut csv_files = Vec::new();
    match built.experiment.kind {
        ExperimentKind::Discover => {
            let (record, runs) = run_discovery_experiment(built, base_seed)?;
            traces.extend(runs.iter().map(|r| r.trace));
            let path = out_dir.join("discovery.csv");
            write_csv(&path, SWEEP_CSV_HEADER, &sweep_csv_rows(std::slice::from_ref(&record)))?;
            csv_files.push(path.display().to_string());
            lines.push(format!(
                "discover: pts={} runs={} mean_ngc={:.2} ci95=[{:.2},{:.2}] mean_t_gd={:.1}s",
                record.pts_size, record.runs, record.mean_ngc, record.ci_lo, record.ci_hi,
                record.mean_t_gd_s
            ));
        }
        ExperimentKind::Sweep => {
            let results = run_sweep_experiment(built, base_seed)?;
            let records: Vec<SweepRecord> = results.iter().map(|(r, _)| r.clone()).collect();
            for (_, runs) in &results {
                traces.extend(runs.iter().map(|r| r.trace));
            }
            let path = out_dir.join("sweep.csv");
            write_csv(&path, SWEEP_CSV_HEADER, &sweep_csv_rows(&records))?;
            csv_files.push(path.display().to_string());
            for r in &records {
                lines.push(format!(
                    "sweep: pts={} mean_ngc={:.2} ci95=[{:.2},{:.2}] mean_t_gd={:.1}s",
                    r.pts_size, r.mean_ngc, r.ci_lo, r.ci_hi, r.mean_t_gd_s
                ));
            }
        }
        ExperimentKind::Distribute => {
            let exp = run_distribution_experiment(built, base_seed)?;
            traces.extend(exp.traces.iter().copied());
            let path = out_dir.join("distribute.csv");
            write_csv(&path, DISTRIBUTE_CSV_HEADER, &distribute_csv_rows(&exp.groups))?;
            csv_files.push(path.display().to_string());
            lines.push(format!(
                "distribute: {} cases over {} (L,r) groups",
                exp.cases.len(),
                exp.groups.len()
            ));
            if let Some(worst) = exp
                .groups
                .iter()
                .max_by(|a, b| a.mean_bytes.total_cmp(&b.mean_bytes))
            {
                lines.push(format!(
                    "distribute: worst group L={} r={} mean_bytes={:.0} mean_completion={:.0}ms",
                    worst.l, worst.r, worst.mean_bytes, worst.mean_completion_ms
                ));
            }
        }
        ExperimentKind::Overhead => {
            let (record, run_traces) = run_overhead_experiment(built, base_seed)?;
            traces.extend(run_traces);
            let path = out_dir.join("overhead.csv");
            write_csv(&path, OVERHEAD_CSV_HEADER, &overhead_csv_rows(&record))?;
            csv_files.push(path.display().to_string());
            lines.push(format!(
                "overhead: K={} mean_v={:.3} eta_analytic={:.0} bit/s ({:.1} Kbit/s), eta_codec={:.0} bit/s",
                record.k,
                record.mean_v,
                record.eta_analytic_bit_s,
                record.eta_analytic_bit_s / 1_000.0,
                record.eta_codec_bit_s
            ));
        }
        ExperimentKind::Partial => {
            let (records, run_traces) = run_partial_experiment(built, base_seed)?;
            traces.extend(run_traces);
            let path = out_dir.join("partial.csv");
            write_csv(&path, PARTIAL_CSV_HEADER, &partial_csv_rows(&records))?;
            csv_files.push(path.display().to_string());
            for r in &records {
                lines.push(format!(
                    "partial: fraction={:.2} configs={} mean_eta={:.0} bit/s",
                    r.fraction, r.configs, r.mean_eta_bit_s
                ));
            }
        }
    }
    Ok(ExecSummary {
        lines,
        traces,
        csv_files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn desk_scenario(file: &str) -> BuiltScenario {
        let s = Scenario::parse(&format!("[topology]\nfile = \"{file}\"")).unwrap();
        let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"));
        crate::scenario::build_scenario(&s, dir).unwrap()
    }

    #[test]
    fn two_node_overlay_converges_in_one_cycle() {
        let s = Scenario::parse("[topology]\nfile = \"line5.txt\"").unwrap();
        let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"));
        let mut built = crate::scenario::build_scenario(&s, dir).unwrap();
        let members: BTreeSet<NodeId> = [NodeId(0), NodeId(1)].into_iter().collect();
        built = built.with_members(&members);
        let (_, run) = run_discovery(&built, 3).unwrap();
        assert_eq!(run.ngc[&NodeId(0)], 1);
        assert_eq!(run.ngc[&NodeId(1)], 1);
        assert_eq!(run.t_gd, built.gossip.period);
    }

    #[test]
    fn line_discovery_converges_and_metrics_match_topology() {
        let built = desk_scenario("line5.txt");
        let (sim, run) = run_discovery(&built, 11).unwrap();
        assert_eq!(run.ngc.len(), 5);
        // every neighbor entry's measured hops equal the true IP distance
        for node in sim.nodes() {
            for e in node.discovery.pet().neighbors() {
                let peer = e.peer.addr.node().unwrap();
                assert_eq!(e.ip_hops as u32, sim.topo.ip_distance(node.id, peer));
            }
        }
    }

    #[test]
    fn partial_deployment_neighbors_keep_true_distances() {
        // members 0, 2, 4 on the five-node line: every OSP neighbor sits
        // two IP hops away and the PeT must say so
        let s = Scenario::parse("[topology]\nfile = \"line5.txt\"").unwrap();
        let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"));
        let built = crate::scenario::build_scenario(&s, dir).unwrap();
        let members: BTreeSet<NodeId> = [NodeId(0), NodeId(2), NodeId(4)].into_iter().collect();
        let partial = built.with_members(&members);
        let (sim, _) = run_discovery(&partial, 8).unwrap();
        for node in sim.nodes() {
            for e in node.discovery.pet().neighbors() {
                let peer = e.peer.addr.node().unwrap();
                assert_eq!(e.ip_hops, 2, "distance recorded for {peer:?}");
                assert_eq!(e.ip_hops as u32, sim.topo.ip_distance(node.id, peer));
            }
        }
        let eta = eta_from_simulation(&sim, &NominalSizes::default(), partial.gossip.period).unwrap();
        // K = 3, v = 2: 3 x 2 x 480 x 8 / 5
        assert_eq!(eta, 4_608.0);
    }

    #[test]
    fn empty_record_set_writes_header_only() {
        let path = std::env::temp_dir().join("osp-harness-empty.csv");
        write_csv(&path, SWEEP_CSV_HEADER, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{SWEEP_CSV_HEADER}\n"));
    }

    #[test]
    fn eta_uniform_matches_hand_arithmetic() {
        let sizes = NominalSizes::default();
        // 73 × 1 × (184+184+112) × 8 / 5
        let eta = eta_uniform(73, 1.0, &sizes, 5_000_000);
        assert_eq!(eta, 56_064.0);
        assert_eq!(eta_uniform(0, 1.0, &sizes, 5_000_000), 0.0);
    }

    #[test]
    fn line_distribution_covers_oracle() {
        let built = desk_scenario("line5.txt");
        let (sim, _) = run_discovery(&built, 5).unwrap();
        let snapshot = sim.snapshot_nodes();
        let case = run_distribution_case(
            &built,
            &snapshot,
            5,
            NodeId(0),
            NodeId(4),
            1,
            77,
            0.0,
            false,
        );
        assert_eq!(case.l, 4);
        assert_eq!(case.coverage, case.oracle);
        assert_eq!(case.coverage.len(), 5);
        assert!(case.complete);
        assert!(case.all_idle);
        assert!(case.quiescent);
        // stack: one element per node, depth = forwarding distance from 0
        assert_eq!(case.result.len(), 5);
        for e in &case.result {
            assert_eq!(e.depth, e.node.0, "line depths equal node index");
        }
    }

    #[test]
    fn sampled_groups_respect_bounds() {
        let s = Scenario::parse("[topology]\nfile = \"geant.gml\"").unwrap();
        let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"));
        let built = crate::scenario::build_scenario(&s, dir).unwrap();
        let a = sample_pairs_by_distance(&built.topo, 10, 42);
        let b = sample_pairs_by_distance(&built.topo, 10, 42);
        assert_eq!(a, b);
        for (_, pairs) in &a {
            assert!(pairs.len() <= 10);
            assert!(!pairs.is_empty());
        }
        assert!(a.contains_key(&1));
        assert!(a.contains_key(&7));
    }
}
