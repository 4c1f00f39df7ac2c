//! Scenario orchestration: topology, attacks, protocol run, metrics, audit.

use qkdn_core::adversary::{
    anonymity_audit, secrecy_audit, AttackOutcome, AuditParams, AuditReport, ErrorKind, Event, Learned, Party,
    PlainKind, Transcript,
};
use qkdn_core::baselines::{keyrelay_hybrid_run, keyrelay_run, tn_hybrid_run, tn_run};
use qkdn_core::crypto::{hash, hash_parts, provider_by_name, CryptoError, Seed};
use qkdn_core::onion::onion_run;
use qkdn_core::topology::{
    load_topology, select_circuit, CircuitPolicy, ClassicalBus, EdgeSpec, Network, NodeId, QkdnGraph, ReplaySpec,
    RunError, TamperSpec, TopologyError, TopologySpec,
};
use serde::Serialize;

use crate::config::{AttackConfig, ConfigError, PolicyName, Protocol, ScenarioConfig};
use crate::metrics::{self, Metrics};

pub const EXIT_DELIVERED: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_INTEGRITY: i32 = 2;
pub const EXIT_LINK_AUTH: i32 = 3;
pub const EXIT_POOL_EXHAUSTED: i32 = 4;
pub const EXIT_CONFIG: i32 = 5;
pub const EXIT_TOPOLOGY: i32 = 6;
pub const EXIT_HANDSHAKE: i32 = 7;
pub const EXIT_CORRUPTED: i32 = 8;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("provider: {0}")]
    Provider(#[from] CryptoError),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) | ScenarioError::Provider(_) => EXIT_CONFIG,
            ScenarioError::Topology(_) => EXIT_TOPOLOGY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// `S` reached the destination intact.
    Delivered { node: NodeId },
    /// The run completed without delivery; `node` dropped a message.
    Discarded { node: NodeId, kind: ErrorKind },
    /// A fatal error stopped the run.
    Aborted { node: NodeId, kind: ErrorKind },
    /// The destination accepted a value other than `S`.
    Corrupted { node: NodeId },
    Undelivered,
}

impl Outcome {
    pub fn status(&self) -> &'static str {
        match self {
            Outcome::Delivered { .. } => "delivered",
            Outcome::Discarded { .. } => "discarded",
            Outcome::Aborted { .. } => "aborted",
            Outcome::Corrupted { .. } => "corrupted",
            Outcome::Undelivered => "undelivered",
        }
    }

    pub fn node(&self) -> Option<NodeId> {
        match *self {
            Outcome::Delivered { node }
            | Outcome::Discarded { node, .. }
            | Outcome::Aborted { node, .. }
            | Outcome::Corrupted { node } => Some(node),
            Outcome::Undelivered => None,
        }
    }

    pub fn kind(&self) -> Option<ErrorKind> {
        match *self {
            Outcome::Discarded { kind, .. } | Outcome::Aborted { kind, .. } => Some(kind),
            _ => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Delivered { .. } => EXIT_DELIVERED,
            Outcome::Corrupted { .. } => EXIT_CORRUPTED,
            Outcome::Undelivered => EXIT_OTHER,
            Outcome::Discarded { kind, .. } | Outcome::Aborted { kind, .. } => match kind {
                ErrorKind::AuthenticationFailure => EXIT_LINK_AUTH,
                ErrorKind::TagInvalid | ErrorKind::LayerMalformed | ErrorKind::SizeViolation | ErrorKind::Replay => {
                    EXIT_INTEGRITY
                }
                ErrorKind::PoolExhausted => EXIT_POOL_EXHAUSTED,
                ErrorKind::SignatureRejected => EXIT_HANDSHAKE,
                ErrorKind::Protocol => EXIT_OTHER,
            },
        }
    }
}

/// Everything one scenario run produces.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub protocol: Protocol,
    pub graph: QkdnGraph,
    /// Initiator first.
    pub path: Vec<NodeId>,
    pub outcome: Outcome,
    pub secret: Option<Vec<u8>>,
    pub transcript: Transcript,
    pub metrics: Metrics,
    pub audit: AuditReport,
}

fn scenario_seed(seed: u64, label: &[u8]) -> Seed {
    Seed::from_bytes(hash_parts(&[b"qkdn-scenario", label, &seed.to_be_bytes()]))
}

fn topology_spec(config: &ScenarioConfig) -> TopologySpec {
    TopologySpec {
        nodes: config.nodes.clone(),
        edges: config
            .edges
            .iter()
            .map(|e| EdgeSpec {
                a: e.pair[0].clone(),
                b: e.pair[1].clone(),
                pool_size: e.pool_size,
            })
            .collect(),
        seed: scenario_seed(config.seed, b"topology"),
    }
}

fn policy(config: &ScenarioConfig, graph: &QkdnGraph) -> Result<CircuitPolicy, TopologyError> {
    Ok(match config.circuit.policy {
        PolicyName::Shortest => CircuitPolicy::Shortest,
        PolicyName::RandomWalk => CircuitPolicy::RandomWalk {
            max_intermediates: config.circuit.max_intermediates.unwrap_or(1),
        },
        PolicyName::Fixed => CircuitPolicy::Fixed(
            config
                .circuit
                .hops
                .iter()
                .flatten()
                .map(|h| graph.require(h))
                .collect::<Result<_, _>>()?,
        ),
    })
}

fn tamper_spec(a: &AttackConfig) -> Option<TamperSpec> {
    match *a {
        AttackConfig::Tamper { phase, message, offset, mask, stage } => Some(TamperSpec {
            phase: phase.into(),
            message,
            offset,
            mask,
            stage: stage.into(),
        }),
        _ => None,
    }
}

fn replay_spec(a: &AttackConfig) -> Option<ReplaySpec> {
    match *a {
        AttackConfig::Replay { phase, message } => Some(ReplaySpec {
            phase: phase.into(),
            message,
        }),
        _ => None,
    }
}

fn initiator_secret(transcript: &Transcript, src: NodeId) -> Option<Vec<u8>> {
    transcript.events().iter().find_map(|e| match e {
        Event::Learn {
            node,
            item: Learned::Plaintext { kind: PlainKind::Secret, bytes },
            ..
        } if *node == src => Some(bytes.clone()),
        _ => None,
    })
}

fn outcome_of(
    transcript: &Transcript,
    result: &Result<(), RunError>,
    src: NodeId,
    dst: NodeId,
    secret: Option<&[u8]>,
) -> Outcome {
    if let Err(e) = result {
        let kind = e.kind();
        let node = transcript
            .errors()
            .filter(|(_, k)| *k == kind)
            .last()
            .map_or(src, |(n, _)| n);
        return Outcome::Aborted { node, kind };
    }
    let expected = secret.map(hash);
    let mut corrupted = false;
    for (node, digest) in transcript.deliveries() {
        if node != dst {
            continue;
        }
        if Some(*digest) == expected {
            return Outcome::Delivered { node };
        }
        corrupted = true;
    }
    if corrupted {
        return Outcome::Corrupted { node: dst };
    }
    match transcript.errors().next() {
        Some((node, kind)) => Outcome::Discarded { node, kind },
        None => Outcome::Undelivered,
    }
}

fn attack_outcomes(
    config: &ScenarioConfig,
    bus: &ClassicalBus,
    transcript: &Transcript,
    outcome: &Outcome,
    audit: &AuditReport,
) -> Vec<AttackOutcome> {
    let (unfired_tampers, unfired_replays) = bus.unapplied();
    let first_error = |phase, want: Option<ErrorKind>| {
        transcript.events().iter().find_map(|e| match e {
            Event::Error { node, phase: p, kind } if *p == phase && want.is_none_or(|w| w == *kind) => {
                Some(format!("node={} kind={}", node.0, kind.as_str()))
            }
            _ => None,
        })
    };
    config
        .attacks
        .iter()
        .map(|a| {
            let outcome = if let Some(spec) = tamper_spec(a) {
                if unfired_tampers.contains(&spec) {
                    "not-fired".to_string()
                } else if let Some(at) = first_error(spec.phase, None) {
                    format!("detected {at}")
                } else if matches!(outcome, Outcome::Delivered { .. }) {
                    "no-effect".to_string()
                } else {
                    "undetected".to_string()
                }
            } else if let Some(spec) = replay_spec(a) {
                if unfired_replays.contains(&spec) {
                    "not-fired".to_string()
                } else if let Some(at) = first_error(spec.phase, Some(ErrorKind::Replay)) {
                    format!("discarded {at}")
                } else {
                    "accepted".to_string()
                }
            } else {
                match audit.verdict(&Party::Attacker) {
                    Some(v) if v.derivable => "secret-derivable=yes".to_string(),
                    Some(_) => "secret-derivable=no".to_string(),
                    None => "secret-derivable=unknown".to_string(),
                }
            };
            AttackOutcome {
                attack: a.describe(),
                outcome,
            }
        })
        .collect()
}

/// Runs one scenario and audits it.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport, ScenarioError> {
    simulate(config, true)
}

/// Runs one scenario; the secrecy audit is skipped when `audit` is false.
pub fn simulate(config: &ScenarioConfig, audit: bool) -> Result<ScenarioReport, ScenarioError> {
    config.validate().map_err(ConfigError::from)?;
    let provider = provider_by_name(&config.provider)?;
    let graph = load_topology(&topology_spec(config), provider.as_ref())?;
    let src = graph.require(&config.src)?;
    let dst = graph.require(&config.dst)?;
    let tn = config.tn.as_deref().map(|t| graph.require(t)).transpose()?;
    let policy = policy(config, &graph)?;

    let mut net = Network::new(provider.as_ref(), graph, scenario_seed(config.seed, b"run"));
    let circuit = {
        let mut rng = net.rng().fork();
        select_circuit(net.graph(), src, dst, &policy, &mut rng)?
    };
    for a in &config.attacks {
        if let Some(spec) = tamper_spec(a) {
            net.bus_mut().tamper_inject(spec);
        } else if let Some(spec) = replay_spec(a) {
            net.bus_mut().schedule_replay(spec);
        } else if let AttackConfig::Compromise { node } = a {
            let id = net.graph().require(node)?;
            net.compromise(id)?;
        }
    }

    let onion = config.params.onion();
    let result = match config.protocol {
        Protocol::Onion => onion_run(&mut net, &circuit, &onion).map(drop),
        Protocol::KeyRelay => keyrelay_run(&mut net, &circuit).map(drop),
        Protocol::KeyRelayHybrid => keyrelay_hybrid_run(&mut net, &circuit).map(drop),
        Protocol::Tn => tn_run(&mut net, &circuit, tn.unwrap_or(dst)).map(drop),
        Protocol::TnHybrid => tn_hybrid_run(&mut net, &circuit, tn.unwrap_or(dst)).map(drop),
    };
    let (graph, bus, transcript) = net.into_parts();
    let path = circuit.path();
    let secret = initiator_secret(&transcript, src);
    let outcome = outcome_of(&transcript, &result, src, dst, secret.as_deref());
    let metrics = metrics::collect(
        &transcript,
        &graph,
        &path,
        &config.weights,
        config.protocol.as_str(),
        secret.as_deref(),
    );

    let nodes: Vec<NodeId> = graph.node_ids().collect();
    let mut report = AuditReport::default();
    if let (true, Some(s)) = (audit, &secret) {
        let params = AuditParams {
            depth: config.params.depth,
            onion: (config.protocol == Protocol::Onion).then_some(onion),
        };
        report.secrecy = secrecy_audit(provider.as_ref(), &transcript, &nodes, (src, dst), s, &params);
    }
    report.anonymity = anonymity_audit(&transcript, &nodes, Some(&path));
    report.attacks = attack_outcomes(config, &bus, &transcript, &outcome, &report);

    Ok(ScenarioReport {
        protocol: config.protocol,
        graph,
        path,
        outcome,
        secret,
        transcript,
        metrics,
        audit: report,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComparisonRow {
    pub protocol: String,
    pub status: String,
    pub exit_code: i32,
    pub metrics: Metrics,
}

fn with_protocol(config: &ScenarioConfig, protocol: Protocol) -> ScenarioConfig {
    let mut c = config.clone();
    c.protocol = protocol;
    if protocol.needs_tn() && c.tn.is_none() {
        c.tn = Some(c.dst.clone());
    }
    c
}

/// Runs `config` once per protocol. Trusted-node protocols fall back to the
/// destination as combiner when the scenario names none.
pub fn compare_protocols(config: &ScenarioConfig, protocols: &[Protocol]) -> Result<Vec<ComparisonRow>, ScenarioError> {
    protocols
        .iter()
        .map(|&p| {
            let r = simulate(&with_protocol(config, p), false)?;
            Ok(ComparisonRow {
                protocol: p.as_str().into(),
                status: r.outcome.status().into(),
                exit_code: r.outcome.exit_code(),
                metrics: r.metrics,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlotRow {
    pub n: usize,
    pub protocol: String,
    pub status: String,
    pub kem_ops: u64,
    pub pqc_sym_ops: u64,
    pub signs: u64,
    pub verifies: u64,
    pub link_keys_consumed: u64,
    pub bus_messages: u64,
    pub bus_bytes: u64,
    pub latency: u64,
    pub setup_latency: u64,
}

/// Sweeps line topologies with `1..=max_n` relays. Provider, sizes, weights
/// and seed come from `config`; the trusted node is the destination.
pub fn plot_series(config: &ScenarioConfig, protocols: &[Protocol], max_n: usize) -> Result<Vec<PlotRow>, ScenarioError> {
    let pool = config.edges.iter().map(|e| e.pool_size).max().unwrap_or(64);
    let mut rows = Vec::new();
    for n in 1..=max_n {
        for &p in protocols {
            let mut c = ScenarioConfig::line(n, p, config.seed, pool);
            c.provider = config.provider.clone();
            c.params = config.params;
            c.weights = config.weights;
            let r = simulate(&c, false)?;
            let m = &r.metrics;
            rows.push(PlotRow {
                n,
                protocol: p.as_str().into(),
                status: r.outcome.status().into(),
                kem_ops: m.total.kem_ops,
                pqc_sym_ops: m.total.pqc_sym_ops,
                signs: m.delivery.signs,
                verifies: m.delivery.verifies,
                link_keys_consumed: m.total.link_keys_consumed,
                bus_messages: m.total.bus_messages,
                bus_bytes: m.total.bus_bytes,
                latency: m.latency,
                setup_latency: m.setup_latency,
            });
        }
    }
    Ok(rows)
}
