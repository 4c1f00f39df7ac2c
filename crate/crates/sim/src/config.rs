//! Scenario files.
//!
//! A scenario is a TOML document. See `docs/config.md` for an annotated
//! example; the short form is:
//!
//! ```toml
//! seed = 7
//! provider = "test-deterministic"
//! protocol = "onion"
//! src = "A"
//! dst = "D"
//! nodes = ["A", "B", "C", "D"]
//!
//! [[edges]]
//! pair = ["A", "B"]
//! pool_size = 16
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use qkdn_core::crypto::PROVIDER_NAMES;
use qkdn_core::onion::{OnionParams, DEFAULT_BLOCK_LEN, DEFAULT_LAYER_LEN};
use qkdn_core::topology::{Phase, TamperStage};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Onion,
    KeyRelay,
    KeyRelayHybrid,
    Tn,
    TnHybrid,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::KeyRelay,
        Protocol::KeyRelayHybrid,
        Protocol::Tn,
        Protocol::TnHybrid,
        Protocol::Onion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Onion => "onion",
            Protocol::KeyRelay => "key-relay",
            Protocol::KeyRelayHybrid => "key-relay-hybrid",
            Protocol::Tn => "tn",
            Protocol::TnHybrid => "tn-hybrid",
        }
    }

    pub fn needs_tn(self) -> bool {
        matches!(self, Protocol::Tn | Protocol::TnHybrid)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown protocol `{s}` (expected one of {})", protocol_list()))
    }
}

fn protocol_list() -> String {
    Protocol::ALL.map(Protocol::as_str).join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub pair: [String; 2],
    pub pool_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Shortest,
    RandomWalk,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitConfig {
    pub policy: PolicyName,
    /// Upper bound on relays for `random-walk`.
    #[serde(default)]
    pub max_intermediates: Option<usize>,
    /// `P_1..P_{n+1}` for `fixed`, destination last.
    #[serde(default)]
    pub hops: Option<Vec<String>>,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        Self {
            policy: PolicyName::Shortest,
            max_intermediates: None,
            hops: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    /// `L`
    pub block_len: usize,
    /// `M`
    pub layer_len: usize,
    /// Audit closure depth.
    pub depth: usize,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            block_len: DEFAULT_BLOCK_LEN,
            layer_len: DEFAULT_LAYER_LEN,
            depth: qkdn_core::adversary::DEFAULT_DEPTH,
        }
    }
}

impl ParamsConfig {
    pub fn onion(&self) -> OnionParams {
        OnionParams {
            block_len: self.block_len,
            layer_len: self.layer_len,
        }
    }
}

/// Latency weight per crypto operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weights {
    pub kem_encapsulate: u64,
    pub kem_decapsulate: u64,
    pub sym_encrypt: u64,
    pub sym_decrypt: u64,
    pub raw_encrypt: u64,
    pub raw_decrypt: u64,
    pub sign: u64,
    pub verify: u64,
    pub link_seal: u64,
    pub link_verify: u64,
    pub link_decrypt: u64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            kem_encapsulate: 40,
            kem_decapsulate: 40,
            sym_encrypt: 2,
            sym_decrypt: 2,
            raw_encrypt: 1,
            raw_decrypt: 1,
            sign: 60,
            verify: 20,
            link_seal: 1,
            link_verify: 1,
            link_decrypt: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseName {
    Setup,
    Delivery,
}

impl From<PhaseName> for Phase {
    fn from(p: PhaseName) -> Self {
        match p {
            PhaseName::Setup => Phase::Setup,
            PhaseName::Delivery => Phase::Delivery,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageName {
    Wire,
    Unwrapped,
}

impl From<StageName> for TamperStage {
    fn from(s: StageName) -> Self {
        match s {
            StageName::Wire => TamperStage::Wire,
            StageName::Unwrapped => TamperStage::Unwrapped,
        }
    }
}

fn default_delivery() -> PhaseName {
    PhaseName::Delivery
}

fn default_wire() -> StageName {
    StageName::Wire
}

fn default_mask() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AttackConfig {
    /// Flip `mask` into byte `offset` of the `message`-th bus message of `phase`.
    Tamper {
        #[serde(default = "default_delivery")]
        phase: PhaseName,
        message: usize,
        offset: usize,
        #[serde(default = "default_mask")]
        mask: u8,
        #[serde(default = "default_wire")]
        stage: StageName,
    },
    /// Deliver a second copy of the `message`-th bus message of `phase`.
    Replay {
        #[serde(default = "default_delivery")]
        phase: PhaseName,
        message: usize,
    },
    /// Honest-but-curious compromise of `node`.
    Compromise { node: String },
}

impl AttackConfig {
    pub fn describe(&self) -> String {
        match self {
            AttackConfig::Tamper { phase, message, offset, mask, stage } => format!(
                "tamper phase={} message={message} offset={offset} mask=0x{mask:02x} stage={}",
                Phase::from(*phase).as_str(),
                match stage {
                    StageName::Wire => "wire",
                    StageName::Unwrapped => "unwrapped",
                }
            ),
            AttackConfig::Replay { phase, message } => {
                format!("replay phase={} message={message}", Phase::from(*phase).as_str())
            }
            AttackConfig::Compromise { node } => format!("compromise node={node}"),
        }
    }
}

fn default_provider() -> String {
    qkdn_core::crypto::DeterministicProvider::NAME.into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default = "default_provider")]
    pub provider: String,
    pub protocol: Protocol,
    pub src: String,
    pub dst: String,
    #[serde(default)]
    pub tn: Option<String>,
    pub nodes: Vec<String>,
    #[serde(default)]
    pub edges: Vec<EdgeConfig>,
    #[serde(default)]
    pub circuit: CircuitConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub attacks: Vec<AttackConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid `{field}`: {message}")]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

/// Parses and validates a scenario.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ParseError {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ValidationError {
    ValidationError {
        field: field.into(),
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut known = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.is_empty() {
                return Err(invalid(format!("nodes[{i}]"), "empty node name"));
            }
            if !known.insert(n.as_str()) {
                return Err(invalid(format!("nodes[{i}]"), format!("duplicate node `{n}`")));
            }
        }
        if known.is_empty() {
            return Err(invalid("nodes", "at least one node is required"));
        }
        let node = |field: &str, name: &str| -> Result<(), ValidationError> {
            if known.contains(name) {
                Ok(())
            } else {
                Err(invalid(field, format!("unknown node `{name}`")))
            }
        };
        let mut pairs = BTreeSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            let field = format!("edges[{i}].pair");
            node(&field, &e.pair[0])?;
            node(&field, &e.pair[1])?;
            if e.pair[0] == e.pair[1] {
                return Err(invalid(field, "self-loop"));
            }
            let key = if e.pair[0] < e.pair[1] {
                (&e.pair[0], &e.pair[1])
            } else {
                (&e.pair[1], &e.pair[0])
            };
            if !pairs.insert(key) {
                return Err(invalid(field, "duplicate edge"));
            }
            if e.pool_size == 0 {
                return Err(invalid(format!("edges[{i}].pool_size"), "must be at least 1"));
            }
        }
        if !PROVIDER_NAMES.contains(&self.provider.as_str()) {
            return Err(invalid(
                "provider",
                format!("unknown provider `{}` (expected one of {})", self.provider, PROVIDER_NAMES.join(", ")),
            ));
        }
        node("src", &self.src)?;
        node("dst", &self.dst)?;
        if self.src == self.dst {
            return Err(invalid("dst", "must differ from src"));
        }
        match (&self.tn, self.protocol.needs_tn()) {
            (Some(tn), _) => node("tn", tn)?,
            (None, true) => {
                return Err(invalid("tn", format!("required by protocol `{}`", self.protocol)));
            }
            (None, false) => {}
        }
        match self.circuit.policy {
            PolicyName::Shortest => {}
            PolicyName::RandomWalk => match self.circuit.max_intermediates {
                Some(n) if n >= 1 => {}
                _ => return Err(invalid("circuit.max_intermediates", "random-walk needs a bound of at least 1")),
            },
            PolicyName::Fixed => {
                let hops = self
                    .circuit
                    .hops
                    .as_ref()
                    .filter(|h| !h.is_empty())
                    .ok_or_else(|| invalid("circuit.hops", "fixed policy needs a hop list"))?;
                for (i, h) in hops.iter().enumerate() {
                    node(&format!("circuit.hops[{i}]"), h)?;
                }
                if hops.last() != Some(&self.dst) {
                    return Err(invalid("circuit.hops", "last hop must be dst"));
                }
            }
        }
        self.params
            .onion()
            .validate()
            .map_err(|e| invalid("params", e.to_string()))?;
        if !(1..=8).contains(&self.params.depth) {
            return Err(invalid("params.depth", "must be between 1 and 8"));
        }
        for (i, a) in self.attacks.iter().enumerate() {
            match a {
                AttackConfig::Tamper { message, mask, .. } => {
                    if *message == 0 {
                        return Err(invalid(format!("attacks[{i}].message"), "messages are numbered from 1"));
                    }
                    if *mask == 0 {
                        return Err(invalid(format!("attacks[{i}].mask"), "must flip at least one bit"));
                    }
                }
                AttackConfig::Replay { message, .. } => {
                    if *message == 0 {
                        return Err(invalid(format!("attacks[{i}].message"), "messages are numbered from 1"));
                    }
                }
                AttackConfig::Compromise { node: n } => node(&format!("attacks[{i}].node"), n)?,
            }
        }
        Ok(())
    }

    /// A line `A - R1 - ... - Rn - B` with `n` relays.
    pub fn line(n: usize, protocol: Protocol, seed: u64, pool_size: usize) -> Self {
        let mut nodes = vec!["A".to_string()];
        nodes.extend((1..=n).map(|i| format!("R{i}")));
        nodes.push("B".into());
        let edges = nodes
            .windows(2)
            .map(|w| EdgeConfig {
                pair: [w[0].clone(), w[1].clone()],
                pool_size,
            })
            .collect();
        Self {
            seed,
            provider: default_provider(),
            protocol,
            src: "A".into(),
            dst: "B".into(),
            tn: Some("B".into()),
            nodes,
            edges,
            circuit: CircuitConfig::default(),
            params: ParamsConfig::default(),
            weights: Weights::default(),
            attacks: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
protocol = "onion"
src = "A"
dst = "D"
nodes = ["A", "B", "C", "D"]
edges = [
  { pair = ["A", "B"], pool_size = 8 },
  { pair = ["B", "C"], pool_size = 8 },
  { pair = ["C", "D"], pool_size = 8 },
]
"#;

    #[test]
    fn minimal_line_is_valid() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.protocol, Protocol::Onion);
        assert_eq!(c.provider, "test-deterministic");
        assert_eq!(c.params, ParamsConfig::default());
        assert_eq!(c.edges.len(), 3);
    }

    #[test]
    fn trusted_node_protocol_requires_tn() {
        let text = MINIMAL.replace("\"onion\"", "\"tn\"");
        match parse_config(&text) {
            Err(ConfigError::Validation(v)) => assert_eq!(v.field, "tn"),
            other => panic!("{other:?}"),
        }
        assert!(parse_config(&format!("tn = \"C\"\n{text}")).is_ok());
    }

    #[test]
    fn unknown_protocol_is_rejected_with_position() {
        let text = MINIMAL.replace("\"onion\"", "\"mixnet\"");
        match parse_config(&text) {
            Err(ConfigError::Parse(p)) => {
                assert_eq!(p.line, 3);
                assert!(p.message.contains("mixnet"), "{}", p.message);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_and_dangling_references_are_rejected() {
        assert!(matches!(parse_config(&format!("colour = 1\n{MINIMAL}")), Err(ConfigError::Parse(_))));
        let text = MINIMAL.replace("[\"C\", \"D\"]", "[\"C\", \"E\"]");
        match parse_config(&text) {
            Err(ConfigError::Validation(v)) => assert_eq!(v.field, "edges[2].pair"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn attacks_parse_with_defaults() {
        let text = format!(
            "{MINIMAL}\n[[attacks]]\nkind = \"tamper\"\nmessage = 2\noffset = 100\n\n[[attacks]]\nkind = \"compromise\"\nnode = \"B\"\n"
        );
        let c = parse_config(&text).unwrap();
        assert_eq!(
            c.attacks[0],
            AttackConfig::Tamper {
                phase: PhaseName::Delivery,
                message: 2,
                offset: 100,
                mask: 1,
                stage: StageName::Wire
            }
        );
        assert_eq!(c.attacks[1].describe(), "compromise node=B");
    }

    #[test]
    fn generated_lines_validate() {
        for n in 0..5 {
            ScenarioConfig::line(n, Protocol::TnHybrid, 1, 4).validate().unwrap();
        }
    }
}
