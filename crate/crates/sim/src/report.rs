//! Report rendering: aligned text or one JSON object per line.

use std::fmt::Write;

use qkdn_core::adversary::AuditReport;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ScenarioConfig;
use crate::metrics::Counts;
use crate::scenario::{ComparisonRow, PlotRow, ScenarioReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Text,
    JsonLines,
}

fn kv(value: &impl Serialize) -> String {
    match serde_json::to_value(value) {
        Ok(Value::Object(map)) => map
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" "),
        _ => String::new(),
    }
}

fn push_json(out: &mut String, v: Value) {
    out.push_str(&v.to_string());
    out.push('\n');
}

fn header_records(r: &ScenarioReport, config: &ScenarioConfig) -> Vec<Value> {
    let mut v = vec![json!({
        "record": "scenario",
        "protocol": r.protocol.as_str(),
        "seed": config.seed,
        "provider": config.provider,
    })];
    for id in r.graph.node_ids() {
        v.push(json!({ "record": "node", "id": id.0, "label": r.graph.label(id) }));
    }
    v.push(json!({ "record": "path", "ids": r.path.iter().map(|n| n.0).collect::<Vec<_>>() }));
    v.push(json!({
        "record": "outcome",
        "status": r.outcome.status(),
        "node": r.outcome.node().map(|n| n.0),
        "kind": r.outcome.kind().map(|k| k.as_str()),
        "exit_code": r.outcome.exit_code(),
    }));
    v
}

fn header_text(r: &ScenarioReport, config: &ScenarioConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario protocol={} seed={} provider={}",
        r.protocol, config.seed, config.provider
    );
    for id in r.graph.node_ids() {
        let _ = writeln!(out, "node id={} label={}", id.0, r.graph.label(id));
    }
    let ids: Vec<String> = r.path.iter().map(|n| n.0.to_string()).collect();
    let _ = writeln!(out, "path ids={}", ids.join(","));
    let _ = write!(out, "outcome status={}", r.outcome.status());
    if let Some(n) = r.outcome.node() {
        let _ = write!(out, " node={}", n.0);
    }
    if let Some(k) = r.outcome.kind() {
        let _ = write!(out, " kind={}", k.as_str());
    }
    let _ = writeln!(out, " exit={}", r.outcome.exit_code());
    out
}

fn metrics_text(r: &ScenarioReport) -> String {
    let m = &r.metrics;
    let mut out = String::new();
    let phases: [(&str, &Counts); 3] = [("total", &m.total), ("setup", &m.setup), ("delivery", &m.delivery)];
    for (name, c) in phases {
        let _ = writeln!(out, "metrics phase={name} {}", kv(c));
    }
    let _ = writeln!(
        out,
        "latency delivery={} setup={} intermediates={}",
        m.latency, m.setup_latency, m.intermediates
    );
    for h in &m.per_hop {
        let _ = writeln!(out, "hop node={} setup={} delivery={}", h.node, h.setup, h.delivery);
    }
    if !m.secret_sha256.is_empty() {
        let _ = writeln!(out, "secret sha256={}", m.secret_sha256);
    }
    out
}

fn audit_records(a: &AuditReport) -> Vec<Value> {
    let ids = |s: &std::collections::BTreeSet<_>| s.iter().map(|n: &qkdn_core::topology::NodeId| n.0).collect::<Vec<_>>();
    let mut v = Vec::new();
    for s in &a.secrecy {
        v.push(json!({
            "record": "secrecy",
            "party": s.party.label(),
            "role": s.role.as_str(),
            "derivable": s.derivable,
            "replayed": s.replayed,
            "path": s.path,
        }));
    }
    for i in &a.anonymity {
        v.push(json!({
            "record": "anonymity",
            "node": i.node.0,
            "view": ids(&i.view),
            "allowed": i.allowed.as_ref().map(ids),
            "within_bound": i.within_bound(),
        }));
    }
    for at in &a.attacks {
        v.push(json!({ "record": "attack", "attack": at.attack, "outcome": at.outcome }));
    }
    v
}

/// Outcome and metrics.
pub fn run_report(r: &ScenarioReport, config: &ScenarioConfig, format: Format) -> String {
    match format {
        Format::Text => {
            let mut out = header_text(r, config);
            out.push_str(&metrics_text(r));
            for at in &r.audit.attacks {
                let _ = writeln!(out, "attack {} outcome={}", at.attack, at.outcome);
            }
            out
        }
        Format::JsonLines => {
            let mut out = String::new();
            for v in header_records(r, config) {
                push_json(&mut out, v);
            }
            let mut m = serde_json::to_value(&r.metrics).unwrap_or(Value::Null);
            if let Value::Object(map) = &mut m {
                map.insert("record".into(), "metrics".into());
            }
            push_json(&mut out, m);
            for at in &r.audit.attacks {
                push_json(&mut out, json!({ "record": "attack", "attack": at.attack, "outcome": at.outcome }));
            }
            out
        }
    }
}

/// Outcome, secrecy and anonymity verdicts, attack outcomes and the full
/// event transcript.
pub fn audit_report(r: &ScenarioReport, config: &ScenarioConfig, format: Format) -> String {
    match format {
        Format::Text => {
            let mut out = header_text(r, config);
            out.push_str(&r.audit.to_text());
            for e in r.transcript.events() {
                let _ = writeln!(out, "event {}", e.to_line());
            }
            out
        }
        Format::JsonLines => {
            let mut out = String::new();
            for v in header_records(r, config).into_iter().chain(audit_records(&r.audit)) {
                push_json(&mut out, v);
            }
            for e in r.transcript.events() {
                push_json(&mut out, json!({ "record": "event", "line": e.to_line() }));
            }
            out
        }
    }
}

const COMPARE_COLUMNS: [&str; 12] = [
    "protocol",
    "status",
    "exit",
    "kem_ops",
    "pqc_sym_ops",
    "sym_enc",
    "sym_dec",
    "signs",
    "verifies",
    "link_keys",
    "bus_bytes",
    "latency",
];

fn table(columns: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| rows.iter().map(|r| r[i].len()).chain([c.len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let s: Vec<String> = cells
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        s.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&mut columns.iter().copied());
    for r in rows {
        out.push_str(&line(&mut r.iter().map(String::as_str)));
    }
    out
}

/// One row per protocol. Counters are whole-run totals except signs and
/// verifies, which count the delivery phase.
pub fn comparison_report(rows: &[ComparisonRow], format: Format) -> String {
    match format {
        Format::Text => {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let t = &r.metrics.total;
                    let d = &r.metrics.delivery;
                    vec![
                        r.protocol.clone(),
                        r.status.clone(),
                        r.exit_code.to_string(),
                        t.kem_ops.to_string(),
                        t.pqc_sym_ops.to_string(),
                        t.sym_encrypts.to_string(),
                        t.sym_decrypts.to_string(),
                        d.signs.to_string(),
                        d.verifies.to_string(),
                        t.link_keys_consumed.to_string(),
                        t.bus_bytes.to_string(),
                        r.metrics.latency.to_string(),
                    ]
                })
                .collect();
            table(&COMPARE_COLUMNS, &cells)
        }
        Format::JsonLines => {
            let mut out = String::new();
            for r in rows {
                push_json(&mut out, json!({ "record": "comparison", "row": r }));
            }
            out
        }
    }
}

const PLOT_COLUMNS: [&str; 12] = [
    "n",
    "protocol",
    "status",
    "kem_ops",
    "pqc_sym_ops",
    "signs",
    "verifies",
    "link_keys",
    "bus_messages",
    "bus_bytes",
    "latency",
    "setup_latency",
];

/// Columnar series, one row per (n, protocol).
pub fn plot_report(rows: &[PlotRow], format: Format) -> String {
    match format {
        Format::Text => {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.protocol.clone(),
                        r.status.clone(),
                        r.kem_ops.to_string(),
                        r.pqc_sym_ops.to_string(),
                        r.signs.to_string(),
                        r.verifies.to_string(),
                        r.link_keys_consumed.to_string(),
                        r.bus_messages.to_string(),
                        r.bus_bytes.to_string(),
                        r.latency.to_string(),
                        r.setup_latency.to_string(),
                    ]
                })
                .collect();
            table(&PLOT_COLUMNS, &cells)
        }
        Format::JsonLines => {
            let mut out = String::new();
            for r in rows {
                let mut v = serde_json::to_value(r).unwrap_or(Value::Null);
                if let Value::Object(map) = &mut v {
                    map.insert("record".into(), "series".into());
                }
                push_json(&mut out, v);
            }
            out
        }
    }
}
