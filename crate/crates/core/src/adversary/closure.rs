//! Bounded derivation closure over a knowledge set.
//!
//! Starting from held keys, decrypted plaintexts and observed bus bytes, each
//! round applies every rule to every new (data, key) combination:
//!
//! - `link-unwrap`: open an observed link envelope with a held 32-byte key;
//! - `sym-decrypt`: padded decryption of a short ciphertext with a held key;
//! - `strip-header`: drop a 4-byte node-id prefix from a plain bus message;
//! - `peel`: raw-decrypt the outer layer of an extended onion;
//! - `head-extract`: recover the one-time key from an extended onion's head block.
//!
//! After the last round the target is searched for as a substring of any
//! item, then in the GF(2) span of all 32-byte items (`xor`).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::KnowledgeSet;
use crate::crypto::{CryptoProvider, SymCiphertext, SymKey, BLOCK_LEN, KEY_LEN};
use crate::onion::{ExtendedOnion, HeadBlockPlain, LayerPlain, OnionParams};
use crate::qkd_link::LinkEnvelope;
use crate::topology::Channel;

pub const DEFAULT_DEPTH: usize = 3;
const MAX_SYM_CT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rule {
    LinkUnwrap,
    SymDecrypt,
    StripHeader,
    Peel,
    HeadExtract,
    Xor,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::LinkUnwrap => "link-unwrap",
            Rule::SymDecrypt => "sym-decrypt",
            Rule::StripHeader => "strip-header",
            Rule::Peel => "peel",
            Rule::HeadExtract => "head-extract",
            Rule::Xor => "xor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Key(String),
    Plaintext(String),
    Observed { seq: u64, channel: Channel },
    Derived { rule: Rule, inputs: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub bytes: Vec<u8>,
    pub origin: Origin,
}

/// One re-executable step of a derivation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub output: usize,
    pub rule: Rule,
    pub inputs: Vec<usize>,
}

/// How the target was obtained: base items it rests on and the derived
/// steps in dependency order. The last step (if any) yields the item that
/// contains the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub found_in: usize,
    pub steps: Vec<Step>,
}

pub struct Closure<'a> {
    provider: &'a dyn CryptoProvider,
    params: Option<OnionParams>,
    node_count: u32,
    items: Vec<Item>,
    index: BTreeMap<Vec<u8>, usize>,
}

/// Applies `rule` to concrete inputs; `None` when the rule does not fire.
pub fn apply_rule(
    provider: &dyn CryptoProvider,
    params: Option<&OnionParams>,
    rule: Rule,
    inputs: &[&[u8]],
) -> Option<Vec<u8>> {
    let key = |b: &[u8]| SymKey::from_slice(b);
    match (rule, inputs) {
        (Rule::LinkUnwrap, [env, k]) => {
            let env = LinkEnvelope::from_bytes(env).ok()?;
            env.verify(&key(k)?).ok()?.open(provider).ok()
        }
        (Rule::SymDecrypt, [ct, k]) => {
            if ct.len() > MAX_SYM_CT {
                return None;
            }
            let ct = SymCiphertext::from_bytes(ct).ok()?;
            provider.sym_decrypt(&key(k)?, &ct).ok().filter(|p| !p.is_empty())
        }
        (Rule::StripHeader, [msg]) => (msg.len() > 4).then(|| msg[4..].to_vec()),
        (Rule::Peel, [eo, k]) => {
            let p = params?;
            let eo = ExtendedOnion::from_bytes(eo, p).ok()?;
            let (_, layer) = crate::onion::peel_layer(provider, &key(k)?, &eo.onion, p).ok()?;
            Some(layer)
        }
        (Rule::HeadExtract, [eo, k]) => {
            let p = params?;
            let eo = ExtendedOnion::from_bytes(eo, p).ok()?;
            let mut head = eo.blocks[0].clone();
            provider.raw_decrypt(&key(k)?, &[0; BLOCK_LEN], &mut head).ok()?;
            HeadBlockPlain::parse(&head).map(|h| h.key.as_bytes().to_vec())
        }
        (Rule::Xor, parts) => {
            let mut acc = vec![0u8; KEY_LEN];
            for p in parts {
                if p.len() != KEY_LEN {
                    return None;
                }
                acc.iter_mut().zip(p.iter()).for_each(|(a, b)| *a ^= b);
            }
            Some(acc)
        }
        _ => None,
    }
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

impl<'a> Closure<'a> {
    /// Seeds the item list from `ks` in a fixed order: keys, plaintexts, observed.
    pub fn new(provider: &'a dyn CryptoProvider, params: Option<OnionParams>, node_count: u32, ks: &KnowledgeSet) -> Self {
        let mut c = Self {
            provider,
            params,
            node_count,
            items: Vec::new(),
            index: BTreeMap::new(),
        };
        for (class, bytes) in &ks.keys {
            c.add(bytes.clone(), Origin::Key(class.as_str().into()));
        }
        for (kind, _, bytes) in &ks.plaintexts {
            c.add(bytes.clone(), Origin::Plaintext(kind.as_str().into()));
        }
        for o in &ks.observed {
            c.add(o.bytes.clone(), Origin::Observed { seq: o.seq, channel: o.channel });
        }
        c
    }

    fn add(&mut self, bytes: Vec<u8>, origin: Origin) -> bool {
        if bytes.is_empty() || self.index.contains_key(&bytes) {
            return false;
        }
        self.index.insert(bytes.clone(), self.items.len());
        self.items.push(Item { bytes, origin });
        true
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    fn is_link_envelope(&self, i: usize) -> bool {
        matches!(self.items[i].origin, Origin::Observed { channel: Channel::Link, .. })
    }

    fn has_id_header(&self, i: usize) -> bool {
        let b = &self.items[i].bytes;
        matches!(self.items[i].origin, Origin::Observed { channel: Channel::Plain, .. })
            && b.len() > 4
            && (1..=self.node_count).contains(&u32::from_be_bytes(b[..4].try_into().unwrap()))
    }

    fn looks_like_onion(&self, i: usize) -> bool {
        self.params
            .as_ref()
            .is_some_and(|p| ExtendedOnion::from_bytes(&self.items[i].bytes, p).is_ok())
    }

    /// Runs `depth` rounds of rule application.
    pub fn saturate(&mut self, depth: usize) {
        let mut frontier = 0;
        for _ in 0..depth {
            let end = self.items.len();
            let keys: Vec<usize> = (0..end).filter(|&i| self.items[i].bytes.len() == KEY_LEN).collect();
            let mut found: Vec<(Vec<u8>, Rule, Vec<usize>)> = Vec::new();
            for d in 0..end {
                let envelope = self.is_link_envelope(d);
                let short_ct = {
                    let n = self.items[d].bytes.len();
                    (2 * BLOCK_LEN..=MAX_SYM_CT).contains(&n) && n.is_multiple_of(BLOCK_LEN)
                };
                let onion = self.looks_like_onion(d);
                if d >= frontier && self.has_id_header(d) {
                    if let Some(out) = apply_rule(self.provider, self.params.as_ref(), Rule::StripHeader, &[&self.items[d].bytes]) {
                        found.push((out, Rule::StripHeader, vec![d]));
                    }
                }
                for &k in &keys {
                    if d < frontier && k < frontier {
                        continue;
                    }
                    let pair = [&self.items[d].bytes[..], &self.items[k].bytes[..]];
                    let mut rules: Vec<Rule> = Vec::new();
                    if envelope {
                        rules.push(Rule::LinkUnwrap);
                    }
                    if short_ct {
                        rules.push(Rule::SymDecrypt);
                    }
                    if onion {
                        rules.extend([Rule::Peel, Rule::HeadExtract]);
                    }
                    for rule in rules {
                        if let Some(out) = apply_rule(self.provider, self.params.as_ref(), rule, &pair) {
                            if rule == Rule::Peel && LayerPlain::parse(&out).is_err() {
                                continue;
                            }
                            found.push((out, rule, vec![d, k]));
                        }
                    }
                }
            }
            frontier = end;
            let mut grew = false;
            for (bytes, rule, inputs) in found {
                grew |= self.add(bytes, Origin::Derived { rule, inputs });
            }
            if !grew {
                break;
            }
        }
    }

    /// Searches for `target` after saturation.
    pub fn find(&mut self, target: &[u8]) -> Option<Derivation> {
        if let Some(i) = self.items.iter().position(|it| contains(&it.bytes, target)) {
            return Some(self.derivation_of(i));
        }
        if target.len() != KEY_LEN {
            return None;
        }
        let combo = self.span_combination(target)?;
        self.add(target.to_vec(), Origin::Derived { rule: Rule::Xor, inputs: combo });
        let i = self.items.len() - 1;
        Some(self.derivation_of(i))
    }

    fn span_combination(&self, target: &[u8]) -> Option<Vec<usize>> {
        // Gaussian elimination over 256-bit rows, tracking which items each
        // reduced row combines.
        let words = |b: &[u8]| -> [u64; 4] {
            core::array::from_fn(|w| u64::from_be_bytes(b[w * 8..w * 8 + 8].try_into().unwrap()))
        };
        let vecs: Vec<usize> = (0..self.items.len()).filter(|&i| self.items[i].bytes.len() == KEY_LEN).collect();
        let mut basis: Vec<([u64; 4], Vec<bool>, usize)> = Vec::new();
        let reduce = |mut v: [u64; 4], mut used: Vec<bool>, basis: &[([u64; 4], Vec<bool>, usize)]| {
            for (row, row_used, pivot) in basis {
                if v[pivot / 64] >> (63 - pivot % 64) & 1 == 1 {
                    for w in 0..4 {
                        v[w] ^= row[w];
                    }
                    for (u, r) in used.iter_mut().zip(row_used) {
                        *u ^= r;
                    }
                }
            }
            (v, used)
        };
        for (slot, &i) in vecs.iter().enumerate() {
            let mut used = vec![false; vecs.len()];
            used[slot] = true;
            let (v, used) = reduce(words(&self.items[i].bytes), used, &basis);
            if let Some(pivot) = (0..256).find(|&b| v[b / 64] >> (63 - b % 64) & 1 == 1) {
                basis.push((v, used, pivot));
            }
        }
        let (rest, used) = reduce(words(target), vec![false; vecs.len()], &basis);
        (rest == [0; 4]).then(|| {
            used.iter()
                .zip(&vecs)
                .filter_map(|(&u, &i)| u.then_some(i))
                .collect()
        })
    }

    fn derivation_of(&self, found_in: usize) -> Derivation {
        let mut order = Vec::new();
        let mut seen = BTreeMap::new();
        self.visit(found_in, &mut seen, &mut order);
        Derivation {
            found_in,
            steps: order,
        }
    }

    fn visit(&self, i: usize, seen: &mut BTreeMap<usize, ()>, out: &mut Vec<Step>) {
        if seen.insert(i, ()).is_some() {
            return;
        }
        if let Origin::Derived { rule, inputs } = &self.items[i].origin {
            for &j in inputs {
                self.visit(j, seen, out);
            }
            out.push(Step {
                output: i,
                rule: *rule,
                inputs: inputs.clone(),
            });
        }
    }

    /// Re-executes every step of `d` from this closure's items and checks the
    /// recomputed outputs and the final containment of `target`.
    pub fn replay(&self, d: &Derivation, target: &[u8]) -> bool {
        let mut values: BTreeMap<usize, Vec<u8>> = BTreeMap::new();
        let value = |i: usize, values: &BTreeMap<usize, Vec<u8>>| -> Option<Vec<u8>> {
            match &self.items.get(i)?.origin {
                Origin::Derived { .. } => values.get(&i).cloned(),
                _ => Some(self.items[i].bytes.clone()),
            }
        };
        for step in &d.steps {
            let Some(ins) = step.inputs.iter().map(|&i| value(i, &values)).collect::<Option<Vec<_>>>() else {
                return false;
            };
            let refs: Vec<&[u8]> = ins.iter().map(Vec::as_slice).collect();
            match apply_rule(self.provider, self.params.as_ref(), step.rule, &refs) {
                Some(out) if self.items.get(step.output).is_some_and(|it| it.bytes == out) => {
                    values.insert(step.output, out);
                }
                _ => return false,
            }
        }
        value(d.found_in, &values).is_some_and(|b| contains(&b, target))
    }

    /// Human-readable one-line form of a derivation.
    pub fn describe(&self, d: &Derivation) -> String {
        let name = |i: usize| -> String {
            match &self.items[i].origin {
                Origin::Key(class) => format!("key:{class}#{i}"),
                Origin::Plaintext(kind) => format!("plaintext:{kind}#{i}"),
                Origin::Observed { seq, .. } => format!("bus:seq{seq}#{i}"),
                Origin::Derived { .. } => format!("item#{i}"),
            }
        };
        if d.steps.is_empty() {
            return name(d.found_in);
        }
        d.steps
            .iter()
            .map(|s| {
                let args: Vec<String> = s.inputs.iter().map(|&i| name(i)).collect();
                format!("item#{}={}({})", s.output, s.rule.as_str(), args.join(","))
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}
