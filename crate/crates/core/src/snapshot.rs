//! Text codec for index snapshots.
//!
//! A snapshot holds a [`ClassIndex`] together with the [`EntityStore`] it was
//! built from, so a later run can answer queries without re-reading the dump.
//! Layout (UTF-8, `\n` line endings, fields separated by one space):
//!
//! ```text
//! recoin-index 1
//! fingerprint <store fingerprint, 64 hex>
//! config <instance-of property> <human class> <occupation property>
//! properties <number of P lines>
//! P <class> <property> <count>        sorted by (class, property)
//! classes <number of C lines>
//! C <class> <size>                    sorted by class
//! entities <number of E lines>
//! E <canonical entity record>         sorted by id
//! checksum <sha256 hex of every preceding byte>
//! ```
//!
//! Decoding verifies the checksum, the section counts, the count invariants,
//! that the entity section hashes to the header fingerprint, and that the
//! counts match a rebuild from the entities.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use core::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::entity::EntityStore;
use crate::error::{CoreError, Result};
use crate::ids::{is_valid_id, ItemId, PropertyId};
use crate::index::{build_index, ClassIndex, ClassStats, IndexConfig};
use crate::parse::{parse_entity_with, to_record};

pub const MAGIC: &str = "recoin-index 1";

/// An index plus the store it was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub index: ClassIndex,
    pub store: EntityStore,
}

impl Snapshot {
    pub fn build(store: EntityStore, config: &IndexConfig) -> Self {
        let index = build_index(&store, config);
        Self { index, store }
    }

    pub fn fingerprint(&self) -> &str {
        self.index.fingerprint()
    }

    pub fn encode(&self) -> String {
        encode(&self.index, &self.store)
    }
}

pub fn encode(index: &ClassIndex, store: &EntityStore) -> String {
    let mut out = String::new();
    let cfg = index.config();
    // Writing to a String cannot fail.
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "fingerprint {}", index.fingerprint());
    let _ = writeln!(
        out,
        "config {} {} {}",
        cfg.instance_of, cfg.human, cfg.occupation
    );
    let n_props: usize = index.classes().values().map(|s| s.properties.len()).sum();
    let _ = writeln!(out, "properties {n_props}");
    for (class, stats) in index.classes() {
        for (p, count) in &stats.properties {
            let _ = writeln!(out, "P {class} {p} {count}");
        }
    }
    let _ = writeln!(out, "classes {}", index.classes().len());
    for (class, stats) in index.classes() {
        let _ = writeln!(out, "C {class} {}", stats.size);
    }
    let _ = writeln!(out, "entities {}", store.count());
    for e in store {
        let _ = writeln!(out, "E {}", to_record(e));
    }
    let sum = hex::encode(Sha256::digest(out.as_bytes()));
    let _ = writeln!(out, "checksum {sum}");
    out
}

fn corrupt(msg: impl Into<String>) -> CoreError {
    CoreError::Snapshot(msg.into())
}

pub fn decode(text: &str) -> Result<Snapshot> {
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| corrupt("truncated file"))?;
    let (body, trailer) = text.split_at(body_end);
    let expected = trailer
        .trim_end_matches('\n')
        .strip_prefix("checksum ")
        .ok_or_else(|| corrupt("missing checksum line"))?;
    let actual = hex::encode(Sha256::digest(body.as_bytes()));
    if expected != actual {
        return Err(corrupt("checksum mismatch"));
    }

    let mut lines = body.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| corrupt(format!("unexpected end of file, expected {what}")))
    };

    let (_, magic) = next("header")?;
    if magic != MAGIC {
        return Err(corrupt(format!("unsupported header {magic:?}")));
    }
    let fingerprint = header_value(next("fingerprint")?, "fingerprint")?.to_string();
    let (ln, config_line) = next("config")?;
    let cfg: alloc::vec::Vec<&str> = header_value((ln, config_line), "config")?
        .split(' ')
        .collect();
    let [instance_of, human, occupation] = cfg[..] else {
        return Err(corrupt(format!("line {ln}: config needs three ids")));
    };
    let config = IndexConfig {
        instance_of: PropertyId::new(instance_of),
        human: human.to_string(),
        occupation: PropertyId::new(occupation),
    };

    let mut classes: BTreeMap<ItemId, ClassStats> = BTreeMap::new();
    let n_props = section_len(next("properties")?, "properties")?;
    let mut prev: Option<(ItemId, PropertyId)> = None;
    for _ in 0..n_props {
        let (ln, line) = next("P line")?;
        let [tag, class, p, count] = fields::<4>(ln, line)?;
        if tag != "P" {
            return Err(corrupt(format!("line {ln}: expected P line")));
        }
        let key = (ItemId::new(class), PropertyId::new(p));
        if prev.as_ref().is_some_and(|k| *k >= key) {
            return Err(corrupt(format!("line {ln}: P lines out of order")));
        }
        classes
            .entry(key.0.clone())
            .or_default()
            .properties
            .insert(key.1.clone(), number(ln, count)?);
        prev = Some(key);
    }

    let n_classes = section_len(next("classes")?, "classes")?;
    let mut prev: Option<ItemId> = None;
    for _ in 0..n_classes {
        let (ln, line) = next("C line")?;
        let [tag, class, size] = fields::<3>(ln, line)?;
        if tag != "C" {
            return Err(corrupt(format!("line {ln}: expected C line")));
        }
        let class = ItemId::new(class);
        if prev.as_ref().is_some_and(|c| *c >= class) {
            return Err(corrupt(format!("line {ln}: C lines out of order")));
        }
        classes.entry(class.clone()).or_default().size = number(ln, size)?;
        prev = Some(class);
    }

    let n_entities = section_len(next("entities")?, "entities")?;
    let mut store = EntityStore::new();
    for _ in 0..n_entities {
        let (ln, line) = next("E line")?;
        let record = line
            .strip_prefix("E ")
            .ok_or_else(|| corrupt(format!("line {ln}: expected E line")))?;
        let entity = parse_entity_with(record, true)
            .map_err(|e| corrupt(format!("line {ln}: {e}")))?;
        if store.insert(entity).is_some() {
            return Err(corrupt(format!("line {ln}: duplicate entity")));
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(corrupt(format!("line {ln}: trailing data")));
    }

    let index = ClassIndex::from_parts(config, classes, fingerprint)
        .map_err(|e| corrupt(e.to_string()))?;
    if store.fingerprint() != index.fingerprint() {
        return Err(corrupt("entity section does not match fingerprint"));
    }
    if build_index(&store, index.config()) != index {
        return Err(corrupt("counts do not match the entity section"));
    }
    Ok(Snapshot { index, store })
}

fn header_value<'a>((ln, line): (usize, &'a str), key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| corrupt(format!("line {ln}: expected `{key} ...`")))
}

fn section_len(line: (usize, &str), key: &str) -> Result<usize> {
    let ln = line.0;
    let v = header_value(line, key)?;
    v.parse()
        .map_err(|_| corrupt(format!("line {ln}: bad {key} count {v:?}")))
}

fn fields<const N: usize>(ln: usize, line: &str) -> Result<[&str; N]> {
    let mut out = [""; N];
    let mut parts = line.split(' ');
    for slot in out.iter_mut() {
        *slot = parts
            .next()
            .filter(|s| is_valid_id(s))
            .ok_or_else(|| corrupt(format!("line {ln}: expected {N} fields")))?;
    }
    if parts.next().is_some() {
        return Err(corrupt(format!("line {ln}: expected {N} fields")));
    }
    Ok(out)
}

fn number(ln: usize, s: &str) -> Result<u64> {
    s.parse()
        .map_err(|_| corrupt(format!("line {ln}: bad number {s:?}")))
}
