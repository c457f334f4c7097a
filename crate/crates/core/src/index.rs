//! Class -> property occurrence statistics.
//!
//! Two items are related when they share a class. The class of an item is the
//! value set of its instance-of property, except for humans, whose occupation
//! values are used instead.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use crate::entity::{Entity, EntityStore};
use crate::error::{CoreError, Result};
use crate::ids::{ItemId, PropertyId};

/// Which identifiers drive class assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub instance_of: PropertyId,
    pub human: String,
    pub occupation: PropertyId,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            instance_of: PropertyId::new("P31"),
            human: "Q5".into(),
            occupation: PropertyId::new("P106"),
        }
    }
}

impl IndexConfig {
    /// Instance-of and occupation are held by every class member by
    /// construction; they are counted but never recommended.
    pub fn is_structural(&self, property: &str) -> bool {
        property == self.instance_of.as_str() || property == self.occupation.as_str()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassAssignment {
    pub item: ItemId,
    pub classes: BTreeSet<ItemId>,
    /// The item is a human and its occupations were used as classes.
    pub via_occupation: bool,
}

pub fn class_of(entity: &Entity, config: &IndexConfig) -> ClassAssignment {
    let instance_of = entity.values(config.instance_of.as_str());
    let is_human = instance_of.is_some_and(|v| v.contains(&config.human));
    let source = if is_human {
        entity.values(config.occupation.as_str())
    } else {
        instance_of
    };
    ClassAssignment {
        item: entity.id().clone(),
        classes: source
            .into_iter()
            .flatten()
            .map(|v| ItemId::new(v.as_str()))
            .collect(),
        via_occupation: is_human,
    }
}

/// Member count and per-property occurrence counts of one class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassStats {
    pub size: u64,
    pub properties: BTreeMap<PropertyId, u64>,
}

/// Per-class sizes and per-(class, property) occurrence counts.
///
/// Invariants: every listed class has `size >= 1`, and every property count
/// is between 1 and the class size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndex {
    config: IndexConfig,
    classes: BTreeMap<ItemId, ClassStats>,
    built_from: String,
}

impl ClassIndex {
    /// Assembles an index from raw parts, checking the count invariants.
    pub fn from_parts(
        config: IndexConfig,
        classes: BTreeMap<ItemId, ClassStats>,
        built_from: String,
    ) -> Result<Self> {
        for (class, stats) in &classes {
            if stats.size == 0 {
                return Err(CoreError::Validation(format!("class {class} has size 0")));
            }
            for (p, &count) in &stats.properties {
                if count == 0 || count > stats.size {
                    return Err(CoreError::Validation(format!(
                        "count {count} for ({class}, {p}) outside 1..={}",
                        stats.size
                    )));
                }
            }
        }
        Ok(Self {
            config,
            classes,
            built_from,
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    /// Fingerprint of the store this index was built from.
    pub fn fingerprint(&self) -> &str {
        &self.built_from
    }

    pub fn classes(&self) -> &BTreeMap<ItemId, ClassStats> {
        &self.classes
    }

    pub fn class(&self, class: &str) -> Option<&ClassStats> {
        self.classes.get(class)
    }

    pub fn class_size(&self, class: &str) -> Option<u64> {
        self.classes.get(class).map(|s| s.size)
    }

    /// Occurrence count of `property` in `class`; 0 when absent.
    pub fn count(&self, class: &str, property: &str) -> u64 {
        self.classes
            .get(class)
            .and_then(|s| s.properties.get(property))
            .copied()
            .unwrap_or(0)
    }

    /// Fraction of the members of `class` holding `property`.
    pub fn frequency(&self, class: &str, property: &str) -> Result<f64> {
        let stats = self
            .classes
            .get(class)
            .ok_or_else(|| CoreError::UnknownClass(class.to_string()))?;
        let count = stats.properties.get(property).copied().unwrap_or(0);
        Ok(count as f64 / stats.size as f64)
    }

    pub fn class_of(&self, entity: &Entity) -> ClassAssignment {
        class_of(entity, &self.config)
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Counts class sizes and property occurrences over the whole store.
///
/// Every entity counts toward its own classes.
pub fn build_index(store: &EntityStore, config: &IndexConfig) -> ClassIndex {
    let mut classes: BTreeMap<ItemId, ClassStats> = BTreeMap::new();
    for entity in store {
        let assignment = class_of(entity, config);
        for class in assignment.classes {
            let stats = classes.entry(class).or_default();
            stats.size += 1;
            for p in entity.properties() {
                *stats.properties.entry(p.clone()).or_insert(0) += 1;
            }
        }
    }
    ClassIndex {
        config: config.clone(),
        classes,
        built_from: store.fingerprint(),
    }
}

/// `count / size` as a percentage rounded half-up to two decimals, e.g.
/// `549 / 819 -> "67.03%"`. Exact integer arithmetic.
pub fn percent_display(count: u64, size: u64) -> String {
    if size == 0 {
        return "0.00%".into();
    }
    let (count, size) = (count as u128, size as u128);
    let hundredths = (20_000 * count + size) / (2 * size);
    format!("{}.{:02}%", hundredths / 100, hundredths % 100)
}

/// Formats a percentage value with two decimals, rounding half away from
/// zero on the hundredths.
pub fn format_percent(value: f64) -> String {
    format!("{}%", format_fixed2(value))
}

/// Two-decimal rendering, half away from zero.
pub fn format_fixed2(value: f64) -> String {
    let hundredths = libm::round(value * 100.0);
    let sign = if hundredths < 0.0 { "-" } else { "" };
    let h = libm::fabs(hundredths) as u64;
    format!("{sign}{}.{:02}", h / 100, h % 100)
}
