use alloc::collections::{btree_map, BTreeMap, BTreeSet};
use alloc::string::String;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ids::{ItemId, PropertyId};

/// An item with its truthy statements, reduced to property -> set of values.
///
/// Every property key maps to at least one value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    id: ItemId,
    claims: BTreeMap<PropertyId, BTreeSet<String>>,
}

impl Entity {
    pub fn new(id: impl Into<ItemId>) -> Self {
        Self {
            id: id.into(),
            claims: BTreeMap::new(),
        }
    }

    /// Builder form of [`Entity::add_claim`].
    pub fn with(mut self, property: impl Into<PropertyId>, value: impl Into<String>) -> Self {
        self.add_claim(property, value);
        self
    }

    pub fn id(&self) -> &ItemId {
        &self.id
    }

    pub fn claims(&self) -> &BTreeMap<PropertyId, BTreeSet<String>> {
        &self.claims
    }

    pub fn values(&self, property: &str) -> Option<&BTreeSet<String>> {
        self.claims.get(property)
    }

    pub fn has(&self, property: &str) -> bool {
        self.claims.contains_key(property)
    }

    pub fn properties(&self) -> impl Iterator<Item = &PropertyId> {
        self.claims.keys()
    }

    /// Adds a value; returns false if it was already present.
    pub fn add_claim(&mut self, property: impl Into<PropertyId>, value: impl Into<String>) -> bool {
        self.claims
            .entry(property.into())
            .or_default()
            .insert(value.into())
    }

    /// Drops a property with all of its values.
    pub fn remove_property(&mut self, property: &str) -> bool {
        self.claims.remove(property).is_some()
    }

    /// Number of (property, value) pairs.
    pub fn claim_count(&self) -> usize {
        self.claims.values().map(BTreeSet::len).sum()
    }
}

/// Entities keyed by id. Immutable once loaded; shared by readers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityStore {
    entities: BTreeMap<ItemId, Entity>,
}

impl EntityStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entity, replacing any previous one with the same id.
    /// Returns the replaced entity.
    pub fn insert(&mut self, entity: Entity) -> Option<Entity> {
        self.entities.insert(entity.id.clone(), entity)
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn count(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Entities in canonical id order.
    pub fn iter(&self) -> btree_map::Values<'_, ItemId, Entity> {
        self.entities.values()
    }

    /// Content hash of the store, independent of insertion order.
    ///
    /// SHA-256 over the canonical record of every entity in id order, each
    /// followed by `\n`.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for e in self.entities.values() {
            hasher.update(crate::parse::to_record(e).as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

impl FromIterator<Entity> for EntityStore {
    fn from_iter<I: IntoIterator<Item = Entity>>(iter: I) -> Self {
        let mut store = Self::new();
        for e in iter {
            store.insert(e);
        }
        store
    }
}

impl Extend<Entity> for EntityStore {
    fn extend<I: IntoIterator<Item = Entity>>(&mut self, iter: I) {
        for e in iter {
            self.insert(e);
        }
    }
}

/// The four-item astronaut fixture used throughout the tests and docs.
///
/// A1..A4 are humans (`P31 = Q5`) with occupation `QAST`; their extra
/// properties are A1 {P1,P2,P3}, A2 {P1,P2}, A3 {P1}, A4 {P1,P2,P3,P4}.
pub fn astro_mini() -> EntityStore {
    let extras: [(&str, &[&str]); 4] = [
        ("A1", &["P1", "P2", "P3"]),
        ("A2", &["P1", "P2"]),
        ("A3", &["P1"]),
        ("A4", &["P1", "P2", "P3", "P4"]),
    ];
    extras
        .iter()
        .map(|(id, props)| {
            let mut e = Entity::new(*id).with("P31", "Q5").with("P106", "QAST");
            for p in props.iter() {
                e.add_claim(*p, "x");
            }
            e
        })
        .collect()
}

impl<'a> IntoIterator for &'a EntityStore {
    type Item = &'a Entity;
    type IntoIter = btree_map::Values<'a, ItemId, Entity>;

    fn into_iter(self) -> Self::IntoIter {
        self.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_ignores_insertion_order() {
        let a = Entity::new("Q1").with("P1", "a");
        let b = Entity::new("Q2").with("P2", "b");
        let s1: EntityStore = [a.clone(), b.clone()].into_iter().collect();
        let s2: EntityStore = [b, a].into_iter().collect();
        assert_eq!(s1.fingerprint(), s2.fingerprint());
        assert_eq!(s1.fingerprint().len(), 64);
    }

    #[test]
    fn replacement_keeps_count() {
        let mut s = EntityStore::new();
        assert!(s.insert(Entity::new("Q1")).is_none());
        assert!(s.insert(Entity::new("Q1").with("P1", "v")).is_some());
        assert_eq!(s.count(), 1);
        assert!(s.get("Q1").unwrap().has("P1"));
    }

    #[test]
    fn astro_fixture_shape() {
        let s = astro_mini();
        assert_eq!(s.count(), 4);
        assert_eq!(s.get("A4").unwrap().claims().len(), 6);
    }
}
