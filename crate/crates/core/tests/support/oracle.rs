//! Brute-force recounts used as independent oracles.
//!
//! Nothing here calls into the index or recommender; class membership and
//! counts are recomputed from raw claims with nested loops.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use recoin_core::{Entity, EntityStore};

pub const CLASSES: [&str; 5] = ["QC1", "QC2", "QC3", "QC4", "QC5"];

/// Random store with at most 50 entities, 20 ordinary properties and
/// 5 classes. Roughly a third of the entities are humans classed by
/// occupation.
pub fn random_store(rng: &mut impl Rng) -> EntityStore {
    let n = rng.random_range(0..=50);
    (0..n).map(|i| random_entity(rng, &format!("Q{i}"))).collect()
}

pub fn random_entity(rng: &mut impl Rng, id: &str) -> Entity {
    let mut e = Entity::new(id);
    let class_prop = if rng.random_bool(0.3) {
        e.add_claim("P31", "Q5");
        "P106"
    } else {
        "P31"
    };
    for c in CLASSES {
        if rng.random_bool(0.35) {
            e.add_claim(class_prop, c);
        }
    }
    for p in 1..=20 {
        if rng.random_bool(0.4) {
            e.add_claim(format!("P{p}"), "v");
        }
    }
    e
}

/// Class rule restated from scratch: humans (P31 contains Q5) use P106,
/// everyone else P31.
pub fn naive_classes(e: &Entity) -> Vec<String> {
    let get = |p: &str| -> Vec<String> {
        e.claims()
            .iter()
            .filter(|(k, _)| k.as_str() == p)
            .flat_map(|(_, vs)| vs.iter().cloned())
            .collect()
    };
    let p31 = get("P31");
    if p31.iter().any(|v| v == "Q5") {
        get("P106")
    } else {
        p31
    }
}

pub fn naive_size(store: &EntityStore, class: &str) -> u64 {
    store
        .iter()
        .filter(|e| naive_classes(e).iter().any(|c| c == class))
        .count() as u64
}

pub fn naive_count(store: &EntityStore, class: &str, property: &str) -> u64 {
    store
        .iter()
        .filter(|e| naive_classes(e).iter().any(|c| c == class))
        .filter(|e| e.properties().any(|p| p.as_str() == property))
        .count() as u64
}

pub fn all_properties(store: &EntityStore) -> BTreeSet<String> {
    store
        .iter()
        .flat_map(|e| e.properties().map(|p| p.as_str().to_string()))
        .collect()
}

pub fn all_classes(store: &EntityStore) -> BTreeSet<String> {
    store.iter().flat_map(naive_classes).collect()
}

fn numeric(p: &str) -> u64 {
    p.trim_start_matches(|c: char| !c.is_ascii_digit()).parse().unwrap()
}

/// (property, class, count, size, relevance) for every missing property,
/// ranked by relevance descending then numeric property id.
pub fn naive_missing(
    store: &EntityStore,
    entity: &Entity,
    deselected: &BTreeSet<String>,
) -> Vec<(String, String, u64, u64, f64)> {
    // Class lists of every member, derived once per call.
    let members: Vec<(Vec<String>, &Entity)> = store.iter().map(|e| (naive_classes(e), e)).collect();
    let size = |c: &str| members.iter().filter(|(cs, _)| cs.iter().any(|x| x == c)).count() as u64;
    let count = |c: &str, p: &str| {
        members
            .iter()
            .filter(|(cs, e)| cs.iter().any(|x| x == c) && e.properties().any(|q| q.as_str() == p))
            .count() as u64
    };
    let mut out = Vec::new();
    for p in all_properties(store) {
        if p == "P31" || p == "P106" || deselected.contains(&p) || entity.has(&p) {
            continue;
        }
        let mut best: Option<(String, String, u64, u64, f64)> = None;
        for c in naive_classes(entity) {
            let size = size(&c);
            let count = count(&c, &p);
            if size == 0 || count == 0 {
                continue;
            }
            let rel = 100.0 * count as f64 / size as f64;
            let better = match &best {
                None => true,
                Some((_, bc, _, bs, br)) => {
                    rel > *br
                        || (rel == *br && size > *bs)
                        || (rel == *br && size == *bs && numeric(&c) < numeric(bc))
                }
            };
            if better {
                best = Some((p.clone(), c, count, size, rel));
            }
        }
        out.extend(best);
    }
    out.sort_by(|a, b| b.4.total_cmp(&a.4).then(numeric(&a.0).cmp(&numeric(&b.0))));
    out
}

/// Mean relevance of the first five entries of a ranked list, as the exact
/// fraction `100 * sum(c_i * prod_{j != i} s_j) / (n * prod s_j)` rounded
/// once. Falls back to a float mean if the products overflow.
pub fn naive_avg_top5(ranked: &[(String, String, u64, u64, f64)]) -> f64 {
    let top: Vec<_> = ranked.iter().take(5).collect();
    if top.is_empty() {
        return 0.0;
    }
    let exact = || -> Option<f64> {
        let mut den: u128 = top.len() as u128;
        for t in &top {
            den = den.checked_mul(t.3 as u128)?;
        }
        let mut num: u128 = 0;
        for (i, t) in top.iter().enumerate() {
            let mut term = 100 * t.2 as u128;
            for (j, u) in top.iter().enumerate() {
                if i != j {
                    term = term.checked_mul(u.3 as u128)?;
                }
            }
            num = num.checked_add(term)?;
        }
        let (mut a, mut b) = (num, den);
        while b != 0 {
            let r = a % b;
            a = b;
            b = r;
        }
        let (num, den) = (num / a, den / a);
        (num <= 1 << 53 && den <= 1 << 53).then(|| num as f64 / den as f64)
    };
    exact().unwrap_or_else(|| top.iter().map(|r| r.4).sum::<f64>() / top.len() as f64)
}
