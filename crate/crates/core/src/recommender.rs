//! Missing-property recommendations, completeness scoring and what-if
//! recomputation.
//!
//! The relevance of a property for an item is the share of the item's class
//! holding it. The mean relevance of the (up to) five most relevant missing
//! properties, `avg_top5_missing`, places the item in one of five levels; the
//! numeric completeness score is `100 - avg_top5_missing`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::entity::Entity;
use crate::error::{CoreError, Result};
use crate::ids::{ItemId, PropertyId};
use crate::index::{percent_display, ClassIndex};

/// Number of recommendations shown by default.
pub const DEFAULT_LIMIT: usize = 10;

/// Number of top missing properties averaged for the completeness level.
pub const TOP_MISSING: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub property: PropertyId,
    /// Class whose statistics produced this recommendation.
    pub class: ItemId,
    pub count: u64,
    pub class_size: u64,
    /// `100 * count / class_size`.
    pub relevance: f64,
}

impl Recommendation {
    fn new(property: PropertyId, class: ItemId, count: u64, class_size: u64) -> Self {
        Self {
            relevance: 100.0 * count as f64 / class_size as f64,
            property,
            class,
            count,
            class_size,
        }
    }

    /// Relevance rounded half-up to two decimals, e.g. `"67.03%"`.
    pub fn relevance_display(&self) -> String {
        percent_display(self.count, self.class_size)
    }

    /// Exact comparison of `count / class_size` between two recommendations.
    pub fn cmp_relevance(&self, other: &Self) -> Ordering {
        let lhs = self.count as u128 * other.class_size as u128;
        let rhs = other.count as u128 * self.class_size as u128;
        lhs.cmp(&rhs)
    }
}

/// Ranking order: relevance descending, then property id ascending.
pub fn rank_order(a: &Recommendation, b: &Recommendation) -> Ordering {
    b.cmp_relevance(a)
        .then_with(|| a.property.cmp_numeric(&b.property))
}

fn scored_candidates(
    entity: &Entity,
    index: &ClassIndex,
    deselected: &BTreeSet<PropertyId>,
) -> Vec<Recommendation> {
    let config = index.config();
    let mut best: BTreeMap<&PropertyId, Recommendation> = BTreeMap::new();
    for class in index.class_of(entity).classes {
        let Some(stats) = index.class(class.as_str()) else {
            continue;
        };
        for (property, &count) in &stats.properties {
            if entity.has(property.as_str())
                || config.is_structural(property.as_str())
                || deselected.contains(property)
            {
                continue;
            }
            let candidate = Recommendation::new(property.clone(), class.clone(), count, stats.size);
            match best.get_mut(property) {
                Some(current) if !replaces(&candidate, current) => {}
                Some(current) => *current = candidate,
                None => {
                    best.insert(property, candidate);
                }
            }
        }
    }
    let mut out: Vec<Recommendation> = best.into_values().collect();
    out.sort_by(rank_order);
    out
}

// Across classes keep the highest relevance; on equal relevance the larger
// class, then the smaller class id.
fn replaces(candidate: &Recommendation, current: &Recommendation) -> bool {
    candidate
        .cmp_relevance(current)
        .then_with(|| candidate.class_size.cmp(&current.class_size))
        .then_with(|| current.class.cmp_numeric(&candidate.class))
        == Ordering::Greater
}

/// Every property seen in the entity's classes but absent from the entity,
/// ranked. Instance-of and occupation are never candidates.
pub fn missing_properties(entity: &Entity, index: &ClassIndex) -> Vec<Recommendation> {
    scored_candidates(entity, index, &BTreeSet::new())
}

/// The first `limit` entries of [`missing_properties`].
pub fn recommend(entity: &Entity, index: &ClassIndex, limit: usize) -> Vec<Recommendation> {
    let mut list = missing_properties(entity, index);
    list.truncate(limit);
    list
}

/// Thresholds on `avg_top5_missing` separating the five levels.
///
/// `upper[i]` is the exclusive upper bound of level `5 - i`; anything at or
/// above the last bound is level 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBands {
    pub upper: [f64; 4],
}

impl Default for LevelBands {
    fn default() -> Self {
        Self {
            upper: [5.0, 10.0, 15.0, 20.0],
        }
    }
}

impl LevelBands {
    pub fn level(&self, avg_top5_missing: f64) -> u8 {
        let below = self
            .upper
            .iter()
            .position(|&bound| avg_top5_missing < bound)
            .unwrap_or(self.upper.len());
        5 - below as u8
    }
}

pub fn level_label(level: u8) -> &'static str {
    match level {
        5 => "most complete",
        4 => "quite complete",
        3 => "somewhat complete",
        2 => "rather incomplete",
        _ => "least complete",
    }
}

/// What-if parameters: properties excluded from scoring and an occurrence
/// range that filters the displayed list only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhatIfQuery {
    #[serde(default)]
    pub deselected: BTreeSet<PropertyId>,
    #[serde(default)]
    pub min_count: Option<u64>,
    #[serde(default)]
    pub max_count: Option<u64>,
}

impl WhatIfQuery {
    pub fn validate(&self) -> Result<()> {
        match (self.min_count, self.max_count) {
            (Some(lo), Some(hi)) if lo > hi => Err(CoreError::Validation(format!(
                "min_count {lo} exceeds max_count {hi}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn in_range(&self, count: u64) -> bool {
        self.min_count.is_none_or(|lo| count >= lo) && self.max_count.is_none_or(|hi| count <= hi)
    }

    pub fn is_neutral(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub item: ItemId,
    pub level: u8,
    pub level_label: String,
    /// `100 - avg_top5_missing`.
    pub score: f64,
    pub avg_top5_missing: f64,
    /// Ranked scoring candidates (deselected properties removed), uncapped.
    pub missing: Vec<Recommendation>,
    /// `missing` restricted to the query's occurrence range.
    pub displayed: Vec<Recommendation>,
    pub deselected: BTreeSet<PropertyId>,
    pub classes_used: BTreeSet<ItemId>,
    pub via_occupation: bool,
    pub index_fingerprint: String,
}

pub fn completeness(
    entity: &Entity,
    index: &ClassIndex,
    query: &WhatIfQuery,
) -> Result<CompletenessReport> {
    completeness_with(entity, index, query, &LevelBands::default())
}

pub fn completeness_with(
    entity: &Entity,
    index: &ClassIndex,
    query: &WhatIfQuery,
    bands: &LevelBands,
) -> Result<CompletenessReport> {
    query.validate()?;
    let missing = scored_candidates(entity, index, &query.deselected);
    let avg_top5_missing = mean_top_relevance(&missing);
    let level = bands.level(avg_top5_missing);
    let displayed = missing
        .iter()
        .filter(|r| query.in_range(r.count))
        .cloned()
        .collect();
    let assignment = index.class_of(entity);
    Ok(CompletenessReport {
        item: entity.id().clone(),
        level,
        level_label: level_label(level).into(),
        score: 100.0 - avg_top5_missing,
        avg_top5_missing,
        missing,
        displayed,
        deselected: query.deselected.clone(),
        classes_used: assignment.classes,
        via_occupation: assignment.via_occupation,
        index_fingerprint: index.fingerprint().into(),
    })
}

/// Mean relevance of the top candidates, rounded once from the exact
/// rational value. Summing rounded floats can put two equal means an ulp
/// apart depending on how many terms went in; rounding the exact value is
/// monotone, so comparisons between scores follow the real arithmetic.
fn mean_top_relevance(ranked: &[Recommendation]) -> f64 {
    let top = &ranked[..ranked.len().min(TOP_MISSING)];
    if top.is_empty() {
        return 0.0;
    }
    exact_mean(top).unwrap_or_else(|| top.iter().map(|r| r.relevance).sum::<f64>() / top.len() as f64)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `100 * sum(count / size) / n` as a correctly rounded f64, or `None` when
/// the reduced fraction does not fit in 53-bit operands.
fn exact_mean(top: &[Recommendation]) -> Option<f64> {
    let (mut num, mut den) = (0u128, 1u128);
    for r in top {
        let (c, s) = (u128::from(r.count), u128::from(r.class_size));
        let lcm = (den / gcd(den, s)).checked_mul(s)?;
        num = num.checked_mul(lcm / den)?.checked_add(c.checked_mul(lcm / s)?)?;
        den = lcm;
        let g = gcd(num, den);
        (num, den) = (num / g, den / g);
    }
    let num = num.checked_mul(100)?;
    let den = den.checked_mul(top.len() as u128)?;
    let g = gcd(num, den);
    let (num, den) = (num / g, den / g);
    const EXACT: u128 = 1 << 53;
    // Both operands are exact, so the one IEEE division is correctly rounded.
    (num <= EXACT && den <= EXACT).then(|| num as f64 / den as f64)
}

/// Score change between two reports on the same index, in percentage points.
pub fn relevance_delta(before: &CompletenessReport, after: &CompletenessReport) -> Result<f64> {
    if before.index_fingerprint != after.index_fingerprint {
        return Err(CoreError::IndexMismatch(
            before.index_fingerprint.clone(),
            after.index_fingerprint.clone(),
        ));
    }
    Ok(after.score - before.score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GradeLetter {
    F,
    D,
    C,
    B,
    A,
}

impl GradeLetter {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D => "D",
            Self::F => "F",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "A" => Self::A,
            "B" => Self::B,
            "C" => Self::C,
            "D" => Self::D,
            "F" => Self::F,
            _ => return None,
        })
    }
}

impl fmt::Display for GradeLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grade {
    pub letter: GradeLetter,
    pub delta: f64,
}

/// Letter for a completeness increase: F below 5, D [5,10), C [10,20),
/// B [20,30), A from 30.
pub fn grade(delta: f64) -> Grade {
    let letter = if delta >= 30.0 {
        GradeLetter::A
    } else if delta >= 20.0 {
        GradeLetter::B
    } else if delta >= 10.0 {
        GradeLetter::C
    } else if delta >= 5.0 {
        GradeLetter::D
    } else {
        GradeLetter::F
    };
    Grade { letter, delta }
}
