//! Timed editing sessions: the editing task, its grading and the
//! self-report that follows it.
//!
//! A session edits a private copy of one item. Time is supplied by the
//! caller as Unix milliseconds, so the state machine is deterministic and the
//! server decides when the limit has passed.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entity::{Entity, EntityStore};
use crate::error::{CoreError, Result};
use crate::ids::{is_valid_id, ItemId, PropertyId};
use crate::index::ClassIndex;
use crate::recommender::{completeness, grade, relevance_delta, CompletenessReport, Grade, WhatIfQuery};

/// Default task duration: ten minutes.
pub const DEFAULT_LIMIT_SECS: u64 = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Condition {
    Baseline,
    C1,
    C2,
    C3,
    C4,
}

/// Which recommender interface a condition shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UiVariant {
    #[serde(rename = "none")]
    None,
    R1,
    RX,
    RIX,
}

impl Condition {
    pub const ALL: [Condition; 5] = [Self::Baseline, Self::C1, Self::C2, Self::C3, Self::C4];

    pub fn ui_variant(self) -> UiVariant {
        match self {
            Self::Baseline => UiVariant::None,
            Self::C1 | Self::C2 => UiVariant::R1,
            Self::C3 => UiVariant::RX,
            Self::C4 => UiVariant::RIX,
        }
    }

    pub fn onboarding_mentions_recoin(self) -> bool {
        matches!(self, Self::C2 | Self::C3 | Self::C4)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "BASELINE",
            Self::C1 => "C1",
            Self::C2 => "C2",
            Self::C3 => "C3",
            Self::C4 => "C4",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| CoreError::Validation(format!("unknown condition {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub property: PropertyId,
    pub value: String,
    pub via_recoin: bool,
    pub at_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    /// Completeness score change in percentage points.
    pub relevance: f64,
    /// Edits made through the recommender.
    pub usage: u32,
    pub grade: Grade,
    pub edit_count: u32,
}

/// Free-text comments attached to individual ratings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeText {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comprehension: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fairness: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust: Option<String>,
}

/// Likert ratings: comprehension on 1..=5, the others on 1..=7.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfReport {
    pub comprehension: u8,
    pub fairness: u8,
    pub accuracy: u8,
    pub trust: u8,
    #[serde(default)]
    pub free_text: FreeText,
}

impl SelfReport {
    pub fn new(comprehension: u8, fairness: u8, accuracy: u8, trust: u8) -> Self {
        Self {
            comprehension,
            fairness,
            accuracy,
            trust,
            free_text: FreeText::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("comprehension", self.comprehension, 5),
            ("fairness", self.fairness, 7),
            ("accuracy", self.accuracy, 7),
            ("trust", self.trust, 7),
        ];
        for (name, value, max) in checks {
            if !(1..=max).contains(&value) {
                return Err(CoreError::Validation(format!(
                    "{name} must be in 1..={max}, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// A stored self-report together with the task it rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub session_id: String,
    pub condition: Condition,
    pub result: TaskResult,
    pub report: SelfReport,
    /// Set when this report replaced an earlier one for the same session.
    pub supersedes_previous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditSession {
    pub id: String,
    pub condition: Condition,
    pub item: ItemId,
    pub started_at_ms: i64,
    pub limit_secs: u64,
    pub edits: Vec<Edit>,
    pub before_report: CompletenessReport,
    pub working: Entity,
    pub result: Option<TaskResult>,
    pub report: Option<SelfReport>,
    /// How many self-reports were submitted (the last one wins).
    pub report_submissions: u32,
}

impl EditSession {
    /// Opens a session on `item`, freezing its current completeness.
    pub fn start(
        id: impl Into<String>,
        condition: Condition,
        item: &str,
        store: &EntityStore,
        index: &ClassIndex,
        now_ms: i64,
        limit_secs: u64,
    ) -> Result<Self> {
        let entity = store
            .get(item)
            .ok_or_else(|| CoreError::NotFound(format!("item {item}")))?;
        let before_report = completeness(entity, index, &WhatIfQuery::default())?;
        Ok(Self {
            id: id.into(),
            condition,
            item: entity.id().clone(),
            started_at_ms: now_ms,
            limit_secs,
            edits: Vec::new(),
            before_report,
            working: entity.clone(),
            result: None,
            report: None,
            report_submissions: 0,
        })
    }

    pub fn deadline_ms(&self) -> i64 {
        self.started_at_ms
            .saturating_add((self.limit_secs as i64).saturating_mul(1000))
    }

    pub fn remaining_ms(&self, now_ms: i64) -> i64 {
        (self.deadline_ms() - now_ms).max(0)
    }

    pub fn is_finalized(&self) -> bool {
        self.result.is_some()
    }

    /// Records one added statement on the working copy.
    pub fn apply_edit(
        &mut self,
        property: &str,
        value: &str,
        via_recoin: bool,
        now_ms: i64,
    ) -> Result<&Edit> {
        if self.is_finalized() {
            return Err(CoreError::State(format!("session {} is finalized", self.id)));
        }
        if now_ms >= self.deadline_ms() {
            return Err(CoreError::TimeLimit(format!(
                "session {} ended {} ms ago",
                self.id,
                now_ms - self.deadline_ms()
            )));
        }
        if via_recoin && self.condition == Condition::Baseline {
            return Err(CoreError::Validation(
                "the baseline condition has no recommender to edit through".into(),
            ));
        }
        if !is_valid_id(property) {
            return Err(CoreError::Validation(format!("invalid property id {property:?}")));
        }
        if value.is_empty() {
            return Err(CoreError::Validation("empty value".into()));
        }
        self.working.add_claim(property, value);
        self.edits.push(Edit {
            property: PropertyId::new(property),
            value: value.into(),
            via_recoin,
            at_ms: now_ms,
        });
        Ok(self.edits.last().expect("just pushed"))
    }

    pub fn usage(&self) -> u32 {
        self.edits.iter().filter(|e| e.via_recoin).count() as u32
    }

    /// Scores the working copy from scratch and grades the change.
    pub fn finalize(&mut self, index: &ClassIndex) -> Result<TaskResult> {
        if self.is_finalized() {
            return Err(CoreError::State(format!("session {} already finalized", self.id)));
        }
        let after = completeness(&self.working, index, &WhatIfQuery::default())?;
        let relevance = relevance_delta(&self.before_report, &after)?;
        let result = TaskResult {
            relevance,
            usage: self.usage(),
            grade: grade(relevance),
            edit_count: self.edits.len() as u32,
        };
        self.result = Some(result);
        Ok(result)
    }

    pub fn record_self_report(&mut self, report: SelfReport) -> Result<ReportRecord> {
        let result = self.result.ok_or_else(|| {
            CoreError::State(format!("session {} must be finalized before reporting", self.id))
        })?;
        report.validate()?;
        let supersedes_previous = self.report.is_some();
        self.report = Some(report.clone());
        self.report_submissions += 1;
        Ok(ReportRecord {
            session_id: self.id.clone(),
            condition: self.condition,
            result,
            report,
            supersedes_previous,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::astro_mini;
    use crate::index::{build_index, IndexConfig};
    use crate::recommender::GradeLetter;

    const T0: i64 = 1_700_000_000_000;

    fn setup() -> (EntityStore, ClassIndex) {
        let store = astro_mini();
        let index = build_index(&store, &IndexConfig::default());
        (store, index)
    }

    fn start(cond: Condition, item: &str) -> (EditSession, ClassIndex) {
        let (store, index) = setup();
        let s = EditSession::start("s1", cond, item, &store, &index, T0, DEFAULT_LIMIT_SECS).unwrap();
        (s, index)
    }

    #[test]
    fn condition_table() {
        use UiVariant::*;
        let expected = [(None, false), (R1, false), (R1, true), (RX, true), (RIX, true)];
        for (c, (ui, onboard)) in Condition::ALL.into_iter().zip(expected) {
            assert_eq!(c.ui_variant(), ui);
            assert_eq!(c.onboarding_mentions_recoin(), onboard);
            assert_eq!(c.as_str().parse::<Condition>().unwrap(), c);
        }
        assert!("C9".parse::<Condition>().is_err());
    }

    #[test]
    fn start_freezes_before_report() {
        assert_eq!(start(Condition::C4, "A3").0.before_report.score, 50.0);
        assert_eq!(start(Condition::Baseline, "A4").0.before_report.score, 100.0);
        let (store, index) = setup();
        let err = EditSession::start("s", Condition::C1, "NOPE", &store, &index, T0, 600);
        assert!(matches!(err, Err(CoreError::NotFound(_))));
    }

    #[test]
    fn a3_chain() {
        let (mut s, index) = start(Condition::C4, "A3");
        s.apply_edit("P2", "v", true, T0 + 1_000).unwrap();
        assert_eq!(s.usage(), 1);
        s.apply_edit("P3", "v", true, T0 + 2_000).unwrap();
        let r = s.finalize(&index).unwrap();
        assert_eq!(r.relevance, 25.0);
        assert_eq!(r.grade.letter, GradeLetter::B);
        assert_eq!((r.usage, r.edit_count), (2, 2));
        assert!(matches!(s.finalize(&index), Err(CoreError::State(_))));
        assert!(matches!(s.apply_edit("P4", "v", true, T0 + 3_000), Err(CoreError::State(_))));
    }

    #[test]
    fn free_form_edit_does_not_count_as_usage() {
        let (mut s, index) = start(Condition::C2, "A3");
        s.apply_edit("P77", "v", false, T0 + 5).unwrap();
        assert_eq!((s.usage(), s.edits.len()), (0, 1));
        let r = s.finalize(&index).unwrap();
        assert_eq!(r.relevance, 0.0);
        assert_eq!(r.grade.letter, GradeLetter::F);
    }

    #[test]
    fn time_limit() {
        let (mut s, _) = start(Condition::C1, "A3");
        let limit = DEFAULT_LIMIT_SECS as i64 * 1000;
        assert!(s.apply_edit("P2", "v", true, T0 + limit - 1).is_ok());
        assert!(matches!(s.apply_edit("P3", "v", true, T0 + limit), Err(CoreError::TimeLimit(_))));
        assert!(matches!(
            s.apply_edit("P3", "v", true, T0 + limit + 1_000),
            Err(CoreError::TimeLimit(_))
        ));
        assert_eq!(s.remaining_ms(T0 + limit + 1_000), 0);
    }

    #[test]
    fn baseline_rejects_recoin_edits() {
        let (mut s, _) = start(Condition::Baseline, "A3");
        assert!(matches!(s.apply_edit("P2", "v", true, T0), Err(CoreError::Validation(_))));
        assert!(s.edits.is_empty());
        assert!(!s.working.has("P2"));
    }

    #[test]
    fn zero_edit_session() {
        let (mut s, index) = start(Condition::C3, "A3");
        let r = s.finalize(&index).unwrap();
        assert_eq!(r.relevance, 0.0);
        assert_eq!(r.grade.letter, GradeLetter::F);
    }

    #[test]
    fn self_report_lifecycle() {
        let (mut s, index) = start(Condition::C4, "A3");
        assert!(matches!(
            s.record_self_report(SelfReport::new(3, 6, 6, 5)),
            Err(CoreError::State(_))
        ));
        s.finalize(&index).unwrap();
        assert!(matches!(
            s.record_self_report(SelfReport::new(6, 6, 6, 5)),
            Err(CoreError::Validation(_))
        ));
        assert!(s.record_self_report(SelfReport::new(3, 8, 6, 5)).is_err());
        assert!(s.record_self_report(SelfReport::new(0, 1, 1, 1)).is_err());
        let first = s.record_self_report(SelfReport::new(3, 6, 6, 5)).unwrap();
        assert!(!first.supersedes_previous);
        assert_eq!(first.condition, Condition::C4);
        let second = s.record_self_report(SelfReport::new(4, 6, 6, 5)).unwrap();
        assert!(second.supersedes_previous);
        assert_eq!(s.report.as_ref().unwrap().comprehension, 4);
        assert_eq!(s.report_submissions, 2);
    }
}
