//! Relative-completeness assessment for entity/property knowledge bases.
//!
//! Items are compared against the property profile of the other members of
//! their class: a property held by most members of a class but missing on the
//! inspected item is recommended, and the mean relevance of the top missing
//! properties drives a five-level completeness indicator.
//!
//! This crate is `no_std` (it needs `alloc`). Reading dumps, writing files,
//! HTTP and the command line live in the `recoin` companion crate.

#![no_std]

extern crate alloc;

pub mod entity;
pub mod error;
pub mod ids;
pub mod index;
pub mod parse;
pub mod recommender;
pub mod session;
pub mod snapshot;
pub mod stats;

pub use entity::{Entity, EntityStore};
pub use error::{CoreError, ParseError};
pub use ids::{ItemId, PropertyId};
pub use index::{class_of, ClassAssignment, ClassIndex, IndexConfig};
pub use recommender::{
    completeness, grade, missing_properties, recommend, relevance_delta, CompletenessReport,
    level_label, Grade, GradeLetter, LevelBands, Recommendation, WhatIfQuery, DEFAULT_LIMIT,
};
pub use session::{Condition, EditSession, SelfReport, TaskResult, UiVariant};
