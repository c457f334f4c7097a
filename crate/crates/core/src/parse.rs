//! Record parsing for entity dumps.
//!
//! The canonical format is one JSON object per line with exactly the keys
//! `id` and `claims`:
//!
//! ```text
//! {"id":"Q1","claims":{"P31":["Q5"],"P106":["Q999"]}}
//! ```
//!
//! Full Wikidata entity records (statements with `mainsnak`/`datavalue`) are
//! accepted by [`parse_wikidata_entity`] and reduced to the same form, keeping
//! truthy statements only.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::de::{self, DeserializeSeed, IgnoredAny, MapAccess, SeqAccess, Visitor};
use serde::Serialize;
use serde_json::Value;

use crate::entity::Entity;
use crate::error::ParseError;
use crate::ids::{is_valid_id, PropertyId};

/// Parses one record of the canonical format in lenient mode (unknown keys
/// ignored).
pub fn parse_entity(line: &str) -> Result<Entity, ParseError> {
    parse_entity_with(line, false)
}

/// Parses one canonical record. In strict mode unknown keys are rejected.
///
/// Duplicate property keys are merged by set union.
pub fn parse_entity_with(line: &str, strict: bool) -> Result<Entity, ParseError> {
    let mut de = serde_json::Deserializer::from_str(line);
    let entity = RecordSeed { strict }
        .deserialize(&mut de)
        .map_err(|e| json_error(line, &e))?;
    de.end().map_err(|e| json_error(line, &e))?;
    Ok(entity)
}

/// What a dump line turned out to be.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Line {
    Entity(Entity),
    /// Blank line or the `[` / `]` framing of a JSON-array dump.
    Skip,
}

/// Parses any supported dump line: canonical records, Wikidata entity
/// records (optionally with the trailing `,` of array dumps), and framing.
pub fn parse_line(line: &str, strict: bool) -> Result<Line, ParseError> {
    let trimmed = line.trim_end_matches(['\n', '\r']);
    let bare = trimmed.trim();
    if bare.is_empty() || bare == "[" || bare == "]" {
        return Ok(Line::Skip);
    }
    if trimmed.contains("\"mainsnak\"") {
        return parse_wikidata_entity(trimmed).map(Line::Entity);
    }
    parse_entity_with(trimmed, strict).map(Line::Entity)
}

/// Serializes an entity to its canonical record (no trailing newline).
///
/// Properties and values appear in byte order, so equal
/// entities always produce identical bytes.
pub fn to_record(entity: &Entity) -> String {
    #[derive(Serialize)]
    struct Record<'a> {
        id: &'a str,
        claims: &'a BTreeMap<PropertyId, BTreeSet<String>>,
    }
    serde_json::to_string(&Record {
        id: entity.id().as_str(),
        claims: entity.claims(),
    })
    .expect("string-keyed maps always serialize")
}

fn json_error(input: &str, err: &serde_json::Error) -> ParseError {
    // serde_json reports 1-based lines and 1-based columns.
    let line_start: usize = input
        .split_inclusive('\n')
        .take(err.line().saturating_sub(1))
        .map(str::len)
        .sum();
    let offset = (line_start + err.column().saturating_sub(1)).min(input.len());
    let mut reason = err.to_string();
    if let Some(cut) = reason.find(" at line ") {
        reason.truncate(cut);
    }
    ParseError::new(offset, reason)
}

struct RecordSeed {
    strict: bool,
}

impl<'de> DeserializeSeed<'de> for RecordSeed {
    type Value = Entity;

    fn deserialize<D: de::Deserializer<'de>>(self, d: D) -> Result<Entity, D::Error> {
        d.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for RecordSeed {
    type Value = Entity;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an object with keys `id` and `claims`")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entity, A::Error> {
        let mut id: Option<String> = None;
        let mut claims: Option<BTreeMap<PropertyId, BTreeSet<String>>> = None;
        while let Some(key) = map.next_key::<String>()? {
            match key.as_str() {
                "id" => {
                    if id.is_some() {
                        return Err(de::Error::duplicate_field("id"));
                    }
                    let v: String = map.next_value()?;
                    if !is_valid_id(&v) {
                        return Err(de::Error::custom(format!("invalid item id {v:?}")));
                    }
                    id = Some(v);
                }
                "claims" => {
                    if claims.is_some() {
                        return Err(de::Error::duplicate_field("claims"));
                    }
                    claims = Some(map.next_value_seed(ClaimsSeed)?);
                }
                other if self.strict => {
                    return Err(de::Error::custom(format!("unknown key {other:?}")));
                }
                _ => {
                    map.next_value::<IgnoredAny>()?;
                }
            }
        }
        let id = id.ok_or_else(|| de::Error::missing_field("id"))?;
        let claims = claims.ok_or_else(|| de::Error::missing_field("claims"))?;
        let mut entity = Entity::new(id);
        for (p, values) in claims {
            for v in values {
                entity.add_claim(p.clone(), v);
            }
        }
        Ok(entity)
    }
}

struct ClaimsSeed;

impl<'de> DeserializeSeed<'de> for ClaimsSeed {
    type Value = BTreeMap<PropertyId, BTreeSet<String>>;

    fn deserialize<D: de::Deserializer<'de>>(self, d: D) -> Result<Self::Value, D::Error> {
        d.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for ClaimsSeed {
    type Value = BTreeMap<PropertyId, BTreeSet<String>>;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an object mapping property ids to arrays of values")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
        let mut out: BTreeMap<PropertyId, BTreeSet<String>> = BTreeMap::new();
        while let Some(key) = map.next_key::<String>()? {
            if !is_valid_id(&key) {
                return Err(de::Error::custom(format!("invalid property id {key:?}")));
            }
            let values = map.next_value_seed(ValuesSeed)?;
            if values.is_empty() {
                return Err(de::Error::custom(format!("property {key} has no values")));
            }
            // Repeated keys within one record: union of the value sets.
            out.entry(PropertyId::new(key)).or_default().extend(values);
        }
        Ok(out)
    }
}

struct ValuesSeed;

impl<'de> DeserializeSeed<'de> for ValuesSeed {
    type Value = Vec<String>;

    fn deserialize<D: de::Deserializer<'de>>(self, d: D) -> Result<Self::Value, D::Error> {
        d.deserialize_seq(self)
    }
}

impl<'de> Visitor<'de> for ValuesSeed {
    type Value = Vec<String>;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an array of value strings")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<String>, A::Error> {
        let mut out = Vec::new();
        while let Some(v) = seq.next_element::<ScalarValue>()? {
            out.push(v.0);
        }
        Ok(out)
    }
}

/// A value element: a string, or a number/bool reduced to its literal text.
struct ScalarValue(String);

impl<'de> de::Deserialize<'de> for ScalarValue {
    fn deserialize<D: de::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) => Ok(ScalarValue(s)),
            v @ (Value::Number(_) | Value::Bool(_)) => Ok(ScalarValue(v.to_string())),
            _ => Err(de::Error::custom("claim values must be strings")),
        }
    }
}

/// Reduces a full Wikidata entity record to an [`Entity`].
///
/// Keeps the best-ranked statements per property (preferred if any, otherwise
/// normal; deprecated never). Qualifiers and references are dropped. A
/// trailing `,` (JSON-array dumps) is tolerated.
pub fn parse_wikidata_entity(line: &str) -> Result<Entity, ParseError> {
    let body = line.trim_end();
    let body = body.strip_suffix(',').unwrap_or(body);
    let root: Value = serde_json::from_str(body).map_err(|e| json_error(body, &e))?;
    let obj = root
        .as_object()
        .ok_or_else(|| ParseError::new(0, "entity record must be an object"))?;
    let id = obj
        .get("id")
        .and_then(Value::as_str)
        .filter(|s| is_valid_id(s))
        .ok_or_else(|| ParseError::new(0, "missing or invalid `id`"))?;
    let mut entity = Entity::new(id);
    let Some(claims) = obj.get("claims") else {
        return Ok(entity);
    };
    let claims = claims
        .as_object()
        .ok_or_else(|| ParseError::new(0, "`claims` must be an object"))?;
    for (property, statements) in claims {
        if !is_valid_id(property) {
            return Err(ParseError::new(0, format!("invalid property id {property:?}")));
        }
        let statements = statements
            .as_array()
            .ok_or_else(|| ParseError::new(0, format!("statements of {property} must be an array")))?;
        let has_preferred = statements.iter().any(|s| rank_of(s) == "preferred");
        let wanted = if has_preferred { "preferred" } else { "normal" };
        for statement in statements.iter().filter(|s| rank_of(s) == wanted) {
            if let Some(value) = statement.get("mainsnak").and_then(snak_value) {
                entity.add_claim(property.as_str(), value);
            }
        }
    }
    Ok(entity)
}

fn rank_of(statement: &Value) -> &str {
    statement
        .get("rank")
        .and_then(Value::as_str)
        .unwrap_or("normal")
}

fn snak_value(snak: &Value) -> Option<String> {
    match snak.get("snaktype").and_then(Value::as_str).unwrap_or("value") {
        "value" => {}
        other => return Some(other.to_string()),
    }
    let datavalue = snak.get("datavalue")?;
    let value = datavalue.get("value")?;
    let kind = datavalue.get("type").and_then(Value::as_str).unwrap_or("");
    let text = match (kind, value) {
        (_, Value::String(s)) => s.clone(),
        ("wikibase-entityid", v) => match v.get("id").and_then(Value::as_str) {
            Some(id) => id.to_string(),
            None => format!("Q{}", v.get("numeric-id")?),
        },
        ("time", v) => v.get("time")?.as_str()?.to_string(),
        ("quantity", v) => v.get("amount")?.as_str()?.to_string(),
        ("monolingualtext", v) => v.get("text")?.as_str()?.to_string(),
        ("globecoordinate", v) => format!("{},{}", v.get("latitude")?, v.get("longitude")?),
        (_, v) => v.to_string(),
    };
    Some(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_record() {
        let e = parse_entity(r#"{"id":"Q1","claims":{"P31":["Q5"],"P106":["Q999"]}}"#).unwrap();
        let expected = Entity::new("Q1").with("P31", "Q5").with("P106", "Q999");
        assert_eq!(e, expected);
    }

    #[test]
    fn empty_claims() {
        let e = parse_entity(r#"{"id":"Q2","claims":{}}"#).unwrap();
        assert_eq!(e, Entity::new("Q2"));
    }

    #[test]
    fn duplicate_property_keys_are_merged() {
        let e = parse_entity(r#"{"id":"Q3","claims":{"P1":["a"],"P1":["b"]}}"#).unwrap();
        assert_eq!(e, Entity::new("Q3").with("P1", "a").with("P1", "b"));
    }

    #[test]
    fn malformed_reports_offset() {
        let err = parse_entity(r#"{"id":"Q1","claims":{"P1":["a"]"#).unwrap_err();
        assert!(err.offset > 20, "{err:?}");
        let err = parse_entity(r#"{"id":"Q1","claims":{"P1":[1,{}]}}"#).unwrap_err();
        assert!(err.reason.contains("strings"), "{err:?}");
        let err = parse_entity("not json").unwrap_err();
        assert_eq!(err.offset, 1);
    }

    #[test]
    fn missing_and_duplicate_keys() {
        assert!(parse_entity(r#"{"id":"Q1"}"#).is_err());
        assert!(parse_entity(r#"{"claims":{}}"#).is_err());
        assert!(parse_entity(r#"{"id":"Q1","id":"Q2","claims":{}}"#).is_err());
        assert!(parse_entity(r#"{"id":"Q1","claims":{"P1":[]}}"#).is_err());
        assert!(parse_entity(r#"{"id":"","claims":{}}"#).is_err());
        assert!(parse_entity(r#"{"id":"Q1","claims":{}} x"#).is_err());
    }

    #[test]
    fn unknown_keys_depend_on_mode() {
        let line = r#"{"id":"Q1","claims":{},"labels":{"en":"x"}}"#;
        assert_eq!(parse_entity_with(line, false).unwrap(), Entity::new("Q1"));
        let err = parse_entity_with(line, true).unwrap_err();
        assert!(err.reason.contains("labels"));
    }

    #[test]
    fn record_is_canonical() {
        let e = Entity::new("Q1").with("P106", "b").with("P31", "Q5").with("P106", "a");
        assert_eq!(to_record(&e), r#"{"id":"Q1","claims":{"P106":["a","b"],"P31":["Q5"]}}"#);
        assert_eq!(parse_entity(&to_record(&e)).unwrap(), e);
    }

    #[test]
    fn wikidata_truthy_reduction() {
        let line = r#"{"type":"item","id":"Q42","labels":{},"claims":{
            "P31":[{"mainsnak":{"snaktype":"value","property":"P31","datavalue":{"value":{"entity-type":"item","numeric-id":5,"id":"Q5"},"type":"wikibase-entityid"}},"type":"statement","rank":"normal"}],
            "P106":[
              {"mainsnak":{"snaktype":"value","property":"P106","datavalue":{"value":{"numeric-id":36180},"type":"wikibase-entityid"}},"rank":"preferred",
               "qualifiers":{"P580":[{"snaktype":"value","property":"P580","datavalue":{"value":{"time":"+1990-00-00T00:00:00Z"},"type":"time"}}]}},
              {"mainsnak":{"snaktype":"value","property":"P106","datavalue":{"value":{"id":"Q1"},"type":"wikibase-entityid"}},"rank":"normal"}],
            "P569":[{"mainsnak":{"snaktype":"value","property":"P569","datavalue":{"value":{"time":"+1952-03-11T00:00:00Z"},"type":"time"}},"rank":"normal"}],
            "P1082":[{"mainsnak":{"snaktype":"somevalue","property":"P1082"},"rank":"normal"}],
            "P9":[{"mainsnak":{"snaktype":"value","property":"P9","datavalue":{"value":"x","type":"string"}},"rank":"deprecated"}]
        }},"#
            .replace('\n', "");
        let e = match parse_line(&line, true).unwrap() {
            Line::Entity(e) => e,
            Line::Skip => panic!("skipped"),
        };
        let expected = Entity::new("Q42")
            .with("P31", "Q5")
            .with("P106", "Q36180")
            .with("P569", "+1952-03-11T00:00:00Z")
            .with("P1082", "somevalue");
        assert_eq!(e, expected);
        assert!(!e.has("P580"), "qualifier leaked into claims");
    }

    #[test]
    fn framing_lines_skip() {
        assert_eq!(parse_line("[", false).unwrap(), Line::Skip);
        assert_eq!(parse_line("]\n", false).unwrap(), Line::Skip);
        assert_eq!(parse_line("   ", true).unwrap(), Line::Skip);
    }
}
