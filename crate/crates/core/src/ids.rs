//! Identifier newtypes.
//!
//! `Ord` on the newtypes is plain byte order (it must agree with `str` for
//! map lookups by `&str`); rankings use the numeric-aware [`compare_ids`].

use alloc::string::String;
use core::borrow::Borrow;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Returns true if `s` can be used as an identifier: non-empty, no whitespace
/// or control characters.
pub fn is_valid_id(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c.is_control())
}

/// Orders identifiers like `P31 < P106 < P1000`: alphabetic prefix first,
/// then the trailing digits as an integer, then the raw string.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    let (pa, na) = split_numeric(a);
    let (pb, nb) = split_numeric(b);
    pa.cmp(pb)
        .then_with(|| match (na, nb) {
            (Some(x), Some(y)) => cmp_digits(x, y),
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        })
        .then_with(|| a.cmp(b))
}

fn split_numeric(s: &str) -> (&str, Option<&str>) {
    let cut = s
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_digit())
        .last()
        .map(|(i, _)| i);
    match cut {
        Some(i) => (&s[..i], Some(&s[i..])),
        None => (s, None),
    }
}

// Compares decimal digit strings of any length without overflow.
fn cmp_digits(a: &str, b: &str) -> Ordering {
    let a = a.trim_start_matches('0');
    let b = b.trim_start_matches('0');
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            pub fn into_string(self) -> String {
                self.0
            }

            /// Numeric-aware order, see [`compare_ids`].
            pub fn cmp_numeric(&self, other: &Self) -> Ordering {
                compare_ids(&self.0, &other.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Debug::fmt(&self.0, f)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.into())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

id_type!(
    /// Item identifier (`Q42`). Classes are items too.
    ItemId
);
id_type!(
    /// Property identifier (`P31`).
    PropertyId
);
