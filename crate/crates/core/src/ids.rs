//! Identifier shapes shared across the crate.

/// `Q` followed by one or more ASCII digits.
pub fn is_entity_id(s: &str) -> bool {
    has_numeric_suffix(s, 'Q')
}

/// `P` followed by one or more ASCII digits.
pub fn is_predicate_id(s: &str) -> bool {
    has_numeric_suffix(s, 'P')
}

pub fn is_catalog_id(s: &str) -> bool {
    is_entity_id(s) || is_predicate_id(s)
}

fn has_numeric_suffix(s: &str, prefix: char) -> bool {
    s.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}
