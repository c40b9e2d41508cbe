//! Bundled example hierarchies.

use crate::hierarchy::Hierarchy;

pub const GOLDFINCH_JSON: &str = include_str!("../fixtures/goldfinch.json");
pub const TWELVE_CATEGORIES_JSON: &str = include_str!("../fixtures/twelve.json");

/// Bird > Finch > Goldfinch plus two childless domains, Vehicle and Instrument.
pub fn goldfinch() -> Hierarchy {
    Hierarchy::parse(GOLDFINCH_JSON).expect("bundled fixture is valid")
}

/// Three domains with twelve leaf categories: five birds, three vehicles and
/// four musical instruments.
pub fn twelve_categories() -> Hierarchy {
    Hierarchy::parse(TWELVE_CATEGORIES_JSON).expect("bundled fixture is valid")
}
