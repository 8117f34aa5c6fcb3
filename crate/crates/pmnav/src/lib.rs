//! Placeholder, filled in as the crate lands.
