//! Test-only crate. The acceptance suite lives in `tests/acceptance.rs`.
