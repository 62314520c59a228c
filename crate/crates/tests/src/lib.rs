//! Holds the acceptance run in `tests/acceptance.rs`; no library code.
