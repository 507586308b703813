//! Acceptance checks for `evnoise` live in `tests/acceptance.rs`. Each
//! check prints one `criterion N: PASS|FAIL` line.
