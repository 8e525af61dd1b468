//! Holds the `acceptance` test target, which reruns the end-to-end criteria
//! against `phaseglm-core` and prints one PASS/FAIL line per criterion:
//!
//! ```sh
//! cargo test -p phaseglm-validation --test acceptance
//! ```
