//! Acceptance suite for the workspace. The criteria live in
//! `tests/acceptance.rs`; this package sorts after the others so that a
//! failing criterion does not stop the remaining test binaries.

use std::io::Write;

/// Prints one `criterion N ... PASS|FAIL` line to stderr, bypassing the test
/// harness's output capture, then asserts that every check passed.
pub fn report(n: u32, title: &str, checks: &[(String, bool)]) {
    let pass = checks.iter().all(|c| c.1);
    let detail: Vec<String> = checks
        .iter()
        .map(|(d, ok)| format!("{}{d}", if *ok { "" } else { "[failed] " }))
        .collect();
    let line = format!(
        "\ncriterion {n:>2} {title}: {} ({})\n",
        if pass { "PASS" } else { "FAIL" },
        detail.join("; ")
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "{line}");
}
