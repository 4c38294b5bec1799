//! Reporting helper for the acceptance suite in `tests/acceptance.rs`.

use std::io::Write;

/// Print one `[PASS]`/`[FAIL]` line and fail the calling test on `FAIL`.
///
/// The line goes to the process's stdout handle directly rather than
/// through `println!`, so the test harness does not capture it and it shows
/// up in every run, passing or not.
pub fn verdict(name: &str, pass: bool, detail: &str) {
    let line = format!(
        "[{}] {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "{name}: {detail}");
}
