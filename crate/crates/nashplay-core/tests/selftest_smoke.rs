//! The reduced-size acceptance sweep must pass end to end, quickly.

use std::time::Instant;

use nashplay_core::selftest::{run_all, Mode};

#[test]
fn smoke_suite_passes_quickly() {
    let start = Instant::now();
    let results = run_all(Mode::Smoke);
    let seconds = start.elapsed().as_secs_f64();
    assert_eq!(results.len(), 10);
    for r in &results {
        println!(
            "[{}] {:2}. {} ({:.2}s): {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.id,
            r.name,
            r.seconds,
            r.detail
        );
    }
    assert!(results.iter().all(|r| r.passed), "a smoke check failed");
    assert!(seconds < 60.0, "smoke suite took {seconds:.1}s");
}
