#![no_main]
use g2coflow::io::SweepPlan;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(plan) = SweepPlan::parse(s) {
        for run in &plan.runs {
            assert!(run.t0.is_finite() && run.t1.is_finite());
            let _ = run.algebra_file().parts();
        }
    }
});
