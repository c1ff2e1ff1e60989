#![no_main]
use g2coflow::coflow::{Adjoint, Coflow};
use g2coflow::io::AlgebraFile;
use libfuzzer_sys::fuzz_target;

// Parsing, rebasing and one evaluation of the reduced flow must never panic.
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(file) = AlgebraFile::parse(s) else { return };
    let Ok(problem) = file.problem() else { return };
    if let Ok(flow) = Coflow::new(&problem.alg, &problem.su3, Adjoint::Evolving) {
        let _ = flow.rhs(&problem.su3.psi);
    }
});
