#![no_main]
use g2coflow::KForm;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&dim, rest)) = data.split_first() else { return };
    let Ok(expr) = std::str::from_utf8(rest) else { return };
    let dim = (dim % 10) as usize;
    if let Ok(f) = KForm::parse(dim, expr) {
        // A zero form prints as "0", which reads back as a scalar.
        if f.max_abs().is_finite() && f.max_abs() > 0.0 {
            let back = KForm::parse(dim, &f.to_string()).unwrap();
            assert!(back.distance(&f) <= 1e-12 * (1.0 + f.max_abs()));
        }
    }
});
