#![no_main]
use g2coflow::KForm;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(f) = KForm::from_json(s) {
        let back = KForm::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }
});
