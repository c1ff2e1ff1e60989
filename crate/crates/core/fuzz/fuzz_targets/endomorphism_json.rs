#![no_main]
use g2coflow::Endomorphism;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(a) = serde_json::from_str::<Endomorphism>(s) {
        let text = serde_json::to_string(&a).unwrap();
        let back: Endomorphism = serde_json::from_str(&text).unwrap();
        assert_eq!(back, a);
    }
});
