#![no_main]
use g2coflow::multilinear::MultiIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(mi) = s.parse::<MultiIndex>() {
        let back: MultiIndex = mi.to_string().parse().unwrap();
        assert_eq!(back, mi);
        assert_eq!(mi.iter().count(), mi.degree());
    }
});
