#![no_main]

use icg_core::parse_feature_csv;
use libfuzzer_sys::fuzz_target;

// Allocation is bounded by the input itself: every cell costs at least
// one byte of text, so no guard beyond utf-8 is needed.
fuzz_target!(|data: &[u8]| {
    let Some((&flags, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let _ = parse_feature_csv(text, flags & 1 != 0);
});
