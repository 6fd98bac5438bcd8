#![no_main]

use icg_core::Icg;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(m) = Icg::from_snapshot_bytes(data) else { return };
    let first = m.snapshot_bytes();
    let again = Icg::from_snapshot_bytes(&first).expect("canonical bytes rejected");
    assert_eq!(first, again.snapshot_bytes(), "round trip not stable");
});
