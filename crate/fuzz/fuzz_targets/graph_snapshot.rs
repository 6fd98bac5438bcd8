#![no_main]

use icg_core::{graph_from_snapshot_bytes, graph_snapshot_bytes};
use libfuzzer_sys::fuzz_target;

// Anything the decoder accepts must survive a re-encode round trip bit
// for bit; the decoder itself length-checks every section against the
// header before allocating.
fuzz_target!(|data: &[u8]| {
    let Ok(g) = graph_from_snapshot_bytes(data) else { return };
    let first = graph_snapshot_bytes(&g);
    let again = graph_from_snapshot_bytes(&first).expect("canonical bytes rejected");
    assert_eq!(first, graph_snapshot_bytes(&again), "round trip not stable");
});
