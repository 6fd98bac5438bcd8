#![no_main]

use icg_core::{graph_from_strs, parse_edge_list, LoadOptions};
use libfuzzer_sys::fuzz_target;

// First byte drives the load options, the rest is parsed as text. An
// optional NUL splits the text into an edge list and a feature csv.
// Node counts are capped in the harness: the library sizes the graph
// from the largest id it sees, and a twenty-digit id is not a parser
// bug, just a large allocation.
fuzz_target!(|data: &[u8]| {
    let Some((&flags, rest)) = data.split_first() else { return };
    let opts = LoadOptions {
        n: (flags & 1 != 0).then_some((flags >> 4) as usize),
        normalize: flags & 2 != 0,
        allow_self_loops: flags & 4 != 0,
    };
    let (edge_bytes, feat_bytes) = match rest.iter().position(|&b| b == 0) {
        Some(cut) if flags & 8 != 0 => (&rest[..cut], Some(&rest[cut + 1..])),
        _ => (rest, None),
    };
    let Ok(edge_text) = std::str::from_utf8(edge_bytes) else { return };
    let feat_text = match feat_bytes.map(std::str::from_utf8) {
        Some(Ok(t)) => Some(t),
        Some(Err(_)) => return,
        None => None,
    };
    if opts.n.is_none() {
        match parse_edge_list(edge_text) {
            Ok((_, Some(max_id))) if max_id > 1 << 16 => return,
            Err(_) => {}
            Ok(_) => {}
        }
    }
    let _ = graph_from_strs(edge_text, feat_text, &opts);
});
