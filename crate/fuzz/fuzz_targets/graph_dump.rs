#![no_main]

use libfuzzer_sys::fuzz_target;
use photoba::graph::parse_graph_dump;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(edges) = parse_graph_dump(text) {
        assert!(edges.iter().all(|e| e.i < e.j));
    }
});
