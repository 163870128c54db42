#![no_main]

use libfuzzer_sys::fuzz_target;
use photoba::io::parse_basin_grid;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = parse_basin_grid(text) {
        let again = parse_basin_grid(&grid.format()).expect("formatted grid parses");
        assert_eq!(again.panels.len(), grid.panels.len());
    }
});
