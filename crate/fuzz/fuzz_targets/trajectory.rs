#![no_main]

use libfuzzer_sys::fuzz_target;
use photoba::io::{format_trajectory, parse_trajectory};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(traj) = parse_trajectory(text, "fuzz") {
        let again = parse_trajectory(&format_trajectory(&traj), "fuzz").expect("formatted trajectory parses");
        assert_eq!(again.timestamps(), traj.timestamps());
    }
});
