#![no_main]

use libfuzzer_sys::fuzz_target;
use photoba::io::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::parse(text, "fuzz") {
        let again = Manifest::parse(&m.to_toml(), "fuzz").expect("serialized manifest parses");
        assert_eq!(again.sensors.len(), m.sensors.len());
    }
});
