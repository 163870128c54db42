#![no_main]

use libfuzzer_sys::fuzz_target;
use photoba::io::raster::decode_intensity;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_intensity(data) {
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
