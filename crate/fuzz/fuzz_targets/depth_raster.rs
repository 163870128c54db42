#![no_main]

use libfuzzer_sys::fuzz_target;
use photoba::io::raster::decode_depth;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_depth(data, 1e-3) {
        assert!(img.data().iter().all(|v| v.is_finite() && *v >= 0.0));
    }
});
