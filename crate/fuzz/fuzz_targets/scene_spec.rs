#![no_main]

use libfuzzer_sys::fuzz_target;
use photoba::synth::SynthSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = SynthSpec::parse(text, "fuzz") {
        let _ = spec.groundtruth();
        let _ = spec.scene.validate();
    }
});
