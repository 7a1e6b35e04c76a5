#![no_main]

use attractor_lab::store::RunManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(m) = serde_json::from_slice::<RunManifest>(data) else {
        return;
    };
    let _ = m.basis.validate();
    let back: RunManifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back.samples, m.samples);
    assert_eq!(back.basis, m.basis);
});
