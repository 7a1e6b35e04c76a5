#![no_main]

use attractor_lab::attractor::NetRecord;
use attractor_lab::phase::Basis;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(r) = serde_json::from_slice::<NetRecord>(data) else {
        return;
    };
    let _ = r.basis.ensure_same(&Basis::sine(std::f64::consts::PI, 16));
    let _ = r.metric.validate();
    let _ = serde_json::to_string(&r);
});
