#![no_main]

use attractor_cli::ExperimentManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(m) = ExperimentManifest::from_toml_str(src) else {
        return;
    };
    let echo = ExperimentManifest::from_toml_str(&m.to_toml()).expect("echo parses");
    assert_eq!(echo.hash(), m.hash());
    let _ = m.basis();
    let _ = m.symbol();
});
