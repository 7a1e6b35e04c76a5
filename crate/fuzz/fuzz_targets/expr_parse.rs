#![no_main]

use attractor_lab::expr::{Expr, Vars};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(e) = Expr::parse(src) else {
        return;
    };
    assert_eq!(e.source(), src);
    for v in [0.0, -1.5, 1e300] {
        let _ = e.eval(&Vars { v, t: 0.25, x: 0.5, y: 1.0 });
    }
});
