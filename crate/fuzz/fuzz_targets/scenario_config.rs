#![no_main]

use libfuzzer_sys::fuzz_target;
use recdiag::simgen::{parse_scenario_config, resolve_positions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_scenario_config(text) {
        for spec in cfg.specs() {
            spec.validate().expect("accepted specs are valid");
            if spec.n <= 10_000 {
                resolve_positions(spec.n, spec.positions).expect("validated positions resolve");
            }
        }
    }
});
