#![no_main]

use libfuzzer_sys::fuzz_target;
use recdiag::pipeline::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = Manifest::parse(text) {
        let again = serde_json::to_string(&m).expect("serializable");
        assert_eq!(Manifest::parse(&again).expect("re-parse"), m);
    }
});
