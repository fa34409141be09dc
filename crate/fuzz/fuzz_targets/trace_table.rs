#![no_main]

use libfuzzer_sys::fuzz_target;
use recdiag::export::parse_trace_table;

fuzz_target!(|data: &[u8]| {
    if let Ok((labels, rows)) = parse_trace_table(data) {
        for row in rows {
            assert!(row.beta.is_empty() || row.beta.len() == labels.len());
        }
    }
});
