#![no_main]

use libfuzzer_sys::fuzz_target;
use recdiag::io::{dataset_to_csv, parse_csv, CsvOptions};

fuzz_target!(|data: &[u8]| {
    for opts in [
        CsvOptions::new("y"),
        CsvOptions::new("y").with_id_column("id").without_intercept(),
    ] {
        let Ok(ds) = parse_csv(data, &opts) else {
            continue;
        };
        assert_eq!(ds.y().len(), ds.n());
        assert!(ds.x().iter().chain(ds.y().iter()).all(|v| v.is_finite()));
        // accepted data must survive a write and re-read unchanged
        if ds.labels().iter().any(|l| l == "id" || l == "y") {
            continue;
        }
        let dropped: Vec<usize> = (0..ds.p())
            .filter(|&j| ds.labels()[j] == "intercept" && ds.x().column(j).iter().all(|&v| v == 1.0))
            .collect();
        let mut reread = CsvOptions::new("y").with_id_column("id");
        match dropped.as_slice() {
            [] => reread.intercept = false,
            [0] => reread.intercept = true,
            _ => continue,
        }
        let again = parse_csv(dataset_to_csv(&ds, "y").as_bytes(), &reread).expect("re-read");
        assert_eq!(again, ds);
    }
});
