#![no_main]
use caliblab::io::{results_from_csv, results_to_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = results_from_csv(text) {
        let out = results_to_csv(&rows).unwrap();
        let back = results_from_csv(&out).unwrap();
        assert_eq!(back.len(), rows.len());
    }
});
