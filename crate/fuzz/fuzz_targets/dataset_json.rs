#![no_main]
use caliblab::io::{dataset_from_json, dataset_to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ds) = dataset_from_json(text) else { return };
    // Anything accepted must survive a write/read cycle unchanged.
    let once = dataset_to_json(&ds);
    let again = dataset_from_json(&once).unwrap();
    assert_eq!(once, dataset_to_json(&again));
});
