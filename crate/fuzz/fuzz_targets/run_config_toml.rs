#![no_main]
use caliblab::io::{Command, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::from_toml(text) {
            for c in [
                Command::Simulate,
                Command::Calibrate,
                Command::Crossval,
                Command::Analyze,
            ] {
                let _ = cfg.validate(c);
            }
        }
    }
});
