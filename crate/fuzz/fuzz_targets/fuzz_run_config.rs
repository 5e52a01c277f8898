#![no_main]

use arclin::config::parse_run_config;
use libfuzzer_sys::fuzz_target;

// Any text must either parse into a validated configuration or fail with a
// path-carrying error. A parsed configuration serializes back to JSON that
// parses and validates again.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = parse_run_config(text) {
        let json = serde_json::to_string(&config).expect("config serializes");
        parse_run_config(&json).expect("serialized config parses back");
    }
});
