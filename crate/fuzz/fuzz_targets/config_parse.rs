#![no_main]

use libfuzzer_sys::fuzz_target;
use unduloid_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Errors are fine; panics are not. Anything accepted must survive a
    // serialize-and-reparse round trip unchanged.
    if let Ok(cfg) = RunConfig::parse(text, "fuzz.toml") {
        let again = RunConfig::parse(&cfg.to_toml(), "roundtrip.toml").expect("serialized config reparses");
        assert_eq!(cfg, again);
    }
});
