#![no_main]

use libfuzzer_sys::fuzz_target;
use unduloid_cli::VerificationReport;

fuzz_target!(|data: &[u8]| {
    if let Ok(report) = serde_json::from_slice::<VerificationReport>(data) {
        let _ = report.summary();
        let _ = report.to_json();
    }
});
