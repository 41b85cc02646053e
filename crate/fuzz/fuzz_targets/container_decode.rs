#![no_main]

use libfuzzer_sys::fuzz_target;
use unduloid::chsolver::CHSolution;

fuzz_target!(|data: &[u8]| {
    if let Ok(sol) = CHSolution::decode_bytes(data) {
        let mut bytes = Vec::new();
        sol.encode(&mut bytes).expect("decoded container re-encodes");
        let again = CHSolution::decode_bytes(&bytes).expect("re-encoded container decodes");
        assert_eq!(again.u.len(), sol.u.len());
        assert_eq!(again.grid, sol.grid);
    }
});
