#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ts) = meshforge::codec::read_tokens(data) {
        let _ = meshforge::codec::token_stats(&ts);
        if let Ok(qm) = meshforge::codec::decode(&ts) {
            // Anything that decodes must re-encode and decode again.
            let ts2 = meshforge::codec::encode(&qm).expect("re-encode decoded mesh");
            let qm2 = meshforge::codec::decode(&ts2).expect("decode re-encoded stream");
            assert_eq!(qm.triangles.len(), qm2.triangles.len());
        }
    }
});
