#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = meshforge::meshkit::parse_ply(data) {
        // Re-encode what we accepted; the writer must handle anything the
        // parser lets through.
        let _ = meshforge::meshkit::write_ply(&cloud);
    }
});
