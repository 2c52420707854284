#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(volume) = meshforge::watertight::TsdfVolume::read_from(data) {
        // Accepted volumes must round-trip and bridge into a field.
        let mut buf = Vec::new();
        volume.write_to(&mut buf).expect("rewrite volume");
        let _ = meshforge::field::GridField::from_volume(&volume);
    }
});
