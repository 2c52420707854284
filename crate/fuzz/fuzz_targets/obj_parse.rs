#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Parsing must be total: parsed documents or positioned errors, never a
    // panic. Stats computation exercises the edge audit and Welzl on
    // whatever geometry survives.
    let _ = meshforge::meshkit::parse_obj(data);
});
