#![no_main]

use libfuzzer_sys::fuzz_target;
use vidscript::corpus::parse_packed_line;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(example) = parse_packed_line(line) {
        let _ = example.len();
    }
});
