#![no_main]

use libfuzzer_sys::fuzz_target;
use vidscript::denoise::PronunciationTable;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let table = PronunciationTable::parse_cmudict(&text);
    assert!(table.is_symmetric());
});
