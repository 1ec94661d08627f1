#![no_main]

use libfuzzer_sys::fuzz_target;
use vidscript::corpus::{parse_record_line, validate_record};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(record) = parse_record_line(line) {
        let _ = validate_record(&record);
        let again = serde_json::to_string(&record).expect("parsed records serialize");
        assert!(parse_record_line(&again).is_ok());
    }
});
