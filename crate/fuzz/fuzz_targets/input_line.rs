#![no_main]

use libfuzzer_sys::fuzz_target;
use vidscript::pipeline::{parse_input_line, process_video, PipelineConfig};
use vidscript::tokenizer::ByteTokenizer;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(input) = parse_input_line(line) {
        let _ = process_video(&input, &PipelineConfig::default(), &ByteTokenizer);
    }
});
