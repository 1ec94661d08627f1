#![no_main]

use libfuzzer_sys::fuzz_target;
use vidscript::pipeline::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::from_toml_str(text) {
        let _ = cfg.hash();
    }
});
