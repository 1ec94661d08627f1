#![no_main]

use libfuzzer_sys::fuzz_target;
use vidscript::tokenizer::{ByteLevelBpe, Tokenizer};

// Input layout: vocab JSON, a NUL byte, merges text, a NUL byte, a word.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut parts = text.splitn(3, '\0');
    let (Some(vocab), Some(merges)) = (parts.next(), parts.next()) else { return };
    let word = parts.next().unwrap_or("hello");
    if let Ok(bpe) = ByteLevelBpe::from_strs(vocab, merges) {
        let ids = bpe.encode_word(word);
        let _ = bpe.decode(&ids);
    }
});
