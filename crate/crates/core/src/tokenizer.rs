//! Word-level tokenization.
//!
//! [`ByteLevelBpe`] reads the GPT-2 `vocab.json` / `merges.txt` resource
//! pair. [`ByteTokenizer`] is a dependency-free fallback that maps each UTF-8
//! byte of a word to its own token.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("reading tokenizer resource {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary is not a JSON object of token -> id: {0}")]
    Vocab(#[from] serde_json::Error),
    #[error("merges line {line}: expected two space-separated symbols")]
    Merge { line: usize },
    #[error("vocabulary is empty")]
    EmptyVocab,
}

pub trait Tokenizer: Send + Sync {
    /// Token ids for one whitespace-delimited word, encoded as it would appear
    /// after a space in running text.
    fn encode_word(&self, word: &str) -> Vec<u32>;

    fn decode(&self, ids: &[u32]) -> String;

    fn vocab_size(&self) -> usize;

    fn is_special(&self, id: u32) -> bool;

    /// Ids that may be drawn as random replacements, in ascending order.
    fn ordinary_ids(&self) -> Vec<u32> {
        (0..self.vocab_size() as u32)
            .filter(|&id| !self.is_special(id))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ByteTokenizer;

impl Tokenizer for ByteTokenizer {
    fn encode_word(&self, word: &str) -> Vec<u32> {
        word.bytes().map(u32::from).collect()
    }

    fn decode(&self, ids: &[u32]) -> String {
        let bytes: Vec<u8> = ids.iter().filter_map(|&id| u8::try_from(id).ok()).collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    fn vocab_size(&self) -> usize {
        256
    }

    fn is_special(&self, _id: u32) -> bool {
        false
    }
}

/// The reversible byte -> printable-char table GPT-2 uses so every byte has a
/// vocabulary symbol.
fn byte_alphabet() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut n = 0u32;
    for b in 0..=255u8 {
        let printable = (b'!'..=b'~').contains(&b) || (0xA1..=0xAC).contains(&b) || (0xAE..=0xFF).contains(&b);
        table[b as usize] = if printable {
            char::from(b)
        } else {
            let c = char::from_u32(256 + n).expect("valid code point");
            n += 1;
            c
        };
    }
    table
}

pub struct ByteLevelBpe {
    encoder: HashMap<String, u32>,
    decoder: HashMap<u32, String>,
    ranks: HashMap<(String, String), usize>,
    byte_to_char: [char; 256],
    char_to_byte: HashMap<char, u8>,
    special: HashSet<u32>,
    vocab_size: usize,
    pretokenizer: Regex,
}

impl std::fmt::Debug for ByteLevelBpe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ByteLevelBpe")
            .field("vocab_size", &self.vocab_size)
            .field("merges", &self.ranks.len())
            .finish()
    }
}

impl ByteLevelBpe {
    /// Loads `vocab.json` and `merges.txt` from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, TokenizerError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| TokenizerError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        Self::from_strs(&read("vocab.json")?, &read("merges.txt")?)
    }

    pub fn from_strs(vocab_json: &str, merges_txt: &str) -> Result<Self, TokenizerError> {
        let encoder: HashMap<String, u32> = serde_json::from_str(vocab_json)?;
        if encoder.is_empty() {
            return Err(TokenizerError::EmptyVocab);
        }
        let mut ranks = HashMap::new();
        for (line_no, line) in merges_txt.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with("#version") {
                continue;
            }
            let mut parts = line.split(' ');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(TokenizerError::Merge { line: line_no + 1 });
            };
            let rank = ranks.len();
            ranks.entry((a.to_owned(), b.to_owned())).or_insert(rank);
        }
        let decoder: HashMap<u32, String> = encoder.iter().map(|(k, &v)| (v, k.clone())).collect();
        let special = encoder
            .iter()
            .filter(|(k, _)| k.starts_with("<|") && k.ends_with("|>"))
            .map(|(_, &v)| v)
            .collect();
        let vocab_size = encoder.values().copied().max().map_or(0, |m| m as usize + 1);
        let byte_to_char = byte_alphabet();
        let char_to_byte = byte_to_char.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        let pretokenizer = Regex::new(r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+")
            .expect("static pattern");
        Ok(Self {
            encoder,
            decoder,
            ranks,
            byte_to_char,
            char_to_byte,
            special,
            vocab_size,
            pretokenizer,
        })
    }

    fn bpe(&self, piece: &str) -> Vec<String> {
        let mut symbols: Vec<String> = piece
            .bytes()
            .map(|b| self.byte_to_char[b as usize].to_string())
            .collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len()
                    && self.ranks.get(&(symbols[i].clone(), symbols[i + 1].clone())) == Some(&rank)
                {
                    merged.push(format!("{}{}", symbols[i], symbols[i + 1]));
                    i += 2;
                } else {
                    merged.push(symbols[i].clone());
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }
}

impl Tokenizer for ByteLevelBpe {
    fn encode_word(&self, word: &str) -> Vec<u32> {
        let text = format!(" {word}");
        let mut ids = Vec::new();
        for m in self.pretokenizer.find_iter(&text) {
            for symbol in self.bpe(m.as_str()) {
                if let Some(&id) = self.encoder.get(&symbol) {
                    ids.push(id);
                } else {
                    // symbol missing from a reduced vocabulary: fall back to its characters
                    ids.extend(symbol.chars().filter_map(|c| self.encoder.get(&c.to_string()).copied()));
                }
            }
        }
        ids
    }

    fn decode(&self, ids: &[u32]) -> String {
        let bytes: Vec<u8> = ids
            .iter()
            .filter_map(|id| self.decoder.get(id))
            .flat_map(|s| s.chars())
            .filter_map(|c| self.char_to_byte.get(&c).copied())
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn is_special(&self, id: u32) -> bool {
        self.special.contains(&id) || !self.decoder.contains_key(&id)
    }
}
