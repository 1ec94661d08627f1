use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use vidscript::SCHEMA_VERSION;

pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(io::stdin().lock())));
    }
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Box::new(BufReader::new(f)))
}

pub fn open_output(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(f)))
}

pub fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if path.as_os_str() == "-" {
        io::stdin().lock().read_to_end(&mut buf)?;
    } else {
        buf = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    }
    Ok(buf)
}

pub fn write_line<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(serde::Deserialize)]
struct Versioned {
    schema_version: Option<u32>,
}

/// Calls `f` for every non-blank line that parses as `T` and carries a
/// supported schema version. Bad lines are logged and counted; the count is
/// returned. Errors from `f` are fatal.
pub fn for_each_record<T, F>(input: impl BufRead, mut f: F) -> Result<usize>
where
    T: DeserializeOwned,
    F: FnMut(usize, T) -> Result<Option<String>>,
{
    let mut bad = 0;
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        let no = no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let version = serde_json::from_str::<Versioned>(&line).map(|v| v.schema_version);
        if let Ok(Some(v)) = version {
            if v != SCHEMA_VERSION {
                log::warn!("line {no}: unsupported schema_version {v}");
                bad += 1;
                continue;
            }
        }
        match serde_json::from_str::<T>(&line) {
            Ok(record) => {
                if let Some(problem) = f(no, record)? {
                    log::warn!("line {no}: {problem}");
                    bad += 1;
                }
            }
            Err(e) => {
                log::warn!("line {no}: {e}");
                bad += 1;
            }
        }
    }
    Ok(bad)
}
