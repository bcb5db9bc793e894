//! Prompt-set files: JSON Lines and the `SHDF` binary layout.
//!
//! Binary layout (all little-endian):
//!
//! | bytes | content                         |
//! |-------|---------------------------------|
//! | 4     | magic `b"SHDF"`                 |
//! | 2     | version `u16` (currently 1)     |
//! | 8     | record count N `u64`            |
//! | 4     | dimension d `u32`               |
//! | 4·N·d | `f32` values, row-major         |
//!
//! Binary files carry no ids; records are named by their decimal index.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, PromptRecord, PromptSet};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"SHDF";
pub const BINARY_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptFormat {
    Jsonl,
    Binary,
}

impl PromptFormat {
    /// Guesses from the extension: `.jsonl`/`.json` are JSON Lines, anything else binary.
    pub fn from_path(path: &Path) -> PromptFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => PromptFormat::Jsonl,
            _ => PromptFormat::Binary,
        }
    }
}

impl FromStr for PromptFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(PromptFormat::Jsonl),
            "binary" | "bin" => Ok(PromptFormat::Binary),
            other => Err(Error::usage(format!("unknown prompt format {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompt: Option<String>,
    embedding: Vec<f32>,
}

pub fn load_prompt_set(path: &Path, format: PromptFormat) -> Result<PromptSet> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        PromptFormat::Jsonl => read_jsonl(BufReader::new(file)),
        PromptFormat::Binary => {
            let mut bytes = Vec::new();
            BufReader::new(file)
                .read_to_end(&mut bytes)
                .map_err(|e| Error::io(path, e))?;
            decode_binary(&bytes)
        }
    }
}

pub fn save_prompt_set(set: &PromptSet, path: &Path, format: PromptFormat) -> Result<()> {
    let bytes = match format {
        PromptFormat::Jsonl => encode_jsonl(set)?,
        PromptFormat::Binary => encode_binary(set),
    };
    write_atomic(path, &bytes)
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<PromptSet> {
    let mut items = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(format!("line {}", lineno + 1), e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("line {}", lineno + 1), e.to_string()))?;
        let embedding = Embedding::from_f32(&rec.embedding).map_err(|e| {
            Error::parse(
                format!("line {} (id {:?})", lineno + 1, rec.id),
                e.to_string(),
            )
        })?;
        items.push(PromptRecord {
            id: rec.id,
            prompt: rec.prompt,
            embedding,
        });
    }
    PromptSet::new(items)
}

pub fn encode_jsonl(set: &PromptSet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for rec in set.items() {
        let line = JsonlRecord {
            id: rec.id.clone(),
            prompt: rec.prompt.clone(),
            embedding: rec.embedding.to_f32(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn encode_binary(set: &PromptSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * set.len() * set.dim());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    for emb in set.embeddings() {
        for v in emb.to_f32() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<PromptSet> {
    let header = |msg: &str| Error::parse("binary header", msg.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(header("file shorter than header"));
    }
    if &bytes[0..4] != BINARY_MAGIC {
        return Err(header("bad magic, expected \"SHDF\""));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BINARY_VERSION {
        return Err(header(&format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let d = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as u64;
    if n == 0 || d == 0 {
        return Err(header(&format!("empty declared shape N={n}, d={d}")));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| header("declared shape overflows"))?;
    if bytes.len() as u64 != expected {
        return Err(header(&format!(
            "declared N={n}, d={d} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let d = d as usize;
    let body = &bytes[HEADER_LEN..];
    let mut items = Vec::with_capacity(n as usize);
    for (i, row) in body.chunks_exact(4 * d).enumerate() {
        let values: Vec<f32> = row
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let embedding = Embedding::from_f32(&values)
            .map_err(|e| Error::parse(format!("record {i}"), e.to_string()))?;
        items.push(PromptRecord {
            id: i.to_string(),
            prompt: None,
            embedding,
        });
    }
    PromptSet::new(items)
}

/// Writes via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
