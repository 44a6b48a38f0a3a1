//! Tensor container: a text manifest followed by little-endian `f32` payloads.
//!
//! ```text
//! landtime-tensors 1
//! meta {"epoch":3,...}
//! tensor embed.weight 20x256 0 20480
//! ...
//! end
//! <payload bytes>
//! ```
//!
//! Offsets and lengths are in bytes, relative to the first payload byte.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &str = "landtime-tensors 1";

/// Parsed container contents, tensors in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub meta: String,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

pub fn encode(meta: &str, tensors: &[(&str, &Tensor<f32>)]) -> Result<Vec<u8>> {
    if meta.contains('\n') {
        return Err(Error::Checkpoint("meta must be a single line".into()));
    }
    let mut manifest = format!("{MAGIC}\nmeta {meta}\n");
    let mut offset = 0usize;
    for (name, t) in tensors {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("invalid tensor name `{name}`")));
        }
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        let len = t.numel() * 4;
        manifest.push_str(&format!("tensor {name} {} {offset} {len}\n", dims.join("x")));
        offset += len;
    }
    manifest.push_str("end\n");
    let mut out = manifest.into_bytes();
    out.reserve(offset);
    for (_, t) in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Splits the manifest from the payload.
pub fn read_manifest(bytes: &[u8]) -> Result<(String, Vec<ManifestEntry>, usize)> {
    let mut pos = 0usize;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated manifest"))?;
        pos += nl + 1;
        std::str::from_utf8(&rest[..nl]).map_err(|_| bad("manifest is not utf-8"))
    };
    if next_line()? != MAGIC {
        return Err(bad("missing container header"));
    }
    let meta = next_line()?
        .strip_prefix("meta ")
        .ok_or_else(|| bad("missing meta line"))?
        .to_string();
    let mut entries = Vec::new();
    loop {
        let line = next_line()?;
        if line == "end" {
            break;
        }
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 5 || parts[0] != "tensor" {
            return Err(bad(format!("malformed manifest line `{line}`")));
        }
        let shape = parts[2]
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad shape `{}`", parts[2]))))
            .collect::<Result<Vec<_>>>()?;
        let offset = parts[3].parse().map_err(|_| bad("bad offset"))?;
        let len = parts[4].parse().map_err(|_| bad("bad length"))?;
        entries.push(ManifestEntry {
            name: parts[1].to_string(),
            shape,
            offset,
            len,
        });
    }
    Ok((meta, entries, pos))
}

pub fn decode(bytes: &[u8]) -> Result<TensorFile> {
    let (meta, entries, start) = read_manifest(bytes)?;
    let payload = &bytes[start..];
    let mut tensors = Vec::with_capacity(entries.len());
    for e in entries {
        let numel: usize = e.shape.iter().product();
        if e.len != numel * 4 {
            return Err(bad(format!("length mismatch for `{}`", e.name)));
        }
        let raw = payload
            .get(e.offset..e.offset + e.len)
            .ok_or_else(|| bad(format!("payload for `{}` out of range", e.name)))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push((e.name, Tensor::new(e.shape, data)?));
    }
    Ok(TensorFile { meta, tensors })
}
