//! Weight archive: a text manifest followed by little-endian `f32` blocks.
//!
//! ```text
//! METER-WEIGHTS v1
//! variant: XS
//! activation: relu
//! tensors: 2
//! tensor: encoder.stem.weight 16,3,3,3 offset=0 len=1728 crc32=1a2b3c4d
//! tensor: encoder.stem.bn.gamma 16,1,1,1 offset=1728 len=64 crc32=0badf00d
//! end
//! <payload>
//! ```
//!
//! Offsets are relative to the first payload byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Activation, MeterModel, ModelConfig, Variant};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &str = "METER-WEIGHTS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Shape,
    pub offset: usize,
    pub len: usize,
    pub crc32: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveHeader {
    pub version: u32,
    pub variant: Variant,
    pub activation: Activation,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode_archive(model: &MeterModel) -> Vec<u8> {
    encode_tensors(model.variant(), model.config().activation, &model.named_weights())
}

/// Serializes an arbitrary tensor list under the given header fields.
pub fn encode_tensors(variant: Variant, activation: Activation, weights: &[(String, &Tensor)]) -> Vec<u8> {
    let mut payload = Vec::new();
    let mut header =
        format!("{MAGIC} v{VERSION}\nvariant: {variant}\nactivation: {activation}\ntensors: {}\n", weights.len());
    for (name, t) in weights {
        let start = payload.len();
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let block = &payload[start..];
        let d = t.shape().dims();
        header.push_str(&format!(
            "tensor: {name} {},{},{},{} offset={start} len={} crc32={:08x}\n",
            d[0],
            d[1],
            d[2],
            d[3],
            block.len(),
            crc32fast::hash(block)
        ));
    }
    header.push_str("end\n");
    let mut out = header.into_bytes();
    out.extend_from_slice(&payload);
    out
}

pub fn save_weights(model: &MeterModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_archive(model)).map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

fn malformed(detail: impl Into<String>) -> Error {
    Error::Malformed { what: "weight archive", detail: detail.into() }
}

fn field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    line.and_then(|l| l.strip_prefix(key))
        .and_then(|l| l.strip_prefix(": "))
        .ok_or_else(|| malformed(format!("expected `{key}:` line")))
}

fn parse_entry(line: &str) -> Result<TensorEntry> {
    let rest = line.strip_prefix("tensor: ").ok_or_else(|| malformed(format!("bad tensor line `{line}`")))?;
    let parts: Vec<&str> = rest.split_whitespace().collect();
    let [name, dims, offset, len, crc] = parts.as_slice() else {
        return Err(malformed(format!("bad tensor line `{line}`")));
    };
    let dims: Vec<usize> = dims
        .split(',')
        .map(|d| d.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| malformed(format!("bad shape in `{line}`")))?;
    let [a, b, c, d] = dims.as_slice() else {
        return Err(malformed(format!("shape of `{name}` is not rank 4")));
    };
    let num = |s: &str, key: &str| -> Result<usize> {
        s.strip_prefix(key).and_then(|v| v.parse().ok()).ok_or_else(|| malformed(format!("bad `{key}` in `{line}`")))
    };
    let crc32 = crc
        .strip_prefix("crc32=")
        .and_then(|v| u32::from_str_radix(v, 16).ok())
        .ok_or_else(|| malformed(format!("bad checksum in `{line}`")))?;
    let shape = Shape::new(*a, *b, *c, *d);
    let entry =
        TensorEntry { name: name.to_string(), shape, offset: num(offset, "offset=")?, len: num(len, "len=")?, crc32 };
    if entry.len != shape.numel() * 4 {
        return Err(malformed(format!("`{name}` declares {} bytes for shape {shape}", entry.len)));
    }
    Ok(entry)
}

/// Parses the header and returns it with the payload slice.
pub fn parse_archive(bytes: &[u8]) -> Result<(ArchiveHeader, &[u8])> {
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| malformed("header is not terminated by `end`"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + nl]).map_err(|_| malformed("header is not UTF-8"))?;
        pos += nl + 1;
        if line == "end" {
            break;
        }
        lines.push(line);
    }
    let mut it = lines.into_iter();
    let first = it.next().ok_or_else(|| malformed("empty header"))?;
    let version = first
        .strip_prefix(MAGIC)
        .and_then(|v| v.strip_prefix(" v"))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| malformed(format!("missing `{MAGIC}` signature")))?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let variant: Variant = field(it.next(), "variant")?.parse()?;
    let activation: Activation = field(it.next(), "activation")?.parse()?;
    let count: usize = field(it.next(), "tensors")?.parse().map_err(|_| malformed("bad tensor count"))?;
    let tensors = it.map(parse_entry).collect::<Result<Vec<_>>>()?;
    if tensors.len() != count {
        return Err(malformed(format!("header announces {count} tensors but lists {}", tensors.len())));
    }
    Ok((ArchiveHeader { version, variant, activation, tensors }, &bytes[pos..]))
}

/// Decodes every tensor, verifying extents and checksums.
pub fn decode_tensors(header: &ArchiveHeader, payload: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    let mut out = BTreeMap::new();
    for e in &header.tensors {
        // A block cut short by truncation reads as corrupted.
        let block = payload.get(e.offset..e.offset + e.len).ok_or_else(|| Error::Checksum(e.name.clone()))?;
        if crc32fast::hash(block) != e.crc32 {
            return Err(Error::Checksum(e.name.clone()));
        }
        let data = block.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if out.insert(e.name.clone(), Tensor::new(e.shape, data)?).is_some() {
            return Err(malformed(format!("tensor `{}` listed twice", e.name)));
        }
    }
    Ok(out)
}

pub fn decode_archive(bytes: &[u8], config: &ModelConfig) -> Result<MeterModel> {
    let (header, payload) = parse_archive(bytes)?;
    if header.variant != config.variant {
        return Err(Error::VariantMismatch { archive: header.variant, expected: config.variant });
    }
    if header.activation != config.activation {
        return Err(Error::ActivationMismatch { archive: header.activation, expected: config.activation });
    }
    let tensors = decode_tensors(&header, payload)?;
    let mut model = MeterModel::zeroed(config.clone())?;
    model.load_named(tensors)?;
    Ok(model)
}

pub fn load_weights(path: impl AsRef<Path>, config: &ModelConfig) -> Result<MeterModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_archive(&bytes, config)
}

/// Header only, for picking a config before loading.
pub fn read_header(path: impl AsRef<Path>) -> Result<ArchiveHeader> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_archive(&bytes)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MeterModel {
        MeterModel::build(ModelConfig::preset(Variant::XXS), 9).unwrap()
    }

    #[test]
    fn round_trip_bytes() {
        let m = small();
        let back = decode_archive(&encode_archive(&m), m.config()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncated_payload_names_tensor() {
        let m = small();
        let mut bytes = encode_archive(&m);
        bytes.truncate(bytes.len() - 2);
        let last = m.named_weights().last().unwrap().0.clone();
        match decode_archive(&bytes, m.config()) {
            Err(Error::Checksum(name)) => assert_eq!(name, last),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flipped_byte_is_checksum_error() {
        let m = small();
        let mut bytes = encode_archive(&m);
        let n = bytes.len();
        bytes[n - 1] ^= 0x40;
        assert!(matches!(decode_archive(&bytes, m.config()), Err(Error::Checksum(_))));
    }

    #[test]
    fn missing_and_extra_tensors() {
        let m = small();
        let mut w = m.named_weights();
        let (dropped, _) = w.remove(3);
        let bytes = encode_tensors(Variant::XXS, Activation::ReLU, &w);
        assert!(matches!(decode_archive(&bytes, m.config()), Err(Error::MissingTensor(n)) if n == dropped));
        let extra = Tensor::zeros(Shape::vector(2));
        let mut w = m.named_weights();
        w.push(("decoder.extra".into(), &extra));
        let bytes = encode_tensors(Variant::XXS, Activation::ReLU, &w);
        assert!(matches!(decode_archive(&bytes, m.config()), Err(Error::UnexpectedTensor(n)) if n == "decoder.extra"));
    }

    #[test]
    fn guards() {
        let m = small();
        let bytes = encode_archive(&m);
        let s = ModelConfig::preset(Variant::S);
        assert!(matches!(decode_archive(&bytes, &s), Err(Error::VariantMismatch { .. })));
        let silu = m.config().clone().with_activation(Activation::SiLU);
        assert!(matches!(decode_archive(&bytes, &silu), Err(Error::ActivationMismatch { .. })));
        let v2 = String::from_utf8_lossy(&bytes[..20]).replace("v1", "v2");
        let mut b2 = v2.into_bytes();
        b2.extend_from_slice(&bytes[20..]);
        assert!(matches!(decode_archive(&b2, m.config()), Err(Error::UnsupportedVersion(2))));
    }
}
