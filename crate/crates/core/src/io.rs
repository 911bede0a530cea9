//! The `vgrid` volume format.
//!
//! A volume named `foo` is two files: `foo.json` holds the header
//! `{"magic":"vgrid1","kind":"labels"|"affinities","dtype":"u64"|"f32","shape":[..]}`
//! and `foo.bin` holds the raw little-endian payload in C order (affinity
//! channels slowest). Paths may be given with or without the `.json`/`.bin`
//! extension.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::{AffinityVolume, EdgeVolume, LabelVolume, Shape3};

pub const MAGIC: &str = "vgrid1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Labels,
    Affinities,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U64,
    F32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub magic: String,
    pub kind: Kind,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

/// A volume read from disk, whichever kind the header declares.
#[derive(Clone, Debug, PartialEq)]
pub enum Volume {
    Labels(LabelVolume),
    Affinities(EdgeVolume<f32>),
}

/// `(header path, payload path)` for a volume path with or without extension.
pub fn volume_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    (with("json"), with("bin"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn write_parts(path: &Path, header: &Header, payload: &[u8]) -> Result<()> {
    let (header_path, payload_path) = volume_paths(path);
    let json = serde_json::to_string(header).map_err(|source| Error::Header {
        path: header_path.clone(),
        source,
    })?;
    fs::write(&header_path, json).map_err(io_err(&header_path))?;
    fs::write(&payload_path, payload).map_err(io_err(&payload_path))?;
    Ok(())
}

pub fn write_labels(volume: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    let s = volume.shape();
    let header = Header {
        magic: MAGIC.into(),
        kind: Kind::Labels,
        dtype: Dtype::U64,
        shape: vec![s.z, s.y, s.x],
    };
    let payload: Vec<u8> = volume.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_parts(path.as_ref(), &header, &payload)
}

/// Writes any edge-shaped volume (affinities or gradients) as `f32`.
pub fn write_edges<F: Real>(volume: &EdgeVolume<F>, path: impl AsRef<Path>) -> Result<()> {
    let s = volume.shape();
    let header = Header {
        magic: MAGIC.into(),
        kind: Kind::Affinities,
        dtype: Dtype::F32,
        shape: vec![3, s.z, s.y, s.x],
    };
    let payload: Vec<u8> = volume
        .data()
        .iter()
        .flat_map(|v| v.to_f32().unwrap_or(f32::NAN).to_le_bytes())
        .collect();
    write_parts(path.as_ref(), &header, &payload)
}

pub fn write_affinities<F: Real>(volume: &AffinityVolume<F>, path: impl AsRef<Path>) -> Result<()> {
    write_edges(volume.as_edges(), path)
}

pub fn read_header(path: impl AsRef<Path>) -> Result<Header> {
    let (header_path, _) = volume_paths(path);
    let text = fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|source| Error::Header {
        path: header_path.clone(),
        source,
    })?;
    let magic = raw.get("magic").and_then(|m| m.as_str()).unwrap_or_default();
    if magic != MAGIC {
        return Err(Error::BadMagic { path: header_path, found: magic.to_string() });
    }
    serde_json::from_value(raw).map_err(|source| Error::Header { path: header_path, source })
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let header = read_header(path)?;
    let (header_path, payload_path) = volume_paths(path);
    let mismatch = |reason: String| Error::HeaderMismatch { path: header_path.clone(), reason };

    let (shape, channels, width) = match (header.kind, header.dtype, header.shape.as_slice()) {
        (Kind::Labels, Dtype::U64, &[z, y, x]) => (Shape3::new(z, y, x), 1, 8),
        (Kind::Affinities, Dtype::F32, &[3, z, y, x]) => (Shape3::new(z, y, x), 3, 4),
        (Kind::Labels, Dtype::U64, _) | (Kind::Affinities, Dtype::F32, _) => {
            return Err(mismatch(format!("shape {:?} does not fit kind {:?}", header.shape, header.kind)));
        }
        (kind, dtype, _) => {
            return Err(mismatch(format!("kind {kind:?} cannot have dtype {dtype:?}")));
        }
    };
    let shape = shape.map_err(|_| mismatch(format!("invalid shape {:?}", header.shape)))?;

    let payload = fs::read(&payload_path).map_err(io_err(&payload_path))?;
    let expected = (channels * shape.len() * width) as u64;
    let found = payload.len() as u64;
    if found < expected {
        return Err(Error::Truncated { path: payload_path, expected, found });
    }
    if found > expected {
        return Err(Error::PayloadSize { path: payload_path, expected, found });
    }

    Ok(match header.kind {
        Kind::Labels => {
            let data = payload
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Volume::Labels(LabelVolume::new(shape, data)?)
        }
        Kind::Affinities => {
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Volume::Affinities(EdgeVolume::new(shape, data)?)
        }
    })
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    match read_volume(path.as_ref())? {
        Volume::Labels(v) => Ok(v),
        Volume::Affinities(_) => Err(Error::HeaderMismatch {
            path: volume_paths(path).0,
            reason: "expected a labels volume, found affinities".into(),
        }),
    }
}

/// Reads an edge-shaped volume without range checks (e.g. a gradient).
pub fn read_edges(path: impl AsRef<Path>) -> Result<EdgeVolume<f32>> {
    match read_volume(path.as_ref())? {
        Volume::Affinities(v) => Ok(v),
        Volume::Labels(_) => Err(Error::HeaderMismatch {
            path: volume_paths(path).0,
            reason: "expected an affinities volume, found labels".into(),
        }),
    }
}

pub fn read_affinities(path: impl AsRef<Path>) -> Result<AffinityVolume<f32>> {
    AffinityVolume::from_edges(read_edges(path)?)
}
