//! `TCLP` clip files and the tab-separated dataset manifest.
//!
//! ```text
//! magic "TCLP" | version u16 | label u8 (0, 1, 255 = unlabeled) |
//! T u32 | H u32 | W u32 | C u32 | dtype u8 (0 = f32) | payload
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::Reader;
use crate::tensor::{DType, Element, Tensor};

pub const CLIP_MAGIC: &[u8; 4] = b"TCLP";
pub const CLIP_VERSION: u16 = 1;
pub const MANIFEST_NAME: &str = "manifest.tsv";
const UNLABELED: u8 = 255;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub frames: Tensor<f32>,
    pub label: Option<bool>,
    pub id: String,
}

pub fn encode_clip(clip: &LabeledClip) -> Result<Vec<u8>> {
    if clip.frames.rank() != 4 {
        return Err(Error::shape("TCLP", "rank", 4, clip.frames.rank()));
    }
    let mut out = Vec::with_capacity(23 + 4 * clip.frames.len());
    out.extend_from_slice(CLIP_MAGIC);
    out.extend_from_slice(&CLIP_VERSION.to_le_bytes());
    out.push(match clip.label {
        Some(true) => 1,
        Some(false) => 0,
        None => UNLABELED,
    });
    for &n in clip.frames.shape() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.push(DType::F32.code());
    for &v in clip.frames.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn decode_clip(bytes: &[u8], id: impl Into<String>) -> Result<LabeledClip> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != CLIP_MAGIC {
        return Err(Error::format("TCLP", "bad magic"));
    }
    let version = r.u16()?;
    if version != CLIP_VERSION {
        return Err(Error::format("TCLP", format!("unsupported version {version}")));
    }
    let label = match r.u8()? {
        0 => Some(false),
        1 => Some(true),
        UNLABELED => None,
        other => return Err(Error::format("TCLP", format!("label byte {other}"))),
    };
    let shape = (0..4).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    if r.u8()? != DType::F32.code() {
        return Err(Error::format("TCLP", "only f32 payloads are supported"));
    }
    let numel: usize = shape.iter().product();
    let payload = r.take(numel.checked_mul(4).ok_or_else(|| Error::format("TCLP", "payload too large"))?)?;
    if r.at != bytes.len() {
        return Err(Error::format("TCLP", "trailing bytes"));
    }
    let data = payload.chunks_exact(4).map(f32::read_le).collect();
    let frames = Tensor::new(shape, data).map_err(|e| Error::format("TCLP", e.to_string()))?;
    Ok(LabeledClip { frames, label, id: id.into() })
}

pub fn write_clip(path: impl AsRef<Path>, clip: &LabeledClip) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_clip(clip)?).map_err(|e| Error::io(path, e))
}

pub fn read_clip(path: impl AsRef<Path>) -> Result<LabeledClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    decode_clip(&bytes, id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::format("manifest", format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path relative to the manifest's directory.
    pub path: PathBuf,
    pub label: bool,
    pub split: Split,
}

impl ManifestEntry {
    pub fn id(&self) -> String {
        self.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |why: &str| Error::format("manifest", format!("line {}: {why}", n + 1));
            let [path, label, split] = fields[..] else {
                return Err(bad("expected path, label and split separated by tabs"));
            };
            let label = match label {
                "0" => false,
                "1" => true,
                _ => return Err(bad("label must be 0 or 1")),
            };
            entries.push(ManifestEntry {
                path: PathBuf::from(path),
                label,
                split: split.parse().map_err(|_| bad("split must be train, val or test"))?,
            });
        }
        Ok(Manifest { root: root.into(), entries })
    }

    /// Reads `dir/manifest.tsv`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text, dir)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.path.display(), e.label as u8, e.split));
        }
        out
    }

    pub fn save(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_NAME);
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}
