//! Dataset directory: `manifest.json` plus one binary file per split.
//!
//! Binary layout (little-endian): magic `OCDS`, `u32` version, `u32` H,
//! `u32` W, then per record H·W·3 `f32` (RGB interleaved, row-major) followed
//! by H·W `u8` labels.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::rng::{RNG_NAME, SEED_RULE};
use super::{Sample, SceneSpec};
use crate::error::{Result, SampError};
use crate::util::{atomic_write, create_dir_all, fnv1a_hex, read_file};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"OCDS";
const HEADER_BYTES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
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

    /// Tag mixed into per-sample seeds.
    pub fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| SampError::Config(format!("unknown split `{s}`")))
    }
}

/// Number of samples per split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train: 10_000,
            val: 1_000,
            test: 320,
        }
    }
}

impl SplitSizes {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub split: Split,
    pub size: usize,
    pub file: String,
    /// 64-bit FNV-1a of the whole file, hex.
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub rng: String,
    pub seed_rule: String,
    pub spec: SceneSpec,
    pub splits: Vec<SplitEntry>,
}

impl DatasetManifest {
    pub fn entry(&self, split: Split) -> Result<&SplitEntry> {
        self.splits
            .iter()
            .find(|e| e.split == split)
            .ok_or_else(|| SampError::Config(format!("dataset has no `{}` split", split.name())))
    }

    /// Combined digest of all split checksums, identifying the dataset bytes.
    pub fn fingerprint(&self) -> String {
        let joined: Vec<&str> = self.splits.iter().map(|e| e.checksum.as_str()).collect();
        fnv1a_hex(joined.join(",").as_bytes())
    }
}

fn encode_split(spec: &SceneSpec, samples: &[Sample]) -> Vec<u8> {
    let (h, w) = spec.image_size;
    let plane = h * w;
    let mut out = Vec::with_capacity(HEADER_BYTES + samples.len() * plane * 13);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for s in samples {
        for i in 0..plane {
            for c in 0..3 {
                out.extend_from_slice(&s.image[c * plane + i].to_le_bytes());
            }
        }
        out.extend_from_slice(&s.labels);
    }
    out
}

fn decode_split(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<Sample>> {
    let malformed = |reason: String| SampError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_BYTES || &bytes[..4] != MAGIC {
        return Err(malformed("missing OCDS header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(SampError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (h, w) = (u32_at(8) as usize, u32_at(12) as usize);
    let plane = h * w;
    let record = plane * 13;
    let body = &bytes[HEADER_BYTES..];
    if record == 0 || body.len() % record != 0 {
        return Err(malformed(format!("truncated: {} body bytes, record size {record}", body.len())));
    }
    let count = body.len() / record;
    if count != expected {
        return Err(malformed(format!("{count} records, manifest says {expected}")));
    }
    Ok(body
        .chunks_exact(record)
        .map(|rec| {
            let mut image = vec![0.0f32; 3 * plane];
            for (k, b) in rec[..plane * 12].chunks_exact(4).enumerate() {
                let (i, c) = (k / 3, k % 3);
                image[c * plane + i] = f32::from_le_bytes(b.try_into().expect("4 bytes"));
            }
            Sample {
                height: h,
                width: w,
                image,
                labels: rec[plane * 12..].to_vec(),
            }
        })
        .collect())
}

/// Generates every split and writes the dataset directory.
pub fn write_dataset(spec: &SceneSpec, sizes: SplitSizes, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    create_dir_all(out_dir)?;
    let mut splits = Vec::new();
    for split in Split::ALL {
        let n = sizes.get(split);
        let samples = (0..n as u64)
            .map(|i| spec.generate(split.tag(), i))
            .collect::<Result<Vec<_>>>()?;
        let bytes = encode_split(spec, &samples);
        let file = format!("{}.bin", split.name());
        atomic_write(&out_dir.join(&file), &bytes)?;
        splits.push(SplitEntry {
            split,
            size: n,
            file,
            checksum: fnv1a_hex(&bytes),
        });
    }
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        rng: RNG_NAME.to_string(),
        seed_rule: SEED_RULE.to_string(),
        spec: spec.clone(),
        splits,
    };
    atomic_write(&out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

/// An opened dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let manifest: DatasetManifest = serde_json::from_slice(&read_file(&path)?)?;
        if manifest.version != FORMAT_VERSION {
            return Err(SampError::VersionMismatch {
                found: manifest.version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    /// Reads a split in index order after verifying its checksum.
    pub fn load(&self, split: Split) -> Result<Vec<Sample>> {
        let entry = self.manifest.entry(split)?;
        let path = self.dir.join(&entry.file);
        let bytes = read_file(&path)?;
        let actual = fnv1a_hex(&bytes);
        if actual != entry.checksum {
            return Err(SampError::ChecksumMismatch {
                file: entry.file.clone(),
                expected: entry.checksum.clone(),
                actual,
            });
        }
        let samples = decode_split(&path, &bytes, entry.size)?;
        if let Some(s) = samples.first() {
            if (s.height, s.width) != self.manifest.spec.image_size {
                return Err(SampError::Malformed {
                    path,
                    reason: "image size differs from manifest".into(),
                });
            }
        }
        Ok(samples)
    }
}

/// Opens `dir` and reads one split.
pub fn read_split(dir: &Path, split: Split) -> Result<Vec<Sample>> {
    Dataset::open(dir)?.load(split)
}
