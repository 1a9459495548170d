//! Named parameter storage and the on-disk checkpoint format.
//!
//! A checkpoint is a directory holding `manifest.txt` and `data.bin`. The
//! manifest starts with a version line, then one tab-separated line per
//! entry: name, dtype, shape (`64x80`), byte offset, byte length. `data.bin`
//! concatenates the little-endian float32 arrays row-major in manifest
//! order. Entries iterate sorted by name, so identical archives serialize
//! bitwise identically.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const DATA_FILE: &str = "data.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Named, shaped float arrays for every trainable weight.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterArchive {
    pub version: u32,
    entries: BTreeMap<String, Tensor>,
}

impl ParameterArchive {
    pub fn new() -> Self {
        ParameterArchive { version: CHECKPOINT_VERSION, entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        assert!(!shape.is_empty() && shape.iter().all(|d| *d > 0), "shapes must be positive");
        assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}: shape/data mismatch");
        assert!(!self.entries.contains_key(name), "duplicate parameter {name}");
        self.entries.insert(name.to_string(), Tensor { shape, data });
    }

    /// Insert a tensor initialized uniformly in [−1/√fan_in, +1/√fan_in].
    pub fn insert_uniform(&mut self, name: &str, shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) {
        let n: usize = shape.iter().product();
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(name, shape, data);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.entries.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.entries.get_mut(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn scalar(&self, name: &str) -> f64 {
        self.get(name).data[0]
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// 64-bit FNV-1a over the exact bit patterns of the selected entries.
    /// Used by tests asserting parameters are bitwise untouched.
    pub fn bit_hash<F: Fn(&str) -> bool>(&self, select: F) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for (name, tensor) in &self.entries {
            if !select(name) {
                continue;
            }
            for byte in name.as_bytes() {
                hash = (hash ^ *byte as u64).wrapping_mul(0x0000_0100_0000_01b3);
            }
            for value in &tensor.data {
                for byte in value.to_bits().to_le_bytes() {
                    hash = (hash ^ byte as u64).wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        hash
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        manifest.push_str(&format!("version {}\n", self.version));
        let mut blob: Vec<u8> = Vec::with_capacity(self.total_values() * 4);
        for (name, tensor) in &self.entries {
            let offset = blob.len();
            for v in &tensor.data {
                blob.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            let shape = tensor.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
            manifest.push_str(&format!(
                "{name}\tf32\t{shape}\t{offset}\t{}\n",
                tensor.len() * 4
            ));
        }
        let manifest_path = dir.join(MANIFEST_FILE);
        fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
        let data_path = dir.join(DATA_FILE);
        let mut f = fs::File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
        f.write_all(&blob).map_err(|e| Error::io(&data_path, e))?;
        Ok(())
    }

    pub fn load_checkpoint(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let data_path = dir.join(DATA_FILE);
        let blob = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;

        let mut lines = manifest.lines();
        let version_line = lines.next().ok_or_else(|| Error::Format("empty manifest".into()))?;
        let version: u32 = version_line
            .strip_prefix("version ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad version line {version_line:?}")))?;

        let mut archive = ParameterArchive::new();
        archive.version = version;
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::Format(format!("bad manifest line {line:?}")));
            }
            let (name, dtype, shape_s, offset_s, len_s) =
                (fields[0], fields[1], fields[2], fields[3], fields[4]);
            if dtype != "f32" {
                return Err(Error::Format(format!("unsupported dtype {dtype}")));
            }
            let shape: Vec<usize> = shape_s
                .split('x')
                .map(|d| d.parse::<usize>().map_err(|_| Error::Format(format!("bad shape {shape_s}"))))
                .collect::<Result<_>>()?;
            let offset: usize =
                offset_s.parse().map_err(|_| Error::Format(format!("bad offset {offset_s}")))?;
            let byte_len: usize =
                len_s.parse().map_err(|_| Error::Format(format!("bad length {len_s}")))?;
            let count: usize = shape.iter().product();
            if byte_len != count * 4 || offset + byte_len > blob.len() {
                return Err(Error::Format(format!("entry {name} exceeds data file")));
            }
            let data: Vec<f64> = blob[offset..offset + byte_len]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            archive.insert(name, shape, data);
        }
        Ok(archive)
    }
}

/// Seeded generator for parameter initialization.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
