//! Binary embedding container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! header:  b"CDCLEMB1"  u32 d
//! record:  u32 id_len  id (UTF-8)  u8 slot  u32 ordinal  u32 len  len × f32
//! ```
//!
//! `slot` is 0 = doc1, 1 = doc2, 2 = hypothesis; the hypothesis ordinal is 0.
//! Records run until end of file. A JSON index is written next to the container
//! (`<file>.idx.json`) with byte offsets and producer metadata; the reader only
//! uses it for metadata.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{hash_embed, Instance};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CDCLEMB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Doc1,
    Doc2,
    Hyp,
}

impl Slot {
    fn code(self) -> u8 {
        match self {
            Slot::Doc1 => 0,
            Slot::Doc2 => 1,
            Slot::Hyp => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Slot::Doc1),
            1 => Some(Slot::Doc2),
            2 => Some(Slot::Hyp),
            _ => None,
        }
    }
}

/// Vectors for one instance. `doc1[i]` is EDU ordinal `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceEmbeddings {
    pub doc1: Vec<Vec<f64>>,
    pub doc2: Vec<Vec<f64>>,
    pub hypothesis: Vec<f64>,
}

/// Optional producer metadata carried in the index sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis_pooling: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    id: String,
    slot: Slot,
    ordinal: u32,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexFile {
    format: String,
    d: usize,
    #[serde(flatten)]
    meta: EmbeddingMeta,
    records: Vec<IndexEntry>,
}

/// Complete, dimension-consistent embeddings for a set of instances.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, InstanceEmbeddings>,
    pub meta: EmbeddingMeta,
}

fn check_vector(v: &[f64], dim: usize, what: impl Fn() -> String) -> Result<()> {
    if v.len() != dim {
        return Err(Error::Embedding(format!(
            "dimension mismatch for {}: width {} vs table width {dim}",
            what(),
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Embedding(format!("non-finite entry in {}", what())));
    }
    Ok(())
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
            meta: EmbeddingMeta::default(),
        }
    }

    /// Deterministic stand-in for encoder output: every EDU and hypothesis text
    /// goes through [`hash_embed`].
    pub fn from_hash(instances: &[Instance], dim: usize, seed: u64) -> Result<Self> {
        let mut table = Self::new(dim);
        table.meta.encoder = Some(format!("hash-ngram(seed={seed})"));
        for inst in instances {
            let embed_doc = |doc: &super::Document| {
                doc.edus
                    .iter()
                    .map(|e| hash_embed(&e.text, dim, seed))
                    .collect::<Result<Vec<_>>>()
            };
            let entry = InstanceEmbeddings {
                doc1: embed_doc(&inst.doc1)?,
                doc2: embed_doc(&inst.doc2)?,
                hypothesis: hash_embed(&inst.hypothesis.text, dim, seed)?,
            };
            table.insert(&inst.id, entry)?;
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, id: &str, entry: InstanceEmbeddings) -> Result<()> {
        for (slot, vs) in [("doc1", &entry.doc1), ("doc2", &entry.doc2)] {
            for (i, v) in vs.iter().enumerate() {
                check_vector(v, self.dim, || format!("{id}/{slot}/{}", i + 1))?;
            }
        }
        check_vector(&entry.hypothesis, self.dim, || format!("{id}/hyp"))?;
        self.entries.insert(id.to_string(), entry);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&InstanceEmbeddings> {
        self.entries.get(id)
    }

    /// Like [`get`](Self::get) but checks coverage of every EDU of `inst`.
    pub fn for_instance(&self, inst: &Instance) -> Result<&InstanceEmbeddings> {
        let e = self
            .get(&inst.id)
            .ok_or_else(|| Error::Embedding(format!("no embeddings for instance {}", inst.id)))?;
        if e.doc1.len() != inst.doc1.edu_count() || e.doc2.len() != inst.doc2.edu_count() {
            return Err(Error::Embedding(format!(
                "instance {}: embeddings cover {}/{} EDUs, documents have {}/{}",
                inst.id,
                e.doc1.len(),
                e.doc2.len(),
                inst.doc1.edu_count(),
                inst.doc2.edu_count()
            )));
        }
        Ok(e)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

pub fn index_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".idx.json");
    PathBuf::from(s)
}

/// Writes the container and its index. Records are ordered by instance id, then slot, then ordinal.
pub fn write_embeddings(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    let path = path.as_ref();
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(table.dim as u32).to_le_bytes());
    let mut index = Vec::new();

    let mut put = |buf: &mut Vec<u8>, id: &str, slot: Slot, ordinal: u32, v: &[f64]| {
        index.push(IndexEntry {
            id: id.to_string(),
            slot,
            ordinal,
            offset: buf.len() as u64,
        });
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        buf.push(slot.code());
        buf.extend_from_slice(&ordinal.to_le_bytes());
        buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
        for x in v {
            buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    };
    for (id, e) in &table.entries {
        for (i, v) in e.doc1.iter().enumerate() {
            put(&mut buf, id, Slot::Doc1, i as u32 + 1, v);
        }
        for (i, v) in e.doc2.iter().enumerate() {
            put(&mut buf, id, Slot::Doc2, i as u32 + 1, v);
        }
        put(&mut buf, id, Slot::Hyp, 0, &e.hypothesis);
    }

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;

    let idx = IndexFile {
        format: String::from_utf8_lossy(MAGIC).into_owned(),
        d: table.dim,
        meta: table.meta.clone(),
        records: index,
    };
    let idx_path = index_path(path);
    let json = serde_json::to_string(&idx).expect("index serializes");
    fs::write(&idx_path, json).map_err(|e| Error::io(&idx_path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Embedding(format!(
                "truncated container at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

type RawRecords = HashMap<(String, Slot, u32), Vec<f64>>;

fn read_container(path: &Path) -> Result<(usize, RawRecords)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8).ok() != Some(&MAGIC[..]) {
        return Err(Error::Embedding("bad magic: not a CDCLEMB1 container".into()));
    }
    let dim = cur.u32()? as usize;
    if dim == 0 {
        return Err(Error::Embedding("container declares width 0".into()));
    }
    let mut records = HashMap::new();
    while cur.pos < bytes.len() {
        let id_len = cur.u32()? as usize;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|_| Error::Embedding("record id is not UTF-8".into()))?
            .to_string();
        let code = cur.take(1)?[0];
        let slot = Slot::from_code(code)
            .ok_or_else(|| Error::Embedding(format!("unknown slot code {code} for {id}")))?;
        let ordinal = cur.u32()?;
        let len = cur.u32()? as usize;
        if len != dim {
            return Err(Error::Embedding(format!(
                "dimension mismatch: record {id}/{slot:?}/{ordinal} has width {len}, header declares {dim}"
            )));
        }
        let raw = cur.take(4 * len)?;
        let v: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if records.insert((id.clone(), slot, ordinal), v).is_some() {
            return Err(Error::Embedding(format!(
                "duplicate record {id}/{slot:?}/{ordinal}"
            )));
        }
    }
    Ok((dim, records))
}

/// Loads the container and assembles a complete table for `instances`.
/// Records for ids not in `instances` are ignored.
pub fn load_embeddings(path: impl AsRef<Path>, instances: &[Instance]) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let (dim, mut records) = read_container(path)?;
    let mut table = EmbeddingTable::new(dim);
    if let Ok(text) = fs::read_to_string(index_path(path)) {
        if let Ok(idx) = serde_json::from_str::<IndexFile>(&text) {
            table.meta = idx.meta;
        }
    }
    for inst in instances {
        let mut take_doc = |slot: Slot, n: usize| -> Result<Vec<Vec<f64>>> {
            (1..=n as u32)
                .map(|o| {
                    records.remove(&(inst.id.clone(), slot, o)).ok_or_else(|| {
                        Error::Embedding(format!(
                            "missing EDU vector: instance {} {:?} ordinal {o}",
                            inst.id, slot
                        ))
                    })
                })
                .collect()
        };
        let doc1 = take_doc(Slot::Doc1, inst.doc1.edu_count())?;
        let doc2 = take_doc(Slot::Doc2, inst.doc2.edu_count())?;
        let hypothesis = records
            .remove(&(inst.id.clone(), Slot::Hyp, 0))
            .ok_or_else(|| {
                Error::Embedding(format!("hypothesis vector absent for instance {}", inst.id))
            })?;
        table.insert(
            &inst.id,
            InstanceEmbeddings {
                doc1,
                doc2,
                hypothesis,
            },
        )?;
    }
    Ok(table)
}
