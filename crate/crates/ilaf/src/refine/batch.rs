//! Adversarial batch files: the refined (or baseline) examples for one
//! method, consumed by the evaluation stage.

use crate::attack::Norm;
use crate::error::{Error, Result};
use crate::fileio::{write_atomic, Reader, Writer};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"ILAB";
const VERSION: u32 = 1;

/// One adversarial example, keyed by its index in the evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvRecord {
    pub index: u32,
    pub label: u32,
    pub x: Vec<f32>,
}

/// A batch of adversarial examples produced by one method at one epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvBatch {
    pub cfg_hash: u64,
    pub method: String,
    pub source_id: String,
    pub norm: Norm,
    pub epsilon: f32,
    pub input_dim: usize,
    pub records: Vec<AdvRecord>,
}

pub fn to_bytes(batch: &AdvBatch) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.u64(batch.cfg_hash);
    w.str(&batch.method);
    w.str(&batch.source_id);
    w.str(batch.norm.as_str());
    w.f32(batch.epsilon);
    w.u32(batch.input_dim as u32);
    w.u32(batch.records.len() as u32);
    for rec in &batch.records {
        w.u32(rec.index);
        w.u32(rec.label);
        w.f32s(&rec.x);
    }
    w.finish()
}

pub fn from_bytes(bytes: &[u8]) -> Result<AdvBatch> {
    let what = "adversarial batch";
    let mut r = Reader::new(bytes, what, MAGIC, VERSION)?;
    let cfg_hash = r.u64()?;
    let method = r.str()?;
    let source_id = r.str()?;
    let norm = Norm::parse(&r.str()?)?;
    let epsilon = r.f32()?;
    let input_dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let index = r.u32()?;
        let label = r.u32()?;
        let x = r.f32s(input_dim)?;
        records.push(AdvRecord { index, label, x });
    }
    r.done()?;
    Ok(AdvBatch {
        cfg_hash,
        method,
        source_id,
        norm,
        epsilon,
        input_dim,
        records,
    })
}

pub fn save(batch: &AdvBatch, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(batch))
}

pub fn load(path: &Path) -> Result<AdvBatch> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_bytes(&bytes)
}
