//! Trajectory dump files: one file per (input, run).
//!
//! Header: magic `ILTR`, version, input index, run, config hash, feature
//! dim m, input dim n, sample count, and a flag for whether per-sample x
//! data is stored (omitting it bounds disk use). Trailing CRC32.

use super::{Trajectory, TrajectorySample};
use crate::error::{Error, Result};
use crate::fileio::{write_atomic, Reader, Writer};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"ILTR";
const VERSION: u32 = 1;

pub fn to_bytes(traj: &Trajectory, store_x: bool) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.u32(traj.input_index);
    w.u32(traj.run);
    w.u64(traj.cfg_hash);
    w.u32(traj.feature_dim() as u32);
    w.u32(traj.anchor_x.len() as u32);
    w.u32(traj.samples.len() as u32);
    w.u8(store_x as u8);
    w.f32s(&traj.anchor_x);
    w.f32s(&traj.anchor_feature);
    w.f32s(&traj.final_x);
    for s in &traj.samples {
        w.u32(s.t);
        w.f32(s.loss);
        w.f32s(&s.feature);
        if store_x {
            w.f32s(&s.x);
        }
    }
    w.finish()
}

pub fn from_bytes(bytes: &[u8]) -> Result<Trajectory> {
    let what = "trajectory";
    let mut r = Reader::new(bytes, what, MAGIC, VERSION)?;
    let input_index = r.u32()?;
    let run = r.u32()?;
    let cfg_hash = r.u64()?;
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    let count = r.u32()? as usize;
    let store_x = r.u8()? != 0;
    let anchor_x = r.f32s(n)?;
    let anchor_feature = r.f32s(m)?;
    let final_x = r.f32s(n)?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let t = r.u32()?;
        let loss = r.f32()?;
        let feature = r.f32s(m)?;
        let x = if store_x { r.f32s(n)? } else { Vec::new() };
        samples.push(TrajectorySample { t, x, feature, loss });
    }
    r.done()?;
    Ok(Trajectory {
        input_index,
        run,
        cfg_hash,
        anchor_x,
        anchor_feature,
        samples,
        final_x,
    })
}

pub fn save(traj: &Trajectory, path: &Path, store_x: bool) -> Result<()> {
    write_atomic(path, &to_bytes(traj, store_x))
}

pub fn load(path: &Path) -> Result<Trajectory> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_bytes(&bytes)
}
