//! Guide files: binary header (method, hyper-params, m, provenance hashes)
//! followed by f32 little-endian w and anchor, with a trailing CRC32.

use super::{DirectionalGuide, GuideMethod, GuideSpec};
use crate::error::{Error, Result};
use crate::fileio::{write_atomic, Reader, Writer};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"ILGD";
const VERSION: u32 = 1;

pub fn to_bytes(guide: &DirectionalGuide) -> Vec<u8> {
    let s = &guide.spec;
    let mut w = Writer::new(MAGIC, VERSION);
    w.str(s.method.as_str());
    w.str(s.rand_regressor.as_str());
    w.f64(s.lambda);
    w.f64(s.lambda1);
    w.f64(s.lambda2);
    w.f64(s.c);
    w.f64(s.e);
    w.u8(s.sigma_in.is_some() as u8);
    w.f32(s.sigma_in.unwrap_or(0.0));
    w.u8(s.sigma_feat.is_some() as u8);
    w.f32(s.sigma_feat.unwrap_or(0.0));
    w.u32(guide.w.len() as u32);
    w.u32(guide.traj_hashes.len() as u32);
    for &h in &guide.traj_hashes {
        w.u64(h);
    }
    w.f32s(&guide.w);
    w.f32s(&guide.anchor);
    w.finish()
}

pub fn from_bytes(bytes: &[u8]) -> Result<DirectionalGuide> {
    let what = "guide";
    let mut r = Reader::new(bytes, what, MAGIC, VERSION)?;
    let method = GuideMethod::parse(&r.str()?)?;
    let rand_regressor = GuideMethod::parse(&r.str()?)?;
    let lambda = r.f64()?;
    let lambda1 = r.f64()?;
    let lambda2 = r.f64()?;
    let c = r.f64()?;
    let e = r.f64()?;
    let has_sigma_in = r.u8()? != 0;
    let sigma_in = has_sigma_in.then_some(r.f32()?);
    let has_sigma_feat = r.u8()? != 0;
    let sigma_feat = has_sigma_feat.then_some(r.f32()?);
    let m = r.u32()? as usize;
    let n_hashes = r.u32()? as usize;
    let mut traj_hashes = Vec::with_capacity(n_hashes);
    for _ in 0..n_hashes {
        traj_hashes.push(r.u64()?);
    }
    let w = r.f32s(m)?;
    let anchor = r.f32s(m)?;
    r.done()?;
    Ok(DirectionalGuide {
        w,
        anchor,
        spec: GuideSpec {
            method,
            lambda,
            lambda1,
            lambda2,
            c,
            e,
            sigma_in,
            sigma_feat,
            rand_regressor,
        },
        traj_hashes,
    })
}

pub fn save(guide: &DirectionalGuide, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(guide))
}

pub fn load(path: &Path) -> Result<DirectionalGuide> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_everything() {
        let mut spec = GuideSpec::with_method(GuideMethod::Svr);
        spec.c = 2.5;
        spec.e = 0.125;
        spec.sigma_in = Some(0.31);
        let guide = DirectionalGuide {
            w: vec![0.5, -1.5, 0.0],
            anchor: vec![1.0, 2.0, 3.0],
            spec,
            traj_hashes: vec![11, 22, 33],
        };
        let back = from_bytes(&to_bytes(&guide)).unwrap();
        assert_eq!(back, guide);
    }

    #[test]
    fn corruption_is_detected() {
        let guide = DirectionalGuide {
            w: vec![1.0],
            anchor: vec![0.0],
            spec: GuideSpec::default(),
            traj_hashes: vec![],
        };
        let mut bytes = to_bytes(&guide);
        bytes[10] ^= 1;
        assert!(from_bytes(&bytes).is_err());
    }
}
