//! Binary model file: fixed little-endian layout with a bit-exact round trip.
//!
//! Layout: magic `HSCM`, u32 version, u32 K/L/M/r/w, u64 run seed, f64 sample
//! rate, K projector seeds, K bin widths, then per chain L split features
//! (u32), L shifts (f64) and L count-min sketches (r row seeds + r*w
//! counters, row-major).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::chain::{EnsembleModel, HalfSpaceChain};
use crate::cms::CountMinSketch;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HSCM";
const VERSION: u32 = 1;

pub fn model_to_bytes(model: &EnsembleModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        model.projection_dims as u32,
        model.levels as u32,
        model.chains.len() as u32,
        model.cms_rows as u32,
        model.cms_cols as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&model.run_seed.to_le_bytes());
    out.extend_from_slice(&model.sample_rate.to_le_bytes());
    for s in &model.projector_seeds {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for d in model.deltas.iter() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for chain in &model.chains {
        for f in chain.features() {
            out.extend_from_slice(&(*f as u32).to_le_bytes());
        }
        for s in chain.shifts() {
            out.extend_from_slice(&s.to_le_bytes());
        }
        for l in 0..model.levels {
            let cms = chain.level_sketch(l);
            for s in cms.row_seeds() {
                out.extend_from_slice(&s.to_le_bytes());
            }
            for c in cms.counts() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Model("truncated model file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u64s(&mut self, n: usize) -> Result<Vec<u64>> {
        (0..n).map(|_| self.u64()).collect()
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<EnsembleModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Model("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Model(format!("unsupported version {version}")));
    }
    let k = r.u32()? as usize;
    let levels = r.u32()? as usize;
    let chain_count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if k < 1 || levels < 1 || chain_count < 1 || rows < 1 || cols < 1 {
        return Err(Error::Model("zero dimension in header".into()));
    }
    let run_seed = r.u64()?;
    let sample_rate = r.f64()?;
    let projector_seeds = r.u64s(k)?;
    let deltas = Arc::new(r.f64s(k)?);
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Model("non-positive bin width".into()));
    }
    let mut chains = Vec::with_capacity(chain_count);
    for _ in 0..chain_count {
        let features: Vec<usize> = (0..levels).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        let shifts = r.f64s(levels)?;
        let mut sketches = Vec::with_capacity(levels);
        for _ in 0..levels {
            let row_seeds = r.u64s(rows)?;
            let counts = r.u64s(rows * cols)?;
            sketches.push(CountMinSketch::with_parts(rows, cols, row_seeds, counts)?);
        }
        chains.push(HalfSpaceChain::with_parts(deltas.clone(), features, shifts, sketches)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Model("trailing bytes".into()));
    }
    Ok(EnsembleModel {
        projection_dims: k,
        levels,
        cms_rows: rows,
        cms_cols: cols,
        run_seed,
        sample_rate,
        projector_seeds,
        deltas,
        chains,
    })
}

pub fn write_model(path: impl AsRef<Path>, model: &EnsembleModel) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&model_to_bytes(model)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<EnsembleModel> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
