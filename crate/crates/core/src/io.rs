//! Binary container for path bundles and value fields.
//!
//! Layout (little-endian): magic `JBSD`, format version `u16`, kind `u16`
//! (1 = path bundle, 2 = value field), then the payload. Arrays are a `u64`
//! length followed by their elements.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Slice, ValueField};
use crate::growth::GrowthFit;
use crate::sde::{PathBundle, TimeGrid};

pub const MAGIC: &[u8; 4] = b"JBSD";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Kind {
    PathBundle = 1,
    ValueField = 2,
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn header(kind: Kind) -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u16(VERSION);
        w.u16(kind as u16);
        w
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.f64(*x));
    }
    fn u64s(&mut self, v: impl ExactSizeIterator<Item = u64>) {
        self.u64(v.len() as u64);
        v.for_each(|x| self.u64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], kind: Kind) -> Result<Self> {
        if buf.len() < 8 || &buf[..4] != MAGIC {
            return Err(Error::Format("missing JBSD magic".into()));
        }
        let mut r = Reader { buf, pos: 4 };
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let k = r.u16()?;
        if k != kind as u16 {
            return Err(Error::Format(format!("expected artifact kind {}, found {k}", kind as u16)));
        }
        Ok(r)
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated artifact at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
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
    fn len(&mut self, width: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.checked_mul(width).is_none_or(|b| b > self.buf.len() - self.pos) {
            return Err(Error::Format(format!("array length {n} exceeds the artifact")));
        }
        Ok(n)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn u64s(&mut self) -> Result<Vec<u64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.u64()).collect()
    }
    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_bundle(b: &PathBundle) -> Vec<u8> {
    let mut w = Writer::header(Kind::PathBundle);
    w.u64(b.n_paths as u64);
    w.u32(b.state_dim as u32);
    w.u32(b.brownian_dim as u32);
    w.u32(b.mark_dim as u32);
    w.u32(b.truncation_k);
    w.u64(b.seed);
    w.f64(b.grid.t0);
    w.f64(b.grid.horizon);
    w.u64(b.grid.n_steps as u64);
    w.f64s(&b.start);
    w.f64s(&b.states);
    w.f64s(&b.left_limits);
    w.f64s(&b.brownian_increments);
    w.u64s(b.jump_offsets.iter().map(|v| *v as u64));
    w.f64s(&b.jump_times);
    w.u64s(b.jump_steps.iter().map(|v| *v as u64));
    w.f64s(&b.jump_marks);
    w.f64s(&b.jump_pre_states);
    w.f64s(&b.jump_post_states);
    w.0
}

pub fn decode_bundle(buf: &[u8]) -> Result<PathBundle> {
    let mut r = Reader::open(buf, Kind::PathBundle)?;
    let n_paths = r.u64()? as usize;
    let state_dim = r.u32()? as usize;
    let brownian_dim = r.u32()? as usize;
    let mark_dim = r.u32()? as usize;
    let truncation_k = r.u32()?;
    let seed = r.u64()?;
    let (t0, horizon, n_steps) = (r.f64()?, r.f64()?, r.u64()? as usize);
    let grid = TimeGrid::new(t0, horizon, n_steps).map_err(|e| Error::Format(e.to_string()))?;
    let bundle = PathBundle {
        grid,
        n_paths,
        state_dim,
        brownian_dim,
        mark_dim,
        start: r.f64s()?,
        truncation_k,
        seed,
        states: r.f64s()?,
        left_limits: r.f64s()?,
        brownian_increments: r.f64s()?,
        jump_offsets: r.u64s()?.into_iter().map(|v| v as usize).collect(),
        jump_times: r.f64s()?,
        jump_steps: r.u64s()?.into_iter().map(|v| v as u32).collect(),
        jump_marks: r.f64s()?,
        jump_pre_states: r.f64s()?,
        jump_post_states: r.f64s()?,
    };
    r.finish()?;
    let nodes = (n_steps + 1) * n_paths;
    let jumps = bundle.jump_times.len();
    if bundle.states.len() != nodes * state_dim
        || bundle.left_limits.len() != nodes * state_dim
        || bundle.brownian_increments.len() != n_steps * n_paths * brownian_dim
        || bundle.jump_offsets.len() != n_paths + 1
        || bundle.jump_offsets.last() != Some(&jumps)
        || bundle.jump_steps.len() != jumps
        || bundle.jump_marks.len() != jumps * mark_dim
        || bundle.jump_pre_states.len() != jumps * state_dim
        || bundle.jump_post_states.len() != jumps * state_dim
    {
        return Err(Error::Format("path bundle arrays disagree with its header".into()));
    }
    Ok(bundle)
}

pub fn encode_field(f: &ValueField) -> Vec<u8> {
    let mut w = Writer::header(Kind::ValueField);
    w.f64s(&f.times);
    w.u32(f.slices[0].components as u32);
    w.u32(f.slices[0].dim() as u32);
    for s in &f.slices {
        w.f64s(&s.lo);
        w.f64s(&s.hi);
        w.u64s(s.counts.iter().map(|c| *c as u64));
        w.f64s(&s.values);
    }
    w.u64(f.envelopes.len() as u64);
    for e in &f.envelopes {
        w.f64(e.c);
        w.f64(e.p);
    }
    w.0
}

pub fn decode_field(buf: &[u8]) -> Result<ValueField> {
    let mut r = Reader::open(buf, Kind::ValueField)?;
    let times = r.f64s()?;
    let components = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let mut slices = Vec::with_capacity(times.len());
    for _ in 0..times.len() {
        let lo = r.f64s()?;
        let hi = r.f64s()?;
        let counts: Vec<usize> = r.u64s()?.into_iter().map(|c| c as usize).collect();
        let values = r.f64s()?;
        if lo.len() != dim {
            return Err(Error::Format("slice dimension disagrees with the header".into()));
        }
        let mut s = Slice::new(lo, hi, counts, components).map_err(|e| Error::Format(e.to_string()))?;
        if values.len() != s.values.len() {
            return Err(Error::Format("slice value count disagrees with its lattice".into()));
        }
        s.values = values;
        slices.push(s);
    }
    let n_env = r.len(16)?;
    let envelopes = (0..n_env).map(|_| Ok(GrowthFit { c: r.f64()?, p: r.f64()? })).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    if envelopes.len() != components {
        return Err(Error::Format("one envelope per component expected".into()));
    }
    let mut field = ValueField::new(times, slices).map_err(|e| Error::Format(e.to_string()))?;
    field.envelopes = envelopes;
    Ok(field)
}

pub fn write_bundle(path: &Path, b: &PathBundle) -> Result<()> {
    Ok(std::fs::write(path, encode_bundle(b))?)
}

pub fn read_bundle(path: &Path) -> Result<PathBundle> {
    decode_bundle(&std::fs::read(path)?)
}

pub fn write_field(path: &Path, f: &ValueField) -> Result<()> {
    Ok(std::fs::write(path, encode_field(f))?)
}

pub fn read_field(path: &Path) -> Result<ValueField> {
    decode_field(&std::fs::read(path)?)
}
