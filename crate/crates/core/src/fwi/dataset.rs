//! Frequency-domain gathers and their binary FDG1 format.

use crate::model::io::OffsetReader;
use crate::{HorstError, Result, C64};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const GATHER_MAGIC: &[u8; 4] = b"FDG1";
pub const GATHER_VERSION: u32 = 1;

/// Source and receiver positions in meters. With `reciprocal`, the sources
/// are the physical receivers (nodes) and the receivers the physical shots.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub sources: Vec<[f64; 3]>,
    pub receivers: Vec<[f64; 3]>,
    pub reciprocal: bool,
}

impl Acquisition {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| HorstError::invalid(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| HorstError::format(e.column() as u64, e.to_string()))
    }
}

/// One frequency: traces `[src][rec]`, a live mask and per-source signatures.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqGather {
    pub freq: f64,
    pub n_src: usize,
    pub n_rec: usize,
    pub data: Vec<C64>,
    pub mask: Vec<bool>,
    pub signatures: Vec<C64>,
}

impl FreqGather {
    pub fn new(freq: f64, n_src: usize, n_rec: usize) -> Self {
        FreqGather {
            freq,
            n_src,
            n_rec,
            data: vec![C64::new(0.0, 0.0); n_src * n_rec],
            mask: vec![true; n_src * n_rec],
            signatures: vec![C64::new(1.0, 0.0); n_src],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_src * self.n_rec;
        if self.data.len() != n || self.mask.len() != n || self.signatures.len() != self.n_src {
            return Err(HorstError::invalid(format!(
                "gather at {} Hz is inconsistent with {} sources x {} receivers",
                self.freq, self.n_src, self.n_rec
            )));
        }
        Ok(())
    }

    pub fn trace(&self, s: usize) -> &[C64] {
        &self.data[s * self.n_rec..(s + 1) * self.n_rec]
    }

    pub fn live(&self, s: usize) -> &[bool] {
        &self.mask[s * self.n_rec..(s + 1) * self.n_rec]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FreqDataset {
    pub acquisition: Acquisition,
    pub gathers: Vec<FreqGather>,
}

impl FreqDataset {
    pub fn validate(&self) -> Result<()> {
        for g in &self.gathers {
            g.validate()?;
            if g.n_src != self.acquisition.sources.len() || g.n_rec != self.acquisition.receivers.len() {
                return Err(HorstError::invalid(format!(
                    "gather at {} Hz has {}x{} traces but the acquisition has {} sources and {} receivers",
                    g.freq,
                    g.n_src,
                    g.n_rec,
                    self.acquisition.sources.len(),
                    self.acquisition.receivers.len()
                )));
            }
        }
        Ok(())
    }

    /// Gather recorded at `freq` (to within 1e-9 relative).
    pub fn gather(&self, freq: f64) -> Option<&FreqGather> {
        self.gathers.iter().find(|g| (g.freq - freq).abs() <= 1e-9 * freq.abs().max(1.0))
    }
}

fn push_c32(out: &mut Vec<u8>, z: C64) {
    out.extend_from_slice(&(z.re as f32).to_le_bytes());
    out.extend_from_slice(&(z.im as f32).to_le_bytes());
}

/// Encodes gathers in the FDG1 layout. Complex values are stored as pairs
/// of `f32`; the mask is a row-major bitset, least significant bit first.
pub fn encode_gathers(gathers: &[FreqGather]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(GATHER_MAGIC);
    out.extend_from_slice(&GATHER_VERSION.to_le_bytes());
    let count = |v: usize, what: &str| u32::try_from(v).map_err(|_| HorstError::invalid(format!("{what} exceeds u32")));
    out.extend_from_slice(&count(gathers.len(), "frequency count")?.to_le_bytes());
    for g in gathers {
        g.validate()?;
        out.extend_from_slice(&g.freq.to_le_bytes());
        out.extend_from_slice(&count(g.n_src, "source count")?.to_le_bytes());
        out.extend_from_slice(&count(g.n_rec, "receiver count")?.to_le_bytes());
        let mut bits = vec![0u8; g.mask.len().div_ceil(8)];
        for (i, &m) in g.mask.iter().enumerate() {
            if m {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bits);
        for &s in &g.signatures {
            push_c32(&mut out, s);
        }
        for &d in &g.data {
            push_c32(&mut out, d);
        }
    }
    Ok(out)
}

pub fn decode_gathers(bytes: &[u8]) -> Result<Vec<FreqGather>> {
    let mut r = OffsetReader::new(bytes);
    if r.take(4, "magic")? != GATHER_MAGIC {
        return Err(HorstError::format(0, "bad magic, expected FDG1"));
    }
    let at = r.offset();
    let version = r.u32("version")?;
    if version != GATHER_VERSION {
        return Err(HorstError::format(at, format!("unsupported version {version}")));
    }
    let nf = r.u32("frequency count")? as usize;
    let mut out = Vec::with_capacity(nf.min(1024));
    for _ in 0..nf {
        let freq = r.f64("frequency")?;
        let n_src = r.u32("source count")? as usize;
        let n_rec = r.u32("receiver count")? as usize;
        let n = n_src
            .checked_mul(n_rec)
            .ok_or_else(|| HorstError::format(r.offset(), "trace count overflows"))?;
        let bits = r.take(n.div_ceil(8), "mask")?;
        let mask = (0..n).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        let mut complex = |count: usize, what: &str| -> Result<Vec<C64>> {
            let raw = r.take(count * 8, what)?;
            Ok(raw
                .chunks_exact(8)
                .map(|c| {
                    let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                    let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                    C64::new(re as f64, im as f64)
                })
                .collect())
        };
        let signatures = complex(n_src, "signatures")?;
        let data = complex(n, "traces")?;
        out.push(FreqGather {
            freq,
            n_src,
            n_rec,
            data,
            mask,
            signatures,
        });
    }
    if r.remaining() != 0 {
        return Err(HorstError::format(r.offset(), "trailing bytes after the last frequency"));
    }
    Ok(out)
}

pub fn write_gathers(path: &Path, gathers: &[FreqGather]) -> Result<()> {
    let bytes = encode_gathers(gathers)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read_gathers(path: &Path) -> Result<Vec<FreqGather>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_gathers(&bytes)
}

/// Rounds every complex value to the stored `f32` precision, so that a
/// dataset equals its own file round trip.
pub fn quantize(g: &mut FreqGather) {
    let q = |z: &mut C64| *z = C64::new(z.re as f32 as f64, z.im as f32 as f64);
    g.data.iter_mut().for_each(q);
    g.signatures.iter_mut().for_each(q);
}
