use super::{density_from_velocity, Grid, VtiModel};
use crate::{HorstError, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MODEL_MAGIC: &[u8; 4] = b"FDM1";
pub const MODEL_VERSION: u32 = 1;
const NAME_LEN: usize = 16;

/// Little-endian reader that reports the byte offset of every failure.
pub(crate) struct OffsetReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> OffsetReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        OffsetReader { buf, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(HorstError::format(
                self.buf.len() as u64,
                format!("truncated while reading {what}: need {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn field_name(name: &str) -> [u8; NAME_LEN] {
    let mut out = [0u8; NAME_LEN];
    out[..name.len()].copy_from_slice(name.as_bytes());
    out
}

/// Writes a model in the FDM1 layout. Values are stored as `f32`.
pub fn write_model(path: &Path, model: &VtiModel) -> Result<()> {
    model.validate()?;
    let mut out = Vec::new();
    encode_model(model, &mut out)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub(crate) fn encode_model(model: &VtiModel, out: &mut Vec<u8>) -> Result<()> {
    let g = &model.grid;
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for d in g.dims {
        out.extend_from_slice(&u32::try_from(d).map_err(|_| HorstError::invalid("grid too large"))?.to_le_bytes());
    }
    for h in g.spacing {
        out.extend_from_slice(&h.to_le_bytes());
    }
    for o in g.origin {
        out.extend_from_slice(&o.to_le_bytes());
    }
    let water: Vec<f64> = (0..model.len()).map(|i| if model.is_water(i) { 1.0 } else { 0.0 }).collect();
    let fields: [(&str, &[f64]); 6] = [
        ("v0", &model.v0),
        ("delta", &model.delta),
        ("epsilon", &model.epsilon),
        ("rho", &model.rho),
        ("q", &model.q),
        ("water", &water),
    ];
    out.extend_from_slice(&(fields.len() as u32).to_le_bytes());
    for (name, values) in fields {
        out.extend_from_slice(&field_name(name));
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(())
}

/// Reads an FDM1 model. Missing passive fields default to isotropic,
/// lossless and Brocher density; a missing `v0` is a format error.
pub fn read_model(path: &Path) -> Result<VtiModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_model(&bytes)
}

pub(crate) fn decode_model(bytes: &[u8]) -> Result<VtiModel> {
    let mut r = OffsetReader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != MODEL_MAGIC {
        return Err(HorstError::format(0, "bad magic, expected FDM1"));
    }
    let version_at = r.offset();
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(HorstError::format(version_at, format!("unsupported version {version}")));
    }
    let dims_at = r.offset();
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = r.u32("dims")? as usize;
    }
    let mut spacing = [0.0; 3];
    for h in spacing.iter_mut() {
        *h = r.f64("spacing")?;
    }
    let mut origin = [0.0; 3];
    for o in origin.iter_mut() {
        *o = r.f64("origin")?;
    }
    let grid = Grid::new(dims, spacing, origin).map_err(|e| HorstError::format(dims_at, e.to_string()))?;
    let n = grid.len();
    let count = r.u32("field count")? as usize;
    let mut fields: Vec<(String, Vec<f64>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name_at = r.offset();
        let raw = r.take(NAME_LEN, "field name")?;
        let end = raw.iter().position(|&b| b == 0).unwrap_or(NAME_LEN);
        let name = std::str::from_utf8(&raw[..end])
            .map_err(|_| HorstError::format(name_at, "field name is not ASCII"))?
            .to_string();
        if r.remaining() < 4 * n {
            return Err(HorstError::format(
                bytes.len() as u64,
                format!("truncated field `{name}` starting at offset {}", r.offset()),
            ));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(r.f32("field value")? as f64);
        }
        fields.push((name, values));
    }
    if r.remaining() != 0 {
        return Err(HorstError::format(r.offset(), "trailing bytes after last field"));
    }
    let take = |name: &str| fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.clone());
    let v0 = take("v0").ok_or_else(|| HorstError::format(bytes.len() as u64, "model has no v0 field"))?;
    let cols = dims[0] * dims[1];
    let mut model = VtiModel {
        v0,
        delta: take("delta").unwrap_or_else(|| vec![0.0; n]),
        epsilon: take("epsilon").unwrap_or_else(|| vec![0.0; n]),
        rho: vec![1.0; n],
        q: take("q").unwrap_or_else(|| vec![f64::INFINITY; n]),
        water_depth_index: vec![0; cols],
        grid,
    };
    if let Some(water) = take("water") {
        for ix in 0..dims[0] {
            for iy in 0..dims[1] {
                let mut w = 0;
                while w < dims[2] && water[model.grid.index(ix, iy, w)] >= 0.5 {
                    w += 1;
                }
                model.water_depth_index[ix * dims[1] + iy] = w;
            }
        }
    }
    model.rho = match take("rho") {
        Some(r) => r,
        None => density_from_velocity(&model)?,
    };
    model.validate().map_err(|e| HorstError::format(0, e.to_string()))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> VtiModel {
        let grid = Grid::new([3, 4, 5], [10.0, 10.0, 10.0], [100.0, -50.0, 0.0]).unwrap();
        let mut m = VtiModel::homogeneous(grid, 1800.0, 2000.0).unwrap();
        for i in 0..m.len() {
            m.v0[i] = 1500.0 + i as f64 * 3.25;
            m.delta[i] = 0.05;
            m.epsilon[i] = 0.1;
            m.q[i] = if i % 2 == 0 { 150.0 } else { f64::INFINITY };
        }
        m.set_water_layer(2);
        m
    }

    #[test]
    fn roundtrip_is_exact_for_f32_values() {
        let m = sample();
        let mut buf = Vec::new();
        encode_model(&m, &mut buf).unwrap();
        let back = decode_model(&buf).unwrap();
        assert_eq!(back.grid, m.grid);
        assert_eq!(back.water_depth_index, m.water_depth_index);
        for i in 0..m.len() {
            assert_eq!(back.v0[i], m.v0[i] as f32 as f64);
            assert_eq!(back.q[i], m.q[i]);
        }
        let mut again = Vec::new();
        encode_model(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn truncation_names_offset() {
        let m = sample();
        let mut buf = Vec::new();
        encode_model(&m, &mut buf).unwrap();
        for cut in [2, 10, 30, 70, buf.len() - 3] {
            match decode_model(&buf[..cut]) {
                Err(HorstError::Format { offset, .. }) => assert!(offset <= buf.len() as u64),
                other => panic!("expected format error, got {other:?}"),
            }
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(HorstError::Format { offset: 0, .. })));
    }
}
