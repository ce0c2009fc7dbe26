//! Little-endian binary formats.
//!
//! NAPM model file: magic "NAPM", version u16 = 1, layer_count u16; per
//! layer: kind u8 (0 = dense), rows u32 (input dim), cols u32 (output
//! dim), bias_len u32, then rows×cols f32 weights row-major, then
//! bias_len f32 bias values.
//!
//! NAPG guard file: magic "NAPG", version u16 = 1, M u16, layer_count
//! u16; per (m, layer): the delta tensors in the NAPM layer encoding,
//! then the three per-store checksums for that layer — base, redundant
//! m, delta m — each as (int_sum u64, value_sum f64).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::guard::GuardedEnsemble;
use crate::model::{LayerParams, ModelParams};
use crate::tensor::{Checksum, Tensor};
use crate::{Error, Result};

const NAPM_MAGIC: &[u8; 4] = b"NAPM";
const NAPG_MAGIC: &[u8; 4] = b"NAPG";
const FORMAT_VERSION: u16 = 1;
/// Sanity cap: no tensor above 2^28 elements (1 GiB of f32).
const MAX_ELEMS: u64 = 1 << 28;

struct Reader<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn new(inner: R) -> Self {
        Reader { inner, offset: 0 }
    }

    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset,
            msg: msg.into(),
        }
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|_| Error::Format {
            offset: self.offset,
            msg: format!("unexpected end of file while reading {} bytes", buf.len()),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.read_exact(&mut b)?;
        Ok(b[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; n * 4];
        self.read_exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(self.fail("trailing data after declared content")),
            Err(e) => Err(Error::Io(e)),
        }
    }
}

fn write_layer<W: Write>(out: &mut W, layer: &LayerParams) -> Result<()> {
    out.write_all(&[0u8])?; // kind: dense
    out.write_all(&(layer.in_dim() as u32).to_le_bytes())?;
    out.write_all(&(layer.out_dim() as u32).to_le_bytes())?;
    out.write_all(&(layer.bias.len() as u32).to_le_bytes())?;
    for v in layer.weights.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in layer.bias.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_layer<R: Read>(r: &mut Reader<R>) -> Result<LayerParams> {
    let kind = r.u8()?;
    if kind != 0 {
        return Err(r.fail(format!("unknown layer kind {kind}")));
    }
    let rows = r.u32()? as u64;
    let cols = r.u32()? as u64;
    let bias_len = r.u32()? as u64;
    if rows == 0 || cols == 0 {
        return Err(r.fail(format!("degenerate layer shape {rows}×{cols}")));
    }
    if rows.saturating_mul(cols) > MAX_ELEMS {
        return Err(r.fail(format!("shape overflow: {rows}×{cols} elements")));
    }
    if bias_len != cols {
        return Err(r.fail(format!("bias length {bias_len} does not match cols {cols}")));
    }
    let weights = r.f32_vec((rows * cols) as usize)?;
    let bias = r.f32_vec(bias_len as usize)?;
    LayerParams::new(
        Tensor::new(vec![rows as usize, cols as usize], weights)?,
        Tensor::new(vec![bias_len as usize], bias)?,
    )
}

/// Write a model as NAPM. The byte stream is a pure function of the
/// parameters, so identical models produce identical files.
pub fn save_model(model: &ModelParams, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(NAPM_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(model.layer_count() as u16).to_le_bytes())?;
    for layer in model.layers() {
        write_layer(&mut out, layer)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    let mut r = Reader::new(BufReader::new(File::open(path)?));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != NAPM_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"NAPM\""),
        });
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let layer_count = r.u16()? as usize;
    if layer_count == 0 {
        return Err(r.fail("zero layers"));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        layers.push(read_layer(&mut r)?);
    }
    r.expect_eof()?;
    ModelParams::new(layers)
}

/// Persist a guard's relation tensors and checksums as NAPG.
pub fn save_guard(guard: &GuardedEnsemble, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(NAPG_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(guard.redundant_count() as u16).to_le_bytes())?;
    out.write_all(&(guard.layer_count() as u16).to_le_bytes())?;
    let (base_sums, red_sums, delta_sums) = guard.checksums();
    for m in 1..=guard.redundant_count() {
        for layer in 0..guard.layer_count() {
            write_layer(&mut out, &guard.deltas(m)[layer])?;
            for sum in [
                &base_sums[layer],
                &red_sums[m - 1][layer],
                &delta_sums[m - 1][layer],
            ] {
                out.write_all(&sum.int_sum.to_le_bytes())?;
                out.write_all(&sum.value_sum.to_bits().to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Rebuild a guard from a NAPG file plus the live base and redundant
/// models. Deltas and checksums come from the file, not from the models,
/// so corruption in either is detectable afterwards via audit.
pub fn load_guard(
    path: &Path,
    base: ModelParams,
    redundants: Vec<ModelParams>,
) -> Result<GuardedEnsemble> {
    let mut r = Reader::new(BufReader::new(File::open(path)?));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != NAPG_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"NAPG\""),
        });
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let m_count = r.u16()? as usize;
    let layer_count = r.u16()? as usize;
    if m_count != redundants.len() {
        return Err(r.fail(format!(
            "guard file has {m_count} redundants, {} supplied",
            redundants.len()
        )));
    }
    if layer_count != base.layer_count() {
        return Err(r.fail(format!(
            "guard file has {layer_count} layers, base model has {}",
            base.layer_count()
        )));
    }
    let mut deltas = Vec::with_capacity(m_count);
    let mut base_sums: Vec<Checksum> = Vec::new();
    let mut red_sums = Vec::with_capacity(m_count);
    let mut delta_sums = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let mut per_layer = Vec::with_capacity(layer_count);
        let mut rsums = Vec::with_capacity(layer_count);
        let mut dsums = Vec::with_capacity(layer_count);
        for layer in 0..layer_count {
            per_layer.push(read_layer(&mut r)?);
            let bsum = Checksum {
                int_sum: r.u64()?,
                value_sum: r.f64()?,
            };
            if m == 0 {
                base_sums.push(bsum);
            } else if base_sums[layer].int_sum != bsum.int_sum {
                return Err(r.fail(format!(
                    "base checksum for layer {layer} disagrees across redundants"
                )));
            }
            rsums.push(Checksum {
                int_sum: r.u64()?,
                value_sum: r.f64()?,
            });
            dsums.push(Checksum {
                int_sum: r.u64()?,
                value_sum: r.f64()?,
            });
        }
        deltas.push(per_layer);
        red_sums.push(rsums);
        delta_sums.push(dsums);
    }
    r.expect_eof()?;
    GuardedEnsemble::from_parts(base, redundants, deltas, Some((base_sums, red_sums, delta_sums)))
}
