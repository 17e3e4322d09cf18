//! Binary file formats. All integers and floats are little-endian.
//!
//! **OPDS1** (datasets): `"OPDS"`, `u8` version 1, `u32` N, d_in, n_pts_u,
//! d_out, n_pts_v, `u64` seed, zero padding to 40 bytes, then the inputs and
//! the outputs as `f64` in `[sample][channel][point]` order.
//!
//! **GITN1** (GIT-Net checkpoints): `"GITN"`, `u8` version 1, `u8` variant
//! (0 standard, 1 pre-residual), `u8` hidden activation (0 identity, 1 GELU,
//! 2 ReLU), `u8` reserved, `u32` d_in, d_out, P_u, P_v, C, K, L, n_pts_u,
//! n_pts_v; then the input and output bases, each as `u32` n_points, `u32` P,
//! `f64` energy threshold, `u32` p_cap, `u8` centered, `u8` degenerate,
//! `u16` reserved, mean (n_points), singular values (P), components (P×n_points);
//! then L↑, R↑, per layer T, P, D, Q, L↓, R↓ as `f64`.

use crate::error::{Error, Result};
use crate::gitnet::{Architecture, GitLayerParams, GitNetParams, Variant};
use crate::pca::PcaBasis;
use crate::pdedata::Dataset;
use crate::tensor::{Activation, Tensor};
use std::io::{Read, Write};

pub const OPDS_MAGIC: &[u8; 4] = b"OPDS";
pub const OPDS_VERSION: u8 = 1;
pub const OPDS_HEADER_LEN: usize = 40;
pub const GITN_MAGIC: &[u8; 4] = b"GITN";
pub const GITN_VERSION: u8 = 1;

fn opds_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "OPDS1",
        reason: reason.into(),
    }
}

fn gitn_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "GITN1",
        reason: reason.into(),
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} = {v} does not fit in u32")))
}

fn put_f64s(buf: &mut Vec<u8>, xs: &[f64]) {
    buf.reserve(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

/// Bounds-checked little-endian reader over a byte slice.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    err: fn(String) -> Error,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let s = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err((self.err)(format!(
                "truncated: need {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| (self.err)("length overflow".into()))?;
        let raw = self.take(len)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n = shape.iter().product();
        let data = self.f64s(n)?;
        Tensor::new_finite(shape.to_vec(), data).map_err(|e| (self.err)(e.to_string()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err((self.err)(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(OPDS_HEADER_LEN + 8 * (ds.inputs.len() + ds.outputs.len()));
    buf.extend_from_slice(OPDS_MAGIC);
    buf.push(OPDS_VERSION);
    for (v, what) in [
        (ds.len(), "N"),
        (ds.d_in(), "d_in"),
        (ds.n_pts_u(), "n_pts_u"),
        (ds.d_out(), "d_out"),
        (ds.n_pts_v(), "n_pts_v"),
    ] {
        buf.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    buf.extend_from_slice(&ds.seed.to_le_bytes());
    buf.resize(OPDS_HEADER_LEN, 0);
    put_f64s(&mut buf, ds.inputs.data());
    put_f64s(&mut buf, ds.outputs.data());
    Ok(buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        err: |r| opds_err(r),
    };
    if c.take(4)? != OPDS_MAGIC {
        return Err(opds_err("bad magic"));
    }
    let version = c.u8()?;
    if version != OPDS_VERSION {
        return Err(opds_err(format!("unsupported version {version}")));
    }
    let (n, d_in, n_u, d_out, n_v) = (c.u32()?, c.u32()?, c.u32()?, c.u32()?, c.u32()?);
    let seed = c.u64()?;
    if c.take(OPDS_HEADER_LEN - c.pos)?.iter().any(|&b| b != 0) {
        return Err(opds_err("non-zero header padding"));
    }
    let inputs = c.tensor(&[n, d_in, n_u])?;
    let outputs = c.tensor(&[n, d_out, n_v])?;
    c.finish()?;
    Dataset::new(inputs, outputs, "file", seed)
}

pub fn write_dataset(w: &mut impl Write, ds: &Dataset) -> Result<()> {
    w.write_all(&encode_dataset(ds)?)?;
    Ok(())
}

pub fn read_dataset(r: &mut impl Read) -> Result<Dataset> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_dataset(&bytes)
}

/// A trained GIT-Net together with the bases it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: GitNetParams,
    pub basis_u: PcaBasis,
    pub basis_v: PcaBasis,
}

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::Standard => 0,
        Variant::PreResidual => 1,
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Identity => 0,
        Activation::Gelu => 1,
        Activation::Relu => 2,
    }
}

fn put_basis(buf: &mut Vec<u8>, b: &PcaBasis) -> Result<()> {
    buf.extend_from_slice(&to_u32(b.n_points(), "n_points")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(b.n_components(), "P")?.to_le_bytes());
    buf.extend_from_slice(&b.energy_threshold().to_le_bytes());
    buf.extend_from_slice(&to_u32(b.p_cap(), "p_cap")?.to_le_bytes());
    buf.push(b.is_centered() as u8);
    buf.push(b.is_degenerate() as u8);
    buf.extend_from_slice(&0u16.to_le_bytes());
    put_f64s(buf, b.mean());
    put_f64s(buf, b.singular_values());
    put_f64s(buf, b.components().data());
    Ok(())
}

fn get_basis(c: &mut Cursor) -> Result<PcaBasis> {
    let n = c.u32()?;
    let p = c.u32()?;
    let threshold = c.f64()?;
    let p_cap = c.u32()?;
    let centered = c.u8()? != 0;
    let degenerate = c.u8()? != 0;
    let _reserved = c.u16()?;
    let mean = c.f64s(n)?;
    let s = c.f64s(p)?;
    let comps = c.tensor(&[p, n])?;
    PcaBasis::from_parts(mean, comps, s, threshold, p_cap, centered, degenerate).map_err(|e| gitn_err(e.to_string()))
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let m = &ck.params;
    m.validate()?;
    let a = &m.arch;
    if ck.basis_u.n_components() != a.p_u || ck.basis_v.n_components() != a.p_v {
        return Err(gitn_err("bases disagree with the architecture"));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(GITN_MAGIC);
    buf.extend_from_slice(&[GITN_VERSION, variant_code(a.variant), activation_code(a.hidden_activation), 0]);
    for (v, what) in [
        (a.d_in, "d_in"),
        (a.d_out, "d_out"),
        (a.p_u, "P_u"),
        (a.p_v, "P_v"),
        (a.channels, "C"),
        (a.modes, "K"),
        (a.layers, "L"),
        (ck.basis_u.n_points(), "n_pts_u"),
        (ck.basis_v.n_points(), "n_pts_v"),
    ] {
        buf.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    put_basis(&mut buf, &ck.basis_u)?;
    put_basis(&mut buf, &ck.basis_v)?;
    for t in m.tensors() {
        put_f64s(&mut buf, t.data());
    }
    Ok(buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        err: |r| gitn_err(r),
    };
    if c.take(4)? != GITN_MAGIC {
        return Err(gitn_err("bad magic"));
    }
    let version = c.u8()?;
    if version != GITN_VERSION {
        return Err(gitn_err(format!("unsupported version {version}")));
    }
    let variant = match c.u8()? {
        0 => Variant::Standard,
        1 => Variant::PreResidual,
        v => return Err(gitn_err(format!("unknown variant code {v}"))),
    };
    let hidden_activation = match c.u8()? {
        0 => Activation::Identity,
        1 => Activation::Gelu,
        2 => Activation::Relu,
        v => return Err(gitn_err(format!("unknown activation code {v}"))),
    };
    let _reserved = c.u8()?;
    let mut dims = [0usize; 9];
    for d in &mut dims {
        *d = c.u32()?;
    }
    let [d_in, d_out, p_u, p_v, ch, k, l, n_u, n_v] = dims;
    if dims.contains(&0) {
        return Err(gitn_err(format!("zero extent in header {dims:?}")));
    }
    let basis_u = get_basis(&mut c)?;
    let basis_v = get_basis(&mut c)?;
    if basis_u.n_points() != n_u || basis_v.n_points() != n_v {
        return Err(gitn_err("basis sizes disagree with the header"));
    }
    let arch = Architecture {
        d_in,
        d_out,
        p_u,
        p_v,
        channels: ch,
        modes: k,
        layers: l,
        variant,
        hidden_activation,
    };
    let l_up = c.tensor(&[ch, d_in])?;
    let r_up = c.tensor(&[p_u, k])?;
    let mut layers = Vec::with_capacity(l);
    for i in 0..l {
        layers.push(GitLayerParams {
            t: c.tensor(&[ch, ch])?,
            p: c.tensor(&[k, k])?,
            d: c.tensor(&[ch, ch, k])?,
            q: c.tensor(&[k, k])?,
            activation: if i + 1 == l { Activation::Identity } else { hidden_activation },
        });
    }
    let l_down = c.tensor(&[d_out, ch])?;
    let r_down = c.tensor(&[k, p_v])?;
    c.finish()?;
    let params = GitNetParams {
        arch,
        l_up,
        r_up,
        layers,
        l_down,
        r_down,
    };
    params.validate().map_err(|e| gitn_err(e.to_string()))?;
    Ok(Checkpoint { params, basis_u, basis_v })
}

pub fn write_checkpoint(w: &mut impl Write, ck: &Checkpoint) -> Result<()> {
    w.write_all(&encode_checkpoint(ck)?)?;
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}
