//! Dense NCHW tensor with f32/f64 element types.
//!
//! Layout is row-major over (n, c, h, w). Lower-rank values embed with
//! size-1 extents. The `CLOT` binary format is implemented here.

use std::fmt;
use std::io::{Read, Write};

use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};

/// Element dtype codes as used by the CLOT file format and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
}

impl Dtype {
    pub fn code(self) -> u8 {
        self as u8
    }
    pub fn from_code(c: u8) -> Result<Dtype> {
        match c {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            _ => Err(Error::Format(format!("unknown dtype code {c}"))),
        }
    }
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Scalar element trait: f32 for shipped model math, f64 for gradient checks.
pub trait Elem: Float + fmt::Debug + fmt::Display + Send + Sync + 'static {
    const DTYPE: Dtype;
    fn from_f64(v: f64) -> Self;
    fn to_f64_(self) -> f64;
    fn to_le(self, out: &mut Vec<u8>);
    fn read_le(buf: &[u8]) -> Self;
}

impl Elem for f32 {
    const DTYPE: Dtype = Dtype::F32;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64_(self) -> f64 {
        self as f64
    }
    fn to_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(buf: &[u8]) -> Self {
        f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]])
    }
}

impl Elem for f64 {
    const DTYPE: Dtype = Dtype::F64;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64_(self) -> f64 {
        self
    }
    fn to_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(buf: &[u8]) -> Self {
        f64::from_le_bytes([
            buf[0], buf[1], buf[2], buf[3], buf[4], buf[5], buf[6], buf[7],
        ])
    }
}

/// Dense rank-≤4 tensor in NCHW order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E: Elem = f32> {
    dims: [usize; 4],
    data: Vec<E>,
}

impl<E: Elem> Tensor<E> {
    pub fn new(dims: [usize; 4], data: Vec<E>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(dim_err!("all extents must be >= 1, got {dims:?}"));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(dim_err!(
                "dims {dims:?} imply {n} elements, data has {}",
                data.len()
            ));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![E::zero(); n],
        }
    }

    pub fn full(dims: [usize; 4], v: E) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![v; n],
        }
    }

    pub fn ones(dims: [usize; 4]) -> Self {
        Self::full(dims, E::one())
    }

    /// Rank-1 vector embedded as (1, len, 1, 1).
    pub fn vector(data: Vec<E>) -> Self {
        let c = data.len();
        Tensor {
            dims: [1, c, 1, 1],
            data,
        }
    }

    pub fn scalar(v: E) -> Self {
        Tensor {
            dims: [1, 1, 1, 1],
            data: vec![v],
        }
    }

    /// Uniform samples in [lo, hi), deterministic for a given rng state.
    pub fn rand_uniform(dims: [usize; 4], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Self {
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| E::from_f64(rng.gen_range(lo..hi)))
            .collect();
        Tensor { dims, data }
    }

    /// Truncated-normal samples: N(0, sigma^2) resampled until |v| <= 2*sigma.
    pub fn trunc_normal(dims: [usize; 4], sigma: f64, rng: &mut ChaCha8Rng) -> Self {
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| {
                loop {
                    // Box-Muller from two uniforms keeps us off rand_distr.
                    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                    let v = z * sigma;
                    if v.abs() <= 2.0 * sigma {
                        return E::from_f64(v);
                    }
                }
            })
            .collect();
        Tensor { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
    pub fn n(&self) -> usize {
        self.dims[0]
    }
    pub fn c(&self) -> usize {
        self.dims[1]
    }
    pub fn h(&self) -> usize {
        self.dims[2]
    }
    pub fn w(&self) -> usize {
        self.dims[3]
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn data(&self) -> &[E] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> E {
        let [_, cc, hh, ww] = self.dims;
        self.data[((n * cc + c) * hh + h) * ww + w]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut E {
        let [_, cc, hh, ww] = self.dims;
        &mut self.data[((n * cc + c) * hh + h) * ww + w]
    }

    /// Reinterpret with new extents of equal product.
    pub fn reshape(&self, dims: [usize; 4]) -> Result<Tensor<E>> {
        let n: usize = dims.iter().product();
        if n != self.data.len() {
            return Err(dim_err!(
                "cannot reshape {:?} ({} elems) to {dims:?}",
                self.dims,
                self.data.len()
            ));
        }
        Ok(Tensor {
            dims,
            data: self.data.clone(),
        })
    }

    pub fn cast<F: Elem>(&self) -> Tensor<F> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|v| F::from_f64(v.to_f64_())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Tensor<E> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Tensor<E>, f: impl Fn(E, E) -> E) -> Result<Tensor<E>> {
        if self.dims != other.dims {
            return Err(dim_err!(
                "shape mismatch: {:?} vs {:?}",
                self.dims,
                other.dims
            ));
        }
        Ok(Tensor {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// In-place accumulation, used by gradient sinks.
    pub fn add_assign(&mut self, other: &Tensor<E>) -> Result<()> {
        if self.dims != other.dims {
            return Err(dim_err!(
                "shape mismatch: {:?} vs {:?}",
                self.dims,
                other.dims
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
        Ok(())
    }

    pub fn sum(&self) -> E {
        self.data.iter().fold(E::zero(), |acc, &v| acc + v)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Circular spatial shift by (dy, dx): out[h][w] = in[(h-dy) mod H][(w-dx) mod W].
    pub fn circular_shift(&self, dy: i64, dx: i64) -> Tensor<E> {
        let [n, c, h, w] = self.dims;
        let mut out = Tensor::zeros(self.dims);
        let (hh, ww) = (h as i64, w as i64);
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    let sy = ((y as i64 - dy).rem_euclid(hh)) as usize;
                    for x in 0..w {
                        let sx = ((x as i64 - dx).rem_euclid(ww)) as usize;
                        *out.at_mut(ni, ci, y, x) = self.at(ni, ci, sy, sx);
                    }
                }
            }
        }
        out
    }

    // ---- CLOT format ------------------------------------------------------
    //
    // magic `CLOT`, version u8 (=1), dtype u8 (1=f32, 2=f64), rank u8,
    // rank * u64 LE extents, then raw LE values row-major NCHW.

    pub fn write_clot<W2: Write>(&self, w: &mut W2) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + self.data.len() * E::DTYPE.size());
        buf.extend_from_slice(b"CLOT");
        buf.push(1u8);
        buf.push(E::DTYPE.code());
        // Trailing size-1 extents are dropped so rank round-trips naturally,
        // but rank-0 collapses to rank 1.
        let mut rank = 4;
        while rank > 1 && self.dims[rank - 1] == 1 {
            rank -= 1;
        }
        buf.push(rank as u8);
        for &d in &self.dims[..rank] {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            v.to_le(&mut buf);
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_clot<R: Read>(r: &mut R) -> Result<Tensor<E>> {
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        Self::from_clot_bytes(&raw)
    }

    pub fn from_clot_bytes(raw: &[u8]) -> Result<Tensor<E>> {
        if raw.len() < 7 || &raw[0..4] != b"CLOT" {
            return Err(Error::Format("not a CLOT file (bad magic)".into()));
        }
        if raw[4] != 1 {
            return Err(Error::Format(format!("unsupported CLOT version {}", raw[4])));
        }
        let dtype = Dtype::from_code(raw[5])?;
        if dtype != E::DTYPE {
            return Err(Error::Format(format!(
                "dtype mismatch: file has {:?}, expected {:?}",
                dtype,
                E::DTYPE
            )));
        }
        let rank = raw[6] as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::Format(format!("bad rank {rank}")));
        }
        let mut off = 7;
        let mut dims = [1usize; 4];
        for d in dims.iter_mut().take(rank) {
            if off + 8 > raw.len() {
                return Err(Error::Format("truncated CLOT header".into()));
            }
            let mut b = [0u8; 8];
            b.copy_from_slice(&raw[off..off + 8]);
            *d = u64::from_le_bytes(b) as usize;
            off += 8;
        }
        let n: usize = dims.iter().product();
        let need = n * E::DTYPE.size();
        if raw.len() - off != need {
            return Err(Error::Format(format!(
                "CLOT payload is {} bytes, dims {dims:?} need {need}",
                raw.len() - off
            )));
        }
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            data.push(E::read_le(&raw[off + i * E::DTYPE.size()..]));
        }
        Tensor::new(dims, data)
    }
}

/// Central-difference gradient of a scalar-valued function.
///
/// This is the verification oracle for every reverse-mode gradient in the
/// library; it only ever calls the forward function.
pub fn finite_diff_grad<E: Elem>(
    f: &dyn Fn(&Tensor<E>) -> E,
    x: &Tensor<E>,
    eps: f64,
) -> Result<Tensor<E>> {
    let mut grad = Tensor::zeros(x.dims());
    let e = E::from_f64(eps);
    let two = E::from_f64(2.0);
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + e;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - e;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite function value at element {i}"
            )));
        }
        grad.data_mut()[i] = (fp - fm) / (two * e);
    }
    Ok(grad)
}

/// L2 relative error between two same-shape tensors, the gradcheck metric.
pub fn rel_error<E: Elem>(a: &Tensor<E>, b: &Tensor<E>) -> f64 {
    let mut diff = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x.to_f64_(), y.to_f64_());
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    diff.sqrt() / na.sqrt().max(nb.sqrt()).max(1e-12)
}
