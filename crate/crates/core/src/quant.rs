//! Blockwise 8-bit quantization of optimizer state.
//!
//! A tensor is flattened row-major, split into fixed-size blocks, and each
//! block is normalized by its own absmax before the normalized values are
//! mapped to the nearest entry of a 256-value codebook. Two codebooks are
//! supported:
//!
//! - `linear`: the uniform grid i/127 for i in -127..=127, with the spare
//!   index 0 reserved as a second -1.0 (the slot an int8 -128 would occupy);
//! - `dynamic`: a sign x exponent x fraction table that is much denser near
//!   zero, mirroring the 8-bit dynamic codebook used for 8-bit Adam. It
//!   contains +1.0 but not -1.0; that asymmetry is kept on purpose.
//!
//! Quantization and dequantization are pure and deterministic; blocks are
//! independent, so any parallel schedule must produce bit-identical results
//! to the sequential one.

use crate::error::{MuonError, Result};
use crate::linalg::Matrix;

/// Number of representable 8-bit codes.
pub const CODEBOOK_SIZE: usize = 256;

/// Default quantization block size.
pub const DEFAULT_BLOCK_SIZE: usize = 2048;

/// Magic bytes of the serialized buffer format.
pub const BUFFER_MAGIC: [u8; 4] = *b"Q8MU";

/// Which 8-bit codebook a buffer uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodebookMode {
    Linear,
    Dynamic,
}

impl CodebookMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CodebookMode::Linear => "linear",
            CodebookMode::Dynamic => "dynamic",
        }
    }
}

impl std::str::FromStr for CodebookMode {
    type Err = MuonError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(CodebookMode::Linear),
            "dynamic" => Ok(CodebookMode::Dynamic),
            other => Err(MuonError::Config(format!(
                "unknown codebook mode '{other}' (expected linear|dynamic)"
            ))),
        }
    }
}

/// A sorted table of 256 normalized code values in [-1, 1].
#[derive(Debug, Clone)]
pub struct Codebook {
    mode: CodebookMode,
    values: [f64; CODEBOOK_SIZE],
    zero_index: u8,
}

impl Codebook {
    /// Build the codebook for `mode`. See the module docs for the two
    /// constructions.
    pub fn new(mode: CodebookMode) -> Codebook {
        let values = match mode {
            CodebookMode::Linear => linear_values(),
            CodebookMode::Dynamic => dynamic_values(),
        };
        let zero_index = values
            .iter()
            .position(|&v| v == 0.0)
            .expect("codebook contains 0") as u8;
        Codebook {
            mode,
            values,
            zero_index,
        }
    }

    pub fn mode(&self) -> CodebookMode {
        self.mode
    }

    /// The sorted code values.
    pub fn values(&self) -> &[f64; CODEBOOK_SIZE] {
        &self.values
    }

    /// Index of the exact 0.0 entry.
    pub fn zero_index(&self) -> u8 {
        self.zero_index
    }

    /// Index of the codebook value nearest to `x`, ties broken toward the
    /// smaller index. Binary search on the sorted table.
    pub fn nearest(&self, x: f64) -> u8 {
        let v = &self.values;
        // First index with value >= x.
        let idx = v.partition_point(|&c| c < x);
        if idx == 0 {
            return 0;
        }
        if idx == CODEBOOK_SIZE {
            return (CODEBOOK_SIZE - 1) as u8;
        }
        let lo = idx - 1;
        let d_lo = x - v[lo];
        let d_hi = v[idx] - x;
        // Tie goes to the smaller index.
        let mut best = if d_lo <= d_hi { lo } else { idx };
        // Duplicated values (the linear table holds -1.0 twice) also
        // resolve to the smallest index.
        while best > 0 && v[best - 1] == v[best] {
            best -= 1;
        }
        best as u8
    }
}

/// Linear grid: index 0 is the reserved -1.0 slot (the int8 -128 position),
/// indices 1..=255 hold i/127 for i in -127..=127.
fn linear_values() -> [f64; CODEBOOK_SIZE] {
    let mut v = [0.0f64; CODEBOOK_SIZE];
    v[0] = -1.0;
    for (k, slot) in v.iter_mut().enumerate().skip(1) {
        *slot = (k as f64 - 128.0) / 127.0;
    }
    v
}

/// Dynamic table: for exponent level i in 0..=6, the 2^i midpoints of the
/// 2^i + 1 evenly spaced boundaries on [0.1, 1], scaled by 10^(i-6), with
/// both signs; plus 0 and +1.0. 2 * (1 + 2 + ... + 64) + 2 = 256 values.
fn dynamic_values() -> [f64; CODEBOOK_SIZE] {
    let mut vals = Vec::with_capacity(CODEBOOK_SIZE);
    for level in 0..=6u32 {
        let count = 1usize << level;
        let step = 0.9 / count as f64;
        let scale = 10f64.powi(level as i32 - 6);
        for k in 0..count {
            let mid = 0.1 + step * (k as f64 + 0.5);
            vals.push(mid * scale);
            vals.push(-mid * scale);
        }
    }
    vals.push(0.0);
    vals.push(1.0);
    debug_assert_eq!(vals.len(), CODEBOOK_SIZE);
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = [0.0f64; CODEBOOK_SIZE];
    out.copy_from_slice(&vals);
    out
}

/// Per-tensor compressed state: 8-bit code indices plus one absmax scale
/// per block.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBuffer {
    pub codes: Vec<u8>,
    /// Block absmax values. Kept in f64 for exact round trips; serialized
    /// and accounted as 32-bit.
    pub scales: Vec<f64>,
    pub block_size: usize,
    pub codebook_mode: CodebookMode,
    pub rows: usize,
    pub cols: usize,
}

impl QuantizedBuffer {
    /// An all-zero buffer of the given shape (every block has scale 0).
    pub fn zeros(rows: usize, cols: usize, block_size: usize, mode: CodebookMode) -> QuantizedBuffer {
        let n = rows * cols;
        let cb = Codebook::new(mode);
        QuantizedBuffer {
            codes: vec![cb.zero_index(); n],
            scales: vec![0.0; n.div_ceil(block_size)],
            block_size,
            codebook_mode: mode,
            rows,
            cols,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Serialize to the on-disk layout: magic "Q8MU", u8 mode, u32 rows,
    /// u32 cols, u32 block_size, codes, then scales as f32. Little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + self.codes.len() + 4 * self.scales.len());
        out.extend_from_slice(&BUFFER_MAGIC);
        out.push(match self.codebook_mode {
            CodebookMode::Linear => 0,
            CodebookMode::Dynamic => 1,
        });
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&(self.block_size as u32).to_le_bytes());
        out.extend_from_slice(&self.codes);
        for &s in &self.scales {
            out.extend_from_slice(&(s as f32).to_le_bytes());
        }
        out
    }

    /// Parse the layout written by [`QuantizedBuffer::to_bytes`].
    pub fn from_bytes(bytes: &[u8]) -> Result<QuantizedBuffer> {
        if bytes.len() < 17 {
            return Err(MuonError::Data("quantized buffer truncated".into()));
        }
        if bytes[0..4] != BUFFER_MAGIC {
            return Err(MuonError::Data("bad magic, not a Q8MU buffer".into()));
        }
        let mode = match bytes[4] {
            0 => CodebookMode::Linear,
            1 => CodebookMode::Dynamic,
            m => return Err(MuonError::Data(format!("unknown codebook mode byte {m}"))),
        };
        let rd = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let rows = rd(5);
        let cols = rd(9);
        let block_size = rd(13);
        if rows == 0 || cols == 0 || block_size == 0 {
            return Err(MuonError::Data("zero dimension in buffer header".into()));
        }
        let n = rows * cols;
        let nblocks = n.div_ceil(block_size);
        let expect = 17 + n + 4 * nblocks;
        if bytes.len() != expect {
            return Err(MuonError::Data(format!(
                "buffer length {} does not match header (expected {expect})",
                bytes.len()
            )));
        }
        let codes = bytes[17..17 + n].to_vec();
        let mut scales = Vec::with_capacity(nblocks);
        for b in 0..nblocks {
            let o = 17 + n + 4 * b;
            let s = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
            if !s.is_finite() || s < 0.0 {
                return Err(MuonError::Data(format!("invalid scale {s} in buffer")));
            }
            scales.push(s as f64);
        }
        Ok(QuantizedBuffer {
            codes,
            scales,
            block_size,
            codebook_mode: mode,
            rows,
            cols,
        })
    }
}

/// Quantize one block: returns the code indices and the block scale
/// (absmax). A zero block maps every element to the codebook's exact-zero
/// entry with scale 0.
pub fn quantize_block(x: &[f64], cb: &Codebook) -> Result<(Vec<u8>, f64)> {
    if x.is_empty() {
        return Err(MuonError::Data("quantize_block on empty block".into()));
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(MuonError::Data(format!(
            "non-finite value {bad} in quantization input"
        )));
    }
    let scale = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Ok((vec![cb.zero_index(); x.len()], 0.0));
    }
    let codes = x.iter().map(|&v| cb.nearest(v / scale)).collect();
    Ok((codes, scale))
}

/// Dequantize one block: elementwise `scale * codebook[code]`.
pub fn dequantize_block(codes: &[u8], scale: f64, cb: &Codebook) -> Result<Vec<f64>> {
    if !scale.is_finite() || scale < 0.0 {
        return Err(MuonError::Data(format!("invalid block scale {scale}")));
    }
    Ok(codes.iter().map(|&c| scale * cb.values()[c as usize]).collect())
}

/// Blockwise quantization of a matrix: flatten row-major, split into
/// ceil(n / block_size) blocks (the last block may be short), quantize each
/// block independently.
pub fn quantize_tensor(m: &Matrix, block_size: usize, cb: &Codebook) -> Result<QuantizedBuffer> {
    if block_size == 0 {
        return Err(MuonError::InvalidArgument("block_size must be >= 1".into()));
    }
    let data = m.data();
    let mut codes = Vec::with_capacity(data.len());
    let mut scales = Vec::with_capacity(data.len().div_ceil(block_size));
    for block in data.chunks(block_size) {
        let (mut c, s) = quantize_block(block, cb)?;
        codes.append(&mut c);
        scales.push(s);
    }
    Ok(QuantizedBuffer {
        codes,
        scales,
        block_size,
        codebook_mode: cb.mode(),
        rows: m.rows(),
        cols: m.cols(),
    })
}

/// Inverse of [`quantize_tensor`]; restores the original shape exactly.
pub fn dequantize_tensor(qb: &QuantizedBuffer) -> Result<Matrix> {
    let cb = Codebook::new(qb.codebook_mode);
    let n = qb.rows * qb.cols;
    if qb.codes.len() != n {
        return Err(MuonError::Data(format!(
            "code count {} does not match shape {}x{}",
            qb.codes.len(),
            qb.rows,
            qb.cols
        )));
    }
    if qb.scales.len() != n.div_ceil(qb.block_size) {
        return Err(MuonError::Data(format!(
            "scale count {} does not match {} blocks",
            qb.scales.len(),
            n.div_ceil(qb.block_size)
        )));
    }
    let mut data = Vec::with_capacity(n);
    for (b, chunk) in qb.codes.chunks(qb.block_size).enumerate() {
        let mut vals = dequantize_block(chunk, qb.scales[b], &cb)?;
        data.append(&mut vals);
    }
    Matrix::from_vec(qb.rows, qb.cols, data)
}

/// Round-trip error analytics of quantize-then-dequantize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundtripStats {
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
    /// Max relative error over nonzero source elements; 0 if there are none.
    pub max_rel_err_nonzero: f64,
}

/// Quantize `m` blockwise, dequantize, and summarize the elementwise error.
pub fn roundtrip_error_stats(m: &Matrix, block_size: usize, cb: &Codebook) -> Result<RoundtripStats> {
    let qb = quantize_tensor(m, block_size, cb)?;
    let dq = dequantize_tensor(&qb)?;
    let mut max_abs = 0.0f64;
    let mut sum_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    for (&x, &y) in m.data().iter().zip(dq.data().iter()) {
        let err = (x - y).abs();
        max_abs = max_abs.max(err);
        sum_abs += err;
        if x != 0.0 {
            max_rel = max_rel.max(err / x.abs());
        }
    }
    Ok(RoundtripStats {
        max_abs_err: max_abs,
        mean_abs_err: sum_abs / m.len() as f64,
        max_rel_err_nonzero: max_rel,
    })
}
