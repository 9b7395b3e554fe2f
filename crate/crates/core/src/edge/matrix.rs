use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("malformed PBM: {0}")]
    Pbm(String),
    #[error("run lengths cover {actual} cells, expected {expected}")]
    RunLength { expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary information-indication matrix, `rows`×`cols`, row-major.
///
/// Rows follow image height and columns image width, so entry `(r, c)` is
/// pixel `(x = c, y = r)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InfoMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl InfoMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    /// Takes a row-major buffer; any nonzero byte counts as 1.
    pub fn from_bits(rows: usize, cols: usize, bits: Vec<u8>) -> Self {
        assert_eq!(bits.len(), rows * cols, "bit buffer does not match dims");
        let bits = bits.into_iter().map(|b| u8::from(b != 0)).collect();
        Self { rows, cols, bits }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                bits.push(u8::from(f(r, c)));
            }
        }
        Self { rows, cols, bits }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c] != 0
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, on: bool) {
        self.bits[r * self.cols + c] = u8::from(on);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Fraction of 1-entries; 0 for an empty matrix.
    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count_ones() as f64 / self.bits.len() as f64
        }
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    /// True when every 1 in `self` is also 1 in `other`.
    pub fn is_subset_of(&self, other: &InfoMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a <= b)
    }

    pub fn transpose(&self) -> InfoMatrix {
        InfoMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Alternating run lengths over the row-major bits, starting with the
    /// number of leading zeros (which may be 0).
    pub fn to_rle(&self) -> Vec<u64> {
        let mut runs = Vec::new();
        let mut current = 0u8;
        let mut len = 0u64;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_rle(rows: usize, cols: usize, runs: &[u64]) -> Result<Self, MatrixError> {
        let expected = rows * cols;
        let actual: u64 = runs.iter().sum();
        if actual != expected as u64 {
            return Err(MatrixError::RunLength {
                expected,
                actual: actual as usize,
            });
        }
        let mut bits = Vec::with_capacity(expected);
        for (i, &len) in runs.iter().enumerate() {
            bits.extend(std::iter::repeat_n((i % 2) as u8, len as usize));
        }
        Ok(Self { rows, cols, bits })
    }

    /// Binary PBM (P4); 1-entries are written as black.
    pub fn write_pbm<W: Write>(&self, mut out: W) -> Result<(), MatrixError> {
        write!(out, "P4\n{} {}\n", self.cols, self.rows)?;
        let row_bytes = self.cols.div_ceil(8);
        let mut packed = vec![0u8; row_bytes];
        for r in 0..self.rows {
            packed.iter_mut().for_each(|b| *b = 0);
            for (c, &bit) in self.row(r).iter().enumerate() {
                if bit != 0 {
                    packed[c / 8] |= 0x80 >> (c % 8);
                }
            }
            out.write_all(&packed)?;
        }
        Ok(())
    }

    pub fn to_pbm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_pbm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_pbm<R: BufRead>(mut input: R) -> Result<Self, MatrixError> {
        let mut header = Vec::new();
        // magic, width, height: three whitespace-separated tokens, '#' comments allowed
        let mut tokens = Vec::new();
        while tokens.len() < 3 {
            let mut byte = [0u8; 1];
            if input.read(&mut byte)? == 0 {
                return Err(MatrixError::Pbm("truncated header".into()));
            }
            match byte[0] {
                b'#' => {
                    let mut skip = Vec::new();
                    input.read_until(b'\n', &mut skip)?;
                }
                b if b.is_ascii_whitespace() => {
                    if !header.is_empty() {
                        tokens.push(String::from_utf8_lossy(&header).into_owned());
                        header.clear();
                    }
                }
                b => header.push(b),
            }
        }
        if tokens[0] != "P4" {
            return Err(MatrixError::Pbm(format!("unsupported magic {}", tokens[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| MatrixError::Pbm(format!("bad dimension {s:?}")))
        };
        let cols = parse(&tokens[1])?;
        let rows = parse(&tokens[2])?;
        let row_bytes = cols.div_ceil(8);
        let mut packed = vec![0u8; row_bytes * rows];
        input
            .read_exact(&mut packed)
            .map_err(|_| MatrixError::Pbm("truncated raster".into()))?;
        Ok(InfoMatrix::from_fn(rows, cols, |r, c| {
            packed[r * row_bytes + c / 8] & (0x80 >> (c % 8)) != 0
        }))
    }
}

impl Serialize for InfoMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            rows: usize,
            cols: usize,
            rle: Vec<u64>,
        }
        Wire {
            rows: self.rows,
            cols: self.cols,
            rle: self.to_rle(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for InfoMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            rows: usize,
            cols: usize,
            rle: Vec<u64>,
        }
        let w = Wire::deserialize(d)?;
        InfoMatrix::from_rle(w.rows, w.cols, &w.rle).map_err(serde::de::Error::custom)
    }
}

/// 1 wherever a 1 of `m` lies within Chebyshev distance `radius`.
///
/// Runs as a separable running-count max filter, so the cost does not depend
/// on the radius.
pub fn dilate(m: &InfoMatrix, radius: usize) -> InfoMatrix {
    if radius == 0 || m.is_empty() {
        return m.clone();
    }
    let (rows, cols) = (m.rows, m.cols);
    let mut horizontal = vec![0u8; rows * cols];
    for r in 0..rows {
        let src = m.row(r);
        let dst = &mut horizontal[r * cols..(r + 1) * cols];
        let mut count = 0usize;
        for &b in &src[..radius.min(cols)] {
            count += b as usize;
        }
        for c in 0..cols {
            if c + radius < cols {
                count += src[c + radius] as usize;
            }
            if c > radius {
                count -= src[c - radius - 1] as usize;
            }
            dst[c] = u8::from(count > 0);
        }
    }
    let mut out = vec![0u8; rows * cols];
    let mut counts = vec![0u32; cols];
    let add = |counts: &mut [u32], row: &[u8]| {
        counts.iter_mut().zip(row).for_each(|(n, &b)| *n += b as u32);
    };
    let sub = |counts: &mut [u32], row: &[u8]| {
        counts.iter_mut().zip(row).for_each(|(n, &b)| *n -= b as u32);
    };
    for r in 0..radius.min(rows) {
        add(&mut counts, &horizontal[r * cols..(r + 1) * cols]);
    }
    for r in 0..rows {
        if r + radius < rows {
            let rr = r + radius;
            add(&mut counts, &horizontal[rr * cols..(rr + 1) * cols]);
        }
        if r > radius {
            let rr = r - radius - 1;
            sub(&mut counts, &horizontal[rr * cols..(rr + 1) * cols]);
        }
        out[r * cols..(r + 1) * cols]
            .iter_mut()
            .zip(&counts)
            .for_each(|(o, &n)| *o = u8::from(n > 0));
    }
    InfoMatrix {
        rows,
        cols,
        bits: out,
    }
}
