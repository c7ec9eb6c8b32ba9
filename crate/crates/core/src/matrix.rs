//! Dense binary pooling matrices.
//!
//! Rows are tests, columns are items. Each row is stored as a packed run of
//! `u64` words so that membership checks and row scans stay cheap for the
//! few-thousand-row matrices the designs produce.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{input_err, IdgError, Result};

const WORD: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PoolingMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    words: Vec<u64>,
}

impl PoolingMatrix {
    /// All-zero `rows × cols` matrix. Both dimensions must be positive.
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(input_err!("matrix dimensions must be positive, got {rows}x{cols}"));
        }
        let stride = cols.div_ceil(WORD);
        Ok(Self { rows, cols, stride, words: vec![0; rows * stride] })
    }

    pub fn from_rows<R: AsRef<[bool]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::zeros(rows.len(), cols)?;
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(input_err!("row {i} has {} entries, expected {cols}", row.len()));
            }
            for (j, &bit) in row.iter().enumerate() {
                if bit {
                    m.set(i, j, true);
                }
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        self.words[row * self.stride + col / WORD] >> (col % WORD) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        assert!(row < self.rows && col < self.cols, "index ({row}, {col}) out of bounds");
        let w = &mut self.words[row * self.stride + col / WORD];
        let mask = 1u64 << (col % WORD);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    /// Packed words of one row; bits past `cols` are always zero.
    pub fn row_words(&self, row: usize) -> &[u64] {
        &self.words[row * self.stride..(row + 1) * self.stride]
    }

    /// Column indices set in `row`, ascending.
    pub fn row_ones(&self, row: usize) -> RowOnes<'_> {
        RowOnes { words: self.row_words(row), idx: 0, cur: self.row_words(row).first().copied().unwrap_or(0) }
    }

    pub fn row_weight(&self, row: usize) -> usize {
        self.row_words(row).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self.get(i, j)).collect()).collect()
    }

    /// Copy of this matrix with rows permuted: row `i` of the result is row
    /// `order[i]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.rows {
            return Err(input_err!("permutation length {} != rows {}", order.len(), self.rows));
        }
        let mut out = Self::zeros(self.rows, self.cols)?;
        for (dst, &src) in order.iter().enumerate() {
            if src >= self.rows {
                return Err(input_err!("permutation entry {src} out of range"));
            }
            out.words[dst * self.stride..(dst + 1) * self.stride].copy_from_slice(self.row_words(src));
        }
        Ok(out)
    }
}

pub struct RowOnes<'a> {
    words: &'a [u64],
    idx: usize,
    cur: u64,
}

impl Iterator for RowOnes<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        loop {
            if self.cur != 0 {
                let bit = self.cur.trailing_zeros() as usize;
                self.cur &= self.cur - 1;
                return Some(self.idx * WORD + bit);
            }
            self.idx += 1;
            if self.idx >= self.words.len() {
                return None;
            }
            self.cur = self.words[self.idx];
        }
    }
}

/// Draws a `tests × items` matrix with i.i.d. Bernoulli(`p`) entries.
///
/// Entries are drawn row-major from a ChaCha8 stream seeded by `seed`, so
/// the result is a pure function of `(tests, items, p, seed)`.
pub fn generate_matrix(tests: usize, items: usize, p: f64, seed: u64) -> Result<PoolingMatrix> {
    let dist = Bernoulli::new(p).map_err(|_| input_err!("probability {p} not in [0, 1]"))?;
    let mut m = PoolingMatrix::zeros(tests, items)?;
    if p == 0.0 {
        return Ok(m);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..tests {
        for j in 0..items {
            if dist.sample(&mut rng) {
                m.set(i, j, true);
            }
        }
    }
    Ok(m)
}

impl fmt::Debug for PoolingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PoolingMatrix({}x{})", self.rows, self.cols)
    }
}

/// Text form: a `"T n"` header line, then `T` lines of `n` characters in `{0,1}`.
impl fmt::Display for PoolingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.rows, self.cols)?;
        let mut line = String::with_capacity(self.cols);
        for i in 0..self.rows {
            line.clear();
            line.extend((0..self.cols).map(|j| if self.get(i, j) { '1' } else { '0' }));
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl FromStr for PoolingMatrix {
    type Err = IdgError;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| IdgError::Parse("empty matrix file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| IdgError::Parse(format!("bad header {header:?}: {e}")))?;
        let [rows, cols] = dims[..] else {
            return Err(IdgError::Parse(format!("header must be \"T n\", got {header:?}")));
        };
        let mut m = Self::zeros(rows, cols).map_err(|e| IdgError::Parse(e.to_string()))?;
        let mut seen = 0;
        for (i, line) in lines.enumerate() {
            if i >= rows {
                return Err(IdgError::Parse(format!("more than {rows} rows")));
            }
            if line.len() != cols {
                return Err(IdgError::Parse(format!("row {i} has {} characters, expected {cols}", line.len())));
            }
            for (j, c) in line.chars().enumerate() {
                match c {
                    '0' => {}
                    '1' => m.set(i, j, true),
                    other => return Err(IdgError::Parse(format!("row {i}: unexpected character {other:?}"))),
                }
            }
            seen += 1;
        }
        if seen != rows {
            return Err(IdgError::Parse(format!("expected {rows} rows, found {seen}")));
        }
        Ok(m)
    }
}

/// Renders an outcome vector as a string over `{0,1}`, ordered by test index.
pub fn format_outcomes(y: &[bool]) -> String {
    y.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn parse_outcomes(s: &str) -> Result<Vec<bool>> {
    s.trim()
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(IdgError::Parse(format!("outcome character {other:?} not in {{0,1}}"))),
        })
        .collect()
}
