//! Dense sample-by-feature matrices: storage, file formats, splitting.
//!
//! Binary matrices are bit-packed, 64 features per word, feature `j` of a row
//! at bit `j % 64` of word `j / 64`. Bits past `n_cols` in the last word are
//! always zero so that XOR + popcount over whole words gives Hamming distance.
//!
//! Two file formats are supported. CSV is comma separated with an optional
//! single header row (detected by a non-numeric first token). The dense
//! binary format is
//!
//! ```text
//! offset  size  field
//! 0       16    magic "PRIVETM1" followed by 8 zero bytes
//! 16      4     dtype (u32 LE): 0 = binary, 1 = float64
//! 20      4     reserved (u32 LE), 0
//! 24      8     rows (u64 LE)
//! 32      8     cols (u64 LE)
//! 40      ...   row-major payload: ceil(cols/64) u64 LE words per row for
//!               binary, cols f64 LE values per row for float64
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PrivetError, Result};
use crate::rng;

pub const MAGIC: [u8; 16] = *b"PRIVETM1\0\0\0\0\0\0\0\0";
pub const WORD_BITS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Binary,
    Float64,
}

/// How to interpret the values of a CSV file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DtypeHint {
    /// Binary if every value is 0 or 1, float otherwise.
    #[default]
    Auto,
    Binary,
    Float64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    DenseBinary,
}

impl Format {
    /// Guess from the extension: `.csv` is CSV, anything else dense binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::DenseBinary,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Payload {
    Bits(Vec<u64>),
    Float(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    n_rows: usize,
    n_cols: usize,
    payload: Payload,
}

pub fn words_for(n_cols: usize) -> usize {
    n_cols.div_ceil(WORD_BITS)
}

impl DataMatrix {
    /// Binary matrix from row-major 0/1 bytes.
    pub fn from_binary(n_rows: usize, n_cols: usize, values: &[u8]) -> Result<Self> {
        check_shape(n_rows, n_cols, values.len())?;
        let w = words_for(n_cols);
        let mut bits = vec![0u64; n_rows * w];
        for i in 0..n_rows {
            let row = &values[i * n_cols..(i + 1) * n_cols];
            let out = &mut bits[i * w..(i + 1) * w];
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => out[j / WORD_BITS] |= 1u64 << (j % WORD_BITS),
                    _ => return invalid(format!("value {v} at ({i},{j}) is not 0 or 1")),
                }
            }
        }
        Ok(DataMatrix {
            n_rows,
            n_cols,
            payload: Payload::Bits(bits),
        })
    }

    /// Binary matrix from already packed words, `ceil(n_cols/64)` per row.
    pub fn from_packed(n_rows: usize, n_cols: usize, words: Vec<u64>) -> Result<Self> {
        let w = words_for(n_cols);
        check_shape(n_rows, n_cols, n_rows * n_cols)?;
        if words.len() != n_rows * w {
            return Err(PrivetError::Dimension(format!(
                "{} packed words for {n_rows} rows of {w} words",
                words.len()
            )));
        }
        let tail = n_cols % WORD_BITS;
        if tail != 0 {
            let mask = !0u64 << tail;
            for i in 0..n_rows {
                if words[i * w + w - 1] & mask != 0 {
                    return invalid(format!("row {i} has bits set past column {n_cols}"));
                }
            }
        }
        Ok(DataMatrix {
            n_rows,
            n_cols,
            payload: Payload::Bits(words),
        })
    }

    pub fn from_f64(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(n_rows, n_cols, values.len())?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!(
                "non-finite value at ({},{})",
                k / n_cols,
                k % n_cols
            ));
        }
        Ok(DataMatrix {
            n_rows,
            n_cols,
            payload: Payload::Float(values),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn dtype(&self) -> Dtype {
        match self.payload {
            Payload::Bits(_) => Dtype::Binary,
            Payload::Float(_) => Dtype::Float64,
        }
    }

    /// Packed words per row (binary matrices).
    pub fn words_per_row(&self) -> usize {
        words_for(self.n_cols)
    }

    /// All packed words, row-major. Panics on float matrices.
    pub fn words(&self) -> &[u64] {
        match &self.payload {
            Payload::Bits(b) => b,
            Payload::Float(_) => panic!("words() on a float64 matrix"),
        }
    }

    /// All values, row-major. Panics on binary matrices.
    pub fn values(&self) -> &[f64] {
        match &self.payload {
            Payload::Float(v) => v,
            Payload::Bits(_) => panic!("values() on a binary matrix"),
        }
    }

    pub fn row_words(&self, i: usize) -> &[u64] {
        let w = self.words_per_row();
        &self.words()[i * w..(i + 1) * w]
    }

    pub fn row_f64(&self, i: usize) -> &[f64] {
        &self.values()[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Value at `(i, j)` as a double (0/1 for binary).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.payload {
            Payload::Bits(b) => {
                let w = self.words_per_row();
                ((b[i * w + j / WORD_BITS] >> (j % WORD_BITS)) & 1) as f64
            }
            Payload::Float(v) => v[i * self.n_cols + j],
        }
    }

    pub fn bit(&self, i: usize, j: usize) -> bool {
        let w = self.words_per_row();
        (self.words()[i * w + j / WORD_BITS] >> (j % WORD_BITS)) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, j: usize, v: bool) {
        assert!(j < self.n_cols);
        let w = self.words_per_row();
        match &mut self.payload {
            Payload::Bits(b) => {
                let word = &mut b[i * w + j / WORD_BITS];
                let m = 1u64 << (j % WORD_BITS);
                if v {
                    *word |= m;
                } else {
                    *word &= !m;
                }
            }
            Payload::Float(_) => panic!("set_bit on a float64 matrix"),
        }
    }

    /// Row `i` unpacked to 0/1 bytes.
    pub fn unpack_row(&self, i: usize) -> Vec<u8> {
        (0..self.n_cols).map(|j| self.bit(i, j) as u8).collect()
    }

    /// New matrix holding the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DataMatrix {
        match &self.payload {
            Payload::Bits(_) => {
                let mut out = Vec::with_capacity(rows.len() * self.words_per_row());
                for &r in rows {
                    out.extend_from_slice(self.row_words(r));
                }
                DataMatrix {
                    n_rows: rows.len(),
                    n_cols: self.n_cols,
                    payload: Payload::Bits(out),
                }
            }
            Payload::Float(_) => {
                let mut out = Vec::with_capacity(rows.len() * self.n_cols);
                for &r in rows {
                    out.extend_from_slice(self.row_f64(r));
                }
                DataMatrix {
                    n_rows: rows.len(),
                    n_cols: self.n_cols,
                    payload: Payload::Float(out),
                }
            }
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn vstack(&self, other: &DataMatrix) -> Result<DataMatrix> {
        check_compatible(self, other)?;
        let payload = match (&self.payload, &other.payload) {
            (Payload::Bits(a), Payload::Bits(b)) => Payload::Bits([a.as_slice(), b].concat()),
            (Payload::Float(a), Payload::Float(b)) => Payload::Float([a.as_slice(), b].concat()),
            _ => unreachable!(),
        };
        Ok(DataMatrix {
            n_rows: self.n_rows + other.n_rows,
            n_cols: self.n_cols,
            payload,
        })
    }

    /// Overwrite row `i` with row `k` of `src`.
    pub fn copy_row_from(&mut self, i: usize, src: &DataMatrix, k: usize) {
        assert_eq!(self.n_cols, src.n_cols);
        let w = self.words_per_row();
        let n = self.n_cols;
        match (&mut self.payload, &src.payload) {
            (Payload::Bits(a), Payload::Bits(b)) => {
                a[i * w..(i + 1) * w].copy_from_slice(&b[k * w..(k + 1) * w])
            }
            (Payload::Float(a), Payload::Float(b)) => {
                a[i * n..(i + 1) * n].copy_from_slice(&b[k * n..(k + 1) * n])
            }
            _ => panic!("dtype mismatch in copy_row_from"),
        }
    }
}

fn check_shape(n_rows: usize, n_cols: usize, len: usize) -> Result<()> {
    if n_rows == 0 || n_cols == 0 {
        return invalid(format!("matrix must be non-empty, got {n_rows}x{n_cols}"));
    }
    if len != n_rows * n_cols {
        return Err(PrivetError::Dimension(format!(
            "{len} values for a {n_rows}x{n_cols} matrix"
        )));
    }
    Ok(())
}

/// Same dtype and feature count.
pub fn check_compatible(a: &DataMatrix, b: &DataMatrix) -> Result<()> {
    if a.dtype() != b.dtype() {
        return invalid(format!(
            "dtype mismatch: {:?} vs {:?}",
            a.dtype(),
            b.dtype()
        ));
    }
    if a.n_cols != b.n_cols {
        return Err(PrivetError::Dimension(format!(
            "{} vs {} columns",
            a.n_cols, b.n_cols
        )));
    }
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>, format: Format, hint: DtypeHint) -> Result<DataMatrix> {
    let path = path.as_ref();
    match format {
        Format::Csv => load_csv(path, hint),
        Format::DenseBinary => load_dense(path),
    }
}

pub fn save_matrix(m: &DataMatrix, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    match format {
        Format::Csv => save_csv(m, path),
        Format::DenseBinary => save_dense(m, path),
    }
}

fn load_csv(path: &Path, hint: DtypeHint) -> Result<DataMatrix> {
    let f = File::open(path).map_err(|e| PrivetError::io(path, e))?;
    let perr = |line: usize, msg: String| PrivetError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut values: Vec<f64> = Vec::new();
    let mut n_cols = 0usize;
    let mut n_rows = 0usize;
    for (ln, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| PrivetError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let first = line.split(',').next().unwrap_or("").trim();
        if n_rows == 0 && n_cols == 0 && first.parse::<f64>().is_err() {
            n_cols = line.split(',').count();
            continue;
        }
        let before = values.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| perr(ln + 1, format!("cannot parse {:?} as a number", tok.trim())))?;
            if !v.is_finite() {
                return Err(perr(ln + 1, format!("non-finite value {:?}", tok.trim())));
            }
            values.push(v);
        }
        let k = values.len() - before;
        if n_cols == 0 {
            n_cols = k;
        } else if k != n_cols {
            return Err(perr(
                ln + 1,
                format!("ragged row: {k} fields, expected {n_cols}"),
            ));
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(perr(0, "no data rows".into()));
    }
    let all_binary = values.iter().all(|&v| v == 0.0 || v == 1.0);
    let binary = match hint {
        DtypeHint::Auto => all_binary,
        DtypeHint::Binary => {
            if !all_binary {
                let k = values.iter().position(|&v| v != 0.0 && v != 1.0).unwrap();
                return Err(perr(
                    0,
                    format!(
                        "value {} at row {} col {} is not 0 or 1",
                        values[k],
                        k / n_cols,
                        k % n_cols
                    ),
                ));
            }
            true
        }
        DtypeHint::Float64 => false,
    };
    if binary {
        let bytes: Vec<u8> = values.iter().map(|&v| v as u8).collect();
        DataMatrix::from_binary(n_rows, n_cols, &bytes)
    } else {
        DataMatrix::from_f64(n_rows, n_cols, values)
    }
}

fn save_csv(m: &DataMatrix, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| PrivetError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| PrivetError::io(path, e);
    let mut line = String::new();
    for i in 0..m.n_rows {
        line.clear();
        for j in 0..m.n_cols {
            if j > 0 {
                line.push(',');
            }
            match m.dtype() {
                Dtype::Binary => line.push(if m.bit(i, j) { '1' } else { '0' }),
                Dtype::Float64 => line.push_str(&format!("{:?}", m.get(i, j))),
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn save_dense(m: &DataMatrix, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| PrivetError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| PrivetError::io(path, e);
    w.write_all(&MAGIC).map_err(io)?;
    let code: u32 = match m.dtype() {
        Dtype::Binary => 0,
        Dtype::Float64 => 1,
    };
    w.write_all(&code.to_le_bytes()).map_err(io)?;
    w.write_all(&0u32.to_le_bytes()).map_err(io)?;
    w.write_all(&(m.n_rows as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(m.n_cols as u64).to_le_bytes()).map_err(io)?;
    match &m.payload {
        Payload::Bits(b) => {
            for x in b {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
        Payload::Float(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

fn load_dense(path: &Path) -> Result<DataMatrix> {
    let f = File::open(path).map_err(|e| PrivetError::io(path, e))?;
    let mut r = BufReader::new(f);
    let perr = |msg: String| PrivetError::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg,
    };
    let mut header = [0u8; 40];
    r.read_exact(&mut header)
        .map_err(|_| perr("truncated header".into()))?;
    if header[..16] != MAGIC {
        return Err(perr("bad magic, not a dense-binary matrix".into()));
    }
    let code = u32::from_le_bytes(header[16..20].try_into().unwrap());
    let rows = u64::from_le_bytes(header[24..32].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(header[32..40].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(perr(format!("empty shape {rows}x{cols}")));
    }
    let n = match code {
        0 => rows * words_for(cols),
        1 => rows * cols,
        c => return Err(perr(format!("unknown dtype code {c}"))),
    };
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|_| perr(format!("payload shorter than {rows}x{cols}")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| PrivetError::io(path, e))? != 0 {
        return Err(perr("trailing bytes after payload".into()));
    }
    let chunks = buf.chunks_exact(8).map(|c| c.try_into().unwrap());
    if code == 0 {
        DataMatrix::from_packed(rows, cols, chunks.map(u64::from_le_bytes).collect())
    } else {
        DataMatrix::from_f64(rows, cols, chunks.map(f64::from_le_bytes).collect())
    }
}

/// Sizes of a three-way split and the seed of its shuffle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_synth: usize,
}

/// Row indices of a split, in output order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub synth: Vec<usize>,
}

pub fn split_indices(n_rows: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    if spec.n_train == 0 || spec.n_test == 0 || spec.n_synth == 0 {
        return invalid("split sizes must all be at least 1");
    }
    let total = spec.n_train + spec.n_test + spec.n_synth;
    if total > n_rows {
        return invalid(format!("split sizes sum to {total} but only {n_rows} rows"));
    }
    let mut perm: Vec<usize> = (0..n_rows).collect();
    let mut g = rng::stream(spec.seed, "split");
    rng::shuffle(&mut g, &mut perm);
    let (a, rest) = perm.split_at(spec.n_train);
    let (b, rest) = rest.split_at(spec.n_test);
    Ok(SplitIndices {
        train: a.to_vec(),
        test: b.to_vec(),
        synth: rest[..spec.n_synth].to_vec(),
    })
}

/// Disjoint train / test / synthetic matrices drawn by a seeded shuffle.
pub fn split(m: &DataMatrix, spec: &SplitSpec) -> Result<(DataMatrix, DataMatrix, DataMatrix)> {
    let ix = split_indices(m.n_rows, spec)?;
    Ok((
        m.select_rows(&ix.train),
        m.select_rows(&ix.test),
        m.select_rows(&ix.synth),
    ))
}
