//! Binary checkpoint container.
//!
//! Layout: a six-byte magic string, little-endian `u32` dimension header,
//! then little-endian `f64` payload. The file length must match the header
//! exactly.
//!
//! `PCRNN1`: header `n, p, d, out_dim`; payload `tau`, then `W_p`, `W_f`,
//! `W_c`, `W_out`, each row-major.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pcrnn::PcrnnParams;

pub const PCRNN_MAGIC: &[u8; 6] = b"PCRNN1";

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new(magic: &[u8; 6], header: &[u32]) -> Self {
        let mut buf = magic.to_vec();
        for v in header {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        Self { buf }
    }

    pub(crate) fn scalar(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn matrix(&mut self, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.scalar(m[(i, j)]);
            }
        }
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks the magic and reads `header_len` dimension words.
    pub(crate) fn open(bytes: &'a [u8], magic: &[u8; 6], header_len: usize) -> Result<(Self, Vec<u32>)> {
        if bytes.len() < 6 || &bytes[..6] != magic {
            return Err(Error::Checkpoint(format!(
                "bad magic, expected {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let mut r = Self { bytes, pos: 6 };
        let mut header = Vec::with_capacity(header_len);
        for _ in 0..header_len {
            let chunk = r.take(4)?;
            header.push(u32::from_le_bytes(chunk.try_into().expect("4 bytes")));
        }
        Ok((r, header))
    }

    /// Fails unless exactly `count` more `f64` values remain.
    pub(crate) fn expect_payload(&self, count: usize) -> Result<()> {
        let remaining = self.bytes.len() - self.pos;
        if remaining != count * 8 {
            return Err(Error::Checkpoint(format!(
                "payload length {remaining} bytes does not match header ({} bytes expected)",
                count * 8
            )));
        }
        Ok(())
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    pub(crate) fn scalar(&mut self) -> Result<f64> {
        let chunk = self.take(8)?;
        Ok(f64::from_le_bytes(chunk.try_into().expect("8 bytes")))
    }

    pub(crate) fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.scalar()?;
            }
        }
        Ok(m)
    }
}

pub(crate) fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} = {v} does not fit in 32 bits")))
}

pub fn encode_pcrnn(params: &PcrnnParams) -> Result<Vec<u8>> {
    let header = [
        to_u32(params.n, "n")?,
        to_u32(params.p, "p")?,
        to_u32(params.d, "d")?,
        to_u32(params.out_dim, "out_dim")?,
    ];
    let mut w = Writer::new(PCRNN_MAGIC, &header);
    w.scalar(params.tau);
    w.matrix(&params.w_p);
    w.matrix(&params.w_f);
    w.matrix(&params.w_c);
    w.matrix(&params.w_out);
    Ok(w.finish())
}

pub fn decode_pcrnn(bytes: &[u8]) -> Result<PcrnnParams> {
    let (mut r, header) = Reader::open(bytes, PCRNN_MAGIC, 4)?;
    let [n, p, d, out_dim] = [0, 1, 2, 3].map(|i| header[i] as usize);
    r.expect_payload(1 + 2 * n * d + p * d + out_dim * n)?;
    let tau = r.scalar()?;
    let params = PcrnnParams {
        n,
        p,
        d,
        out_dim,
        tau,
        w_p: r.matrix(n, d)?,
        w_f: r.matrix(n, d)?,
        w_c: r.matrix(p, d)?,
        w_out: r.matrix(out_dim, n)?,
    };
    params
        .validate()
        .map_err(|e| Error::Checkpoint(format!("decoded parameters are invalid: {e}")))?;
    Ok(params)
}

pub fn save_checkpoint(params: &PcrnnParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pcrnn(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<PcrnnParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pcrnn(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}
