//! `SEGW` binary container for named f32 arrays.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SEGW"                      4-byte magic
//! version: u16                currently 1
//! record_count: u32
//! record_count × {
//!     name_len: u16
//!     name: name_len bytes of UTF-8
//!     rank: u8
//!     dims: rank × u32
//! }
//! payloads: for each record in table order, product(dims) × f32
//! ```
//!
//! A file must end exactly after the last payload.

use std::path::Path;

use crate::error::{Result, SegError, WeightFileError};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SEGW";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordHeader {
    pub name: String,
    pub dims: Vec<usize>,
}

impl RecordHeader {
    pub fn new(name: impl Into<String>, dims: Vec<usize>) -> Self {
        RecordHeader {
            name: name.into(),
            dims,
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub header: RecordHeader,
    pub values: Vec<f32>,
}

pub fn encode(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        let name = r.header.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(r.header.dims.len() as u8);
        for &d in &r.header.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for r in records {
        debug_assert_eq!(r.values.len(), r.header.len());
        for v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], WeightFileError> {
        if self.bytes.len() - self.pos < n {
            return Err(WeightFileError::Truncated {
                record: what.to_string(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> std::result::Result<u8, WeightFileError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> std::result::Result<u16, WeightFileError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, WeightFileError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// A parsed record table whose payloads have not been read yet.
pub struct Table<'a> {
    pub headers: Vec<RecordHeader>,
    reader: Reader<'a>,
}

/// Parses magic, version and the record table.
pub fn parse_table(bytes: &[u8]) -> std::result::Result<Table<'_>, WeightFileError> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(WeightFileError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    r.pos = 4;
    let version = r.u16("file header")?;
    if version != VERSION {
        return Err(WeightFileError::Version {
            found: version,
            supported: VERSION,
        });
    }
    let count = r.u32("file header")? as usize;
    let mut headers = Vec::with_capacity(count.min(4096));
    for index in 0..count {
        let what = format!("record table entry {index}");
        let name_len = r.u16(&what)? as usize;
        let name = std::str::from_utf8(r.take(name_len, &what)?)
            .map_err(|e| WeightFileError::Malformed {
                index,
                message: format!("record name is not UTF-8: {e}"),
            })?
            .to_string();
        let what = format!("record table entry {index} (`{name}`)");
        let rank = r.u8(&what)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32(&what)? as usize);
        }
        headers.push(RecordHeader { name, dims });
    }
    Ok(Table { headers, reader: r })
}

impl Table<'_> {
    /// Reads every payload and requires the file to end right after the last one.
    pub fn read_payloads(mut self) -> std::result::Result<Vec<Record>, WeightFileError> {
        let mut records = Vec::with_capacity(self.headers.len());
        for header in self.headers {
            let n = header.len();
            let what = format!("payload of `{}`", header.name);
            let raw = self.reader.take(n.saturating_mul(4), &what)?;
            let values = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            records.push(Record { header, values });
        }
        let extra = self.reader.bytes.len() - self.reader.pos;
        if extra != 0 {
            return Err(WeightFileError::TrailingBytes { extra });
        }
        Ok(records)
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Vec<Record>, WeightFileError> {
    parse_table(bytes)?.read_payloads()
}

const PROB_RECORD: &str = "probabilities";

/// Stores a tensor as a single rank-3 `probabilities` record.
pub fn save_tensor(tensor: &Tensor, path: &Path) -> Result<()> {
    let (c, h, w) = tensor.shape();
    let record = Record {
        header: RecordHeader::new(PROB_RECORD, vec![c, h, w]),
        values: tensor.data().iter().map(|&v| v as f32).collect(),
    };
    std::fs::write(path, encode(&[record])).map_err(|e| SegError::io(path, e))
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| SegError::io(path, e))?;
    let mut records = decode(&bytes)?;
    if records.len() != 1 || records[0].header.dims.len() != 3 {
        return Err(WeightFileError::Malformed {
            index: 0,
            message: "expected a single rank-3 tensor record".into(),
        }
        .into());
    }
    let r = records.pop().unwrap();
    let (c, h, w) = (r.header.dims[0], r.header.dims[1], r.header.dims[2]);
    Tensor::new(c, h, w, r.values.into_iter().map(f64::from).collect())
}
