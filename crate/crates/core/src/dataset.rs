// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Tables, tuples and the on-disk dataset format.
//!
//! A [`Dataset`] stores keys and fixed-width payloads column-wise. Routing and
//! joining move lightweight [`Tuple`] handles (key plus row id) so that
//! broadcast copies never clone payload bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub type Key = i64;
pub type RowId = u32;

pub const MAGIC: &[u8; 4] = b"SKJN";
pub const FORMAT_VERSION: u32 = 1;

/// Handle to one row of a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tuple {
    pub key: Key,
    pub row: RowId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    keys: Vec<Key>,
    payloads: Vec<u8>,
    payload_width: usize,
}

impl Dataset {
    pub fn new(keys: Vec<Key>, payloads: Vec<u8>, payload_width: usize) -> Result<Self> {
        if keys.len() > RowId::MAX as usize {
            return Err(Error::spec(format!(
                "{} rows exceed the supported maximum of {}",
                keys.len(),
                RowId::MAX
            )));
        }
        if payloads.len() != keys.len() * payload_width {
            return Err(Error::spec(format!(
                "payload buffer holds {} bytes, expected {} rows x {} bytes",
                payloads.len(),
                keys.len(),
                payload_width
            )));
        }
        Ok(Self {
            keys,
            payloads,
            payload_width,
        })
    }

    /// Dataset with empty payloads.
    pub fn from_keys(keys: Vec<Key>) -> Self {
        Self::new(keys, Vec::new(), 0).expect("zero-width payloads always fit")
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn payload_width(&self) -> usize {
        self.payload_width
    }

    pub fn payload(&self, row: RowId) -> &[u8] {
        let start = row as usize * self.payload_width;
        &self.payloads[start..start + self.payload_width]
    }

    pub fn key(&self, row: RowId) -> Key {
        self.keys[row as usize]
    }

    pub fn tuple(&self, row: RowId) -> Tuple {
        Tuple {
            key: self.keys[row as usize],
            row,
        }
    }

    pub fn tuples(&self) -> impl ExactSizeIterator<Item = Tuple> + '_ {
        self.keys.iter().enumerate().map(|(i, &key)| Tuple {
            key,
            row: i as RowId,
        })
    }

    /// Bytes a single tuple occupies on the wire: key plus payload.
    pub fn tuple_bytes(&self) -> u64 {
        8 + self.payload_width as u64
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.keys.len() as u64).to_le_bytes())?;
        w.write_all(&(self.payload_width as u32).to_le_bytes())?;
        for (i, key) in self.keys.iter().enumerate() {
            w.write_all(&key.to_le_bytes())?;
            w.write_all(self.payload(i as RowId))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::MalformedDataset(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let version = u32::from_le_bytes(read_array(&mut r, "version")?);
        if version != FORMAT_VERSION {
            return Err(Error::MalformedDataset(format!(
                "unsupported version {version}"
            )));
        }
        let rows = u64::from_le_bytes(read_array(&mut r, "row count")?);
        let width = u32::from_le_bytes(read_array(&mut r, "payload width")?) as usize;
        if rows > RowId::MAX as u64 {
            return Err(Error::MalformedDataset(format!("row count {rows} too large")));
        }
        let rows = rows as usize;
        let mut keys = Vec::with_capacity(rows);
        let mut payloads = vec![0u8; rows * width];
        for i in 0..rows {
            keys.push(i64::from_le_bytes(read_array(&mut r, "row key")?));
            read_exact(&mut r, &mut payloads[i * width..(i + 1) * width], "row payload")?;
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::MalformedDataset(
                "trailing bytes after last row".into(),
            ));
        }
        Self::new(keys, payloads, width)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_binary(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| {
            Error::MalformedDataset(format!("cannot open {}: {e}", path.display()))
        })?;
        Self::read_binary(BufReader::new(file))
    }

    /// Debug export: header `key`, one key per line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["key"])?;
        for key in &self.keys {
            out.write_record([key.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::MalformedDataset(format!("file truncated while reading {what}"))
        }
        _ => Error::Io(e),
    })
}

fn read_array<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf, what)?;
    Ok(buf)
}

/// The slice of one table resident on one node.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeShare {
    pub node: usize,
    pub tuples: Vec<Tuple>,
}

impl NodeShare {
    pub fn new(node: usize) -> Self {
        Self {
            node,
            tuples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset::new(vec![3, -1, 7], vec![1, 2, 3, 4, 5, 6], 2).unwrap()
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let mut buf = Vec::new();
        sample().write_binary(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"SKJN");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..16], &3u64.to_le_bytes());
        assert_eq!(&buf[16..20], &2u32.to_le_bytes());
        assert_eq!(&buf[20..28], &3i64.to_le_bytes());
        assert_eq!(&buf[28..30], &[1, 2]);
        assert_eq!(&buf[30..38], &(-1i64).to_le_bytes());
        assert_eq!(buf.len(), 20 + 3 * 10);
    }

    #[test]
    fn binary_round_trip() {
        let mut buf = Vec::new();
        sample().write_binary(&mut buf).unwrap();
        assert_eq!(Dataset::read_binary(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn rejects_bad_magic_truncation_and_trailing_bytes() {
        let mut buf = Vec::new();
        sample().write_binary(&mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            Dataset::read_binary(&bad[..]),
            Err(Error::MalformedDataset(_))
        ));

        let short = &buf[..buf.len() - 1];
        assert!(matches!(
            Dataset::read_binary(short),
            Err(Error::MalformedDataset(_))
        ));

        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(
            Dataset::read_binary(&long[..]),
            Err(Error::MalformedDataset(_))
        ));

        let mut wrong_version = buf;
        wrong_version[4] = 2;
        assert!(matches!(
            Dataset::read_binary(&wrong_version[..]),
            Err(Error::MalformedDataset(_))
        ));
    }

    #[test]
    fn csv_export_has_key_header() {
        let mut out = Vec::new();
        sample().write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "key\n3\n-1\n7\n");
    }

    #[test]
    fn payload_length_mismatch_is_rejected() {
        assert!(Dataset::new(vec![1, 2], vec![0; 3], 2).is_err());
    }
}
