//! Binary parameter container used by model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic          4 bytes  "CPRT"
//! version        u32      FORMAT_VERSION
//! header_len     u32
//! header         header_len bytes of UTF-8 TOML
//! block_count    u32
//! block_count x {
//!     name_len   u16
//!     name       name_len bytes of UTF-8
//!     count      u32
//!     values     count x f32
//! }
//! ```

use std::io::Read;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CPRT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamContainer {
    pub header: String,
    pub blocks: Vec<ParamBlock>,
}

impl ParamContainer {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.header.len() as u32).to_le_bytes());
        out.extend_from_slice(self.header.as_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.name.len() as u16).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            out.extend_from_slice(&(b.values.len() as u32).to_le_bytes());
            for v in &b.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat("bad magic, not a model file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {version}"
            )));
        }
        let header_len = read_u32(&mut r)? as usize;
        let mut header = vec![0u8; header_len];
        read(&mut r, &mut header)?;
        let header =
            String::from_utf8(header).map_err(|_| Error::ModelFormat("header is not UTF-8".into()))?;
        let count = read_u32(&mut r)?;
        let mut blocks = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let mut len = [0u8; 2];
            read(&mut r, &mut len)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            read(&mut r, &mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::ModelFormat("block name is not UTF-8".into()))?;
            let n = read_u32(&mut r)? as usize;
            if r.len() < n * 4 {
                return Err(Error::ModelFormat(format!("block {name} truncated")));
            }
            let values = r[..n * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            r = &r[n * 4..];
            blocks.push(ParamBlock { name, values });
        }
        if !r.is_empty() {
            return Err(Error::ModelFormat(format!("{} trailing bytes", r.len())));
        }
        Ok(ParamContainer { header, blocks })
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

fn read(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::ModelFormat("unexpected end of file".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip(header in ".{0,40}", blocks in prop::collection::vec(("[a-z.0-9]{1,12}", prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 0..20)), 0..5)) {
            let c = ParamContainer {
                header,
                blocks: blocks.into_iter().map(|(name, values)| ParamBlock { name, values }).collect(),
            };
            prop_assert_eq!(ParamContainer::from_bytes(&c.to_bytes()).unwrap(), c);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(ParamContainer::from_bytes(b"PNG....").is_err());
        let c = ParamContainer {
            header: "a = 1".into(),
            blocks: vec![ParamBlock {
                name: "w".into(),
                values: vec![1.0, 2.0],
            }],
        };
        let bytes = c.to_bytes();
        assert!(ParamContainer::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
