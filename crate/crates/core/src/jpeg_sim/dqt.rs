//! Extraction of quantization tables from JPEG marker syntax.

use super::tables::{QuantTable, TableOrigin};
use crate::error::{Error, Result};

/// Natural-order index of each zigzag position.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

const SOI: u8 = 0xD8;
const EOI: u8 = 0xD9;
const SOS: u8 = 0xDA;
const DQT: u8 = 0xDB;
const TEM: u8 = 0x01;

fn is_standalone(marker: u8) -> bool {
    marker == SOI || marker == EOI || marker == TEM || (0xD0..=0xD7).contains(&marker)
}

/// A table read from a DQT segment together with its destination slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedTable {
    pub slot: u8,
    pub precision_bits: u8,
    pub table: QuantTable,
}

/// Returns every quantization table defined in the stream, in file order.
pub fn parse_dqt(bytes: &[u8]) -> Result<Vec<QuantTable>> {
    Ok(parse_dqt_detailed(bytes)?
        .into_iter()
        .map(|p| p.table)
        .collect())
}

pub fn parse_dqt_detailed(bytes: &[u8]) -> Result<Vec<ParsedTable>> {
    if bytes.len() < 2 || bytes[0] != 0xFF || bytes[1] != SOI {
        return Err(Error::NotAJpeg);
    }
    let malformed = |offset: usize, reason: &str| Error::MalformedStream {
        offset,
        reason: reason.to_string(),
    };
    let mut tables = Vec::new();
    let mut pos = 2;
    loop {
        // locate the next marker, skipping fill bytes
        if pos >= bytes.len() {
            break;
        }
        if bytes[pos] != 0xFF {
            return Err(malformed(pos, "expected marker prefix 0xFF"));
        }
        while pos < bytes.len() && bytes[pos] == 0xFF {
            pos += 1;
        }
        let Some(&marker) = bytes.get(pos) else {
            return Err(malformed(pos, "stream ends inside a marker"));
        };
        let marker_at = pos - 1;
        pos += 1;
        if marker == EOI {
            break;
        }
        if is_standalone(marker) {
            continue;
        }
        if pos + 2 > bytes.len() {
            return Err(malformed(marker_at, "truncated segment length"));
        }
        let len = usize::from(u16::from_be_bytes([bytes[pos], bytes[pos + 1]]));
        if len < 2 {
            return Err(malformed(pos, "segment length below 2"));
        }
        let end = pos + len;
        if end > bytes.len() {
            return Err(malformed(
                marker_at,
                &format!("segment 0xFF{marker:02X} needs {len} bytes, stream ends first"),
            ));
        }
        if marker == DQT {
            read_dqt_payload(&bytes[pos + 2..end], pos + 2, &mut tables)?;
        }
        pos = end;
        if marker == SOS {
            pos = skip_entropy_coded(bytes, pos);
        }
    }
    Ok(tables)
}

fn read_dqt_payload(payload: &[u8], base: usize, out: &mut Vec<ParsedTable>) -> Result<()> {
    let mut i = 0;
    while i < payload.len() {
        let pq = payload[i] >> 4;
        let tq = payload[i] & 0x0F;
        let entry_bytes = match pq {
            0 => 1,
            1 => 2,
            _ => {
                return Err(Error::MalformedStream {
                    offset: base + i,
                    reason: format!("unknown table precision {pq}"),
                })
            }
        };
        let start = i + 1;
        let end = start + 64 * entry_bytes;
        if end > payload.len() {
            return Err(Error::MalformedStream {
                offset: base + i,
                reason: "truncated quantization table".into(),
            });
        }
        let mut values = [0u16; 64];
        for (k, &natural) in ZIGZAG.iter().enumerate() {
            let at = start + k * entry_bytes;
            values[natural] = if entry_bytes == 1 {
                u16::from(payload[at])
            } else {
                u16::from_be_bytes([payload[at], payload[at + 1]])
            };
        }
        let label = format!("DQT{}.T{}", out.len(), tq);
        let table = QuantTable::new(values, label, TableOrigin::Parsed).map_err(|e| {
            Error::MalformedStream {
                offset: base + i,
                reason: e.to_string(),
            }
        })?;
        out.push(ParsedTable {
            slot: tq,
            precision_bits: if entry_bytes == 1 { 8 } else { 16 },
            table,
        });
        i = end;
    }
    Ok(())
}

/// Advances past entropy-coded data to the next real marker.
fn skip_entropy_coded(bytes: &[u8], mut pos: usize) -> usize {
    while pos + 1 < bytes.len() {
        if bytes[pos] == 0xFF {
            let next = bytes[pos + 1];
            if next != 0x00 && !(0xD0..=0xD7).contains(&next) && next != 0xFF {
                return pos;
            }
            if next == 0xFF {
                // fill byte; the marker is decided by the next non-FF byte
                pos += 1;
                continue;
            }
            pos += 2;
        } else {
            pos += 1;
        }
    }
    bytes.len()
}

/// Serializes tables into one DQT segment (marker included). Tables whose
/// entries all fit in a byte use 8-bit precision.
pub fn encode_dqt_segment(tables: &[(u8, &QuantTable)]) -> Vec<u8> {
    let mut payload = Vec::new();
    for &(slot, table) in tables {
        let wide = table.values().iter().any(|&v| v > 255);
        payload.push((u8::from(wide) << 4) | (slot & 0x0F));
        for &natural in &ZIGZAG {
            let v = table.values()[natural];
            if wide {
                payload.extend_from_slice(&v.to_be_bytes());
            } else {
                payload.push(v as u8);
            }
        }
    }
    let mut seg = vec![0xFF, DQT];
    seg.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    seg.extend(payload);
    seg
}

/// SOI, one DQT segment per table, EOI.
pub fn minimal_jpeg(tables: &[&QuantTable]) -> Vec<u8> {
    let mut out = vec![0xFF, SOI];
    for (slot, t) in tables.iter().enumerate() {
        out.extend(encode_dqt_segment(&[(slot as u8, t)]));
    }
    out.extend_from_slice(&[0xFF, EOI]);
    out
}
