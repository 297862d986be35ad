//! Canonical Huffman coding of quantization levels.
//!
//! Bitstream layout (MSB first):
//!
//! ```text
//! [distinct symbols: 16][(symbol: i16, code length: 5) per symbol][codes...]
//! ```
//!
//! Table entries appear in canonical order (by code length, then symbol), so
//! the decoder rebuilds the codes from the lengths alone. A one-symbol
//! alphabet gets a 1-bit code. The element count is not in the stream; the
//! receiver knows the model dimension.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use super::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};

pub const SYMBOL_COUNT_BITS: u64 = 16;
pub const SYMBOL_BITS: u64 = 16;
pub const LENGTH_BITS: u64 = 5;
pub const MAX_CODE_LEN: u32 = (1 << LENGTH_BITS) - 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPayload {
    pub bytes: Vec<u8>,
    pub bits: u64,
}

/// `(symbol, code length)` in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeTable {
    entries: Vec<(i16, u32)>,
}

impl CodeTable {
    pub fn from_levels(levels: &[i32]) -> Result<Self> {
        let mut freq: BTreeMap<i16, u64> = BTreeMap::new();
        for &l in levels {
            let s = i16::try_from(l).map_err(|_| Error::LevelOverflow { level: l as i64 })?;
            *freq.entry(s).or_default() += 1;
        }
        Self::from_frequencies(&freq)
    }

    pub fn from_frequencies(freq: &BTreeMap<i16, u64>) -> Result<Self> {
        if freq.len() > u16::MAX as usize {
            return Err(Error::Payload(format!("{} distinct symbols exceed the table limit", freq.len())));
        }
        let symbols: Vec<(i16, u64)> = freq.iter().map(|(&s, &f)| (s, f)).collect();
        let lengths = code_lengths(&symbols.iter().map(|&(_, f)| f).collect::<Vec<_>>());
        if let Some(&max) = lengths.iter().max() {
            if max > MAX_CODE_LEN {
                return Err(Error::Payload(format!("code length {max} exceeds {MAX_CODE_LEN}")));
            }
        }
        let mut entries: Vec<(i16, u32)> =
            symbols.iter().zip(&lengths).map(|(&(s, _), &l)| (s, l)).collect();
        entries.sort_by_key(|&(s, l)| (l, s));
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn length_of(&self, symbol: i16) -> Option<u32> {
        self.entries.iter().find(|e| e.0 == symbol).map(|e| e.1)
    }

    pub fn table_bits(&self) -> u64 {
        SYMBOL_COUNT_BITS + self.entries.len() as u64 * (SYMBOL_BITS + LENGTH_BITS)
    }

    /// Canonical `(symbol, code, length)` triples.
    fn codes(&self) -> Vec<(i16, u64, u32)> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut code: u64 = 0;
        let mut prev_len = 0;
        for (i, &(s, len)) in self.entries.iter().enumerate() {
            if i > 0 {
                code = (code + 1) << (len - prev_len);
            } else {
                code <<= len;
            }
            prev_len = len;
            out.push((s, code, len));
        }
        out
    }
}

/// Huffman code lengths for the given weights (index order is the tie-breaker).
pub fn code_lengths(weights: &[u64]) -> Vec<u32> {
    match weights.len() {
        0 => return Vec::new(),
        1 => return vec![1],
        _ => {}
    }
    // Nodes: leaves 0..n, internal nodes appended. Ties break on node id,
    // which keeps the construction deterministic.
    let n = weights.len();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        weights.iter().enumerate().map(|(i, &w)| Reverse((w, i))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((wa, a)) = heap.pop().unwrap();
        let Reverse((wb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa + wb, next)));
        next += 1;
    }
    let root = next - 1;
    let mut depth = vec![0u32; 2 * n - 1];
    for node in (0..root).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    depth.truncate(n);
    depth
}

/// Exact encoded size without materializing the bitstream.
pub fn payload_bits(levels: &[i32]) -> Result<u64> {
    if levels.is_empty() {
        return Ok(0);
    }
    let mut freq: BTreeMap<i16, u64> = BTreeMap::new();
    for &l in levels {
        let s = i16::try_from(l).map_err(|_| Error::LevelOverflow { level: l as i64 })?;
        *freq.entry(s).or_default() += 1;
    }
    let table = CodeTable::from_frequencies(&freq)?;
    let body: u64 = table
        .entries
        .iter()
        .map(|&(s, len)| freq[&s] * len as u64)
        .sum();
    Ok(table.table_bits() + body)
}

pub fn entropy_encode(levels: &[i32]) -> Result<EncodedPayload> {
    if levels.is_empty() {
        return Ok(EncodedPayload { bytes: Vec::new(), bits: 0 });
    }
    let table = CodeTable::from_levels(levels)?;
    let codes = table.codes();
    let lookup: BTreeMap<i16, (u64, u32)> = codes.iter().map(|&(s, c, l)| (s, (c, l))).collect();

    let mut w = BitWriter::new();
    w.write(table.len() as u64, SYMBOL_COUNT_BITS as u32);
    for &(s, len) in &table.entries {
        w.write(s as u16 as u64, SYMBOL_BITS as u32);
        w.write(len as u64, LENGTH_BITS as u32);
    }
    for &l in levels {
        let (code, len) = lookup[&(l as i16)];
        w.write(code, len);
    }
    let (bytes, bits) = w.finish();
    Ok(EncodedPayload { bytes, bits })
}

/// Decodes `count` symbols from a payload produced by [`entropy_encode`].
pub fn entropy_decode(payload: &EncodedPayload, count: usize) -> Result<Vec<i32>> {
    if payload.bits == 0 {
        return if count == 0 {
            Ok(Vec::new())
        } else {
            Err(Error::Payload("empty payload for non-empty vector".into()))
        };
    }
    let mut r = BitReader::new(&payload.bytes, payload.bits);
    let n = r.read(SYMBOL_COUNT_BITS as u32)? as usize;
    if n == 0 {
        return Err(Error::Payload("empty code table".into()));
    }
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let s = r.read(SYMBOL_BITS as u32)? as u16 as i16;
        let len = r.read(LENGTH_BITS as u32)? as u32;
        if len == 0 {
            return Err(Error::Payload("zero code length".into()));
        }
        entries.push((s, len));
    }
    if entries.windows(2).any(|w| w[0].1 > w[1].1) {
        return Err(Error::Payload("table is not in canonical order".into()));
    }
    let table = CodeTable { entries };
    let codes = table.codes();
    // Canonical decode: per length, the first code and its index into `codes`.
    let max_len = codes.last().map_or(0, |c| c.2);
    let mut first_code = vec![u64::MAX; max_len as usize + 1];
    let mut first_index = vec![0usize; max_len as usize + 1];
    let mut count_len = vec![0u64; max_len as usize + 1];
    for (i, &(_, code, len)) in codes.iter().enumerate() {
        if count_len[len as usize] == 0 {
            first_code[len as usize] = code;
            first_index[len as usize] = i;
        }
        count_len[len as usize] += 1;
    }

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut code = 0u64;
        let mut len = 0u32;
        loop {
            code = (code << 1) | r.read_bit()?;
            len += 1;
            if len > max_len {
                return Err(Error::Payload("invalid code".into()));
            }
            let l = len as usize;
            if count_len[l] > 0 && code >= first_code[l] && code - first_code[l] < count_len[l] {
                let idx = first_index[l] + (code - first_code[l]) as usize;
                out.push(codes[idx].0 as i32);
                break;
            }
        }
    }
    if r.remaining() != 0 {
        return Err(Error::Payload(format!("{} trailing bits", r.remaining())));
    }
    Ok(out)
}
