//! Canonical Huffman coding over u16 symbols.
//!
//! Code lengths come from a frequency-ordered Huffman tree with deterministic
//! tie-breaking; codewords are the canonical assignment (sorted by length,
//! then symbol), so a codebook is fully described by its (symbol, length)
//! pairs. Payload bits are packed MSB-first.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{NervError, Result};

const MAX_CODE_LEN: u8 = 64;

/// A canonical prefix code: `(symbol, code length)` entries sorted by
/// `(length, symbol)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanCode {
    entries: Vec<(u16, u8)>,
    codewords: Vec<(u16, u64)>, // aligned with entries
}

impl HuffmanCode {
    /// Builds the canonical code from `(symbol, length)` pairs, validating
    /// lengths and the Kraft inequality.
    pub fn from_lengths(mut entries: Vec<(u16, u8)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(NervError::data("empty codebook"));
        }
        entries.sort_unstable_by_key(|&(sym, len)| (len, sym));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(NervError::data(format!(
                    "duplicate symbol {} in codebook",
                    w[0].0
                )));
            }
        }
        let mut kraft: u128 = 0;
        for &(_, len) in &entries {
            if len == 0 || len > MAX_CODE_LEN {
                return Err(NervError::data(format!(
                    "code length {len} outside [1, {MAX_CODE_LEN}]"
                )));
            }
            kraft += 1u128 << (127 - len as u32);
            if kraft > 1u128 << 127 {
                return Err(NervError::data("codebook violates the Kraft inequality"));
            }
        }
        // canonical codeword assignment
        let mut codewords = Vec::with_capacity(entries.len());
        let mut code: u64 = 0;
        let mut prev_len = entries[0].1;
        for (i, &(sym, len)) in entries.iter().enumerate() {
            if i > 0 {
                code = (code + 1) << (len - prev_len);
            }
            codewords.push((sym, code));
            prev_len = len;
        }
        Ok(Self { entries, codewords })
    }

    pub fn entries(&self) -> &[(u16, u8)] {
        &self.entries
    }

    /// Kraft sum as a fraction of 1 (1.0 means a complete code).
    pub fn kraft_sum(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, len)| 2f64.powi(-(len as i32)))
            .sum()
    }

    pub fn length_of(&self, symbol: u16) -> Option<u8> {
        self.entries
            .iter()
            .find(|&&(s, _)| s == symbol)
            .map(|&(_, len)| len)
    }

    fn encoder_table(&self) -> Vec<Option<(u64, u8)>> {
        let max_sym = self.entries.iter().map(|&(s, _)| s).max().unwrap_or(0) as usize;
        let mut table = vec![None; max_sym + 1];
        for (&(sym, len), &(_, code)) in self.entries.iter().zip(&self.codewords) {
            table[sym as usize] = Some((code, len));
        }
        table
    }
}

/// Builds a code from observed frequencies and packs the symbol stream.
/// Returns the code, the payload bytes (zero-padded to a whole byte), and
/// the exact payload bit length.
pub fn huffman_encode(symbols: &[u16]) -> Result<(HuffmanCode, Vec<u8>, u64)> {
    if symbols.is_empty() {
        return Err(NervError::data("cannot entropy-code an empty stream"));
    }
    let lengths = code_lengths(symbols)?;
    let code = HuffmanCode::from_lengths(lengths)?;
    let table = code.encoder_table();
    let mut bits = BitWriter::new();
    for &s in symbols {
        let (codeword, len) = table
            .get(s as usize)
            .copied()
            .flatten()
            .expect("every observed symbol has a codeword");
        bits.push(codeword, len);
    }
    let (payload, n_bits) = bits.finish();
    Ok((code, payload, n_bits))
}

/// Decodes exactly `n_symbols` symbols from a payload of `payload_bits`
/// bits. Fails on truncation, on codewords outside the codebook, and when
/// the declared bit length does not match the symbols read.
pub fn huffman_decode(
    code: &HuffmanCode,
    payload: &[u8],
    payload_bits: u64,
    n_symbols: usize,
) -> Result<Vec<u16>> {
    if payload_bits > payload.len() as u64 * 8 {
        return Err(NervError::corrupt(
            0,
            format!(
                "payload declares {payload_bits} bits but holds {}",
                payload.len() as u64 * 8
            ),
        ));
    }
    let tables = DecodeTables::new(code);
    let mut out = Vec::with_capacity(n_symbols.min(payload_bits as usize + 1));
    let mut pos: u64 = 0;
    while out.len() < n_symbols {
        let (sym, used) = tables.read_symbol(payload, pos, payload_bits)?;
        out.push(sym);
        pos += used as u64;
    }
    if pos != payload_bits {
        return Err(NervError::corrupt(
            (pos / 8) as usize,
            format!("{} trailing payload bits after the last symbol", payload_bits - pos),
        ));
    }
    Ok(out)
}

/// Frequency-based code lengths with deterministic tie-breaks (lower count
/// first, then earlier creation order; leaves are created in symbol order).
fn code_lengths(symbols: &[u16]) -> Result<Vec<(u16, u8)>> {
    let mut freq = std::collections::BTreeMap::<u16, u64>::new();
    for &s in symbols {
        *freq.entry(s).or_insert(0) += 1;
    }
    if freq.len() == 1 {
        let (&sym, _) = freq.iter().next().unwrap();
        return Ok(vec![(sym, 1)]);
    }

    struct Node {
        left: Option<usize>,
        right: Option<usize>,
        symbol: Option<u16>,
    }
    let mut nodes: Vec<Node> = Vec::with_capacity(2 * freq.len());
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    for (&sym, &count) in &freq {
        nodes.push(Node {
            left: None,
            right: None,
            symbol: Some(sym),
        });
        heap.push(Reverse((count, nodes.len() - 1)));
    }
    while heap.len() > 1 {
        let Reverse((ca, a)) = heap.pop().unwrap();
        let Reverse((cb, b)) = heap.pop().unwrap();
        nodes.push(Node {
            left: Some(a),
            right: Some(b),
            symbol: None,
        });
        heap.push(Reverse((ca + cb, nodes.len() - 1)));
    }
    let root = heap.pop().unwrap().0 .1;

    let mut lengths = Vec::with_capacity(freq.len());
    let mut stack = vec![(root, 0u8)];
    while let Some((idx, depth)) = stack.pop() {
        let node = &nodes[idx];
        if let Some(sym) = node.symbol {
            lengths.push((sym, depth.max(1)));
        } else {
            if depth >= MAX_CODE_LEN {
                return Err(NervError::data("Huffman code depth exceeds 64 bits"));
            }
            stack.push((node.left.unwrap(), depth + 1));
            stack.push((node.right.unwrap(), depth + 1));
        }
    }
    Ok(lengths)
}

struct BitWriter {
    bytes: Vec<u8>,
    cur: u8,
    filled: u8,
    total_bits: u64,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            bytes: Vec::new(),
            cur: 0,
            filled: 0,
            total_bits: 0,
        }
    }

    fn push(&mut self, code: u64, len: u8) {
        for i in (0..len).rev() {
            let bit = ((code >> i) & 1) as u8;
            self.cur = (self.cur << 1) | bit;
            self.filled += 1;
            if self.filled == 8 {
                self.bytes.push(self.cur);
                self.cur = 0;
                self.filled = 0;
            }
        }
        self.total_bits += len as u64;
    }

    fn finish(mut self) -> (Vec<u8>, u64) {
        if self.filled > 0 {
            self.bytes.push(self.cur << (8 - self.filled));
        }
        (self.bytes, self.total_bits)
    }
}

/// Canonical decoding tables: per length, the first codeword and the span of
/// symbols at that length.
struct DecodeTables {
    max_len: u8,
    first_code: Vec<u64>,
    first_index: Vec<usize>,
    count: Vec<usize>,
    symbols: Vec<u16>,
}

impl DecodeTables {
    fn new(code: &HuffmanCode) -> Self {
        let max_len = code.entries.iter().map(|&(_, l)| l).max().unwrap_or(1);
        let mut first_code = vec![0u64; max_len as usize + 1];
        let mut first_index = vec![0usize; max_len as usize + 1];
        let mut count = vec![0usize; max_len as usize + 1];
        let symbols: Vec<u16> = code.entries.iter().map(|&(s, _)| s).collect();
        for (i, (&(_, len), &(_, cw))) in code.entries.iter().zip(&code.codewords).enumerate() {
            let l = len as usize;
            if count[l] == 0 {
                first_code[l] = cw;
                first_index[l] = i;
            }
            count[l] += 1;
        }
        Self {
            max_len,
            first_code,
            first_index,
            count,
            symbols,
        }
    }

    fn read_symbol(&self, payload: &[u8], start: u64, limit_bits: u64) -> Result<(u16, u8)> {
        let mut code: u64 = 0;
        for len in 1..=self.max_len {
            let pos = start + len as u64 - 1;
            if pos >= limit_bits {
                return Err(NervError::corrupt(
                    (pos / 8) as usize,
                    "payload truncated mid-codeword",
                ));
            }
            let byte = payload[(pos / 8) as usize];
            let bit = (byte >> (7 - (pos % 8))) & 1;
            code = (code << 1) | bit as u64;
            let l = len as usize;
            if self.count[l] > 0 {
                let offset = code.wrapping_sub(self.first_code[l]);
                if code >= self.first_code[l] && (offset as usize) < self.count[l] {
                    return Ok((self.symbols[self.first_index[l] + offset as usize], len));
                }
            }
        }
        Err(NervError::corrupt(
            (start / 8) as usize,
            "invalid codeword",
        ))
    }
}
