//! Single-file index format.
//!
//! ```text
//! magic "SPMBM25\0" | version u32 | k1 f64 | b f64 | max_tokens u64 | sep (varint len + bytes)
//! num_docs u64 | num_terms u64
//! docs:  (varint id len, id bytes, varint doc len) * num_docs
//! terms: sorted, front-coded: varint shared prefix, varint suffix len, suffix bytes,
//!        varint posting count, then (varint doc delta, varint tf) per posting
//! crc32 of everything above, u32
//! ```
//! All fixed-width integers and floats are little endian.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{Bm25Index, Bm25Params, Posting};
use crate::corpus::InputConfig;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPMBM25\0";
pub const FORMAT_VERSION: u32 = 1;

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::IndexCorrupt("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = self.take(1)?[0];
            v |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::IndexCorrupt("varint overflow".into()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.varint()?).map_err(|_| Error::IndexCorrupt("length overflow".into()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.usize()?;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::IndexCorrupt("invalid utf-8".into()))
    }
}

fn encode(index: &Bm25Index) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let params = index.params();
    out.extend_from_slice(&params.k1.to_le_bytes());
    out.extend_from_slice(&params.b.to_le_bytes());
    let input = index.input_config();
    out.extend_from_slice(&(input.max_tokens as u64).to_le_bytes());
    put_varint(&mut out, input.sep_token.len() as u64);
    out.extend_from_slice(input.sep_token.as_bytes());
    out.extend_from_slice(&(index.num_docs() as u64).to_le_bytes());
    out.extend_from_slice(&(index.num_terms() as u64).to_le_bytes());

    for (id, &len) in index.doc_ids().iter().zip(index.doc_lens()) {
        put_varint(&mut out, id.len() as u64);
        out.extend_from_slice(id.as_bytes());
        put_varint(&mut out, u64::from(len));
    }

    let mut terms: Vec<_> = index.terms().collect();
    terms.sort_unstable_by(|a, b| a.0.cmp(b.0));
    let mut prev: &[u8] = &[];
    for (term, postings) in terms {
        let bytes = term.as_bytes();
        let shared = prev.iter().zip(bytes).take_while(|(a, b)| a == b).count();
        put_varint(&mut out, shared as u64);
        put_varint(&mut out, (bytes.len() - shared) as u64);
        out.extend_from_slice(&bytes[shared..]);
        put_varint(&mut out, postings.len() as u64);
        let mut last = 0u32;
        for p in postings {
            put_varint(&mut out, u64::from(p.doc_ref - last));
            put_varint(&mut out, u64::from(p.term_freq));
            last = p.doc_ref;
        }
        prev = bytes;
    }

    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn decode(bytes: &[u8]) -> Result<Bm25Index> {
    let magic_len = MAGIC.len().min(bytes.len());
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(Error::IndexVersion("not a spanmine index (bad magic bytes)".into()));
    }
    if bytes.len() >= MAGIC.len() + 4 {
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::IndexVersion(format!(
                "file has version {version}, expected {FORMAT_VERSION}"
            )));
        }
    }
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::IndexChecksum);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::IndexChecksum);
    }

    let mut r = Reader { buf: body, pos: 12 };
    let params = Bm25Params {
        k1: r.f64()?,
        b: r.f64()?,
    };
    let max_tokens = r.u64()?;
    let input = InputConfig {
        max_tokens: usize::try_from(max_tokens).unwrap_or(usize::MAX),
        sep_token: r.string()?,
    };
    let num_docs = usize::try_from(r.u64()?).map_err(|_| Error::IndexCorrupt("doc count".into()))?;
    let num_terms = usize::try_from(r.u64()?).map_err(|_| Error::IndexCorrupt("term count".into()))?;

    let mut doc_ids = Vec::with_capacity(num_docs.min(body.len()));
    let mut doc_lens = Vec::with_capacity(num_docs.min(body.len()));
    for _ in 0..num_docs {
        doc_ids.push(r.string()?);
        let len = u32::try_from(r.varint()?).map_err(|_| Error::IndexCorrupt("doc length".into()))?;
        doc_lens.push(len);
    }

    let mut postings = HashMap::with_capacity(num_terms.min(body.len()));
    let mut prev: Vec<u8> = Vec::new();
    for _ in 0..num_terms {
        let shared = r.usize()?;
        let suffix_len = r.usize()?;
        if shared > prev.len() {
            return Err(Error::IndexCorrupt("bad front-coding prefix".into()));
        }
        let mut term = prev[..shared].to_vec();
        term.extend_from_slice(r.take(suffix_len)?);
        let count = r.usize()?;
        let mut list = Vec::with_capacity(count.min(num_docs));
        let mut doc = 0u64;
        for i in 0..count {
            let delta = r.varint()?;
            if i > 0 && delta == 0 {
                return Err(Error::IndexCorrupt("postings not strictly ascending".into()));
            }
            doc += delta;
            if doc >= num_docs as u64 {
                return Err(Error::IndexCorrupt("posting references unknown document".into()));
            }
            let tf = u32::try_from(r.varint()?).map_err(|_| Error::IndexCorrupt("term frequency".into()))?;
            if tf == 0 {
                return Err(Error::IndexCorrupt("zero term frequency".into()));
            }
            list.push(Posting {
                doc_ref: doc as u32,
                term_freq: tf,
            });
        }
        let key = String::from_utf8(term.clone()).map_err(|_| Error::IndexCorrupt("invalid utf-8 term".into()))?;
        postings.insert(key, list);
        prev = term;
    }
    if r.pos != body.len() {
        return Err(Error::IndexCorrupt("trailing bytes".into()));
    }
    Bm25Index::from_parts(params, input, postings, doc_lens, doc_ids)
}

pub fn save_index(index: &Bm25Index, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(index)).map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<Bm25Index> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
