//! Binary checkpoint format.
//!
//! ```text
//! magic  "SGB1"
//! u32 LE vocab, embed, hidden, flags
//! f64 LE arrays, in order:
//!   embed                      vocab*embed
//!   ctx_fwd  w_ih, w_hh, bias  embed*4H, H*4H, 4H
//!   ctx_bwd  (same)
//!   lm_fwd   (same)
//!   lm_bwd   (same)
//!   out_proj forward, backward H*vocab each (backward omitted when shared)
//!   biases   forward, backward vocab each   (backward omitted when shared)
//! ```
//!
//! Flag bit 0: output projection shared across directions.
//! Flag bit 1: LM runs start with a zero cell state.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Dims, ModelOptions, ModelParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SGB1";
pub const FLAG_SHARE_OUTPUT: u32 = 1;
pub const FLAG_ZERO_LM_CELL: u32 = 2;
const HEADER_LEN: usize = 4 + 4 * 4;

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let mut flags = 0;
    if params.options.share_output {
        flags |= FLAG_SHARE_OUTPUT;
    }
    if params.options.zero_lm_cell {
        flags |= FLAG_ZERO_LM_CELL;
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.num_params());
    out.extend_from_slice(MAGIC);
    for v in [params.dims.vocab, params.dims.embed, params.dims.hidden] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&flags.to_le_bytes());
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let dims = Dims {
        vocab: field(0) as usize,
        embed: field(1) as usize,
        hidden: field(2) as usize,
    };
    let flags = field(3);
    if flags & !(FLAG_SHARE_OUTPUT | FLAG_ZERO_LM_CELL) != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#x}")));
    }
    if dims.vocab < 2 || dims.embed == 0 || dims.hidden == 0 {
        return Err(Error::Format(format!("invalid dimensions {dims:?}")));
    }
    let options = ModelOptions {
        share_output: flags & FLAG_SHARE_OUTPUT != 0,
        zero_lm_cell: flags & FLAG_ZERO_LM_CELL != 0,
    };
    let mut params = ModelParams::zeros(dims, options);
    let expected = HEADER_LEN + 8 * params.num_params();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "size {} does not match the {} bytes implied by the header",
            bytes.len(),
            expected
        )));
    }
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = values.next().unwrap();
        }
    }
    Ok(params)
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    // an interrupted save leaves the previous file intact
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&encode(params)).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let p = ModelParams::init(
            Dims { vocab: 3, embed: 2, hidden: 1 },
            ModelOptions { share_output: true, zero_lm_cell: false },
            1,
            0.1,
        );
        let b = encode(&p);
        assert_eq!(&b[..4], b"SGB1");
        assert_eq!(&b[4..8], &3u32.to_le_bytes());
        assert_eq!(&b[16..20], &1u32.to_le_bytes());
        assert_eq!(&b[20..28], &p.embed[0].to_le_bytes());
        assert_eq!(b.len(), 20 + 8 * p.num_params());
        assert_eq!(decode(&b).unwrap(), p);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let p = ModelParams::init(Dims { vocab: 3, embed: 2, hidden: 2 }, ModelOptions::default(), 1, 0.1);
        let mut b = encode(&p);
        assert!(matches!(decode(&b[..10]), Err(Error::Format(_))));
        assert!(matches!(decode(&b[..b.len() - 8]), Err(Error::Format(_))));
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(Error::Format(_))));
    }
}
