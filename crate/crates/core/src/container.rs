//! Binary container shared by checkpoints and feature files.
//!
//! Layout: `u64` little-endian header length, the UTF-8 JSON header, then a
//! flat payload of little-endian `f64` values.

use crate::error::{Error, Result};
use serde::{de::DeserializeOwned, Serialize};
use std::io::{Read, Write};

pub fn write_container<W: Write, H: Serialize>(mut w: W, header: &H, payload: &[f64]) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(payload.len() * 8);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_container<R: Read, H: DeserializeOwned>(mut r: R) -> Result<(H, Vec<f64>)> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header = serde_json::from_slice(&json)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() % 8 != 0 {
        return Err(Error::Data(format!("payload length {} is not a multiple of 8", rest.len())));
    }
    let payload = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, payload))
}
