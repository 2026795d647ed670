//! JSON transport for `/v1/refine`.
//!
//! Request: `{width, height, depth, prediction, hints, seed}` where `depth`
//! is base64 of little-endian `f32`s, `prediction` base64 of packed bits and
//! `hints` base64 of signed bytes, all row-major. Response: `{mask}` in
//! packed bits, optionally with `width` and `height`.
//!
//! Packed bits store pixel `i` in byte `i / 8` at bit `7 - i % 8`; trailing
//! bits of the last byte are zero.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, DepthMap, Grid, HintMap};

use super::RefineRequest;

pub fn pack_bits(mask: &BinaryMask) -> Vec<u8> {
    let mut out = vec![0u8; mask.len().div_ceil(8)];
    for (i, &b) in mask.as_slice().iter().enumerate() {
        if b {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], height: usize, width: usize) -> Result<BinaryMask> {
    let n = height * width;
    if bytes.len() != n.div_ceil(8) {
        return Err(Error::ShapeMismatch {
            expected: (height, width),
            found: (bytes.len() * 8 / width.max(1), width),
        });
    }
    let data = (0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect();
    Grid::from_vec(height, width, data)
}

fn decode_b64(field: &str, s: &str) -> Result<Vec<u8>> {
    STANDARD
        .decode(s)
        .map_err(|e| Error::Protocol(format!("field {field}: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub width: usize,
    pub height: usize,
    pub depth: String,
    pub prediction: String,
    pub hints: String,
    pub seed: u64,
}

impl WireRequest {
    pub fn encode(request: &RefineRequest) -> Self {
        let (height, width) = request.dims();
        let depth: Vec<u8> = request
            .depth
            .as_slice()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let hints: Vec<u8> = request.hints.as_slice().iter().map(|&v| v as u8).collect();
        WireRequest {
            width,
            height,
            depth: STANDARD.encode(depth),
            prediction: STANDARD.encode(pack_bits(&request.prediction)),
            hints: STANDARD.encode(hints),
            seed: request.seed,
        }
    }

    pub fn decode(&self) -> Result<RefineRequest> {
        let n = self.width * self.height;
        let depth = decode_b64("depth", &self.depth)?;
        if depth.len() != 4 * n {
            return Err(Error::Protocol(format!(
                "depth has {} bytes, expected {}",
                depth.len(),
                4 * n
            )));
        }
        let depth = depth
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let depth = DepthMap::from_vec(self.height, self.width, depth)
            .map_err(|e| Error::Protocol(e.to_string()))?;
        let prediction = unpack_bits(&decode_b64("prediction", &self.prediction)?, self.height, self.width)
            .map_err(|e| Error::Protocol(format!("prediction: {e}")))?;
        let hints = decode_b64("hints", &self.hints)?;
        if hints.len() != n {
            return Err(Error::Protocol(format!("hints has {} bytes, expected {n}", hints.len())));
        }
        let hints = HintMap::from_vec(self.height, self.width, hints.into_iter().map(|b| b as i8).collect())
            .map_err(|e| Error::Protocol(e.to_string()))?;
        RefineRequest::new(depth, prediction, hints, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse {
    pub mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
}

impl WireResponse {
    pub fn encode(mask: &BinaryMask) -> Self {
        WireResponse {
            mask: STANDARD.encode(pack_bits(mask)),
            width: Some(mask.width()),
            height: Some(mask.height()),
        }
    }

    /// Decodes against the dimensions the request was sent with.
    pub fn decode(&self, expected: (usize, usize)) -> Result<BinaryMask> {
        let (h, w) = expected;
        let found = (self.height.unwrap_or(h), self.width.unwrap_or(w));
        if found != expected {
            return Err(Error::ShapeMismatch { expected, found });
        }
        unpack_bits(&decode_b64("mask", &self.mask)?, h, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Sign;

    #[test]
    fn bit_order_is_msb_first() {
        let m = Grid::from_vec(1, 10, vec![true, false, false, false, false, false, false, true, false, true]).unwrap();
        assert_eq!(pack_bits(&m), vec![0b1000_0001, 0b0100_0000]);
        assert_eq!(unpack_bits(&pack_bits(&m), 1, 10).unwrap(), m);
    }

    #[test]
    fn request_round_trip() {
        let depth = DepthMap::new(Grid::from_fn(3, 5, |r, c| r as f32 * 0.5 - c as f32)).unwrap();
        let pred = Grid::from_fn(3, 5, |r, c| (r * c) % 2 == 1);
        let mut hints = HintMap::zeros(3, 5);
        hints.set(0, 4, Some(Sign::Erase));
        hints.set(2, 0, Some(Sign::Add));
        let req = RefineRequest::new(depth, pred, hints, 99).unwrap();
        let wire = WireRequest::encode(&req);
        let json = serde_json::to_string(&wire).unwrap();
        let back: WireRequest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.decode().unwrap(), req);
    }

    #[test]
    fn response_shape_checks() {
        let m = BinaryMask::empty(4, 4);
        let resp = WireResponse::encode(&m);
        assert_eq!(resp.decode((4, 4)).unwrap(), m);
        assert!(matches!(resp.decode((4, 5)), Err(Error::ShapeMismatch { .. })));
        let bare = WireResponse {
            mask: resp.mask.clone(),
            width: None,
            height: None,
        };
        assert!(matches!(bare.decode((8, 8)), Err(Error::ShapeMismatch { .. })));
        let junk = WireResponse {
            mask: "***".into(),
            width: None,
            height: None,
        };
        assert!(matches!(junk.decode((4, 4)), Err(Error::Protocol(_))));
    }
}
