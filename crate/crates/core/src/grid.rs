//! Token grids and the `PVTG` binary format.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `b"PVTG"`            |
//! | 4      | 4    | version, `u32` = 1         |
//! | 8      | 4    | frames `T`, `u32`          |
//! | 12     | 4    | tokens per frame `N_v`     |
//! | 16     | 4    | channels `C`               |
//! | 20     | 4·T·N_v·C | `f32` payload, frame-major, then location-major |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PVTG";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

/// `T × N_v × C` visual tokens of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    frames: usize,
    tokens_per_frame: usize,
    channels: usize,
    data: Vec<f32>,
}

impl TokenGrid {
    pub fn new(
        frames: usize,
        tokens_per_frame: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if frames == 0 || tokens_per_frame == 0 || channels == 0 {
            return Err(Error::InvalidDimensions(format!(
                "T={frames}, N_v={tokens_per_frame}, C={channels}; all must be >= 1"
            )));
        }
        let expected = frames
            .checked_mul(tokens_per_frame)
            .and_then(|x| x.checked_mul(channels))
            .ok_or_else(|| Error::InvalidDimensions("grid size overflows".into()))?;
        if data.len() != expected {
            return Err(Error::InvalidDimensions(format!(
                "data length {} != T*N_v*C = {expected}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            frames,
            tokens_per_frame,
            channels,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens_per_frame
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Total raw token count `T · N_v`.
    pub fn n_tokens(&self) -> usize {
        self.frames * self.tokens_per_frame
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn token(&self, frame: usize, location: usize) -> &[f32] {
        let start = (frame * self.tokens_per_frame + location) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn frame(&self, frame: usize) -> &[f32] {
        let len = self.tokens_per_frame * self.channels;
        &self.data[frame * len..(frame + 1) * len]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            self.frames as u32,
            self.tokens_per_frame as u32,
            self.channels as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let version = word(1);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let (frames, tokens, channels) = (word(2) as usize, word(3) as usize, word(4) as usize);
        let n = frames
            .checked_mul(tokens)
            .and_then(|x| x.checked_mul(channels))
            .ok_or_else(|| Error::InvalidDimensions("grid size overflows".into()))?;
        let expected = HEADER_LEN + 4 * n;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::TrailingBytes {
                path: path.to_path_buf(),
                extra: bytes.len() - expected,
            });
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        TokenGrid::new(frames, tokens, channels, data)
    }
}

pub fn load_token_grid(path: impl AsRef<Path>) -> Result<TokenGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TokenGrid::from_bytes(&bytes, path)
}

pub fn save_token_grid(grid: &TokenGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    // Grids built through `new` are already finite; re-check anyway since the
    // file must never carry NaN.
    if let Some(index) = grid.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    fs::write(path, grid.to_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    StaticMerged,
    DynamicMerged,
}

/// Which original `(frame, location)` cells a merged token averages.
///
/// The member set is the cross product `source_frames × source_locations`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub segment_id: usize,
    pub source_frames: Vec<usize>,
    pub source_locations: Vec<usize>,
    pub kind: TokenKind,
}

impl Provenance {
    pub fn n_members(&self) -> usize {
        self.source_frames.len() * self.source_locations.len()
    }

    pub fn members(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.source_frames
            .iter()
            .flat_map(move |&t| self.source_locations.iter().map(move |&i| (t, i)))
    }
}
