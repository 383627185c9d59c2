//! Minimal RIFF/WAVE codec.
//!
//! Reads PCM (8/16/24/32-bit integer and 32-bit float) mono or multi-channel
//! files; multi-channel input is averaged down to mono and integer samples
//! are scaled into [-1, 1] by the type's maximum magnitude. The writer emits
//! 16-bit PCM little-endian and exists mainly to produce test fixtures and
//! the synthetic corpus; `load_wav(write_wav(x))` round-trips 16-bit sample
//! values bit-exactly.

use std::io::Write;
use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn need(&self, n: usize) -> Result<()> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::WavFormat {
                path: self.path.to_string(),
                detail: format!("truncated at byte {}", self.pos),
            });
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        self.need(n)?;
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct Format {
    code: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

/// Loads a RIFF/WAVE PCM file as a mono clip.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::io(&path_str, e))?;
    decode_wav(&bytes, &path_str)
}

fn decode_wav(bytes: &[u8], path: &str) -> Result<AudioClip> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    let bad = |detail: &str| Error::WavFormat {
        path: path.to_string(),
        detail: detail.to_string(),
    };

    if r.take(4)? != b"RIFF" {
        return Err(bad("missing RIFF magic"));
    }
    let _riff_size = r.u32()?;
    if r.take(4)? != b"WAVE" {
        return Err(bad("missing WAVE tag"));
    }

    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while r.pos + 8 <= bytes.len() {
        let id: [u8; 4] = r.take(4)?.try_into().unwrap();
        let size = r.u32()? as usize;
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                let chunk_end = r.pos + size;
                let mut code = r.u16()?;
                let channels = r.u16()?;
                let sample_rate = r.u32()?;
                let _byte_rate = r.u32()?;
                let _block_align = r.u16()?;
                let bits = r.u16()?;
                if code == FORMAT_EXTENSIBLE {
                    // cbSize, valid bits, channel mask, then the sub-format
                    // GUID whose first two bytes carry the real format code.
                    if size < 40 {
                        return Err(bad("extensible fmt chunk too short"));
                    }
                    let _cb = r.u16()?;
                    let _valid_bits = r.u16()?;
                    let _mask = r.u32()?;
                    code = r.u16()?;
                }
                r.pos = chunk_end.min(bytes.len());
                format = Some(Format {
                    code,
                    channels,
                    sample_rate,
                    bits,
                });
            }
            b"data" => {
                r.need(size)?;
                data = Some(&bytes[r.pos..r.pos + size]);
                r.pos += size;
            }
            _ => {
                // skip unknown chunk, chunks are word-aligned
                r.pos += size + (size & 1);
            }
        }
        if r.pos & 1 == 1 {
            r.pos += 1;
        }
    }

    let fmt = format.ok_or_else(|| bad("missing fmt chunk"))?;
    let data = data.ok_or_else(|| bad("missing data chunk"))?;
    if fmt.channels == 0 {
        return Err(bad("zero channels"));
    }
    if fmt.sample_rate == 0 {
        return Err(bad("zero sample rate"));
    }

    let unsupported = |detail: String| Error::WavUnsupported {
        path: path.to_string(),
        detail,
    };
    let bytes_per_sample = match (fmt.code, fmt.bits) {
        (FORMAT_PCM, 8) => 1,
        (FORMAT_PCM, 16) => 2,
        (FORMAT_PCM, 24) => 3,
        (FORMAT_PCM, 32) => 4,
        (FORMAT_IEEE_FLOAT, 32) => 4,
        (FORMAT_PCM, b) => return Err(unsupported(format!("{b}-bit PCM"))),
        (FORMAT_IEEE_FLOAT, b) => return Err(unsupported(format!("{b}-bit float"))),
        (c, _) => return Err(unsupported(format!("format code {c}"))),
    };

    let frame_bytes = bytes_per_sample * fmt.channels as usize;
    let n_frames = data.len() / frame_bytes;
    if n_frames == 0 {
        return Err(Error::EmptyAudio {
            path: path.to_string(),
        });
    }

    let channels = fmt.channels as usize;
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0f64;
        for c in 0..channels {
            let off = f * frame_bytes + c * bytes_per_sample;
            let v = match (fmt.code, fmt.bits) {
                (FORMAT_PCM, 8) => (data[off] as f64 - 128.0) / 128.0,
                (FORMAT_PCM, 16) => {
                    i16::from_le_bytes([data[off], data[off + 1]]) as f64 / 32768.0
                }
                (FORMAT_PCM, 24) => {
                    let raw = (data[off] as i32)
                        | ((data[off + 1] as i32) << 8)
                        | ((data[off + 2] as i8 as i32) << 16);
                    raw as f64 / 8_388_608.0
                }
                (FORMAT_PCM, 32) => {
                    i32::from_le_bytes([data[off], data[off + 1], data[off + 2], data[off + 3]])
                        as f64
                        / 2_147_483_648.0
                }
                (FORMAT_IEEE_FLOAT, 32) => f32::from_le_bytes([
                    data[off],
                    data[off + 1],
                    data[off + 2],
                    data[off + 3],
                ]) as f64,
                _ => unreachable!(),
            };
            acc += v;
        }
        let v = acc / channels as f64;
        if !v.is_finite() {
            return Err(Error::WavFormat {
                path: path.to_string(),
                detail: format!("non-finite sample at frame {f}"),
            });
        }
        samples.push(v);
    }

    let mut clip = AudioClip::from_samples(samples, fmt.sample_rate);
    clip.source_path = path.to_string();
    Ok(clip)
}

/// Writes samples as canonical 16-bit PCM little-endian mono.
///
/// Values are scaled by 32768 and clamped to the i16 range, so samples that
/// originated from a 16-bit file survive a write/load cycle bit-exactly.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(&path_str, e))?;
    f.write_all(&out).map_err(|e| Error::io(&path_str, e))?;
    Ok(())
}
