//! 16-bit PCM WAV reading/writing and elementary buffer operations.
//!
//! Samples are stored planar as `f64`. Integer samples map to floats as
//! `s / 32768`, so the representable range is `[-1, 32767/32768]`. Writing
//! rounds `x * 32768` to the nearest integer; `1.0` saturates to `32767`,
//! which is still within one LSB of the input.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const PCM_SCALE: f64 = 32768.0;
const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// A sampled waveform with one `Vec` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    sample_rate: u32,
    channels: Vec<Vec<f64>>,
}

impl AudioBuffer {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::Argument("at least one channel is required".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Argument("channel lengths differ".into()));
        }
        Ok(AudioBuffer {
            sample_rate,
            channels,
        })
    }

    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        Self::new(sample_rate, vec![samples])
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Number of frames (samples per channel).
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// Samples of a mono buffer.
    pub fn samples(&self) -> Result<&[f64]> {
        if self.channels.len() != 1 {
            return Err(Error::Argument(format!(
                "expected a mono buffer, got {} channels",
                self.channels.len()
            )));
        }
        Ok(&self.channels[0])
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn extract_channel(&self, index: usize) -> Result<AudioBuffer> {
        let ch = self.channels.get(index).ok_or_else(|| {
            Error::Argument(format!(
                "channel {index} out of range for {} channels",
                self.channels.len()
            ))
        })?;
        Ok(AudioBuffer {
            sample_rate: self.sample_rate,
            channels: vec![ch.clone()],
        })
    }

    /// Prepend `round(seconds * rate)` zero frames to every channel.
    pub fn delay(&self, seconds: f64) -> Result<AudioBuffer> {
        if !(seconds >= 0.0) || !seconds.is_finite() {
            return Err(Error::Argument(format!(
                "delay must be a nonnegative duration, got {seconds}"
            )));
        }
        Ok(self.delay_frames(self.frames_for(seconds)))
    }

    pub fn delay_frames(&self, n: usize) -> AudioBuffer {
        let channels = self
            .channels
            .iter()
            .map(|c| {
                let mut out = vec![0.0; n];
                out.extend_from_slice(c);
                out
            })
            .collect();
        AudioBuffer {
            sample_rate: self.sample_rate,
            channels,
        }
    }

    /// Keep frames `start..start + len`, truncated at the buffer end.
    pub fn crop(&self, start: usize, len: usize) -> AudioBuffer {
        let lo = start.min(self.len());
        let hi = start.saturating_add(len).min(self.len());
        AudioBuffer {
            sample_rate: self.sample_rate,
            channels: self.channels.iter().map(|c| c[lo..hi].to_vec()).collect(),
        }
    }

    /// Drop `round(seconds * rate)` leading frames.
    pub fn advance(&self, seconds: f64) -> Result<AudioBuffer> {
        if !(seconds >= 0.0) || !seconds.is_finite() {
            return Err(Error::Argument(format!(
                "advance must be a nonnegative duration, got {seconds}"
            )));
        }
        let n = self.frames_for(seconds);
        Ok(self.crop(n, usize::MAX))
    }

    /// Multiply every sample by `factor`. The result is not clipped.
    pub fn gain(&self, factor: f64) -> AudioBuffer {
        AudioBuffer {
            sample_rate: self.sample_rate,
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|s| s * factor).collect())
                .collect(),
        }
    }

    /// Interleave mono buffers of equal rate and length into one multichannel buffer.
    pub fn interleave(buffers: &[AudioBuffer]) -> Result<AudioBuffer> {
        let first = buffers
            .first()
            .ok_or_else(|| Error::Argument("no buffers to combine".into()))?;
        if buffers.iter().any(|b| b.sample_rate != first.sample_rate) {
            return Err(Error::Argument("sample rates differ".into()));
        }
        let channels = buffers.iter().flat_map(|b| b.channels.clone()).collect();
        AudioBuffer::new(first.sample_rate, channels)
    }

    fn frames_for(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate as f64).round() as usize
    }
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

struct FormatChunk {
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn parse_fmt(body: &[u8]) -> Result<FormatChunk> {
    if body.len() < 16 {
        return Err(Error::MalformedFile("fmt chunk shorter than 16 bytes".into()));
    }
    let mut format_tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let block_align = u16_at(body, 12);
    let bits_per_sample = u16_at(body, 14);

    if format_tag == WAVE_FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) subformat GUID(16)
        if body.len() < 40 {
            return Err(Error::MalformedFile("truncated WAVE_FORMAT_EXTENSIBLE".into()));
        }
        format_tag = u16_at(body, 24);
    }
    if format_tag != WAVE_FORMAT_PCM {
        return Err(Error::UnsupportedFormat(format!(
            "format tag {format_tag:#06x} is not PCM"
        )));
    }
    if bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{bits_per_sample}-bit PCM (only 16-bit is supported)"
        )));
    }
    if channels == 0 {
        return Err(Error::MalformedFile("zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(Error::MalformedFile("zero sample rate".into()));
    }
    if block_align != channels * 2 {
        return Err(Error::MalformedFile(format!(
            "block align {block_align} inconsistent with {channels} 16-bit channels"
        )));
    }
    Ok(FormatChunk {
        channels,
        sample_rate,
        bits_per_sample,
    })
}

/// Decode a RIFF/WAVE file holding 16-bit little-endian PCM.
///
/// Only the `fmt ` and `data` chunks are interpreted; everything else is skipped.
pub fn read_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedFile("not a RIFF/WAVE container".into()));
    }
    let mut fmt: Option<FormatChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::MalformedFile(format!(
                    "chunk '{}' extends past end of file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => {
                data = Some(body);
                break;
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| Error::MalformedFile("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::MalformedFile("missing data chunk".into()))?;
    debug_assert_eq!(fmt.bits_per_sample, 16);

    let n_ch = fmt.channels as usize;
    let frame_bytes = n_ch * 2;
    if data.len() % frame_bytes != 0 {
        return Err(Error::MalformedFile(format!(
            "data chunk of {} bytes is not a whole number of {}-byte frames",
            data.len(),
            frame_bytes
        )));
    }
    let n_frames = data.len() / frame_bytes;
    let mut channels = vec![Vec::with_capacity(n_frames); n_ch];
    for frame in data.chunks_exact(frame_bytes) {
        for (ch, s) in channels.iter_mut().zip(frame.chunks_exact(2)) {
            let v = i16::from_le_bytes([s[0], s[1]]);
            ch.push(f64::from(v) / PCM_SCALE);
        }
    }
    AudioBuffer::new(fmt.sample_rate, channels)
}

fn quantize(x: f64) -> Result<i16> {
    if !x.is_finite() || !(-1.0..=1.0).contains(&x) {
        return Err(Error::Range(format!("sample {x} outside [-1, 1]")));
    }
    let q = (x * PCM_SCALE).round();
    Ok(q.clamp(-32768.0, 32767.0) as i16)
}

/// Encode a buffer as a canonical 44-byte-header 16-bit PCM WAV file.
///
/// Samples outside `[-1, 1]` are rejected rather than clipped.
pub fn write_wav(buffer: &AudioBuffer) -> Result<Vec<u8>> {
    let n_ch = buffer.n_channels();
    let n_frames = buffer.len();
    let block_align = n_ch * 2;
    let data_len = n_frames * block_align;
    if data_len > u32::MAX as usize - 36 {
        return Err(Error::Argument("buffer too large for a RIFF file".into()));
    }
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&(n_ch as u16).to_le_bytes());
    out.extend_from_slice(&buffer.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buffer.sample_rate * block_align as u32).to_le_bytes());
    out.extend_from_slice(&(block_align as u16).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..n_frames {
        for ch in &buffer.channels {
            out.extend_from_slice(&quantize(ch[i])?.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_wav_file(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    read_wav(&fs::read(path)?)
}

pub fn write_wav_file(path: impl AsRef<Path>, buffer: &AudioBuffer) -> Result<()> {
    fs::write(path, write_wav(buffer)?)?;
    Ok(())
}
