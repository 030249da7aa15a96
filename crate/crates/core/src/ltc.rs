//! SMPTE linear timecode: biphase-mark encoder, a scanning decoder, and
//! alignment of a recorded session against a playback schedule.
//!
//! Frame layout (bit 0 transmitted first, fields LSB first):
//!
//! | bits  | field            | bits  | field            |
//! |-------|------------------|-------|------------------|
//! | 0-3   | frame units      | 32-35 | minute units     |
//! | 8-9   | frame tens       | 40-42 | minute tens      |
//! | 10    | drop frame       | 48-51 | hour units       |
//! | 11    | color frame      | 56-57 | hour tens        |
//! | 16-19 | second units     | 64-79 | sync word        |
//! | 24-26 | second tens      |       |                  |
//!
//! The eight 4-bit user-bit groups sit at 4, 12, 20, 28, 36, 44, 52 and 60.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const BITS_PER_FRAME: usize = 80;
pub const DEFAULT_FPS: u8 = 25;
pub const DEFAULT_AMPLITUDE: f64 = 0.8;

/// Sync word occupying bits 64..80, in transmission order.
pub const SYNC_WORD: [u8; 16] = [0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1];

const USER_BIT_OFFSETS: [usize; 8] = [4, 12, 20, 28, 36, 44, 52, 60];

/// A non-drop-frame timecode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Timecode {
    pub hours: u8,
    pub minutes: u8,
    pub seconds: u8,
    pub frames: u8,
    pub fps: u8,
}

impl Timecode {
    pub fn new(hours: u8, minutes: u8, seconds: u8, frames: u8, fps: u8) -> Result<Self> {
        if fps == 0 || fps > 30 {
            return Err(Error::Argument(format!("unsupported frame rate {fps}")));
        }
        if hours > 23 || minutes > 59 || seconds > 59 || frames >= fps {
            return Err(Error::Argument(format!(
                "timecode {hours:02}:{minutes:02}:{seconds:02}:{frames:02} out of range at {fps} fps"
            )));
        }
        Ok(Timecode {
            hours,
            minutes,
            seconds,
            frames,
            fps,
        })
    }

    pub fn zero(fps: u8) -> Result<Self> {
        Self::new(0, 0, 0, 0, fps)
    }

    /// Frames elapsed since 00:00:00:00.
    pub fn frame_index(&self) -> u64 {
        let secs = (u64::from(self.hours) * 60 + u64::from(self.minutes)) * 60
            + u64::from(self.seconds);
        secs * u64::from(self.fps) + u64::from(self.frames)
    }

    /// Inverse of [`Timecode::frame_index`], wrapping at 24 hours.
    pub fn from_frame_index(index: u64, fps: u8) -> Result<Self> {
        if fps == 0 {
            return Err(Error::Argument("frame rate must be positive".into()));
        }
        let per_day = 24 * 3600 * u64::from(fps);
        let index = index % per_day;
        let frames = (index % u64::from(fps)) as u8;
        let secs = index / u64::from(fps);
        Self::new(
            (secs / 3600) as u8,
            (secs / 60 % 60) as u8,
            (secs % 60) as u8,
            frames,
            fps,
        )
    }

    pub fn succ(&self) -> Timecode {
        let mut t = *self;
        t.frames += 1;
        if t.frames == t.fps {
            t.frames = 0;
            t.seconds += 1;
            if t.seconds == 60 {
                t.seconds = 0;
                t.minutes += 1;
                if t.minutes == 60 {
                    t.minutes = 0;
                    t.hours = (t.hours + 1) % 24;
                }
            }
        }
        t
    }

    /// Parse `HH:MM:SS:FF` at the given frame rate.
    pub fn parse(s: &str, fps: u8) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split([':', ';', '.']).collect();
        if parts.len() != 4 {
            return Err(Error::Argument(format!("bad timecode '{s}'")));
        }
        let mut f = [0u8; 4];
        for (slot, p) in f.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::Argument(format!("bad timecode '{s}'")))?;
        }
        Self::new(f[0], f[1], f[2], f[3], fps)
    }

    fn to_bits(self, user_bits: u32) -> [u8; BITS_PER_FRAME] {
        let mut bits = [0u8; BITS_PER_FRAME];
        let mut put = |start: usize, width: usize, value: u8| {
            for k in 0..width {
                bits[start + k] = (value >> k) & 1;
            }
        };
        put(0, 4, self.frames % 10);
        put(8, 2, self.frames / 10);
        put(16, 4, self.seconds % 10);
        put(24, 3, self.seconds / 10);
        put(32, 4, self.minutes % 10);
        put(40, 3, self.minutes / 10);
        put(48, 4, self.hours % 10);
        put(56, 2, self.hours / 10);
        for (g, &off) in USER_BIT_OFFSETS.iter().enumerate() {
            put(off, 4, ((user_bits >> (4 * g)) & 0xF) as u8);
        }
        bits[64..].copy_from_slice(&SYNC_WORD);
        bits
    }

    fn from_bits(bits: &[u8], fps: u8) -> Option<(Timecode, u32)> {
        let get = |start: usize, width: usize| -> u8 {
            (0..width).fold(0u8, |acc, k| acc | (bits[start + k] << k))
        };
        let units = [get(0, 4), get(16, 4), get(32, 4), get(48, 4)];
        if units.iter().any(|&u| u > 9) {
            return None;
        }
        let frames = get(8, 2) * 10 + units[0];
        let seconds = get(24, 3) * 10 + units[1];
        let minutes = get(40, 3) * 10 + units[2];
        let hours = get(56, 2) * 10 + units[3];
        let tc = Timecode::new(hours, minutes, seconds, frames, fps).ok()?;
        let user_bits = USER_BIT_OFFSETS
            .iter()
            .enumerate()
            .fold(0u32, |acc, (g, &off)| acc | (u32::from(get(off, 4)) << (4 * g)));
        Some((tc, user_bits))
    }
}

impl fmt::Display for Timecode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:02}:{:02}:{:02}:{:02}",
            self.hours, self.minutes, self.seconds, self.frames
        )
    }
}

impl FromStr for Timecode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Timecode::parse(s, DEFAULT_FPS)
    }
}

/// One decoded timecode frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LtcFrame {
    pub timecode: Timecode,
    /// Sample index of the frame's first bit-cell edge.
    pub start_sample: usize,
    pub user_bits: u32,
}

/// Biphase-mark LTC generator.
#[derive(Debug, Clone)]
pub struct LtcEncoder {
    pub sample_rate: u32,
    pub amplitude: f64,
    pub user_bits: u32,
}

impl LtcEncoder {
    pub fn new(sample_rate: u32) -> Self {
        LtcEncoder {
            sample_rate,
            amplitude: DEFAULT_AMPLITUDE,
            user_bits: 0,
        }
    }

    /// Sample at which bit cell `bit` (counted from the start of the stream) begins,
    /// with `half` selecting the mid-cell point.
    fn boundary(&self, bit: usize, half: bool, fps: u8) -> usize {
        let halves = 2 * bit as u128 + u128::from(half);
        let num = halves * u128::from(self.sample_rate);
        let den = 2 * u128::from(fps) * BITS_PER_FRAME as u128;
        ((2 * num + den) / (2 * den)) as usize
    }

    pub fn encode(&self, start: Timecode, n_frames: usize) -> Result<AudioBuffer> {
        if n_frames == 0 {
            return Err(Error::Argument("n_frames must be at least 1".into()));
        }
        if self.sample_rate < 8000 {
            return Err(Error::Argument(format!(
                "sample rate {} below 8000 Hz",
                self.sample_rate
            )));
        }
        let fps = start.fps;
        let total = self.boundary(n_frames * BITS_PER_FRAME, false, fps);
        let mut out = vec![0.0; total];
        let mut level = -self.amplitude;
        let mut tc = start;
        for f in 0..n_frames {
            let bits = tc.to_bits(self.user_bits);
            for (k, &bit) in bits.iter().enumerate() {
                let g = f * BITS_PER_FRAME + k;
                let lo = self.boundary(g, false, fps);
                let mid = self.boundary(g, true, fps);
                let hi = self.boundary(g + 1, false, fps);
                level = -level;
                if bit == 1 {
                    out[lo..mid].fill(level);
                    level = -level;
                    out[mid..hi].fill(level);
                } else {
                    out[lo..hi].fill(level);
                }
            }
            tc = tc.succ();
        }
        AudioBuffer::mono(self.sample_rate, out)
    }
}

/// Encode `n_frames` consecutive timecodes starting at `start`, amplitude ±0.8.
pub fn encode_ltc(start: Timecode, n_frames: usize, sample_rate: u32) -> Result<AudioBuffer> {
    LtcEncoder::new(sample_rate).encode(start, n_frames)
}

/// Result of a decoding pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LtcDecodeOutput {
    pub frames: Vec<LtcFrame>,
    /// Transition runs abandoned because an interval fit neither a half nor a full cell.
    pub discarded_runs: usize,
}

/// Scanning biphase-mark decoder.
#[derive(Debug, Clone)]
pub struct LtcDecoder {
    pub fps: u8,
    /// Signals with absolute value below this are treated as silence.
    pub silence_level: f64,
    /// Hysteresis threshold relative to the local peak.
    pub hysteresis: f64,
    /// Half/full cell decision point relative to the running full-cell estimate.
    pub cell_threshold: f64,
}

impl Default for LtcDecoder {
    fn default() -> Self {
        LtcDecoder {
            fps: DEFAULT_FPS,
            silence_level: 1e-3,
            hysteresis: 0.2,
            cell_threshold: 0.75,
        }
    }
}

impl LtcDecoder {
    pub fn new(fps: u8) -> Self {
        LtcDecoder {
            fps,
            ..Default::default()
        }
    }

    pub fn decode(&self, carrier: &AudioBuffer) -> Result<LtcDecodeOutput> {
        let samples = carrier.samples()?;
        if self.fps == 0 {
            return Err(Error::Argument("frame rate must be positive".into()));
        }
        let nominal_cell =
            carrier.sample_rate() as f64 / (f64::from(self.fps) * BITS_PER_FRAME as f64);
        let block = (nominal_cell * BITS_PER_FRAME as f64).round().max(1.0) as usize;
        let segments = self.edges(samples, block, nominal_cell);

        let mut out = LtcDecodeOutput::default();
        for seg in segments {
            self.decode_segment(&seg, nominal_cell, &mut out);
        }
        Ok(out)
    }

    /// Split the carrier into active segments and list the sign transitions in each.
    /// A segment's first edge is its onset and its last edge is its offset (or the
    /// buffer end).
    fn edges(&self, x: &[f64], block: usize, nominal_cell: f64) -> Vec<Vec<usize>> {
        let silence_run = (nominal_cell / 2.0).ceil().max(1.0) as usize;
        let mut segments = Vec::new();
        let mut current: Vec<usize> = Vec::new();
        let mut sign = 0i8;
        let mut quiet = 0usize;

        for (b, chunk) in x.chunks(block).enumerate() {
            let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
            let peak = chunk.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
            let thr = (self.hysteresis * peak).max(self.silence_level);
            for (k, &raw) in chunk.iter().enumerate() {
                let i = b * block + k;
                let v = raw - mean;
                let s = if v > thr {
                    1
                } else if v < -thr {
                    -1
                } else {
                    0
                };
                if raw.abs() <= self.silence_level {
                    quiet += 1;
                    if quiet == silence_run && sign != 0 {
                        current.push(i + 1 - silence_run);
                        segments.push(std::mem::take(&mut current));
                        sign = 0;
                    }
                } else {
                    quiet = 0;
                }
                if s != 0 && s != sign {
                    current.push(i);
                    sign = s;
                }
            }
        }
        if sign != 0 {
            current.push(x.len());
        }
        if current.len() > 1 {
            segments.push(current);
        }
        segments.retain(|s| s.len() > 1);
        segments
    }

    fn decode_segment(&self, edges: &[usize], nominal_cell: f64, out: &mut LtcDecodeOutput) {
        let mut full = nominal_cell;
        let (lo, hi) = (0.9 * nominal_cell, 1.1 * nominal_cell);
        let mut pending: Option<(usize, f64)> = None;
        let mut run: Vec<(u8, usize)> = Vec::new();

        let reset = |run: &mut Vec<(u8, usize)>, out: &mut LtcDecodeOutput| {
            if !run.is_empty() {
                out.discarded_runs += 1;
                run.clear();
            }
        };

        for w in edges.windows(2) {
            let (start, d) = (w[0], (w[1] - w[0]) as f64);
            if d < 0.25 * full || d > 1.5 * full {
                pending = None;
                reset(&mut run, out);
                continue;
            }
            let bit = if d < self.cell_threshold * full {
                match pending.take() {
                    Some((s0, d0)) => {
                        full = (0.9 * full + 0.1 * (d0 + d)).clamp(lo, hi);
                        Some((1u8, s0))
                    }
                    None => {
                        pending = Some((start, d));
                        None
                    }
                }
            } else {
                if pending.take().is_some() {
                    // the held half belonged to a bit that started before this run
                    reset(&mut run, out);
                }
                full = (0.9 * full + 0.1 * d).clamp(lo, hi);
                Some((0u8, start))
            };
            if let Some(b) = bit {
                run.push(b);
                self.try_emit(&mut run, out);
            }
        }
    }

    fn try_emit(&self, run: &mut Vec<(u8, usize)>, out: &mut LtcDecodeOutput) {
        let n = run.len();
        if n < BITS_PER_FRAME {
            return;
        }
        let tail = &run[n - SYNC_WORD.len()..];
        if !tail.iter().map(|b| b.0).eq(SYNC_WORD.iter().copied()) {
            return;
        }
        let frame = &run[n - BITS_PER_FRAME..];
        let bits: Vec<u8> = frame.iter().map(|b| b.0).collect();
        if let Some((timecode, user_bits)) = Timecode::from_bits(&bits, self.fps) {
            out.frames.push(LtcFrame {
                timecode,
                start_sample: frame[0].1,
                user_bits,
            });
        }
        // the next frame's bit 0 starts on the edge that closed this one
        run.clear();
    }
}

/// Decode a mono carrier at the default 25 fps.
pub fn decode_ltc(carrier: &AudioBuffer) -> Result<Vec<LtcFrame>> {
    Ok(LtcDecoder::default().decode(carrier)?.frames)
}

pub fn write_frames_csv<W: io::Write>(frames: &[LtcFrame], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timecode", "start_sample", "user_bits"])?;
    for f in frames {
        w.write_record([
            f.timecode.to_string(),
            f.start_sample.to_string(),
            format!("{:08x}", f.user_bits),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Playback start time of each original sentence during a recording session.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaybackSchedule {
    entries: Vec<(String, Timecode)>,
}

impl PlaybackSchedule {
    pub fn new(entries: Vec<(String, Timecode)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (id, _) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::Argument(format!("duplicate sentence id '{id}'")));
            }
        }
        if entries
            .windows(2)
            .any(|w| w[1].1.frame_index() < w[0].1.frame_index())
        {
            return Err(Error::Argument("schedule entries are not time ordered".into()));
        }
        Ok(PlaybackSchedule { entries })
    }

    pub fn entries(&self) -> &[(String, Timecode)] {
        &self.entries
    }

    /// Read a `sentence_id,timecode` CSV.
    pub fn from_csv<R: io::Read>(reader: R, fps: u8) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "sentence_id" || &headers[1] != "timecode" {
            return Err(Error::MalformedFile(
                "schedule header must be 'sentence_id,timecode'".into(),
            ));
        }
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let tc = Timecode::parse(&rec[1], fps)
                .map_err(|e| Error::MalformedFile(e.to_string()))?;
            entries.push((rec[0].to_string(), tc));
        }
        Self::new(entries).map_err(|e| Error::MalformedFile(e.to_string()))
    }
}

/// Where each scheduled sentence starts in the recording; `None` marks entries
/// outside the decoded timecode range.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionAlignment {
    pub entries: Vec<(String, Option<f64>)>,
}

impl SessionAlignment {
    pub fn get(&self, sentence_id: &str) -> Option<Option<f64>> {
        self.entries
            .iter()
            .find(|(id, _)| id == sentence_id)
            .map(|(_, s)| *s)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sentence_id", "start_sample"])?;
        for (id, s) in &self.entries {
            let v = s.map(|s| format!("{}", s.round() as i64)).unwrap_or_default();
            w.write_record([id.as_str(), v.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Map schedule timecodes to carrier sample positions by linear interpolation
/// between the nearest decoded frames.
pub fn align_session(frames: &[LtcFrame], schedule: &PlaybackSchedule) -> Result<SessionAlignment> {
    if frames.is_empty() {
        return Err(Error::Argument("no decoded frames".into()));
    }
    let points: Vec<(u64, f64)> = frames
        .iter()
        .map(|f| (f.timecode.frame_index(), f.start_sample as f64))
        .collect();
    let locate = |target: u64| -> Option<f64> {
        if let Some(p) = points.iter().find(|p| p.0 == target) {
            return Some(p.1);
        }
        points.windows(2).find_map(|w| {
            let ((ka, sa), (kb, sb)) = (w[0], w[1]);
            (ka < target && target < kb).then(|| {
                let t = (target - ka) as f64 / (kb - ka) as f64;
                sa + t * (sb - sa)
            })
        })
    };
    let entries = schedule
        .entries
        .iter()
        .map(|(id, tc)| (id.clone(), locate(tc.frame_index())))
        .collect();
    Ok(SessionAlignment { entries })
}
