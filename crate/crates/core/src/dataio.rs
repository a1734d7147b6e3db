//! On-disk formats: the `BTS1` binary series stack, single-series CSV input
//! and the break-map CSV output.
//!
//! `BTS1` layout, all little-endian:
//!
//! ```text
//! "BTS1" | u32 version = 1 | u32 N | u32 m | u8 axis flag
//!        | f64 x N time axis (only when flag = 1)
//!        | f32 x (N * m) values, time-major
//! ```
//!
//! A flag of 0 means the implicit axis `1, 2, ..., N`.

use std::io::{Read, Write};

use crate::engine::{BreakMap, SeriesStack};
use crate::error::{Error, Result};
use crate::model::TimeAxis;

pub const MAGIC: &[u8; 4] = b"BTS1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 17;

const AXIS_IMPLICIT: u8 = 0;
const AXIS_EXPLICIT: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackFileHeader {
    pub version: u32,
    pub n_obs: u32,
    pub n_pixels: u32,
    pub explicit_axis: bool,
}

impl StackFileHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(MAGIC);
        out[4..8].copy_from_slice(&self.version.to_le_bytes());
        out[8..12].copy_from_slice(&self.n_obs.to_le_bytes());
        out[12..16].copy_from_slice(&self.n_pixels.to_le_bytes());
        out[16] = if self.explicit_axis { AXIS_EXPLICIT } else { AXIS_IMPLICIT };
        out
    }

    pub fn parse(bytes: &[u8; HEADER_LEN]) -> Result<Self> {
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}, expected \"BTS1\"", &bytes[..4])));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let header = StackFileHeader {
            version: word(4),
            n_obs: word(8),
            n_pixels: word(12),
            explicit_axis: match bytes[16] {
                AXIS_IMPLICIT => false,
                AXIS_EXPLICIT => true,
                other => return Err(Error::Format(format!("unknown axis flag {other}"))),
            },
        };
        if header.version != VERSION {
            return Err(Error::Format(format!("unsupported version {}", header.version)));
        }
        if header.n_obs < 2 {
            return Err(Error::Format(format!("N = {} is below 2", header.n_obs)));
        }
        if header.n_pixels < 1 {
            return Err(Error::Format("m = 0".into()));
        }
        Ok(header)
    }

    /// Payload size in bytes following the header.
    pub fn payload_len(&self) -> Result<usize> {
        let n = self.n_obs as usize;
        let axis = if self.explicit_axis { n.checked_mul(8) } else { Some(0) };
        n.checked_mul(self.n_pixels as usize)
            .and_then(|v| v.checked_mul(4))
            .zip(axis)
            .and_then(|(v, a)| v.checked_add(a))
            .filter(|&v| v <= isize::MAX as usize)
            .ok_or_else(|| Error::Capacity(format!("{} x {} stack is not addressable", self.n_obs, self.n_pixels)))
    }
}

/// Writes the stack; returns the number of bytes written. The axis is
/// stored explicitly unless it is exactly `1..=N`.
pub fn write_stack<W: Write>(stack: &SeriesStack, mut sink: W) -> Result<u64> {
    let too_big = |what: &str, v: usize| Error::Capacity(format!("{what} = {v} does not fit in u32"));
    let header = StackFileHeader {
        version: VERSION,
        n_obs: u32::try_from(stack.n_obs()).map_err(|_| too_big("N", stack.n_obs()))?,
        n_pixels: u32::try_from(stack.n_pixels()).map_err(|_| too_big("m", stack.n_pixels()))?,
        explicit_axis: !stack.axis().is_regular(),
    };
    sink.write_all(&header.to_bytes())?;
    let mut written = HEADER_LEN as u64;
    if header.explicit_axis {
        let mut buf = Vec::with_capacity(stack.n_obs() * 8);
        for v in stack.axis().values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        sink.write_all(&buf)?;
        written += buf.len() as u64;
    }
    const CHUNK: usize = 1 << 16;
    let mut buf = Vec::with_capacity(CHUNK * 4);
    for chunk in stack.data().chunks(CHUNK) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        sink.write_all(&buf)?;
        written += buf.len() as u64;
    }
    sink.flush()?;
    Ok(written)
}

fn read_exact_or_format<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("file truncated in {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_stack<R: Read>(mut source: R) -> Result<SeriesStack> {
    let mut head = [0u8; HEADER_LEN];
    read_exact_or_format(&mut source, &mut head, "header")?;
    let header = StackFileHeader::parse(&head)?;
    header.payload_len()?;
    let n_obs = header.n_obs as usize;
    let count = n_obs * header.n_pixels as usize;

    let explicit = if header.explicit_axis {
        let want = n_obs as u64 * 8;
        let mut raw = Vec::new();
        source.by_ref().take(want).read_to_end(&mut raw)?;
        if (raw.len() as u64) < want {
            return Err(Error::Format("file truncated in time axis".into()));
        }
        let values = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Some(TimeAxis::new(values).map_err(|e| Error::Format(format!("invalid time axis: {e}")))?)
    } else {
        None
    };

    // grow with the data actually present so a lying header cannot force
    // a huge allocation up front
    const CHUNK: usize = 1 << 16;
    let mut data: Vec<f32> = Vec::with_capacity(count.min(CHUNK));
    let mut raw = vec![0u8; CHUNK * 4];
    while data.len() < count {
        let take = (count - data.len()).min(CHUNK);
        read_exact_or_format(&mut source, &mut raw[..take * 4], "data payload")?;
        data.extend(raw[..take * 4].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())));
    }
    // the implicit axis is built only once the payload proved N is real
    let axis = match explicit {
        Some(axis) => axis,
        None => TimeAxis::regular(n_obs)?,
    };
    SeriesStack::new(axis, header.n_pixels as usize, data)
}

/// Two-column `time,value` CSV with an optional header row; an empty
/// value is a missing observation.
pub fn read_series_csv<R: Read>(source: R) -> Result<(TimeAxis, Vec<f32>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(idx as u64 + 1),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(idx as u64 + 1);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Parse { line, message: format!("expected 2 fields, found {}", record.len()) });
        }
        let time = record[0].parse::<f64>();
        if idx == 0 && time.is_err() {
            // header row
            continue;
        }
        let time = time.map_err(|_| Error::Parse { line, message: format!("time {:?} is not a number", &record[0]) })?;
        let value = if record[1].is_empty() {
            f32::NAN
        } else {
            record[1]
                .parse::<f32>()
                .map_err(|_| Error::Parse { line, message: format!("value {:?} is not a number", &record[1]) })?
        };
        times.push(time);
        values.push(value);
    }
    let axis = TimeAxis::new(times)?;
    Ok((axis, values))
}

/// Fixed-notation rendering with nine significant digits; zero renders as
/// `0.000000000` and magnitudes outside `[1e-4, 1e9)` use scientific notation.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0.000000000".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let a = v.abs();
    if !(1e-4..1e9).contains(&a) {
        return format!("{v:.8e}");
    }
    let exponent = a.log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding can carry into a new leading digit (9.9999999995 -> 10.00000000)
    let digits = s.chars().filter(|c| c.is_ascii_digit()).skip_while(|&c| c == '0').count();
    if digits > 9 && decimals > 0 {
        let decimals = decimals - 1;
        format!("{v:.decimals$}")
    } else {
        s
    }
}

pub const BREAK_MAP_HEADER: &str = "pixel,valid,detected,first_break,max_abs_mo";

/// Writes one row per pixel; returns the number of data rows.
pub fn write_break_map<W: Write>(map: &BreakMap, mut sink: W) -> Result<usize> {
    writeln!(sink, "{BREAK_MAP_HEADER}")?;
    for (i, (res, &valid)) in map.results.iter().zip(&map.valid).enumerate() {
        let first = res.first_break.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            sink,
            "{i},{},{},{first},{}",
            valid as u8,
            res.detected as u8,
            format_sig9(res.max_abs_mo)
        )?;
    }
    sink.flush()?;
    Ok(map.results.len())
}
