//! GWIQ recordings: one node's chirps with the waveform that produced them.
//!
//! Little-endian layout:
//!
//! | field              | type        |
//! |--------------------|-------------|
//! | magic `GWIQ`       | 4 bytes     |
//! | version            | u16         |
//! | f0, B, Tc, fs      | 4 x f64     |
//! | node id            | u32         |
//! | chirp count        | u32         |
//! | samples per chirp  | u32         |
//! | samples            | I, Q as f32 |
//! | CRC-32 of the above| u32         |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use gaitradar::sim::{IqCube, RadarWaveform};
use gaitradar::Complex32;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"GWIQ";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 8 + 3 * 4;
const SAMPLE_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum IqError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a GWIQ file (magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion(u16),
    #[error("truncated header: {0} of {HEADER_LEN} bytes")]
    TruncatedHeader(usize),
    #[error("truncated IQ data: {declared} chirps declared, {}", last_complete(*.complete))]
    Truncated { declared: u32, complete: u32 },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("{0} trailing bytes after the checksum")]
    TrailingBytes(usize),
}

fn last_complete(complete: u32) -> String {
    match complete {
        0 => "no complete chirp".into(),
        n => format!("last complete chirp is {}", n - 1),
    }
}

/// An [`IqError`] tied to the file it came from.
#[derive(Debug, Error)]
#[error("{}: {source}", path.display())]
pub struct IqFileError {
    pub path: PathBuf,
    #[source]
    pub source: IqError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqRecording {
    pub waveform: RadarWaveform,
    pub node_id: u32,
    pub cube: IqCube,
}

/// Wraps a writer and hashes everything written through it.
struct Crc<W> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> Write for Crc<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

pub fn write_iq<W: Write>(writer: W, rec: &IqRecording) -> Result<(), IqError> {
    let cube = &rec.cube;
    if cube.samples_per_chirp != rec.waveform.samples_per_chirp {
        return Err(IqError::InvalidHeader(format!(
            "cube has {} samples per chirp, waveform {}",
            cube.samples_per_chirp, rec.waveform.samples_per_chirp
        )));
    }
    let count = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| IqError::InvalidHeader(format!("{what} {v} exceeds u32")))
    };
    let chirps = count(cube.chirps, "chirp count")?;
    let samples = count(cube.samples_per_chirp, "samples per chirp")?;

    let mut w = Crc {
        inner: writer,
        hasher: crc32fast::Hasher::new(),
    };
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let wf = &rec.waveform;
    for v in [wf.f0, wf.bandwidth, wf.chirp_time, wf.sample_rate] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in [rec.node_id, chirps, samples] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(cube.samples_per_chirp * SAMPLE_LEN);
    for c in 0..cube.chirps {
        buf.clear();
        for z in cube.chirp(c) {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    let crc = w.hasher.finalize();
    let mut inner = w.inner;
    inner.write_all(&crc.to_le_bytes())?;
    inner.flush()?;
    Ok(())
}

pub fn read_iq<R: Read>(mut reader: R) -> Result<IqRecording, IqError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    parse(&bytes)
}

fn parse(bytes: &[u8]) -> Result<IqRecording, IqError> {
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(IqError::BadMagic(bytes[..4].try_into().expect("4 bytes")));
    }
    if bytes.len() >= 6 {
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(IqError::UnsupportedVersion(version));
        }
    }
    if bytes.len() < HEADER_LEN {
        return Err(IqError::TruncatedHeader(bytes.len()));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let (f0, bandwidth, chirp_time, sample_rate) = (f64_at(6), f64_at(14), f64_at(22), f64_at(30));
    let (node_id, chirps, samples) = (u32_at(38), u32_at(42), u32_at(46));

    let waveform = RadarWaveform::new(f0, bandwidth, chirp_time, sample_rate)
        .map_err(|e| IqError::InvalidHeader(e.to_string()))?;
    if waveform.samples_per_chirp != samples as usize {
        return Err(IqError::InvalidHeader(format!(
            "{samples} samples per chirp, but fs * Tc gives {}",
            waveform.samples_per_chirp
        )));
    }

    let chirp_len = samples as usize * SAMPLE_LEN;
    let payload_len = chirps as usize * chirp_len;
    let available = bytes.len() - HEADER_LEN;
    if available < payload_len + 4 {
        let complete = if chirp_len == 0 { 0 } else { available.min(payload_len) / chirp_len };
        return Err(IqError::Truncated {
            declared: chirps,
            complete: complete as u32,
        });
    }
    if available > payload_len + 4 {
        return Err(IqError::TrailingBytes(available - payload_len - 4));
    }
    let body_end = HEADER_LEN + payload_len;
    let stored = u32_at(body_end);
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(IqError::ChecksumMismatch { stored, computed });
    }

    let data = bytes[HEADER_LEN..body_end]
        .chunks_exact(SAMPLE_LEN)
        .map(|s| {
            Complex32::new(
                f32::from_le_bytes(s[..4].try_into().expect("4 bytes")),
                f32::from_le_bytes(s[4..].try_into().expect("4 bytes")),
            )
        })
        .collect();
    Ok(IqRecording {
        waveform,
        node_id,
        cube: IqCube {
            chirps: chirps as usize,
            samples_per_chirp: samples as usize,
            data,
        },
    })
}

pub fn export_iq(path: &Path, rec: &IqRecording) -> Result<(), IqFileError> {
    let at = |source| IqFileError {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|e| at(e.into()))?;
    write_iq(BufWriter::new(file), rec).map_err(at)
}

pub fn ingest_iq(path: &Path) -> Result<IqRecording, IqFileError> {
    let at = |source| IqFileError {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(|e| at(e.into()))?;
    read_iq(BufReader::new(file)).map_err(at)
}
