//! The `HTAG` binary time-tag format and its JSON sidecar.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic bytes "HTAG"
//! 4       2     format version, u16 (currently 1)
//! 6       8     record count, u64
//! 14      10·n  records
//! ```
//!
//! Each record is 10 bytes: channel `u8` (0 = B1, 1 = B2), reserved `u8`
//! (must be 0), timestamp `u64` in picoseconds since stream start.
//!
//! A sidecar JSON file next to each tag file carries the generating
//! [`SourceConfig`], which analysis needs for the acquisition duration.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Channel, SourceConfig, TimeTagRecord};

pub const MAGIC: [u8; 4] = *b"HTAG";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 14;
const RECORD_LEN: usize = 10;

/// Write a stream of records to `writer` and return the record count.
///
/// The count is patched into the header afterwards, so the stream can be
/// consumed lazily without buffering it.
pub fn write_stream<W: Write + Seek>(
    mut writer: W,
    records: impl IntoIterator<Item = TimeTagRecord>,
) -> Result<u64> {
    writer.write_all(&MAGIC)?;
    writer.write_all(&FORMAT_VERSION.to_le_bytes())?;
    writer.write_all(&0u64.to_le_bytes())?;

    let mut count: u64 = 0;
    let mut buf = [0u8; RECORD_LEN];
    for record in records {
        buf[0] = record.channel as u8;
        buf[1] = 0;
        buf[2..].copy_from_slice(&record.timestamp_ps.to_le_bytes());
        writer.write_all(&buf)?;
        count += 1;
    }

    writer.seek(SeekFrom::Start(6))?;
    writer.write_all(&count.to_le_bytes())?;
    writer.flush()?;
    Ok(count)
}

/// Write records to a file at `path`, creating or truncating it.
pub fn write_file(
    path: &Path,
    records: impl IntoIterator<Item = TimeTagRecord>,
) -> Result<u64> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    let count = write_stream(&mut writer, records)?;
    writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(count)
}

/// Streaming reader over an `HTAG` byte source.
pub struct TagReader<R: Read> {
    reader: R,
    expected: u64,
    read_so_far: u64,
}

impl<R: Read> TagReader<R> {
    /// Parse the header and position the reader at the first record.
    pub fn new(mut reader: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        reader.read_exact(&mut header).map_err(|_| Error::BadMagic {
            found: [header[0], header[1], header[2], header[3]],
        })?;
        if header[0..4] != MAGIC {
            return Err(Error::BadMagic {
                found: [header[0], header[1], header[2], header[3]],
            });
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let expected = u64::from_le_bytes(header[6..14].try_into().unwrap());
        Ok(Self {
            reader,
            expected,
            read_so_far: 0,
        })
    }

    /// Record count promised by the header.
    pub fn expected_records(&self) -> u64 {
        self.expected
    }
}

impl<R: Read> Iterator for TagReader<R> {
    type Item = Result<TimeTagRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read_so_far == self.expected {
            // The count is authoritative; trailing bytes are corruption.
            let mut probe = [0u8; 1];
            return match self.reader.read(&mut probe) {
                Ok(0) => None,
                Ok(_) => Some(Err(Error::CorruptRecord {
                    index: self.read_so_far,
                    reason: "trailing bytes after final record".into(),
                })),
                Err(e) => Some(Err(e.into())),
            };
        }
        let mut buf = [0u8; RECORD_LEN];
        if let Err(e) = self.reader.read_exact(&mut buf) {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                return Some(Err(Error::TruncatedFile {
                    expected: self.expected,
                    found: self.read_so_far,
                }));
            }
            return Some(Err(e.into()));
        }
        let index = self.read_so_far;
        self.read_so_far += 1;

        let Some(channel) = Channel::from_u8(buf[0]) else {
            return Some(Err(Error::CorruptRecord {
                index,
                reason: format!("invalid channel byte {}", buf[0]),
            }));
        };
        if buf[1] != 0 {
            return Some(Err(Error::CorruptRecord {
                index,
                reason: format!("reserved byte must be 0, found {}", buf[1]),
            }));
        }
        let timestamp_ps = u64::from_le_bytes(buf[2..].try_into().unwrap());
        Some(Ok(TimeTagRecord {
            channel,
            timestamp_ps,
        }))
    }
}

/// Read a whole `HTAG` file into memory.
pub fn read_file(path: &Path) -> Result<Vec<TimeTagRecord>> {
    let reader = TagReader::new(BufReader::new(File::open(path)?))?;
    reader.collect()
}

/// Open a streaming reader over an `HTAG` file.
pub fn open_file(path: &Path) -> Result<TagReader<BufReader<File>>> {
    TagReader::new(BufReader::new(File::open(path)?))
}

/// Sidecar contents: generating configuration plus a format marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub config: SourceConfig,
}

impl Sidecar {
    pub fn new(config: SourceConfig) -> Self {
        Self {
            format: format!("htag/{FORMAT_VERSION}"),
            config,
        }
    }
}

/// Sidecar path convention: the tag file's path with a `.json` extension.
pub fn sidecar_path(tag_path: &Path) -> PathBuf {
    tag_path.with_extension("json")
}

pub fn write_sidecar(tag_path: &Path, config: &SourceConfig) -> Result<()> {
    let file = File::create(sidecar_path(tag_path))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, &Sidecar::new(config.clone()))?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn read_sidecar(tag_path: &Path) -> Result<Sidecar> {
    let file = File::open(sidecar_path(tag_path))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    fn random_records(seed: u64, n: usize) -> Vec<TimeTagRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = 0u64;
        (0..n)
            .map(|_| {
                t += rng.random_range(0..5000);
                TimeTagRecord {
                    channel: if rng.random::<bool>() {
                        Channel::B1
                    } else {
                        Channel::B2
                    },
                    timestamp_ps: t,
                }
            })
            .collect()
    }

    fn round_trip(records: &[TimeTagRecord]) -> Vec<TimeTagRecord> {
        let mut buf = Cursor::new(Vec::new());
        let count = write_stream(&mut buf, records.iter().copied()).unwrap();
        assert_eq!(count, records.len() as u64);
        TagReader::new(Cursor::new(buf.into_inner()))
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap()
    }

    #[test]
    fn round_trips_random_streams() {
        for seed in 0..20 {
            let records = random_records(seed, 257);
            assert_eq!(round_trip(&records), records);
        }
        assert!(round_trip(&[]).is_empty());
    }

    #[test]
    fn layout_is_fixed() {
        let records = [TimeTagRecord {
            channel: Channel::B2,
            timestamp_ps: 0x0102_0304_0506_0708,
        }];
        let mut buf = Cursor::new(Vec::new());
        write_stream(&mut buf, records.iter().copied()).unwrap();
        let bytes = buf.into_inner();
        assert_eq!(&bytes[0..4], b"HTAG");
        assert_eq!(bytes[4..6], 1u16.to_le_bytes());
        assert_eq!(bytes[6..14], 1u64.to_le_bytes());
        assert_eq!(bytes[14], 1); // channel B2
        assert_eq!(bytes[15], 0); // reserved
        assert_eq!(bytes[16..24], 0x0102_0304_0506_0708u64.to_le_bytes());
        assert_eq!(bytes.len(), 24);
    }

    #[test]
    fn bad_magic_rejected() {
        let result = TagReader::new(Cursor::new(b"GATH\x01\x00".to_vec()));
        assert!(matches!(result, Err(Error::BadMagic { .. })));
    }

    #[test]
    fn unsupported_version_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"HTAG");
        bytes.extend_from_slice(&9u16.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        let result = TagReader::new(Cursor::new(bytes));
        assert!(matches!(result, Err(Error::UnsupportedVersion(9))));
    }

    #[test]
    fn truncation_detected() {
        let records = random_records(3, 10);
        let mut buf = Cursor::new(Vec::new());
        write_stream(&mut buf, records.iter().copied()).unwrap();
        let mut bytes = buf.into_inner();
        bytes.truncate(bytes.len() - 7);
        let result: Result<Vec<_>> = TagReader::new(Cursor::new(bytes)).unwrap().collect();
        assert!(matches!(result, Err(Error::TruncatedFile { .. })));
    }

    #[test]
    fn corrupt_channel_detected() {
        let records = random_records(4, 3);
        let mut buf = Cursor::new(Vec::new());
        write_stream(&mut buf, records.iter().copied()).unwrap();
        let mut bytes = buf.into_inner();
        bytes[HEADER_LEN] = 7;
        let result: Result<Vec<_>> = TagReader::new(Cursor::new(bytes)).unwrap().collect();
        assert!(matches!(result, Err(Error::CorruptRecord { index: 0, .. })));
    }

    #[test]
    fn file_and_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tags_d0.htag");
        let records = random_records(5, 1000);
        write_file(&path, records.iter().copied()).unwrap();
        assert_eq!(read_file(&path).unwrap(), records);

        let config = SourceConfig {
            pair_rate_cps: 100.0,
            duration_s: 2.0,
            seed: 1,
            delay_s: 0.0,
            mode_overlap: 1.0,
            profile: crate::wavepacket::SpectralProfile::filtered_downconversion(),
            bs: crate::fock::BeamsplitterParams::balanced(),
            loss: crate::fock::LossParams::unit(),
            detector: crate::event::DetectorModel::default(),
        };
        write_sidecar(&path, &config).unwrap();
        assert_eq!(sidecar_path(&path), dir.path().join("tags_d0.json"));
        let sidecar = read_sidecar(&path).unwrap();
        assert_eq!(sidecar.config, config);
        assert_eq!(sidecar.format, "htag/1");
    }
}
