//! `CPV1` perception message codec.
//!
//! Layout, all integers little-endian, all reals IEEE-754 binary64 LE:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CPV1"
//! 4       1     version (1)
//! 5       4     sender_id u32
//! 9       8     timestamp u64, microseconds
//! 17      1     payload_kind (1 = boxes, 2 = cloud)
//! 18      4     count u32
//! 22      ...   records
//! end-4   4     crc32 (IEEE) over every preceding byte
//! ```
//!
//! A box record is 61 bytes: center xyz, extent xyz, yaw (7 x f64), class u8
//! (0 vehicle, 1 pedestrian, 2 bicycle, 3 unknown), point_count u32. A cloud
//! record is 24 bytes: x, y, z.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::Micros;
use crate::geometry::{ClassLabel, OrientedBox, Vec3};

pub const MAGIC: [u8; 4] = *b"CPV1";
pub const VERSION: u8 = 1;
/// Fixed header through payload_kind.
pub const HEADER_LEN: usize = 18;
pub const COUNT_LEN: usize = 4;
pub const CRC_LEN: usize = 4;
pub const BOX_RECORD_LEN: usize = 61;
pub const POINT_RECORD_LEN: usize = 24;
/// Largest UDP payload over IPv4.
pub const MAX_DATAGRAM: usize = 65_507;

const KIND_BOXES: u8 = 1;
const KIND_CLOUD: u8 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("message too short: {0} bytes")]
    Truncated(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("unknown payload kind {0}")]
    UnknownPayloadKind(u8),
    #[error("length {actual} does not match {expected} implied by the record count")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("unknown class code {0}")]
    UnknownClass(u8),
    #[error("record {0} holds a non-finite or invalid value")]
    InvalidRecord(usize),
    #[error("encoded message is {0} bytes, above the {MAX_DATAGRAM}-byte datagram limit")]
    Oversize(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub bbox: OrientedBox,
    pub point_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Boxes(Vec<BoxRecord>),
    Cloud(Vec<Vec3>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionMessage {
    pub version: u8,
    pub sender_id: u32,
    pub timestamp: Micros,
    pub payload: Payload,
}

impl PerceptionMessage {
    pub fn boxes(sender_id: u32, timestamp: Micros, boxes: Vec<BoxRecord>) -> Self {
        Self { version: VERSION, sender_id, timestamp, payload: Payload::Boxes(boxes) }
    }

    pub fn cloud(sender_id: u32, timestamp: Micros, points: Vec<Vec3>) -> Self {
        Self { version: VERSION, sender_id, timestamp, payload: Payload::Cloud(points) }
    }

    pub fn encoded_len(&self) -> usize {
        let body = match &self.payload {
            Payload::Boxes(b) => b.len() * BOX_RECORD_LEN,
            Payload::Cloud(p) => p.len() * POINT_RECORD_LEN,
        };
        HEADER_LEN + COUNT_LEN + body + CRC_LEN
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(self.version);
        out.extend_from_slice(&self.sender_id.to_le_bytes());
        out.extend_from_slice(&self.timestamp.to_le_bytes());
        match &self.payload {
            Payload::Boxes(boxes) => {
                out.push(KIND_BOXES);
                out.extend_from_slice(&(boxes.len() as u32).to_le_bytes());
                for r in boxes {
                    let b = &r.bbox;
                    for v in [b.center.x, b.center.y, b.center.z, b.extent.x, b.extent.y, b.extent.z, b.yaw] {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                    out.push(b.class_label.code());
                    out.extend_from_slice(&r.point_count.to_le_bytes());
                }
            }
            Payload::Cloud(points) => {
                out.push(KIND_CLOUD);
                out.extend_from_slice(&(points.len() as u32).to_le_bytes());
                for p in points {
                    for v in [p.x, p.y, p.z] {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// [`encode`](Self::encode), refusing messages that do not fit one datagram.
    pub fn encode_datagram(&self) -> Result<Vec<u8>, WireError> {
        let len = self.encoded_len();
        if len > MAX_DATAGRAM {
            return Err(WireError::Oversize(len));
        }
        Ok(self.encode())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN + COUNT_LEN + CRC_LEN {
            return Err(WireError::Truncated(bytes.len()));
        }
        if bytes[0..4] != MAGIC {
            return Err(WireError::BadMagic);
        }
        let (body, trailer) = bytes.split_at(bytes.len() - CRC_LEN);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(WireError::CrcMismatch { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u8();
        if version != VERSION {
            return Err(WireError::UnsupportedVersion(version));
        }
        let sender_id = r.u32();
        let timestamp = r.u64();
        let kind = r.u8();
        let count = r.u32() as usize;
        let record_len = match kind {
            KIND_BOXES => BOX_RECORD_LEN,
            KIND_CLOUD => POINT_RECORD_LEN,
            other => return Err(WireError::UnknownPayloadKind(other)),
        };
        let expected =
            count.checked_mul(record_len).and_then(|n| n.checked_add(HEADER_LEN + COUNT_LEN + CRC_LEN)).unwrap_or(usize::MAX);
        if expected != bytes.len() {
            return Err(WireError::LengthMismatch { expected, actual: bytes.len() });
        }
        let payload = if kind == KIND_BOXES {
            let mut boxes = Vec::with_capacity(count);
            for i in 0..count {
                let vals: [f64; 7] = std::array::from_fn(|_| r.f64());
                let code = r.u8();
                let point_count = r.u32();
                let class_label = ClassLabel::from_code(code).ok_or(WireError::UnknownClass(code))?;
                let bbox = OrientedBox::new(
                    Vec3::new(vals[0], vals[1], vals[2]),
                    Vec3::new(vals[3], vals[4], vals[5]),
                    vals[6],
                    class_label,
                )
                .map_err(|_| WireError::InvalidRecord(i))?;
                // Keep the transmitted yaw bit-for-bit.
                let bbox = OrientedBox { yaw: vals[6], ..bbox };
                boxes.push(BoxRecord { bbox, point_count });
            }
            Payload::Boxes(boxes)
        } else {
            let mut points = Vec::with_capacity(count);
            for i in 0..count {
                let p = Vec3::new(r.f64(), r.f64(), r.f64());
                if !p.is_finite() {
                    return Err(WireError::InvalidRecord(i));
                }
                points.push(p);
            }
            Payload::Cloud(points)
        };
        Ok(Self { version, sender_id, timestamp, payload })
    }
}

/// Cursor over a buffer whose length has already been checked.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.buf[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

/// Largest cloud that fits one datagram.
pub const MAX_DATAGRAM_POINTS: usize = (MAX_DATAGRAM - HEADER_LEN - COUNT_LEN - CRC_LEN) / POINT_RECORD_LEN;

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PerceptionMessage {
        let a = OrientedBox::new(Vec3::new(1.5, -2.0, 0.75), Vec3::new(2.25, 0.9, 0.75), 0.3, ClassLabel::Vehicle).unwrap();
        let b = OrientedBox::new(Vec3::new(-4.0, 8.0, 0.9), Vec3::new(0.25, 0.25, 0.9), -1.2, ClassLabel::Pedestrian).unwrap();
        PerceptionMessage::boxes(
            7,
            1_200_000,
            vec![BoxRecord { bbox: a, point_count: 120 }, BoxRecord { bbox: b, point_count: 14 }],
        )
    }

    #[test]
    fn empty_boxes_message() {
        let m = PerceptionMessage::boxes(1, 0, vec![]);
        let bytes = m.encode();
        assert_eq!(bytes.len(), HEADER_LEN + COUNT_LEN + CRC_LEN);
        assert_eq!(PerceptionMessage::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn two_box_roundtrip() {
        let m = sample();
        let bytes = m.encode();
        assert_eq!(bytes.len(), m.encoded_len());
        assert_eq!(PerceptionMessage::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().encode();
        assert_eq!(&bytes[0..4], b"CPV1");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &7u32.to_le_bytes());
        assert_eq!(&bytes[9..17], &1_200_000u64.to_le_bytes());
        assert_eq!(bytes[17], 1);
        assert_eq!(&bytes[18..22], &2u32.to_le_bytes());
    }

    #[test]
    fn wrong_version_rejected() {
        let mut bytes = sample().encode();
        bytes[4] = 2;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(PerceptionMessage::decode(&bytes), Err(WireError::UnsupportedVersion(2)));
    }

    #[test]
    fn oversize_cloud_refused_for_datagrams() {
        let fits = PerceptionMessage::cloud(1, 0, vec![Vec3::ZERO; MAX_DATAGRAM_POINTS]);
        assert!(fits.encode_datagram().is_ok());
        let big = PerceptionMessage::cloud(1, 0, vec![Vec3::ZERO; MAX_DATAGRAM_POINTS + 1]);
        assert!(matches!(big.encode_datagram(), Err(WireError::Oversize(_))));
    }
}
