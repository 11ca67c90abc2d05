//! Binary episode log.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! header:  magic "GRPL" | version u16 | width u16 | height u16 | flags u16 | seed u64
//! record:  payload_len u32 | payload | crc32(payload) u32
//! ```
//!
//! Flag bit 0 marks an informed log (records carry privileged vectors).
//! [`SCHEMA`] documents the payload; [`write_schema`] writes it next to a log.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::camera::MaskImage;
use crate::dynamics::Action;
use crate::env::{Observation, PrivilegedObservation, StepInfo, StepResult};
use crate::flightplan::FLIGHT_PLAN_LEN;
use crate::reward::{GroundCause, RewardBreakdown, Termination};
use crate::track::{CrossingKind, GateCrossing};

pub const MAGIC: [u8; 4] = *b"GRPL";
pub const VERSION: u16 = 1;
const FLAG_INFORMED: u16 = 1;

pub const SCHEMA: &str = "\
gaterace replay v1 (little-endian)

header
  magic            [u8; 4]  \"GRPL\"
  version          u16
  width            u16      mask width, px
  height           u16      mask height, px
  flags            u16      bit 0: informed
  seed             u64

record (repeated until end of file)
  payload_len      u32
  payload          [u8; payload_len]
  crc32            u32      IEEE CRC-32 of payload

payload
  kind             u8       0 = reset, 1 = step
  step             u64      control steps completed
  action           f64 x 4  command passed to step (zeros for reset)
  mask             [u8; ceil(width*height/8)]  row-major, LSB-first bits
  rates            f64 x 3  measured body rates, rad/s
  motor_speeds     f64 x 4  measured motor speeds, rad/s
  flight_plan      f64 x 24
  privileged       f64 x 57 present iff informed:
                            p_w 3, p_g 3, v_w 3, v_g 3, roll pitch yaw yaw_g 4,
                            rates 3, motor_speeds 4, camera roll pitch yaw 3,
                            dynamics parameters 31
  reward           f64 x 4  progress, rate_penalty, gate, total
  termination      u8       0 none, 1 gate collision, 2 ground collision
  term_gate        u64      gate index (gate collision) else 0
  term_detail      u8       crossing kind 0 pre 1 main 2 post, or
                            ground cause 0 vertical speed 1 roll 2 pitch
  truncated        u8
  target_gate      u64
  laps             u64
  plan_index       u64
  plan_changed     u8
  speed            f64
  specific_thrust  f64      rotor thrust per unit mass k_w * sum(omega^2)
  n_crossings      u32
  crossings        n_crossings x (gate u64, kind u8, y f64, z f64)
";

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("not a replay file (bad magic)")]
    BadMagic,
    #[error("unsupported replay version {0}")]
    Version(u16),
    #[error("replay truncated in record {record}")]
    Truncated { record: usize },
    #[error("checksum mismatch in record {record}")]
    Checksum { record: usize },
    #[error("malformed record {record}: {message}")]
    Malformed { record: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplayHeader {
    pub width: u16,
    pub height: u16,
    pub informed: bool,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordKind {
    Reset,
    Step,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayRecord {
    pub kind: RecordKind,
    pub step: u64,
    pub action: [f64; 4],
    pub obs: Observation,
    pub privileged: Option<PrivilegedObservation>,
    pub reward: RewardBreakdown,
    pub termination: Termination,
    pub truncated: bool,
    pub info: StepInfo,
}

impl ReplayRecord {
    pub fn reset(obs: Observation, privileged: Option<PrivilegedObservation>) -> Self {
        Self {
            kind: RecordKind::Reset,
            step: 0,
            action: [0.0; 4],
            obs,
            privileged,
            reward: RewardBreakdown::default(),
            termination: Termination::None,
            truncated: false,
            info: StepInfo::default(),
        }
    }

    pub fn step(action: Action, result: &StepResult) -> Self {
        Self {
            kind: RecordKind::Step,
            step: result.info.step,
            action: action.0,
            obs: result.obs.clone(),
            privileged: result.privileged.clone(),
            reward: result.reward,
            termination: result.termination,
            truncated: result.truncated,
            info: result.info.clone(),
        }
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.push(match self.kind {
            RecordKind::Reset => 0,
            RecordKind::Step => 1,
        });
        out.extend_from_slice(&self.step.to_le_bytes());
        put_f64s(out, &self.action);
        out.extend_from_slice(&self.obs.mask.pack_bits());
        put_f64s(out, &self.obs.rates);
        put_f64s(out, &self.obs.motor_speeds);
        put_f64s(out, &self.obs.flight_plan);
        if let Some(p) = &self.privileged {
            put_f64s(out, &p.to_vec());
        }
        let r = &self.reward;
        put_f64s(out, &[r.progress, r.rate_penalty, r.gate, r.total]);
        let (code, gate, detail) = match self.termination {
            Termination::None => (0u8, 0u64, 0u8),
            Termination::GateCollision { gate_index, kind } => (1, gate_index, kind.code()),
            Termination::GroundCollision(cause) => (
                2,
                0,
                match cause {
                    GroundCause::VerticalSpeed => 0,
                    GroundCause::Roll => 1,
                    GroundCause::Pitch => 2,
                },
            ),
        };
        out.push(code);
        out.extend_from_slice(&gate.to_le_bytes());
        out.push(detail);
        out.push(self.truncated as u8);
        let i = &self.info;
        for v in [i.target_gate, i.laps, i.plan_index] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(i.plan_changed as u8);
        put_f64s(out, &[i.speed, i.specific_thrust]);
        out.extend_from_slice(&(i.crossings.len() as u32).to_le_bytes());
        for c in &i.crossings {
            out.extend_from_slice(&c.gate_index.to_le_bytes());
            out.push(c.kind.code());
            put_f64s(out, &[c.y, c.z]);
        }
    }

    fn decode(payload: &[u8], header: &ReplayHeader, record: usize) -> Result<Self, ReplayError> {
        let mut cur = Cursor {
            buf: payload,
            pos: 0,
            record,
        };
        let kind = match cur.u8()? {
            0 => RecordKind::Reset,
            1 => RecordKind::Step,
            k => return Err(cur.malformed(format!("unknown record kind {k}"))),
        };
        let step = cur.u64()?;
        let action = cur.f64s::<4>()?;
        let (w, h) = (header.width as usize, header.height as usize);
        let mask = MaskImage::unpack_bits(w, h, cur.bytes((w * h).div_ceil(8))?)
            .ok_or_else(|| cur.malformed("mask size".into()))?;
        let rates = cur.f64s::<3>()?;
        let motor_speeds = cur.f64s::<4>()?;
        let flight_plan = cur.f64s::<FLIGHT_PLAN_LEN>()?;
        let privileged = if header.informed {
            let v = cur.f64s::<{ PrivilegedObservation::LEN }>()?;
            Some(PrivilegedObservation::from_slice(&v).expect("length matches"))
        } else {
            None
        };
        let [progress, rate_penalty, gate, total] = cur.f64s::<4>()?;
        let code = cur.u8()?;
        let term_gate = cur.u64()?;
        let detail = cur.u8()?;
        let termination = match code {
            0 => Termination::None,
            1 => Termination::GateCollision {
                gate_index: term_gate,
                kind: CrossingKind::from_code(detail).ok_or_else(|| cur.malformed("crossing kind".into()))?,
            },
            2 => Termination::GroundCollision(match detail {
                0 => GroundCause::VerticalSpeed,
                1 => GroundCause::Roll,
                2 => GroundCause::Pitch,
                _ => return Err(cur.malformed("ground cause".into())),
            }),
            _ => return Err(cur.malformed(format!("termination code {code}"))),
        };
        let truncated = cur.u8()? != 0;
        let target_gate = cur.u64()?;
        let laps = cur.u64()?;
        let plan_index = cur.u64()?;
        let plan_changed = cur.u8()? != 0;
        let [speed, specific_thrust] = cur.f64s::<2>()?;
        let n = cur.u32()? as usize;
        let mut crossings = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let gate_index = cur.u64()?;
            let kind = CrossingKind::from_code(cur.u8()?).ok_or_else(|| cur.malformed("crossing kind".into()))?;
            let [y, z] = cur.f64s::<2>()?;
            crossings.push(GateCrossing { gate_index, kind, y, z });
        }
        if cur.pos != payload.len() {
            return Err(cur.malformed("trailing bytes".into()));
        }
        Ok(Self {
            kind,
            step,
            action,
            obs: Observation {
                mask,
                rates,
                motor_speeds,
                flight_plan,
            },
            privileged,
            reward: RewardBreakdown {
                progress,
                rate_penalty,
                gate,
                total,
            },
            termination,
            truncated,
            info: StepInfo {
                step,
                crossings,
                target_gate,
                laps,
                plan_index,
                plan_changed,
                speed,
                specific_thrust,
            },
        })
    }
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    record: usize,
}

impl<'a> Cursor<'a> {
    fn malformed(&self, message: String) -> ReplayError {
        ReplayError::Malformed {
            record: self.record,
            message,
        }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], ReplayError> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(self.malformed("payload shorter than its fields".into()));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ReplayError> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ReplayError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ReplayError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64s<const N: usize>(&mut self) -> Result<[f64; N], ReplayError> {
        let mut out = [0.0; N];
        for x in &mut out {
            *x = f64::from_le_bytes(self.bytes(8)?.try_into().unwrap());
        }
        Ok(out)
    }
}

/// Streams records to any writer.
pub struct ReplayWriter<W: Write> {
    inner: W,
    header: ReplayHeader,
    buf: Vec<u8>,
}

impl<W: Write> ReplayWriter<W> {
    pub fn new(mut inner: W, header: ReplayHeader) -> io::Result<Self> {
        inner.write_all(&MAGIC)?;
        inner.write_all(&VERSION.to_le_bytes())?;
        inner.write_all(&header.width.to_le_bytes())?;
        inner.write_all(&header.height.to_le_bytes())?;
        let flags = if header.informed { FLAG_INFORMED } else { 0 };
        inner.write_all(&flags.to_le_bytes())?;
        inner.write_all(&header.seed.to_le_bytes())?;
        Ok(Self {
            inner,
            header,
            buf: Vec::new(),
        })
    }

    pub fn write(&mut self, record: &ReplayRecord) -> io::Result<()> {
        let mask = &record.obs.mask;
        if mask.width() != self.header.width as usize
            || mask.height() != self.header.height as usize
            || record.privileged.is_some() != self.header.informed
        {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "record does not match the replay header",
            ));
        }
        self.buf.clear();
        record.encode(&mut self.buf);
        self.inner.write_all(&(self.buf.len() as u32).to_le_bytes())?;
        self.inner.write_all(&self.buf)?;
        self.inner.write_all(&crc32fast::hash(&self.buf).to_le_bytes())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn encode_replay(header: ReplayHeader, records: &[ReplayRecord]) -> io::Result<Vec<u8>> {
    let mut w = ReplayWriter::new(Vec::new(), header)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

pub fn decode_replay(mut reader: impl Read) -> Result<(ReplayHeader, Vec<ReplayRecord>), ReplayError> {
    let mut head = [0u8; 20];
    if let Err(e) = reader.read_exact(&mut head[..4]) {
        return Err(match e.kind() {
            io::ErrorKind::UnexpectedEof => ReplayError::BadMagic,
            _ => e.into(),
        });
    }
    if head[..4] != MAGIC {
        return Err(ReplayError::BadMagic);
    }
    reader.read_exact(&mut head[4..]).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ReplayError::Truncated { record: 0 },
        _ => e.into(),
    })?;
    let u16_at = |o: usize| u16::from_le_bytes([head[o], head[o + 1]]);
    let version = u16_at(4);
    if version != VERSION {
        return Err(ReplayError::Version(version));
    }
    let header = ReplayHeader {
        width: u16_at(6),
        height: u16_at(8),
        informed: u16_at(10) & FLAG_INFORMED != 0,
        seed: u64::from_le_bytes(head[12..20].try_into().unwrap()),
    };

    let mut records = Vec::new();
    loop {
        let record = records.len();
        let truncated = |e: io::Error| match e.kind() {
            io::ErrorKind::UnexpectedEof => ReplayError::Truncated { record },
            _ => e.into(),
        };
        let mut len = [0u8; 4];
        let got = read_up_to(&mut reader, &mut len)?;
        if got == 0 {
            break;
        }
        if got < 4 {
            return Err(ReplayError::Truncated { record });
        }
        let mut payload = vec![0u8; u32::from_le_bytes(len) as usize];
        reader.read_exact(&mut payload).map_err(truncated)?;
        let mut crc = [0u8; 4];
        reader.read_exact(&mut crc).map_err(truncated)?;
        if crc32fast::hash(&payload) != u32::from_le_bytes(crc) {
            return Err(ReplayError::Checksum { record });
        }
        records.push(ReplayRecord::decode(&payload, &header, record)?);
    }
    Ok((header, records))
}

fn read_up_to(reader: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match reader.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

pub fn write_replay(path: &Path, header: ReplayHeader, records: &[ReplayRecord]) -> io::Result<()> {
    let file = io::BufWriter::new(std::fs::File::create(path)?);
    let mut w = ReplayWriter::new(file, header)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_replay(path: &Path) -> Result<(ReplayHeader, Vec<ReplayRecord>), ReplayError> {
    decode_replay(io::BufReader::new(std::fs::File::open(path)?))
}

/// Writes [`SCHEMA`] to `<path>.schema.txt`.
pub fn write_schema(path: &Path) -> io::Result<std::path::PathBuf> {
    let mut name = path.as_os_str().to_owned();
    name.push(".schema.txt");
    let target = std::path::PathBuf::from(name);
    std::fs::write(&target, SCHEMA)?;
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Env, EnvConfig};

    fn episode(informed: bool, steps: usize) -> (ReplayHeader, Vec<ReplayRecord>) {
        let mut env = Env::new(EnvConfig {
            informed,
            ..EnvConfig::default()
        })
        .unwrap();
        let (obs, privileged) = env.reset(11);
        let mut records = vec![ReplayRecord::reset(obs, privileged)];
        for k in 0..steps {
            let a = Action::uniform(0.3 + 0.01 * (k % 7) as f64);
            let r = env.step(a).unwrap();
            let done = r.done();
            records.push(ReplayRecord::step(a, &r));
            if done {
                break;
            }
        }
        let header = ReplayHeader {
            width: 64,
            height: 64,
            informed,
            seed: 11,
        };
        (header, records)
    }

    #[test]
    fn round_trip() {
        for informed in [true, false] {
            let (header, records) = episode(informed, 30);
            let bytes = encode_replay(header, &records).unwrap();
            let (h, back) = decode_replay(&bytes[..]).unwrap();
            assert_eq!(h, header);
            assert_eq!(back, records);
            assert_eq!(encode_replay(h, &back).unwrap(), bytes);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let (header, records) = episode(true, 5);
        let bytes = encode_replay(header, &records).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_replay(&bad[..]), Err(ReplayError::BadMagic)));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_replay(&bad[..]), Err(ReplayError::Version(9))));

        // flip a byte inside the second record's payload
        let first_len = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
        let second = 20 + 4 + first_len + 4;
        let mut bad = bytes.clone();
        bad[second + 10] ^= 0x40;
        assert!(matches!(
            decode_replay(&bad[..]),
            Err(ReplayError::Checksum { record: 1 })
        ));

        let cut = &bytes[..bytes.len() - 3];
        let n = records.len() - 1;
        assert!(matches!(decode_replay(cut), Err(ReplayError::Truncated { record }) if record == n));

        assert!(matches!(decode_replay(&b""[..]), Err(ReplayError::BadMagic)));
    }

    #[test]
    fn schema_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ep.bin");
        let (header, records) = episode(false, 3);
        write_replay(&path, header, &records).unwrap();
        let schema = write_schema(&path).unwrap();
        assert!(schema.to_string_lossy().ends_with("ep.bin.schema.txt"));
        assert_eq!(read_replay(&path).unwrap().1, records);
    }
}
