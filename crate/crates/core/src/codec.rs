// SPDX-License-Identifier: Apache-2.0

//! Canonical byte layout of challenges, responses, CRP records and CRP
//! database files.
//!
//! All integers are little-endian and fixed width, reals are IEEE-754
//! binary64 bit patterns, and every variable-length field is prefixed with a
//! `u32` byte count. Encoding is canonical: decoding and re-encoding any
//! valid input reproduces it byte for byte.
//!
//! ```text
//! Challenge    id u64 | addr_s u64 | size_s u64 | segment_bits u16
//!              | ecc_len u32 | ecc bytes (ecc_len = 0: not yet enrolled)
//!              | bitstream_c_len u32 | bitstream_c | addr_d u64 | size_d u64
//!              | wrapper u8 (0 ones, 1 zeros, 2 checkered) | refresh_pause_s f64
//! Response     id u64 | bitstream_r_len u32 | bitstream_r
//! Environment  temperature_c f64 | noise_seed u64
//! CrpRecord    challenge_len u32 | Challenge | response_len u32 | Response
//!              | startup_bits u32 | startup bytes (startup_bits = 0: omitted)
//!              | Environment
//! MatchPolicy  kind u8 (0 static, 1 dynamic) | static_mt u64 | c f64
//!              | min_inter_hd u64 | buckets u32
//!              | buckets × (temperature_c f64 | mean f64 | std f64 | max u64)
//! Database     magic "CPUFCRP\0" | version u16 | status u8 (0 active, 1 retired)
//!              | device_id u64 | sram_bytes u64 | dram_bytes u64 | epoch u32
//!              | MatchPolicy | records u32 | records × (len u32 | CrpRecord)
//! ```

use crate::authenticator::{CrpDatabase, CrpRecord, DbStatus, DynamicThreshold, IntraStats, MatchPolicy};
use crate::ecc::EccData;
use crate::entropy::{Bits, Environment, WrapperPattern};
use crate::error::{Error, Result};
use crate::pipeline::{Challenge, Response};

pub const DB_MAGIC: &[u8; 8] = b"CPUFCRP\0";
pub const DB_VERSION: u16 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(u32::try_from(b.len()).expect("field longer than 4 GiB"));
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Decode(format!(
                "truncated: need {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Decode(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_challenge(w: &mut Writer, c: &Challenge) {
    w.u64(c.id);
    w.u64(c.addr_s);
    w.u64(c.size_s);
    w.u16(u16::try_from(c.segment_bits).expect("segment size fits u16"));
    match &c.ecc_data {
        Some(e) => w.bytes(&e.to_bytes()),
        None => w.bytes(&[]),
    }
    w.bytes(&c.bitstream_c);
    w.u64(c.addr_d);
    w.u64(c.size_d());
    w.u8(c.wrapper.code());
    w.f64(c.refresh_pause_s);
}

fn get_challenge(r: &mut Reader) -> Result<Challenge> {
    let id = r.u64()?;
    let addr_s = r.u64()?;
    let size_s = r.u64()?;
    let segment_bits = r.u16()? as usize;
    let ecc_raw = r.bytes()?;
    let bitstream_c = r.bytes()?.to_vec();
    let addr_d = r.u64()?;
    let size_d = r.u64()?;
    let wrapper = WrapperPattern::from_code(r.u8()?)?;
    let refresh_pause_s = r.f64()?;
    if size_d != bitstream_c.len() as u64 {
        return Err(Error::Decode(format!(
            "Size_D {size_d} disagrees with Bitstream_C length {}",
            bitstream_c.len()
        )));
    }
    let ecc_data = if ecc_raw.is_empty() {
        None
    } else {
        let bits = size_s
            .checked_mul(8)
            .filter(|b| b.div_ceil(8) == ecc_raw.len() as u64)
            .ok_or_else(|| Error::Decode("correction data length disagrees with Size_S".into()))?;
        Some(EccData::from_parts(segment_bits, bits_from(ecc_raw, bits as usize)?)?)
    };
    Ok(Challenge {
        id,
        addr_s,
        size_s,
        segment_bits,
        ecc_data,
        bitstream_c,
        addr_d,
        wrapper,
        refresh_pause_s,
    })
}

/// Rebuilds a bit-vector of `len` bits; padding bits must be zero.
fn bits_from(raw: &[u8], len: usize) -> Result<Bits> {
    if raw.len() != len.div_ceil(8) {
        return Err(Error::Decode(format!("{} bytes cannot hold exactly {len} bits", raw.len())));
    }
    let mut bits = Bits::from_slice(raw);
    if bits[len..].any() {
        return Err(Error::Decode("non-zero padding bits".into()));
    }
    bits.truncate(len);
    Ok(bits)
}

fn put_response(w: &mut Writer, r: &Response) {
    w.u64(r.id);
    w.bytes(&r.bitstream_r);
}

fn get_response(r: &mut Reader) -> Result<Response> {
    Ok(Response { id: r.u64()?, bitstream_r: r.bytes()?.to_vec() })
}

fn put_env(w: &mut Writer, e: &Environment) {
    w.f64(e.temperature_c);
    w.u64(e.noise_seed);
}

fn get_env(r: &mut Reader) -> Result<Environment> {
    let t = r.f64()?;
    let seed = r.u64()?;
    Environment::new(t, seed).map_err(|e| Error::Decode(e.to_string()))
}

pub fn encode_challenge(c: &Challenge) -> Vec<u8> {
    let mut w = Writer::default();
    put_challenge(&mut w, c);
    w.0
}

pub fn decode_challenge(buf: &[u8]) -> Result<Challenge> {
    let mut r = Reader::new(buf);
    let c = get_challenge(&mut r)?;
    r.finish()?;
    Ok(c)
}

pub fn encode_response(resp: &Response) -> Vec<u8> {
    let mut w = Writer::default();
    put_response(&mut w, resp);
    w.0
}

pub fn decode_response(buf: &[u8]) -> Result<Response> {
    let mut r = Reader::new(buf);
    let resp = get_response(&mut r)?;
    r.finish()?;
    Ok(resp)
}

pub fn encode_record(rec: &CrpRecord) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(&encode_challenge(&rec.challenge));
    w.bytes(&encode_response(&rec.golden_response));
    match &rec.golden_startup {
        Some(bits) => {
            w.u32(bits.len() as u32);
            w.0.extend_from_slice(&bits.clone().into_vec());
        }
        None => w.u32(0),
    }
    put_env(&mut w, &rec.enrollment_env);
    w.0
}

pub fn decode_record(buf: &[u8]) -> Result<CrpRecord> {
    let mut r = Reader::new(buf);
    let challenge = decode_challenge(r.bytes()?)?;
    let golden_response = decode_response(r.bytes()?)?;
    let startup_bits = r.u32()? as usize;
    let golden_startup = if startup_bits == 0 {
        None
    } else {
        Some(bits_from(r.take(startup_bits.div_ceil(8))?, startup_bits)?)
    };
    let enrollment_env = get_env(&mut r)?;
    r.finish()?;
    Ok(CrpRecord { challenge, golden_response, golden_startup, enrollment_env })
}

fn put_policy(w: &mut Writer, p: &MatchPolicy) {
    match p {
        MatchPolicy::Static { mt } => {
            w.u8(0);
            w.u64(*mt);
            w.f64(0.0);
            w.u64(0);
            w.u32(0);
        }
        MatchPolicy::Dynamic(d) => {
            w.u8(1);
            w.u64(0);
            w.f64(d.c);
            w.u64(d.min_inter_hd);
            w.u32(d.buckets.len() as u32);
            for b in &d.buckets {
                w.f64(b.temperature_c);
                w.f64(b.mean);
                w.f64(b.std);
                w.u64(b.max);
            }
        }
    }
}

fn get_policy(r: &mut Reader) -> Result<MatchPolicy> {
    let kind = r.u8()?;
    let static_mt = r.u64()?;
    let c = r.f64()?;
    let min_inter_hd = r.u64()?;
    let n = r.u32()? as usize;
    let mut buckets = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        buckets.push(IntraStats { temperature_c: r.f64()?, mean: r.f64()?, std: r.f64()?, max: r.u64()? });
    }
    match kind {
        0 if c.to_bits() == 0 && min_inter_hd == 0 && n == 0 => Ok(MatchPolicy::Static { mt: static_mt }),
        0 => Err(Error::Decode("static policy with dynamic fields set".into())),
        1 if static_mt == 0 => Ok(MatchPolicy::Dynamic(DynamicThreshold { c, buckets, min_inter_hd })),
        1 => Err(Error::Decode("dynamic policy with a static threshold".into())),
        k => Err(Error::Decode(format!("unknown policy kind {k}"))),
    }
}

pub fn encode_database(db: &CrpDatabase) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(DB_MAGIC);
    w.u16(DB_VERSION);
    w.u8(match db.status {
        DbStatus::Active => 0,
        DbStatus::Retired => 1,
    });
    w.u64(db.device_id);
    w.u64(db.sram_bytes);
    w.u64(db.dram_bytes);
    w.u32(db.epoch);
    put_policy(&mut w, &db.policy);
    w.u32(db.records.len() as u32);
    for rec in &db.records {
        w.bytes(&encode_record(rec));
    }
    w.0
}

pub fn decode_database(buf: &[u8]) -> Result<CrpDatabase> {
    let mut r = Reader::new(buf);
    if r.take(8)? != DB_MAGIC {
        return Err(Error::Decode("not a CRP database (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != DB_VERSION {
        return Err(Error::Decode(format!("unsupported database version {version}")));
    }
    let status = match r.u8()? {
        0 => DbStatus::Active,
        1 => DbStatus::Retired,
        s => return Err(Error::Decode(format!("unknown database status {s}"))),
    };
    let device_id = r.u64()?;
    let sram_bytes = r.u64()?;
    let dram_bytes = r.u64()?;
    let epoch = r.u32()?;
    let policy = get_policy(&mut r)?;
    let n = r.u32()? as usize;
    let mut records = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        records.push(decode_record(r.bytes()?)?);
    }
    r.finish()?;
    Ok(CrpDatabase { device_id, sram_bytes, dram_bytes, epoch, status, policy, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_challenge(ecc: bool) -> Challenge {
        let mut c = Challenge::template(9, 64, vec![0xA5; 64], 4096);
        if ecc {
            let golden = Bits::from_slice(&[0x3C; 32]);
            c.ecc_data = Some(crate::ecc::gen_err_corr_data(&golden, 8).unwrap());
        }
        c
    }

    #[test]
    fn challenge_layout_is_stable() {
        let bytes = encode_challenge(&sample_challenge(false));
        // id, addr_s, size_s, segment_bits, ecc_len
        assert_eq!(&bytes[..8], &9u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &64u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &32u64.to_le_bytes());
        assert_eq!(&bytes[24..26], &8u16.to_le_bytes());
        assert_eq!(&bytes[26..30], &0u32.to_le_bytes());
        assert_eq!(&bytes[30..34], &64u32.to_le_bytes());
        assert_eq!(bytes.len(), 8 + 8 + 8 + 2 + 4 + 4 + 64 + 8 + 8 + 1 + 8);
        assert_eq!(&bytes[bytes.len() - 8..], &40f64.to_bits().to_le_bytes());
    }

    #[test]
    fn challenge_round_trip() {
        for ecc in [false, true] {
            let c = sample_challenge(ecc);
            let bytes = encode_challenge(&c);
            let back = decode_challenge(&bytes).unwrap();
            assert_eq!(back, c);
            assert_eq!(encode_challenge(&back), bytes);
        }
    }

    #[test]
    fn rejects_malformed() {
        let bytes = encode_challenge(&sample_challenge(true));
        assert!(decode_challenge(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_challenge(&extra).is_err());
        let mut bad_wrapper = bytes.clone();
        let n = bad_wrapper.len();
        bad_wrapper[n - 9] = 7;
        assert!(decode_challenge(&bad_wrapper).is_err());
        assert!(decode_database(b"NOTADB\0\0").is_err());
    }

    #[test]
    fn response_layout() {
        let r = Response { id: 3, bitstream_r: vec![1, 2, 3] };
        let bytes = encode_response(&r);
        assert_eq!(bytes, [3, 0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0, 1, 2, 3]);
        assert_eq!(decode_response(&bytes).unwrap(), r);
    }
}
