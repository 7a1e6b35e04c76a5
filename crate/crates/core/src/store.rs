//! Portable storage of phase vectors and trajectories.
//!
//! A phase vector record is, all integers and floats little-endian:
//!
//! | offset | size | field                                  |
//! |-------:|-----:|----------------------------------------|
//! | 0      | 4    | magic `PHV1`                           |
//! | 4      | 1    | basis kind: 0 = fourier2d, 1 = sine    |
//! | 5      | 3    | reserved, zero                         |
//! | 8      | 8    | `f64` domain length (`L` or `ℓ`)       |
//! | 16     | 8    | `u64` modes (`K` or `M`)               |
//! | 24     | 8    | `u64` coefficient count `n`            |
//! | 32     | 8·n  | `f64` coefficients                     |
//!
//! A stored run is a directory holding `manifest.json` ([`RunManifest`]) and
//! `samples.bin`, the samples' records back to back in time order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{Basis, PhaseVector};
use crate::systems::Trajectory;

pub const MAGIC: [u8; 4] = *b"PHV1";
pub const HEADER_LEN: usize = 32;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.bin";

/// JSON description of one binary record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorDescriptor {
    pub format: String,
    pub basis: Basis,
    pub basis_id: String,
    pub coefficients: usize,
    pub bytes: usize,
}

pub fn describe(v: &PhaseVector) -> VectorDescriptor {
    VectorDescriptor {
        format: "PHV1".into(),
        basis: *v.basis(),
        basis_id: v.basis().id(),
        coefficients: v.coeffs().len(),
        bytes: HEADER_LEN + 8 * v.coeffs().len(),
    }
}

pub fn write_phase_vector<W: Write>(w: &mut W, v: &PhaseVector) -> std::io::Result<()> {
    let (kind, length, modes) = match *v.basis() {
        Basis::Fourier2d { length, modes } => (0u8, length, modes),
        Basis::Sine { length, modes } => (1u8, length, modes),
    };
    w.write_all(&MAGIC)?;
    w.write_all(&[kind, 0, 0, 0])?;
    w.write_all(&length.to_le_bytes())?;
    w.write_all(&(modes as u64).to_le_bytes())?;
    w.write_all(&(v.coeffs().len() as u64).to_le_bytes())?;
    for c in v.coeffs() {
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

pub fn encode_phase_vector(v: &PhaseVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * v.coeffs().len());
    write_phase_vector(&mut out, v).expect("writing to a Vec cannot fail");
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Decode(format!("need {n} bytes, {} left", buf.len())));
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().expect("8 bytes"))
}

/// Decode one record from the front of `buf`, advancing it.
pub fn read_phase_vector(buf: &mut &[u8]) -> Result<PhaseVector> {
    let head = take(buf, HEADER_LEN)?;
    if head[0..4] != MAGIC {
        return Err(Error::Decode(format!("bad magic {:?}", &head[0..4])));
    }
    if head[5..8] != [0, 0, 0] {
        return Err(Error::Decode("reserved header bytes must be zero".into()));
    }
    let length = f64::from_le_bytes(head[8..16].try_into().expect("8 bytes"));
    let modes = usize::try_from(le_u64(&head[16..24]))
        .map_err(|_| Error::Decode("mode count does not fit in memory".into()))?;
    let basis = match head[4] {
        0 => Basis::fourier2d(length, modes),
        1 => Basis::sine(length, modes),
        k => return Err(Error::Decode(format!("unknown basis kind {k}"))),
    };
    basis
        .validate()
        .map_err(|e| Error::Decode(format!("header: {e}")))?;
    let count = le_u64(&head[24..32]);
    if count != basis.coeff_len() as u64 {
        return Err(Error::Decode(format!(
            "{} expects {} coefficients, header says {count}",
            basis.id(),
            basis.coeff_len()
        )));
    }
    let body = take(buf, 8 * basis.coeff_len())?;
    let coeffs: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
        return Err(Error::Decode(format!("coefficient {i} is not finite")));
    }
    PhaseVector::from_coeffs(basis, coeffs)
}

/// Decode exactly one record.
pub fn decode_phase_vector(bytes: &[u8]) -> Result<PhaseVector> {
    let mut buf = bytes;
    let v = read_phase_vector(&mut buf)?;
    if !buf.is_empty() {
        return Err(Error::Decode(format!("{} trailing bytes", buf.len())));
    }
    Ok(v)
}

/// Decode back-to-back records sharing one basis.
pub fn decode_samples(bytes: &[u8]) -> Result<Vec<PhaseVector>> {
    let mut buf = bytes;
    let mut out: Vec<PhaseVector> = Vec::new();
    while !buf.is_empty() {
        let v = read_phase_vector(&mut buf)?;
        if let Some(first) = out.first() {
            if first.basis() != v.basis() {
                return Err(Error::Decode(format!(
                    "sample {} has basis {}, stream started with {}",
                    out.len(),
                    v.basis().id(),
                    first.basis().id()
                )));
            }
        }
        out.push(v);
    }
    Ok(out)
}

pub fn encode_samples(samples: &[PhaseVector]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in samples {
        write_phase_vector(&mut out, v).expect("writing to a Vec cannot fail");
    }
    out
}

/// Metadata of a stored run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub solver: String,
    pub symbol: String,
    pub basis: Basis,
    pub t_start: f64,
    pub dt: f64,
    pub samples: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub run: usize,
}

impl RunManifest {
    pub fn for_trajectory(u: &Trajectory, solver: &str, seed: Option<u64>, run: usize) -> Self {
        RunManifest {
            solver: solver.into(),
            symbol: u.symbol_id().into(),
            basis: *u.basis(),
            t_start: u.t_start(),
            dt: u.dt(),
            samples: u.len(),
            seed,
            run,
        }
    }
}

pub fn save_run(dir: &Path, u: &Trajectory, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SAMPLES_FILE), encode_samples(u.samples()))?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}

pub fn load_run(dir: &Path) -> Result<(RunManifest, Trajectory)> {
    let manifest: RunManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let samples = decode_samples(&fs::read(dir.join(SAMPLES_FILE))?)?;
    if samples.len() != manifest.samples {
        return Err(Error::Decode(format!(
            "manifest lists {} samples, stream holds {}",
            manifest.samples,
            samples.len()
        )));
    }
    if let Some(first) = samples.first() {
        manifest.basis.ensure_same(first.basis())?;
    }
    let u = Trajectory::new(manifest.t_start, manifest.dt, samples, manifest.symbol.clone())?;
    Ok((manifest, u))
}
