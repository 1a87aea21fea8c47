use std::collections::BTreeMap;
use std::path::Path;

use gsnmf::engine::GammaFactor;
use gsnmf::{GroupAssignment, GroupMode, Hyperparameters, VariationalState};
use ndarray::Array2;

use super::{read_file, write_atomic, IoError};

const MAGIC: &[u8; 4] = b"GSMA";
const VERSION: u8 = 1;

/// Bound trace of one restart.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace {
    pub seed: u64,
    /// `(sweep, bound)` pairs.
    pub bound: Vec<(usize, f64)>,
}

/// A fitted model: priors, groups, the best restart's posterior and every
/// restart's bound trace (best first).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    /// Base seed of the fit.
    pub seed: u64,
    pub hyperparameters: Hyperparameters,
    pub groups: GroupAssignment,
    pub state: VariationalState,
    pub traces: Vec<RestartTrace>,
}

const MATRICES: [&str; 24] = [
    "prior.dictionary_shape",
    "prior.dictionary_scale",
    "prior.rate_shape",
    "prior.rate_scale",
    "prior.dirichlet",
    "dictionary.shape",
    "dictionary.scale",
    "dictionary.mean",
    "dictionary.log_mean",
    "coefficients.shape",
    "coefficients.scale",
    "coefficients.mean",
    "coefficients.log_mean",
    "rates.shape",
    "rates.scale",
    "rates.mean",
    "rates.log_mean",
    "dictionary_counts",
    "coefficient_counts",
    "responsibilities",
    "weight_concentration",
    "log_weights",
    "allocation_dictionary",
    "allocation_coefficients",
];

fn matrices(archive: &ModelArchive) -> [&Array2<f64>; 24] {
    let h = &archive.hyperparameters;
    let s = &archive.state;
    [
        h.dictionary_shape(),
        h.dictionary_scale(),
        h.rate_shape(),
        h.rate_scale(),
        h.dirichlet(),
        &s.dictionary.shape,
        &s.dictionary.scale,
        &s.dictionary.mean,
        &s.dictionary.log_mean,
        &s.coefficients.shape,
        &s.coefficients.scale,
        &s.coefficients.mean,
        &s.coefficients.log_mean,
        &s.rates.shape,
        &s.rates.scale,
        &s.rates.mean,
        &s.rates.log_mean,
        &s.dictionary_counts,
        &s.coefficient_counts,
        &s.responsibilities,
        &s.weight_concentration,
        &s.log_weights,
        &s.allocation_dictionary,
        &s.allocation_coefficients,
    ]
}

/// Layout: `"GSMA"`, version byte, then little-endian fields: seed, sweeps,
/// group count, mode byte (0 observed, 1 latent), label count and labels,
/// trace count and for each trace its seed, length and `(sweep, bound)`
/// pairs, then matrix count and for each matrix a u16 name length, the name,
/// rows, cols and row-major f64 entries.
pub fn encode_archive(archive: &ModelArchive) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    put_u64(&mut out, archive.seed);
    put_u64(&mut out, archive.state.sweeps as u64);
    put_u64(&mut out, archive.groups.groups() as u64);
    match archive.groups.mode() {
        GroupMode::Observed(z) => {
            out.push(0);
            put_u64(&mut out, z.len() as u64);
            for &l in z {
                put_u64(&mut out, l as u64);
            }
        }
        GroupMode::Latent => {
            out.push(1);
            put_u64(&mut out, 0);
        }
    }
    put_u64(&mut out, archive.traces.len() as u64);
    for trace in &archive.traces {
        put_u64(&mut out, trace.seed);
        put_u64(&mut out, trace.bound.len() as u64);
        for &(sweep, bound) in &trace.bound {
            put_u64(&mut out, sweep as u64);
            out.extend_from_slice(&bound.to_le_bytes());
        }
    }
    let mats = matrices(archive);
    put_u64(&mut out, mats.len() as u64);
    for (name, m) in MATRICES.iter().zip(mats) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        put_u64(&mut out, m.nrows() as u64);
        put_u64(&mut out, m.ncols() as u64);
        for &x in m.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(IoError::Truncated {
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn usize(&mut self) -> Result<usize, IoError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| IoError::Header(format!("count {v} does not fit in memory")))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    /// A length that must be backed by at least `unit` bytes per element.
    fn count(&mut self, unit: usize) -> Result<usize, IoError> {
        let n = self.usize()?;
        let remaining = self.bytes.len() - self.pos;
        if n.checked_mul(unit).is_none_or(|b| b > remaining) {
            return Err(IoError::Truncated {
                expected: n.saturating_mul(unit),
                found: remaining,
            });
        }
        Ok(n)
    }
}

pub fn decode_archive(bytes: &[u8]) -> Result<ModelArchive, IoError> {
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(IoError::Header("missing GSMA magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(IoError::Header(format!(
            "unsupported archive version {}",
            bytes[4]
        )));
    }
    let mut r = Reader { bytes, pos: 5 };
    let seed = r.u64()?;
    let sweeps = r.usize()?;
    let group_count = r.usize()?;
    let mode = r.take(1)?[0];
    let label_count = r.count(8)?;
    let labels = (0..label_count)
        .map(|_| r.usize())
        .collect::<Result<Vec<_>, _>>()?;
    let groups = match mode {
        0 => GroupAssignment::observed(labels, group_count)?,
        1 if labels.is_empty() => GroupAssignment::latent(group_count)?,
        1 => return Err(IoError::Header("latent archive carries labels".into())),
        m => return Err(IoError::Header(format!("unknown group mode {m}"))),
    };
    let trace_count = r.count(16)?;
    let mut traces = Vec::with_capacity(trace_count);
    for _ in 0..trace_count {
        let seed = r.u64()?;
        let len = r.count(16)?;
        let bound = (0..len)
            .map(|_| Ok((r.usize()?, r.f64()?)))
            .collect::<Result<Vec<_>, IoError>>()?;
        traces.push(RestartTrace { seed, bound });
    }
    let matrix_count = r.count(2)?;
    let mut found = BTreeMap::new();
    for _ in 0..matrix_count {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| IoError::Header("matrix name is not UTF-8".into()))?
            .to_owned();
        let rows = r.usize()?;
        let cols = r.usize()?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| IoError::Header(format!("{name}: shape {rows}×{cols} is too large")))?;
        let raw = r.take(
            len.checked_mul(8)
                .ok_or_else(|| IoError::Header(format!("{name}: too large")))?,
        )?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let m = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| IoError::Shape(e.to_string()))?;
        if !MATRICES.contains(&name.as_str()) {
            return Err(IoError::Header(format!("unknown matrix {name:?}")));
        }
        if found.insert(name.clone(), m).is_some() {
            return Err(IoError::Header(format!("duplicate matrix {name:?}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(IoError::Header(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let mut take = |name: &str| {
        found
            .remove(name)
            .ok_or_else(|| IoError::Header(format!("missing matrix {name:?}")))
    };
    let hyperparameters = Hyperparameters::new(
        take("prior.dictionary_shape")?,
        take("prior.dictionary_scale")?,
        take("prior.rate_shape")?,
        take("prior.rate_scale")?,
        take("prior.dirichlet")?,
    )?;
    let mut factor = |prefix: &str| -> Result<GammaFactor, IoError> {
        Ok(GammaFactor {
            shape: take(&format!("{prefix}.shape"))?,
            scale: take(&format!("{prefix}.scale"))?,
            mean: take(&format!("{prefix}.mean"))?,
            log_mean: take(&format!("{prefix}.log_mean"))?,
        })
    };
    let dictionary = factor("dictionary")?;
    let coefficients = factor("coefficients")?;
    let rates = factor("rates")?;
    let state = VariationalState {
        dictionary,
        coefficients,
        rates,
        dictionary_counts: take("dictionary_counts")?,
        coefficient_counts: take("coefficient_counts")?,
        responsibilities: take("responsibilities")?,
        weight_concentration: take("weight_concentration")?,
        log_weights: take("log_weights")?,
        allocation_dictionary: take("allocation_dictionary")?,
        allocation_coefficients: take("allocation_coefficients")?,
        sweeps,
    };
    let archive = ModelArchive {
        seed,
        hyperparameters,
        groups,
        state,
        traces,
    };
    check_consistency(&archive)?;
    Ok(archive)
}

fn check_consistency(archive: &ModelArchive) -> Result<(), IoError> {
    let d = archive.hyperparameters.dims();
    let s = &archive.state;
    let expect = |what: &str, m: &Array2<f64>, shape: (usize, usize)| {
        if m.dim() == shape {
            Ok(())
        } else {
            Err(IoError::Shape(format!(
                "{what}: expected {shape:?}, found {:?}",
                m.dim()
            )))
        }
    };
    let (v, i, c, t) = (d.observed, d.features, d.groups, d.samples);
    for (what, f, shape) in [
        ("dictionary", &s.dictionary, (v, i)),
        ("coefficients", &s.coefficients, (i, t)),
        ("rates", &s.rates, (i, c)),
    ] {
        for m in [&f.shape, &f.scale, &f.mean, &f.log_mean] {
            expect(what, m, shape)?;
        }
    }
    expect("dictionary_counts", &s.dictionary_counts, (v, i))?;
    expect("coefficient_counts", &s.coefficient_counts, (i, t))?;
    expect("allocation_dictionary", &s.allocation_dictionary, (v, i))?;
    expect(
        "allocation_coefficients",
        &s.allocation_coefficients,
        (i, t),
    )?;
    for (what, m) in [
        ("responsibilities", &s.responsibilities),
        ("weight_concentration", &s.weight_concentration),
        ("log_weights", &s.log_weights),
    ] {
        expect(what, m, (t, c))?;
    }
    if archive.groups.groups() != c {
        return Err(IoError::Shape(format!(
            "{} groups in assignment, {c} in priors",
            archive.groups.groups()
        )));
    }
    if let Some(z) = archive.groups.labels() {
        if z.len() != t {
            return Err(IoError::Shape(format!(
                "{} labels for {t} samples",
                z.len()
            )));
        }
    }
    Ok(())
}

pub fn load_archive(path: &Path) -> Result<ModelArchive, IoError> {
    decode_archive(&read_file(path)?)
}

pub fn save_archive(archive: &ModelArchive, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &encode_archive(archive))
}
