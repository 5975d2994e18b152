//! File formats: CSV series with `#` metadata lines, and the binary network
//! checkpoint.
//!
//! Floats are written in Rust's shortest round-trip form, so every file
//! reads back bit-identically.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use reflector_core::deconv::IterationRow;
use reflector_core::density::TargetSpec;
use reflector_core::geometry::{DomainSpec, ReflectorProfile, TabulatedProfile};
use reflector_core::limitcase::{PolarReflector, ScalingRow};
use reflector_core::mlp::{Activation, MlpParams};
use reflector_core::optim::TraceRow;
use reflector_core::raytrace::FarFieldHistogram;

use crate::bench::SweepRow;
use crate::CliError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RFLNET01";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// A table of named float columns with `key=value` metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { meta: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn meta(&self, key: &str) -> Result<&str, CliError> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CliError::Io(format!("missing metadata `{key}`")))
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64, CliError> {
        let v = self.meta(key)?;
        v.parse().map_err(|_| CliError::Io(format!("metadata `{key}` = `{v}` is not a number")))
    }

    pub fn meta_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.meta(key)?
            .split(';')
            .map(|x| x.parse().map_err(|_| CliError::Io(format!("metadata `{key}` is not a number list"))))
            .collect()
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let i = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Io(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CliError> {
        let e = |e: std::io::Error| CliError::Io(e.to_string());
        for (k, v) in &self.meta {
            writeln!(w, "# {k}={v}").map_err(e)?;
        }
        let mut csv = csv::Writer::from_writer(w);
        let ce = |e: csv::Error| CliError::Io(e.to_string());
        csv.write_record(&self.columns).map_err(ce)?;
        for r in &self.rows {
            csv.write_record(r.iter().map(|v| v.to_string())).map_err(ce)?;
        }
        csv.flush().map_err(e)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, CliError> {
        let mut reader = BufReader::new(r);
        let mut meta = Vec::new();
        let mut body = String::new();
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(|e| CliError::Io(e.to_string()))?;
            if n == 0 {
                break;
            }
            if let Some(m) = line.strip_prefix('#') {
                let m = m.trim();
                let (k, v) = m.split_once('=').ok_or_else(|| CliError::Io(format!("bad metadata line `{m}`")))?;
                meta.push((k.trim().to_string(), v.trim().to_string()));
            } else {
                body.push_str(&line);
            }
        }
        let mut csv = csv::Reader::from_reader(body.as_bytes());
        let columns: Vec<String> = csv
            .headers()
            .map_err(|e| CliError::Io(e.to_string()))?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in csv.records() {
            let rec = rec.map_err(|e| CliError::Io(e.to_string()))?;
            let row: Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|e| CliError::Io(format!("row {}: {e}", rows.len() + 1)))?);
        }
        Ok(Table { meta, columns, rows })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
        self.write_to(std::io::BufWriter::new(f)).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
        Self::read_from(f).map_err(|e| io_err(path, e))
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn domain_list(d: &DomainSpec) -> String {
    join(&[d.l_min, d.l_max, d.alpha_min, d.alpha_max, d.t_min, d.t_max])
}

fn parse_domain(t: &Table) -> Result<DomainSpec, CliError> {
    let v = t.meta_list("domain")?;
    if v.len() != 6 {
        return Err(CliError::Io("domain needs six bounds".into()));
    }
    DomainSpec::new((v[0], v[1]), (v[2], v[3]), (v[4], v[5])).map_err(|e| CliError::Io(format!("domain: {e}")))
}

pub fn histogram_table(h: &FarFieldHistogram, domain: &DomainSpec) -> Table {
    let mut t = Table::new(&["bin_left", "bin_right", "weight"])
        .with_meta("n_rays", h.n_rays)
        .with_meta("domain", domain_list(domain))
        .with_meta("total", h.total)
        .with_meta("miss_flux", h.miss_flux)
        .with_meta("misses", h.misses)
        .with_meta("failures", h.failures)
        .with_meta("failed_flux", h.failed_flux);
    for (i, w) in h.weights.iter().enumerate() {
        t.push(vec![h.edges[i], h.edges[i + 1], *w]);
    }
    t
}

pub fn histogram_from_table(t: &Table) -> Result<(FarFieldHistogram, DomainSpec), CliError> {
    let left = t.column("bin_left")?;
    let right = t.column("bin_right")?;
    let weights = t.column("weight")?;
    if weights.is_empty() {
        return Err(CliError::Io("histogram has no bins".into()));
    }
    let mut edges = left;
    edges.push(*right.last().expect("nonempty"));
    let count = |k: &str| -> Result<usize, CliError> {
        t.meta(k)?.parse().map_err(|_| CliError::Io(format!("metadata `{k}` is not a count")))
    };
    let h = FarFieldHistogram {
        edges,
        weights,
        total: t.meta_f64("total")?,
        miss_flux: t.meta_f64("miss_flux")?,
        misses: count("misses")?,
        failures: count("failures")?,
        failed_flux: t.meta_f64("failed_flux")?,
        n_rays: count("n_rays")?,
    };
    Ok((h, parse_domain(t)?))
}

pub fn target_table(g: &TargetSpec) -> Table {
    let (lo, hi) = g.bounds();
    let mut t = Table::new(&["sigma", "density"]).with_meta("t_min", lo).with_meta("t_max", hi);
    for (c, v) in g.centers().into_iter().zip(g.samples()) {
        t.push(vec![c, *v]);
    }
    t
}

pub fn target_from_table(t: &Table) -> Result<TargetSpec, CliError> {
    TargetSpec::from_samples(t.meta_f64("t_min")?, t.meta_f64("t_max")?, t.column("density")?).map_err(CliError::from)
}

/// Heights sampled on `nodes` equispaced abscissae.
pub fn profile_table<P: ReflectorProfile + ?Sized>(prof: &P, nodes: usize) -> Table {
    let d = prof.domain();
    let mut t = Table::new(&["s", "u"]).with_meta("domain", domain_list(d));
    for i in 0..nodes {
        let s = d.l_min + d.omega_len() * i as f64 / (nodes - 1) as f64;
        t.push(vec![s, prof.height(s)]);
    }
    t
}

/// A profile read back from its height samples; slopes come from
/// fourth-order differences.
pub fn profile_from_table(t: &Table) -> Result<TabulatedProfile, CliError> {
    let d = parse_domain(t)?;
    let u = t.column("u")?;
    if u.len() < 5 {
        return Err(CliError::Io("profile needs at least five samples".into()));
    }
    let du = reflector_core::deconv::fd_slopes(&u, d.omega_len() / (u.len() - 1) as f64);
    TabulatedProfile::from_samples(d, u, du).map_err(CliError::from)
}

pub fn optim_trace_table(rows: &[TraceRow]) -> Table {
    let mut t = Table::new(&["iteration", "loss", "grad_norm", "elapsed_s"]);
    for r in rows {
        t.push(vec![r.iteration as f64, r.loss, r.grad_norm, r.elapsed_s]);
    }
    t
}

pub fn deconv_trace_table(rows: &[IterationRow]) -> Table {
    let mut t = Table::new(&["iteration", "nmae", "min_u", "h"]);
    for r in rows {
        t.push(vec![r.iteration as f64, r.nmae, r.min_height, r.h]);
    }
    t
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&["factor", "h_min", "nn_nmae", "nn_min_u", "deconv_nmae", "deconv_min_u"]);
    for r in rows {
        t.push(vec![r.factor, r.h_min, r.nn_nmae, r.nn_min_height, r.deconv_nmae, r.deconv_min_height]);
    }
    t
}

pub fn scaling_table(rows: &[ScalingRow]) -> Table {
    let mut t = Table::new(&["lambda", "max_error", "s_spread"]);
    for r in rows {
        t.push(vec![r.lambda, r.max_error, r.s_spread]);
    }
    t
}

pub fn polar_table(r: &PolarReflector) -> Table {
    let mut t = Table::new(&["alpha", "rho"]);
    for (a, p) in r.alpha.iter().zip(&r.rho) {
        t.push(vec![*a, *p]);
    }
    t
}

/// Little-endian checkpoint:
///
/// | bytes | field |
/// |---|---|
/// | 8 | magic `RFLNET01` |
/// | 4 | version (u32) |
/// | 4 | layer count `L` (u32) |
/// | 4·L | layer widths (u32) |
/// | 8 | seed (u64) |
/// | 1 + 1 | hidden and output activation tags |
/// | 8 + 8 | input range (f64) |
/// | 8 | parameter count `n` (u64) |
/// | 8·n | parameters (f64) |
pub fn encode_checkpoint(net: &MlpParams) -> Vec<u8> {
    let mut b = Vec::with_capacity(64 + 8 * net.len());
    b.extend_from_slice(CHECKPOINT_MAGIC);
    b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    b.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
    for s in net.sizes() {
        b.extend_from_slice(&(*s as u32).to_le_bytes());
    }
    b.extend_from_slice(&net.seed().to_le_bytes());
    let (hidden, output) = net.activations();
    b.push(hidden.tag());
    b.push(output.tag());
    let (lo, hi) = net.input_range();
    b.extend_from_slice(&lo.to_le_bytes());
    b.extend_from_slice(&hi.to_le_bytes());
    b.extend_from_slice(&(net.len() as u64).to_le_bytes());
    for v in net.theta() {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        if self.0.len() < n {
            return Err(CliError::Io("checkpoint is truncated".into()));
        }
        let (a, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(a)
    }
    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, CliError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<MlpParams, CliError> {
    let mut c = Cursor(bytes);
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(CliError::Io("not a network checkpoint".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CliError::Io(format!("unsupported checkpoint version {version}")));
    }
    let layers = c.u32()? as usize;
    if layers > 1024 {
        return Err(CliError::Io("implausible layer count".into()));
    }
    let sizes = (0..layers).map(|_| c.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
    let seed = c.u64()?;
    let tags = c.take(2)?;
    let expected = (Activation::TanhSquared, Activation::SoftplusFloor);
    if (Activation::from_tag(tags[0]), Activation::from_tag(tags[1])) != (Some(expected.0), Some(expected.1)) {
        return Err(CliError::Io(format!("unsupported activation tags {tags:?}")));
    }
    let range = (c.f64()?, c.f64()?);
    let n = c.u64()? as usize;
    if n.checked_mul(8) != Some(c.0.len()) {
        return Err(CliError::Io("checkpoint parameter block has the wrong length".into()));
    }
    let theta = (0..n).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
    MlpParams::from_parts(&sizes, theta, seed, range).map_err(CliError::from)
}

pub fn save_checkpoint(net: &MlpParams, path: &Path) -> Result<(), CliError> {
    fs::write(path, encode_checkpoint(net)).map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| io_err(path, e))
}
