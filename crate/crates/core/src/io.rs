//! Detection-record persistence, trace export and plot-ready data files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::pipeline::{DetectionRecord, EstimateTrace};

pub const RECORD_MAGIC: [u8; 16] = *b"BAETRACK-RECORD\0";
pub const RECORD_VERSION: u32 = 1;
/// Default row cap for exported traces.
pub const MAX_EXPORT_ROWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Binary,
    Csv,
}

impl RecordFormat {
    /// `.csv` → CSV, anything else → binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Binary,
        }
    }
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    let len = u32::try_from(s.len()).map_err(|_| Error::Format("string too long".into()))?;
    put_u32(w, len)?;
    Ok(w.write_all(s.as_bytes())?)
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated record: {e}")))?;
    Ok(b)
}

fn take_str(r: &mut impl Read) -> Result<String> {
    let len = u32::from_le_bytes(take(r)?) as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("implausible string length {len}")));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated record: {e}")))?;
    String::from_utf8(b).map_err(|e| Error::Format(e.to_string()))
}

/// Binary layout: magic, version, digest, seed, dt, steps, channel labels,
/// then little-endian `f64` outcomes row-major.
pub fn write_record_binary<W: Write>(record: &DetectionRecord, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(&RECORD_MAGIC)?;
    put_u32(&mut w, RECORD_VERSION)?;
    put_str(&mut w, &record.config_digest)?;
    w.write_all(&record.seed.to_le_bytes())?;
    w.write_all(&record.dt.to_le_bytes())?;
    w.write_all(&(record.steps() as u64).to_le_bytes())?;
    put_u32(&mut w, record.channels.len() as u32)?;
    for c in &record.channels {
        put_str(&mut w, c)?;
    }
    for v in &record.outcomes {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_record_binary<R: Read>(r: R) -> Result<DetectionRecord> {
    let mut r = BufReader::new(r);
    if take::<16>(&mut r)? != RECORD_MAGIC {
        return Err(Error::Format("not a detection record (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != RECORD_VERSION {
        return Err(Error::Format(format!("unsupported record version {version}")));
    }
    let config_digest = take_str(&mut r)?;
    let seed = u64::from_le_bytes(take(&mut r)?);
    let dt = f64::from_le_bytes(take(&mut r)?);
    let steps = u64::from_le_bytes(take(&mut r)?) as usize;
    let nch = u32::from_le_bytes(take(&mut r)?) as usize;
    let channels = (0..nch).map(|_| take_str(&mut r)).collect::<Result<Vec<_>>>()?;
    let total = steps.checked_mul(nch).ok_or_else(|| Error::Format("record size overflow".into()))?;
    let mut outcomes = Vec::with_capacity(total);
    for _ in 0..total {
        outcomes.push(f64::from_le_bytes(take(&mut r)?));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after record".into()));
    }
    Ok(DetectionRecord { dt, channels, outcomes, seed, config_digest })
}

/// CSV with `# key=value` header lines followed by `step,<channels…>` rows.
pub fn write_record_csv<W: Write>(record: &DetectionRecord, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "# baetrack-record version={RECORD_VERSION}")?;
    writeln!(w, "# config_digest={}", record.config_digest)?;
    writeln!(w, "# seed={}", record.seed)?;
    writeln!(w, "# dt={:?}", record.dt)?;
    writeln!(w, "step,{}", record.channels.join(","))?;
    for k in 0..record.steps() {
        write!(w, "{k}")?;
        for v in record.row(k) {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Format(format!("not a number: {s:?}")))
}

pub fn read_record_csv<R: Read>(r: R) -> Result<DetectionRecord> {
    let mut digest = None;
    let mut seed = None;
    let mut dt = None;
    let mut channels: Option<Vec<String>> = None;
    let mut outcomes = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            if let Some(v) = meta.strip_prefix("baetrack-record version=") {
                if v.trim() != RECORD_VERSION.to_string() {
                    return Err(Error::Format(format!("unsupported record version {v}")));
                }
            } else if let Some((k, v)) = meta.split_once('=') {
                match k {
                    "config_digest" => digest = Some(v.to_owned()),
                    "seed" => seed = Some(v.parse::<u64>().map_err(|e| Error::Format(e.to_string()))?),
                    "dt" => dt = Some(parse_f64(v)?),
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match &channels {
            None => {
                let mut cols = line.split(',');
                if cols.next() != Some("step") {
                    return Err(Error::Format("record CSV header must start with `step`".into()));
                }
                channels = Some(cols.map(str::to_owned).collect());
            }
            Some(ch) => {
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != ch.len() + 1 {
                    return Err(Error::Format(format!("line {}: expected {} cells", n + 1, ch.len() + 1)));
                }
                for c in &cells[1..] {
                    outcomes.push(parse_f64(c)?);
                }
            }
        }
    }
    let missing = |what: &str| Error::Format(format!("record CSV lacks `{what}`"));
    Ok(DetectionRecord {
        dt: dt.ok_or_else(|| missing("dt"))?,
        channels: channels.ok_or_else(|| missing("header"))?,
        outcomes,
        seed: seed.ok_or_else(|| missing("seed"))?,
        config_digest: digest.ok_or_else(|| missing("config_digest"))?,
    })
}

pub fn save_record(path: &Path, record: &DetectionRecord) -> Result<()> {
    let f = File::create(path)?;
    match RecordFormat::from_path(path) {
        RecordFormat::Binary => write_record_binary(record, f),
        RecordFormat::Csv => write_record_csv(record, f),
    }
}

pub fn load_record(path: &Path) -> Result<DetectionRecord> {
    let f = File::open(path)?;
    match RecordFormat::from_path(path) {
        RecordFormat::Binary => read_record_binary(f),
        RecordFormat::Csv => read_record_csv(f),
    }
}

/// Refuses a record produced under a different configuration unless `force`
/// is set; shape mismatches (dt, channels, length) are always fatal.
pub fn check_replay(cfg: &ScenarioConfig, record: &DetectionRecord, force: bool) -> Result<()> {
    let digest = cfg.digest();
    if record.config_digest != digest && !force {
        return Err(Error::RecordMismatch(format!(
            "record digest {} does not match config digest {digest} (use force to override)",
            record.config_digest
        )));
    }
    record.check_against(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Decimation {
    pub spacing: Spacing,
    pub max_rows: usize,
    /// Bypasses the row cap entirely.
    pub full_resolution: bool,
}

impl Default for Decimation {
    fn default() -> Self {
        Self { spacing: Spacing::Log, max_rows: MAX_EXPORT_ROWS, full_resolution: false }
    }
}

impl Decimation {
    pub fn full() -> Self {
        Self { full_resolution: true, ..Self::default() }
    }

    /// Sorted unique sample indices into a series of length `len`; the first
    /// and last samples are always kept.
    pub fn indices(&self, len: usize) -> Vec<usize> {
        if self.full_resolution || len <= self.max_rows.max(2) {
            return (0..len).collect();
        }
        let rows = self.max_rows.max(2);
        let last = len - 1;
        let mut out: Vec<usize> = match self.spacing {
            Spacing::Linear => (0..rows).map(|i| (i as f64 * last as f64 / (rows - 1) as f64).round() as usize).collect(),
            Spacing::Log => {
                // Index 0 plus log-spaced indices in [1, last].
                let span = (last as f64).ln();
                std::iter::once(0)
                    .chain((0..rows - 1).map(|i| (span * i as f64 / (rows - 2) as f64).exp().round() as usize))
                    .collect()
            }
        };
        out.dedup();
        out.retain(|&i| i <= last);
        if out.last() != Some(&last) {
            out.push(last);
        }
        out
    }
}

/// Keeps only the rows in `idx`.
pub fn decimate(trace: &EstimateTrace, policy: &Decimation) -> EstimateTrace {
    let idx = policy.indices(trace.len());
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let mut out = trace.clone();
    out.times = pick(&trace.times);
    for (o, c) in out.columns.iter_mut().zip(&trace.columns) {
        o.mean = pick(&c.mean);
        o.var = pick(&c.var);
    }
    for (k, v) in &trace.truth {
        if v.len() == trace.len() {
            out.truth.insert(k.clone(), pick(v));
        }
    }
    out
}

/// Columns `t, mean_<label>, var_<label>…, true_<field>…`, floats in shortest round-trip form.
pub fn write_trace_csv<W: Write>(trace: &EstimateTrace, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let kind = serde_json::to_value(trace.kind)?;
    writeln!(w, "# kind={}", kind.as_str().unwrap_or_default())?;
    write!(w, "t")?;
    for c in &trace.columns {
        write!(w, ",mean_{0},var_{0}", c.label)?;
    }
    for k in trace.truth.keys() {
        write!(w, ",true_{k}")?;
    }
    writeln!(w)?;
    for i in 0..trace.len() {
        write!(w, "{:?}", trace.times[i])?;
        for c in &trace.columns {
            write!(w, ",{:?},{:?}", c.mean[i], c.var[i])?;
        }
        for v in trace.truth.values() {
            write!(w, ",{:?}", v[i])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<EstimateTrace> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty trace file".into()))??;
    let kind = first
        .strip_prefix("# kind=")
        .ok_or_else(|| Error::Format("trace CSV lacks `# kind=` line".into()))?;
    let kind = serde_json::from_value(serde_json::Value::String(kind.trim().to_owned()))?;
    let header = lines.next().ok_or_else(|| Error::Format("trace CSV lacks header".into()))??;
    let names: Vec<&str> = header.split(',').collect();
    if names.first() != Some(&"t") {
        return Err(Error::Format("trace CSV header must start with `t`".into()));
    }
    let mut trace = EstimateTrace { kind, times: Vec::new(), columns: Vec::new(), truth: Default::default() };
    let mut slots = Vec::new();
    let mut i = 1;
    while i < names.len() {
        if let Some(l) = names[i].strip_prefix("mean_") {
            if names.get(i + 1) != Some(&format!("var_{l}").as_str()) {
                return Err(Error::Format(format!("column mean_{l} not followed by var_{l}")));
            }
            trace.columns.push(crate::pipeline::TraceColumn { label: l.to_owned(), mean: vec![], var: vec![] });
            slots.push(None);
            i += 2;
        } else if let Some(f) = names[i].strip_prefix("true_") {
            trace.truth.insert(f.to_owned(), Vec::new());
            slots.push(Some(f.to_owned()));
            i += 1;
        } else {
            return Err(Error::Format(format!("unexpected column {:?}", names[i])));
        }
    }
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(Error::Format(format!("row has {} cells, header {}", cells.len(), names.len())));
        }
        trace.times.push(parse_f64(cells[0])?);
        let mut at = 1;
        let mut col = 0;
        for slot in &slots {
            match slot {
                None => {
                    trace.columns[col].mean.push(parse_f64(cells[at])?);
                    trace.columns[col].var.push(parse_f64(cells[at + 1])?);
                    col += 1;
                    at += 2;
                }
                Some(f) => {
                    trace.truth.get_mut(f).expect("declared").push(parse_f64(cells[at])?);
                    at += 1;
                }
            }
        }
    }
    Ok(trace)
}

pub fn write_trace_json<W: Write>(trace: &EstimateTrace, w: W) -> Result<()> {
    serde_json::to_writer(BufWriter::new(w), trace)?;
    Ok(())
}

pub fn read_trace_json<R: Read>(r: R) -> Result<EstimateTrace> {
    Ok(serde_json::from_reader(BufReader::new(r))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotStyle {
    /// `t, var_<label>…, ref_inv_t, ref_inv_t3`; reference lines touch the
    /// first series at the first positive time.
    LoglogVariance,
    /// `t, true_<label>, mean_<label>, lower_<label>, upper_<label>` with a ±1σ band.
    BandEstimate,
}

/// Writes a columnar data file for plotting `labels` of `trace`.
pub fn emit_plot_data<W: Write>(
    trace: &EstimateTrace,
    labels: &[&str],
    style: PlotStyle,
    policy: &Decimation,
    w: W,
) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no labels to plot".into()));
    }
    let cols = labels
        .iter()
        .map(|l| trace.column(l).ok_or_else(|| Error::UnknownLabel((*l).to_owned())))
        .collect::<Result<Vec<_>>>()?;
    let mut w = BufWriter::new(w);
    let mut rows = 0;
    match style {
        PlotStyle::LoglogVariance => {
            let idx: Vec<usize> = policy.indices(trace.len()).into_iter().filter(|&i| trace.times[i] > 0.0).collect();
            let Some(&i0) = idx.first() else {
                return Err(Error::EmptyWindow("no positive times".into()));
            };
            let (t0, v0) = (trace.times[i0], cols[0].var[i0]);
            write!(w, "t")?;
            for l in labels {
                write!(w, ",var_{l}")?;
            }
            writeln!(w, ",ref_inv_t,ref_inv_t3")?;
            for &i in &idx {
                let t = trace.times[i];
                write!(w, "{t:?}")?;
                for c in &cols {
                    write!(w, ",{:?}", c.var[i])?;
                }
                writeln!(w, ",{:?},{:?}", v0 * t0 / t, v0 * (t0 / t).powi(3))?;
                rows += 1;
            }
        }
        PlotStyle::BandEstimate => {
            write!(w, "t")?;
            for l in labels {
                write!(w, ",true_{0},mean_{0},lower_{0},upper_{0}", l)?;
            }
            writeln!(w)?;
            for i in policy.indices(trace.len()) {
                write!(w, "{:?}", trace.times[i])?;
                for (l, c) in labels.iter().zip(&cols) {
                    let truth = trace.truth.get(*l).map_or(f64::NAN, |v| v[i]);
                    let s = c.var[i].sqrt();
                    write!(w, ",{truth:?},{:?},{:?},{:?}", c.mean[i], c.mean[i] - s, c.mean[i] + s)?;
                }
                writeln!(w)?;
                rows += 1;
            }
        }
    }
    w.flush()?;
    Ok(rows)
}

pub fn write_to_path(path: &Path, f: impl FnOnce(File) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    f(File::create(path)?)
}
