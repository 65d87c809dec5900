//! File formats. Values stay in file units (µs, MHz, µm) inside the row
//! types so that write → read → write reproduces the bytes exactly; the
//! conversions to SI happen in `to_*`/`from_*`.
//!
//! CSV files may start with `# key=value` metadata lines. Floats are written
//! in Rust's shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use image::{ImageBuffer, Luma};
use nvsense_core::fitcore::SpectrumSample;
use nvsense_core::simkit::{DataPoint, ExperimentDataset, OrderedTime};
use nvsense_core::smassay::{HeightMap, ImageFrame, TraceSeries};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// A parsed CSV document with its metadata block.
#[derive(Debug, Clone)]
pub struct Table {
    pub meta: BTreeMap<String, String>,
    rows: Vec<(u64, csv::StringRecord)>,
    columns: Vec<String>,
    source: String,
}

impl Table {
    pub fn parse(text: &str, expected: &[&str], source: &str) -> anyhow::Result<Self> {
        let mut meta = BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line[1..].split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .with_context(|| format!("{source}: unreadable header"))?
            .clone();
        let columns: Vec<String> = header.iter().map(str::to_string).collect();
        if columns != expected {
            bail!(
                "{source}: schema mismatch, expected columns `{}`, found `{}`",
                expected.join(","),
                columns.join(",")
            );
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| anyhow!("{source}: malformed CSV: {e}"))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Table {
            meta,
            rows,
            columns,
            source: source.to_string(),
        })
    }

    pub fn read(path: &Path, expected: &[&str]) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, expected, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get<T: FromStr>(&self, row: usize, col: usize) -> anyhow::Result<T> {
        let (line, rec) = &self.rows[row];
        let raw = rec.get(col).unwrap_or("");
        raw.parse().map_err(|_| {
            anyhow!(
                "{}: line {line}, column {} (`{}`): cannot parse `{raw}`",
                self.source,
                col + 1,
                self.columns[col]
            )
        })
    }

    pub fn meta<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>> {
        match self.meta.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| anyhow!("{}: metadata `{key}` cannot parse `{v}`", self.source)),
        }
    }
}

/// CSV writer with an optional metadata block.
pub struct CsvOut {
    text: String,
}

impl CsvOut {
    pub fn new(meta: &[(&str, String)], header: &[&str]) -> Self {
        let mut text = String::new();
        for (k, v) in meta {
            let _ = writeln!(text, "# {k}={v}");
        }
        text.push_str(&header.join(","));
        text.push('\n');
        CsvOut { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

// Experiment datasets.

pub const DATASET_COLUMNS: [&str; 5] = [
    "sweep_time_us",
    "n_pulses",
    "F0_counts",
    "F1_counts",
    "reps",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRow {
    pub sweep_time_us: f64,
    pub n_pulses: usize,
    pub f0_counts: u64,
    pub f1_counts: u64,
    pub reps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub seed: u64,
    pub field_gauss: f64,
    pub rows: Vec<DatasetRow>,
}

impl DatasetFile {
    /// Rows in canonical `(n_pulses, time)` order.
    pub fn from_dataset(ds: &ExperimentDataset) -> Self {
        let mut ds = ds.clone();
        ds.canonicalize();
        DatasetFile {
            seed: ds.seed,
            field_gauss: ds.field_gauss,
            rows: ds
                .points
                .iter()
                .map(|p| DatasetRow {
                    sweep_time_us: p.time() * 1e6,
                    n_pulses: p.n_pulses,
                    f0_counts: p.f0_counts,
                    f1_counts: p.f1_counts,
                    reps: p.reps,
                })
                .collect(),
        }
    }

    pub fn to_dataset(&self) -> anyhow::Result<ExperimentDataset> {
        let points = self
            .rows
            .iter()
            .map(|r| {
                Ok(DataPoint {
                    sweep_time: OrderedTime::new(r.sweep_time_us * 1e-6)?,
                    n_pulses: r.n_pulses,
                    f0_counts: r.f0_counts,
                    f1_counts: r.f1_counts,
                    reps: r.reps,
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(ExperimentDataset {
            points,
            seed: self.seed,
            field_gauss: self.field_gauss,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = CsvOut::new(
            &[
                ("seed", self.seed.to_string()),
                ("field_gauss", fmt_f64(self.field_gauss)),
            ],
            &DATASET_COLUMNS,
        );
        for r in &self.rows {
            out.row(&[
                fmt_f64(r.sweep_time_us),
                r.n_pulses.to_string(),
                r.f0_counts.to_string(),
                r.f1_counts.to_string(),
                r.reps.to_string(),
            ]);
        }
        out.finish()
    }

    pub fn parse(text: &str, source: &str) -> anyhow::Result<Self> {
        let t = Table::parse(text, &DATASET_COLUMNS, source)?;
        let mut rows = Vec::with_capacity(t.len());
        for i in 0..t.len() {
            rows.push(DatasetRow {
                sweep_time_us: t.get(i, 0)?,
                n_pulses: t.get(i, 1)?,
                f0_counts: t.get(i, 2)?,
                f1_counts: t.get(i, 3)?,
                reps: t.get(i, 4)?,
            });
        }
        Ok(DatasetFile {
            seed: t.meta("seed")?.unwrap_or(0),
            field_gauss: t
                .meta("field_gauss")?
                .unwrap_or(nvsense_core::simkit::DEFAULT_FIELD_GAUSS),
            rows,
        })
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }
}

// Spectrum samples.

pub const SPECTRUM_COLUMNS: [&str; 5] = [
    "omega_rad_s",
    "freq_MHz",
    "S_rad2_s",
    "n_pulses",
    "total_time_us",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRow {
    pub omega_rad_s: f64,
    pub freq_mhz: f64,
    pub s_rad2_s: f64,
    pub n_pulses: usize,
    pub total_time_us: f64,
}

impl SpectrumRow {
    pub fn from_sample(s: &SpectrumSample) -> Self {
        SpectrumRow {
            omega_rad_s: s.omega,
            freq_mhz: s.omega / (2.0 * std::f64::consts::PI) * 1e-6,
            s_rad2_s: s.s,
            n_pulses: s.n_pulses,
            total_time_us: s.total_time * 1e6,
        }
    }

    pub fn to_sample(&self) -> SpectrumSample {
        SpectrumSample {
            omega: self.omega_rad_s,
            s: self.s_rad2_s,
            n_pulses: self.n_pulses,
            total_time: self.total_time_us * 1e-6,
        }
    }
}

pub fn spectrum_to_csv(rows: &[SpectrumRow]) -> String {
    let mut out = CsvOut::new(&[], &SPECTRUM_COLUMNS);
    for r in rows {
        out.row(&[
            fmt_f64(r.omega_rad_s),
            fmt_f64(r.freq_mhz),
            fmt_f64(r.s_rad2_s),
            r.n_pulses.to_string(),
            fmt_f64(r.total_time_us),
        ]);
    }
    out.finish()
}

pub fn read_spectrum(path: &Path) -> anyhow::Result<Vec<SpectrumRow>> {
    let t = Table::read(path, &SPECTRUM_COLUMNS)?;
    (0..t.len())
        .map(|i| {
            Ok(SpectrumRow {
                omega_rad_s: t.get(i, 0)?,
                freq_mhz: t.get(i, 1)?,
                s_rad2_s: t.get(i, 2)?,
                n_pulses: t.get(i, 3)?,
                total_time_us: t.get(i, 4)?,
            })
        })
        .collect()
}

// Two-column numeric tables.

pub fn read_pairs<A: FromStr, B: FromStr>(
    path: &Path,
    columns: [&str; 2],
) -> anyhow::Result<(Vec<A>, Vec<B>)> {
    let t = Table::read(path, &columns)?;
    let mut a = Vec::with_capacity(t.len());
    let mut b = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        a.push(t.get(i, 0)?);
        b.push(t.get(i, 1)?);
    }
    Ok((a, b))
}

// Traces: long format, one sample per row.

pub const TRACE_COLUMNS: [&str; 3] = ["spot_id", "t_s", "intensity"];

pub fn traces_to_csv(traces: &[TraceSeries]) -> String {
    let mut out = CsvOut::new(&[], &TRACE_COLUMNS);
    for tr in traces {
        for (i, v) in tr.intensity.iter().enumerate() {
            out.row(&[tr.spot_id.to_string(), fmt_f64(tr.time(i)), fmt_f64(*v)]);
        }
    }
    out.finish()
}

/// Groups rows by `spot_id` in order of first appearance. Samples within a
/// spot must be evenly spaced.
pub fn read_traces(path: &Path) -> anyhow::Result<Vec<TraceSeries>> {
    let t = Table::read(path, &TRACE_COLUMNS)?;
    let mut order: Vec<u32> = Vec::new();
    let mut groups: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for i in 0..t.len() {
        let id: u32 = t.get(i, 0)?;
        let g = groups.entry(id).or_insert_with(|| {
            order.push(id);
            (Vec::new(), Vec::new())
        });
        g.0.push(t.get(i, 1)?);
        g.1.push(t.get(i, 2)?);
    }
    order
        .into_iter()
        .map(|id| {
            let (times, values) = groups.remove(&id).unwrap_or_default();
            let dt = if times.len() > 1 {
                (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
            } else {
                1.0
            };
            let even = times
                .windows(2)
                .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt.abs());
            if !even || !(dt > 0.0) {
                bail!(
                    "{}: spot {id} samples are not evenly spaced in time",
                    path.display()
                );
            }
            Ok(TraceSeries::new(id, times[0], dt, values)?)
        })
        .collect()
}

// Grids: frames and height maps as headerless CSV matrices.

fn grid_to_csv(meta: &[(&str, String)], width: usize, values: &[f64]) -> String {
    let mut text = String::new();
    for (k, v) in meta {
        let _ = writeln!(text, "# {k}={v}");
    }
    for row in values.chunks(width) {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    text
}

struct Grid {
    meta: BTreeMap<String, String>,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

fn parse_grid(text: &str, source: &str) -> anyhow::Result<Grid> {
    let mut meta = BTreeMap::new();
    let mut values = Vec::new();
    let mut width = 0;
    let mut height = 0;
    for (ln, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut n = 0;
        for (col, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                anyhow!(
                    "{source}: line {}, column {}: cannot parse `{cell}`",
                    ln + 1,
                    col + 1
                )
            })?;
            values.push(v);
            n += 1;
        }
        if height == 0 {
            width = n;
        } else if n != width {
            bail!(
                "{source}: line {}: expected {width} columns, found {n}",
                ln + 1
            );
        }
        height += 1;
    }
    if height == 0 {
        bail!("{source}: empty grid");
    }
    Ok(Grid {
        meta,
        width,
        height,
        values,
    })
}

fn grid_meta(g: &Grid, key: &str, source: &str) -> anyhow::Result<Option<f64>> {
    g.meta
        .get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| anyhow!("{source}: metadata `{key}` cannot parse `{v}`"))
        })
        .transpose()
}

pub fn heightmap_to_csv(map: &HeightMap) -> String {
    grid_to_csv(&[("pitch_nm", fmt_f64(map.pitch))], map.nx, &map.heights)
}

/// Heights in pm; `pitch_nm` from metadata unless overridden.
pub fn read_heightmap(path: &Path, pitch_nm: Option<f64>) -> anyhow::Result<HeightMap> {
    let source = path.display().to_string();
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {source}"))?;
    let g = parse_grid(&text, &source)?;
    let pitch = match pitch_nm {
        Some(p) => p,
        None => grid_meta(&g, "pitch_nm", &source)?.unwrap_or(1.0),
    };
    Ok(HeightMap::new(g.width, g.height, g.values, pitch)?)
}

pub fn frame_to_csv(frame: &ImageFrame) -> String {
    grid_to_csv(
        &[
            ("pixel_pitch_um", fmt_f64(frame.pixel_pitch)),
            ("exposure_s", fmt_f64(frame.exposure)),
        ],
        frame.width,
        &frame.pixels,
    )
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// 16-bit grayscale PNG; pixel values are rounded and clamped to 0..=65535.
pub fn frame_to_png(frame: &ImageFrame) -> anyhow::Result<Vec<u8>> {
    let data: Vec<u16> = frame
        .pixels
        .iter()
        .map(|v| v.round().clamp(0.0, 65535.0) as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(frame.width as u32, frame.height as u32, data)
            .ok_or_else(|| anyhow!("frame dimensions do not match pixel count"))?;
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn write_frame(path: &Path, frame: &ImageFrame) -> anyhow::Result<()> {
    if is_png(path) {
        std::fs::write(path, frame_to_png(frame)?)
            .with_context(|| format!("writing {}", path.display()))
    } else {
        write_text(path, &frame_to_csv(frame))
    }
}

/// PNG or CSV grid by extension. PNGs carry no pitch, so `pixel_pitch`
/// applies to them and to CSV grids without metadata.
pub fn read_frame(path: &Path, pixel_pitch: f64, exposure: f64) -> anyhow::Result<ImageFrame> {
    let source = path.display().to_string();
    if is_png(path) {
        let img = image::open(path)
            .with_context(|| format!("reading {source}"))?
            .into_luma16();
        let (w, h) = img.dimensions();
        let pixels = img.into_raw().into_iter().map(f64::from).collect();
        return Ok(ImageFrame::new(
            w as usize,
            h as usize,
            pixels,
            pixel_pitch,
            exposure,
        )?);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {source}"))?;
    let g = parse_grid(&text, &source)?;
    let pitch = grid_meta(&g, "pixel_pitch_um", &source)?.unwrap_or(pixel_pitch);
    let exp = grid_meta(&g, "exposure_s", &source)?.unwrap_or(exposure);
    Ok(ImageFrame::new(g.width, g.height, g.values, pitch, exp)?)
}
