//! File formats.
//!
//! Images: a one-line text header `DRIMG <dim> <m> <lo> <hi>` (range hint,
//! `nan nan` when absent) followed by `m^dim` little-endian float32 values in
//! grid order (first axis fastest).
//!
//! Sinograms: CSV whose first line is
//! `angles=<a1,...,ap>;q=<q>;level=<k>[;rows=<r>][;scale=<s>]`, followed by
//! `p * rows` lines of `q` values each.
//!
//! Raw scanner data: float32 little-endian, angle-major, with a sidecar file of
//! `key = value` lines (`angles`, `q`, `level`, `rows`, `scale`).
//!
//! Key-value files: `key = value` lines grouped under `[section]` headers;
//! `#` starts a comment. Keys are addressed as `section.key`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{CellGrid, ScalarField};
use crate::radon::{Sinogram, SinogramGeometry};

const IMAGE_MAGIC: &str = "DRIMG";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn write_image(path: &Path, f: &ScalarField) -> Result<()> {
    let g = f.grid();
    let (lo, hi) = f.range_hint.unwrap_or((f64::NAN, f64::NAN));
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = Vec::with_capacity(4 * f.len());
    for &v in f.values() {
        body.extend_from_slice(&(v as f32).to_le_bytes());
    }
    writeln!(w, "{IMAGE_MAGIC} {} {} {lo} {hi}", g.dim(), g.m())
        .and_then(|_| w.write_all(&body))
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

pub fn read_image(path: &Path) -> Result<ScalarField> {
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| io_err(path, e))?;
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Parse { line: 1, msg: "missing image header".into() })?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Parse { line: 1, msg: "header is not text".into() })?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let bad = |msg: &str| Error::Parse { line: 1, msg: msg.to_string() };
    if parts.len() != 5 || parts[0] != IMAGE_MAGIC {
        return Err(bad("expected 'DRIMG <dim> <m> <lo> <hi>'"));
    }
    let dim: usize = parts[1].parse().map_err(|_| bad("bad dimension"))?;
    let m: usize = parts[2].parse().map_err(|_| bad("bad size"))?;
    let lo: f64 = parts[3].parse().map_err(|_| bad("bad range"))?;
    let hi: f64 = parts[4].parse().map_err(|_| bad("bad range"))?;
    let grid = CellGrid::new(dim, m, 1)?;
    let body = &bytes[nl + 1..];
    if body.len() != 4 * grid.num_cells() {
        return Err(Error::Parse { line: 2, msg: format!("expected {} float32 values, found {} bytes", grid.num_cells(), body.len()) });
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    let mut f = ScalarField::new(grid, values)?;
    if lo.is_finite() && hi.is_finite() {
        f.range_hint = Some((lo, hi));
    }
    Ok(f)
}

/// 8-bit grayscale preview of a planar image (the middle slice of a volume),
/// scaled from `range` (or the range hint, or min/max) to `0..=255`, with
/// the second axis pointing up.
pub fn write_png(path: &Path, f: &ScalarField, range: Option<(f64, f64)>) -> Result<()> {
    let g = f.grid();
    let m = g.m();
    let n2 = m * m;
    let offset = if g.dim() == 3 { (m / 2) * n2 } else { 0 };
    let slice = &f.values()[offset..offset + n2];
    let (lo, hi) = range.or(f.range_hint).unwrap_or_else(|| {
        let lo = slice.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut pixels = vec![0u8; n2];
    for row in 0..m {
        let j = m - 1 - row;
        for i in 0..m {
            let t = ((slice[j * m + i] - lo) / span).clamp(0.0, 1.0);
            pixels[row * m + i] = (t * 255.0).round() as u8;
        }
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), m as u32, m as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    w.write_image_data(&pixels).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn geometry_header(g: &SinogramGeometry) -> String {
    let angles: Vec<String> = g.angles_deg.iter().map(|a| a.to_string()).collect();
    let mut s = format!("angles={};q={};level={}", angles.join(","), g.detectors, g.level);
    if g.rows != 1 {
        s.push_str(&format!(";rows={}", g.rows));
    }
    if g.length_scale != 1.0 {
        s.push_str(&format!(";scale={}", g.length_scale));
    }
    s
}

fn parse_geometry(pairs: &[(String, String)], line: usize) -> Result<SinogramGeometry> {
    let bad = |msg: String| Error::Parse { line, msg };
    let mut angles = None;
    let (mut q, mut level, mut rows, mut scale) = (None, 0u32, 1usize, 1.0f64);
    for (k, v) in pairs {
        match k.as_str() {
            "angles" => {
                let a: std::result::Result<Vec<f64>, _> = v.split(',').map(|x| x.trim().parse::<f64>()).collect();
                angles = Some(a.map_err(|_| bad(format!("bad angle list '{v}'")))?);
            }
            "q" => q = Some(v.parse::<usize>().map_err(|_| bad(format!("bad detector count '{v}'")))?),
            "level" => level = v.parse().map_err(|_| bad(format!("bad level '{v}'")))?,
            "rows" => rows = v.parse().map_err(|_| bad(format!("bad row count '{v}'")))?,
            "scale" => scale = v.parse().map_err(|_| bad(format!("bad length scale '{v}'")))?,
            other => return Err(bad(format!("unknown geometry key '{other}'"))),
        }
    }
    let angles = angles.ok_or_else(|| bad("missing 'angles'".into()))?;
    let q = q.ok_or_else(|| bad("missing 'q'".into()))?;
    let mut g = SinogramGeometry::new(angles, q)?.with_rows(rows).with_length_scale(scale);
    g.level = level;
    g.validate()?;
    Ok(g)
}

pub fn write_sinogram_csv(path: &Path, s: &Sinogram) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let q = s.geometry.detectors;
    let mut text = geometry_header(&s.geometry);
    text.push('\n');
    for row in s.data.chunks(q) {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&vals.join(","));
        text.push('\n');
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

pub fn read_sinogram_csv(path: &Path) -> Result<Sinogram> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_sinogram_csv(&text)
}

pub fn parse_sinogram_csv(text: &str) -> Result<Sinogram> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse { line: 1, msg: "empty sinogram file".into() })?;
    let mut pairs = Vec::new();
    for item in header.split(';') {
        let (k, v) = item.split_once('=').ok_or_else(|| Error::Parse { line: 1, msg: format!("expected key=value, got '{item}'") })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let geometry = parse_geometry(&pairs, 1)?;
    let mut data = Vec::with_capacity(geometry.len());
    let mut count = 0;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|x| x.trim().parse::<f64>()).collect();
        let row = row.map_err(|_| Error::Parse { line: i + 2, msg: "non-numeric value".into() })?;
        if row.len() != geometry.detectors {
            return Err(Error::Parse { line: i + 2, msg: format!("expected {} values, found {}", geometry.detectors, row.len()) });
        }
        data.extend(row);
        count += 1;
    }
    let expected = geometry.num_angles() * geometry.rows;
    if count != expected {
        return Err(Error::Parse { line: count + 1, msg: format!("expected {expected} data rows, found {count}") });
    }
    Sinogram::new(geometry, data)
}

/// Reads float32 little-endian measurements described by a sidecar file.
pub fn read_raw_sinogram(raw: &Path, sidecar: &Path) -> Result<Sinogram> {
    let kv = KeyValues::read(sidecar)?;
    let pairs: Vec<(String, String)> = kv.entries.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect();
    let geometry = parse_geometry(&pairs, 0)?;
    let mut bytes = Vec::new();
    File::open(raw).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| io_err(raw, e))?;
    if bytes.len() != 4 * geometry.len() {
        return Err(Error::invalid(format!("raw file holds {} bytes, geometry needs {}", bytes.len(), 4 * geometry.len())));
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    Sinogram::new(geometry, data)
}

/// Parsed `key = value` file.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    /// `section.key` (or bare `key` before any section) to value and line.
    pub entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse { line: line_no, msg: "unterminated section header".into() })?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse { line: line_no, msg: format!("expected 'key = value', got '{line}'") })?;
            let key = if section.is_empty() { k.trim().to_string() } else { format!("{section}.{}", k.trim()) };
            if entries.insert(key.clone(), (v.trim().to_string(), line_no)).is_some() {
                return Err(Error::Parse { line: line_no, msg: format!("duplicate key '{key}'") });
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    /// Parses the value of `key` if present.
    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Parse { line: *line, msg: format!("invalid value '{v}' for '{key}'") }),
        }
    }

    /// Comma-separated list of numbers.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| Error::Parse { line: *line, msg: format!("invalid number list '{v}' for '{key}'") }),
        }
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(_, l)| *l)
    }

    /// Fails on keys outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        for (k, (_, line)) in &self.entries {
            if !known.contains(&k.as_str()) {
                return Err(Error::Parse { line: *line, msg: format!("unknown key '{k}'") });
            }
        }
        Ok(())
    }
}
