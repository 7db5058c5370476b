//! On-disk artifact formats: binary population and signature snapshots,
//! CSV tables, and atomic file writes.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use pufsim_core::metrics::{Colormap, Histogram};
use pufsim_core::population::CellParams;
use pufsim_core::{BitVector, DevicePopulation, PopulationSpec, PositionMask, SignatureSet};
use pufsim_nist::{SuiteAggregate, TestKind};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

const POPULATION_MAGIC: &[u8; 4] = b"PPOP";
const SIGNATURE_MAGIC: &[u8; 4] = b"PSIG";
const FORMAT_VERSION: u16 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write through a sibling temporary file and rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        HarnessError::io(path, e)
    })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| HarnessError::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path, magic: &[u8; 4]) -> Result<Self> {
        let mut r = Self { bytes, at: 0, path };
        if r.take(4)? != magic {
            return Err(HarnessError::format(path, "bad magic"));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(HarnessError::format(path, format!("unsupported format version {version}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| HarnessError::format(self.path, "truncated file"))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn words(&mut self, n: usize) -> Result<Vec<u64>> {
        (0..n).map(|_| self.u64()).collect()
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(HarnessError::format(self.path, "trailing bytes"));
        }
        Ok(())
    }
}

fn dimension(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| HarnessError::Config(format!("{what} {value} does not fit the snapshot format")))
}

/// Population snapshot: spec as JSON, then the three mismatch components of
/// every cell and the per-position offsets.
pub fn encode_population(pop: &DevicePopulation) -> Result<Vec<u8>> {
    let spec = serde_json::to_vec(pop.spec()).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(spec.len() + 32 + pop.cells().len() * 24 + pop.offsets().len() * 8);
    out.extend_from_slice(POPULATION_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dimension(spec.len(), "spec length")?.to_le_bytes());
    out.extend_from_slice(&spec);
    out.extend_from_slice(&(pop.cells().len() as u64).to_le_bytes());
    for c in pop.cells() {
        for v in [c.global_component, c.regional_component, c.local_component] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(pop.offsets().len() as u64).to_le_bytes());
    for v in pop.offsets() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_population(bytes: &[u8], path: &Path) -> Result<DevicePopulation> {
    let mut r = Reader::new(bytes, path, POPULATION_MAGIC)?;
    let spec_len = r.u32()? as usize;
    let spec: PopulationSpec = serde_json::from_slice(r.take(spec_len)?).map_err(|e| HarnessError::format(path, e.to_string()))?;
    let cell_count = r.u64()? as usize;
    let expected = spec.num_devices.checked_mul(spec.cells_per_device);
    if expected != Some(cell_count) || spec.placement.cell_count() != spec.cells_per_device {
        return Err(HarnessError::format(path, "cell table does not match the spec"));
    }
    let n = spec.cells_per_device;
    let mut cells = Vec::with_capacity(cell_count);
    for i in 0..cell_count {
        let position = i % n;
        cells.push(CellParams {
            global_component: r.f64()?,
            regional_component: r.f64()?,
            local_component: r.f64()?,
            position: spec.placement.position_of(position),
            region: spec.placement.region_of(position),
        });
    }
    let offset_count = r.u64()? as usize;
    let offsets = (0..offset_count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(DevicePopulation::from_parts(spec, cells, offsets)?)
}

/// Signature snapshot: dimensions, optional keep-mask, then every row's
/// packed words in device-major order.
pub fn encode_signatures(sigs: &SignatureSet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(SIGNATURE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (v, what) in [
        (sigs.devices(), "devices"),
        (sigs.trials(), "trials"),
        (sigs.n(), "signature length"),
    ] {
        out.extend_from_slice(&dimension(v, what)?.to_le_bytes());
    }
    let mut push_words = |words: &[u64]| words.iter().for_each(|w| out.extend_from_slice(&w.to_le_bytes()));
    match sigs.mask() {
        Some(mask) => {
            push_words(&[1]);
            push_words(mask.bits().words());
        }
        None => push_words(&[0]),
    }
    for row in sigs.rows() {
        push_words(row.words());
    }
    Ok(out)
}

pub fn decode_signatures(bytes: &[u8], path: &Path) -> Result<SignatureSet> {
    let mut r = Reader::new(bytes, path, SIGNATURE_MAGIC)?;
    let devices = r.u32()? as usize;
    let trials = r.u32()? as usize;
    let n = r.u32()? as usize;
    let words = pufsim_core::bits::words_for(n);
    let mask = match r.u64()? {
        0 => None,
        1 => Some(PositionMask::from_bits(BitVector::from_words(r.words(words)?, n)?)),
        other => return Err(HarnessError::format(path, format!("bad mask flag {other}"))),
    };
    let rows = (0..devices * trials)
        .map(|_| Ok(BitVector::from_words(r.words(words)?, n)?))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let sigs = SignatureSet::new(devices, trials, n, rows)?;
    Ok(match mask {
        Some(m) => sigs.apply_mask(&m)?,
        None => sigs,
    })
}

pub fn signatures_csv(sigs: &SignatureSet) -> String {
    let mut out = String::from("device,trial,bits\n");
    for d in 0..sigs.devices() {
        for (t, row) in sigs.device_rows(d).iter().enumerate() {
            let _ = writeln!(out, "{d},{t},{}", row.to_ascii());
        }
    }
    out
}

/// Kept positions as a 0/1 string on one line.
pub fn mask_text(mask: &PositionMask) -> String {
    format!("{}\n", mask.bits().to_ascii())
}

pub fn parse_mask_text(text: &str, path: &Path) -> Result<PositionMask> {
    let bits = BitVector::from_ascii(text.trim()).map_err(|e| HarnessError::format(path, e.to_string()))?;
    Ok(PositionMask::from_bits(bits))
}

pub fn histogram_csv(hist: &Histogram) -> String {
    let mut out = String::from("bucket_lower_percent,bucket_upper_percent,count\n");
    for (&bucket, &count) in &hist.counts {
        let lower = hist.bucket_lower_percent(bucket);
        let _ = writeln!(out, "{},{},{count}", sig6(lower), sig6(lower + hist.bucket_width_percent));
    }
    out
}

/// One row per device: the device index and its signature bits.
pub fn colormap_csv(map: &Colormap) -> String {
    let mut out = String::from("device,bits\n");
    for (d, row) in map.rows().iter().enumerate() {
        let _ = writeln!(out, "{d},{}", row.to_ascii());
    }
    out
}

/// One randomness test outcome on one sequence, as written to the results
/// table. `sequence` is `None` for tests run on all sequences joined.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RandomnessRow {
    pub sequence: Option<usize>,
    pub kind: TestKind,
    pub p_values: Vec<f64>,
    pub statistic: Option<f64>,
    pub passed: Option<bool>,
    pub skipped: Option<String>,
}

pub fn randomness_results_csv(rows: &[RandomnessRow]) -> String {
    let mut out = String::from("sequence,test,p_value,statistic,result\n");
    for row in rows {
        let seq = row.sequence.map_or_else(|| "all".to_string(), |s| s.to_string());
        let p = row.p_values.iter().map(|&p| sig6(p)).collect::<Vec<_>>().join(";");
        let stat = row.statistic.map(sig6).unwrap_or_default();
        let result = match (&row.passed, &row.skipped) {
            (Some(true), _) => "pass".to_string(),
            (Some(false), _) => "fail".to_string(),
            (None, Some(reason)) => format!("skipped: {}", reason.replace(',', ";")),
            (None, None) => "skipped".to_string(),
        };
        let _ = writeln!(out, "{seq},{},{p},{stat},{result}", row.kind.label());
    }
    out
}

pub fn randomness_aggregate_csv(agg: &SuiteAggregate) -> String {
    let mut out = String::from("test,passing,total,skipped,proportion,uniformity_p\n");
    for e in &agg.entries {
        let proportion = if e.total > 0 { sig6(e.proportion()) } else { String::new() };
        let uniformity = e.uniformity_p.map(sig6).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{proportion},{uniformity}",
            e.kind.label(),
            e.passing,
            e.total,
            e.skipped
        );
    }
    out
}

/// Six significant digits, trailing zeros trimmed.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&magnitude) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pufsim_core::population::generate_population;

    #[test]
    fn population_round_trip() {
        let mut spec = PopulationSpec::unbiased(3, 8, 0.25, 5).unwrap();
        spec.bias_map.push(pufsim_core::population::PositionBias {
            row: 0,
            col: 2,
            offset: 0.1,
        });
        let pop = generate_population(&spec).unwrap();
        let bytes = encode_population(&pop).unwrap();
        let back = decode_population(&bytes, Path::new("p")).unwrap();
        assert_eq!(back, pop);
        assert!(decode_population(&bytes[..bytes.len() - 1], Path::new("p")).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_population(&bad, Path::new("p")).is_err());
    }

    #[test]
    fn signature_round_trip_with_and_without_mask() {
        let rows = ["0110101", "1110000", "0001111", "1010101"].map(|s| BitVector::from_ascii(s).unwrap());
        let sigs = SignatureSet::new(2, 2, 7, rows.to_vec()).unwrap();
        let bytes = encode_signatures(&sigs).unwrap();
        assert_eq!(decode_signatures(&bytes, Path::new("s")).unwrap(), sigs);
        let masked = sigs.apply_mask(&PositionMask::from_kept(7, [1, 3, 6]).unwrap()).unwrap();
        let bytes = encode_signatures(&masked).unwrap();
        assert_eq!(decode_signatures(&bytes, Path::new("s")).unwrap(), masked);
    }

    #[test]
    fn mask_text_round_trip() {
        let mask = PositionMask::from_kept(5, [0, 4]).unwrap();
        assert_eq!(mask_text(&mask), "10001\n");
        assert_eq!(parse_mask_text("10001\n", Path::new("m")).unwrap(), mask);
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(49.912345678), "49.9123");
        assert_eq!(sig6(0.5), "0.5");
        assert_eq!(sig6(100.0), "100");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/file.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
