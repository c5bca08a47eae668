//! Core raster types and depth normalization.
//!
//! A [`DepthMap`] is a dense single-channel float32 raster with an explicit
//! per-pixel validity mask and a unit tag; an [`ImageMap`] is a 1- or
//! 3-channel float32 raster in `[0, 1]`. Depth maps in the `Normalized`
//! convention always lie in `[-1, 1]` on valid pixels.
//!
//! Normalization maps a chosen low/high percentile of the valid values onto
//! `-1` and `+1` and clamps the rest, which keeps sensor-style outliers from
//! compressing the usable range. The affine endpoints are returned in a
//! [`NormalizationRecord`] so the map can be undone exactly for unclamped
//! pixels.

use crate::error::{Error, Result};

/// Unit convention of a depth raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthUnits {
    /// Scene distance along the optical axis, strictly positive.
    Metric,
    /// Affine-ambiguous model output (disparity-like; unknown scale/shift).
    Inverse,
    /// Affinely remapped to `[-1, 1]`.
    Normalized,
}

impl std::fmt::Display for DepthUnits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DepthUnits::Metric => "metric",
            DepthUnits::Inverse => "inverse",
            DepthUnits::Normalized => "normalized",
        };
        f.write_str(s)
    }
}

/// Dense single-channel depth raster with validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
    validity: Vec<u8>,
    units: DepthUnits,
}

impl DepthMap {
    /// Builds a map and checks the type invariants: finite values on valid
    /// pixels, and `[-1, 1]` range when `units` is `Normalized`.
    pub fn new(
        height: usize,
        width: usize,
        values: Vec<f32>,
        validity: Vec<u8>,
        units: DepthUnits,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("zero raster dimension {height}x{width}")));
        }
        let n = height * width;
        if values.len() != n || validity.len() != n {
            return Err(Error::Shape(format!(
                "buffer length mismatch: {}x{} raster, {} values, {} validity",
                height,
                width,
                values.len(),
                validity.len()
            )));
        }
        for i in 0..n {
            if validity[i] != 0 {
                let v = values[i];
                if !v.is_finite() {
                    return Err(Error::Format(format!("non-finite value {v} at valid pixel {i}")));
                }
                if units == DepthUnits::Normalized && !(-1.0..=1.0).contains(&v) {
                    return Err(Error::Range(format!(
                        "normalized value {v} at pixel {i} outside [-1, 1]"
                    )));
                }
            }
        }
        Ok(DepthMap {
            height,
            width,
            values,
            validity,
            units,
        })
    }

    /// All-valid map from raw values.
    pub fn dense(height: usize, width: usize, values: Vec<f32>, units: DepthUnits) -> Result<Self> {
        let validity = vec![1u8; height * width];
        DepthMap::new(height, width, values, validity, units)
    }

    /// Constant map (handy in tests and for degenerate-case checks).
    pub fn constant(height: usize, width: usize, value: f32, units: DepthUnits) -> Result<Self> {
        DepthMap::dense(height, width, vec![value; height * width], units)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn units(&self) -> DepthUnits {
        self.units
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn validity(&self) -> &[u8] {
        &self.validity
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.validity[y * self.width + x] != 0
    }

    /// Number of valid pixels.
    pub fn valid_count(&self) -> usize {
        self.validity.iter().filter(|&&v| v != 0).count()
    }

    /// True when every pixel is valid.
    pub fn all_valid(&self) -> bool {
        self.validity.iter().all(|&v| v != 0)
    }

    /// Valid values in raster order.
    pub fn valid_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.values
            .iter()
            .zip(self.validity.iter())
            .filter(|(_, &m)| m != 0)
            .map(|(&v, _)| v)
    }

    /// Same shape and mask, new values and units. Invariants re-checked.
    pub fn with_values(&self, values: Vec<f32>, units: DepthUnits) -> Result<Self> {
        DepthMap::new(self.height, self.width, values, self.validity.clone(), units)
    }
}

/// Image raster, 1 (grayscale) or 3 (RGB) channels, interleaved, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMap {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f32>,
}

impl ImageMap {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("zero raster dimension {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("unsupported channel count {channels}")));
        }
        if values.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "buffer length mismatch: {}x{}x{} raster, {} values",
                height,
                width,
                channels,
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Range(format!("image value {v} at index {i} outside [0, 1]")));
            }
        }
        Ok(ImageMap {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.values[(y * self.width + x) * self.channels + c]
    }

    /// Channel-mean grayscale copy.
    pub fn to_gray(&self) -> ImageMap {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = Vec::with_capacity(self.height * self.width);
        for px in self.values.chunks(self.channels) {
            out.push(px.iter().sum::<f32>() / self.channels as f32);
        }
        ImageMap {
            height: self.height,
            width: self.width,
            channels: 1,
            values: out,
        }
    }
}

/// Affine endpoints of a normalization: `lo -> -1`, `hi -> +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationRecord {
    pub lo: f64,
    pub hi: f64,
    /// True if the endpoints came from percentiles rather than the full range.
    pub percentile_based: bool,
}

impl NormalizationRecord {
    pub fn new(lo: f64, hi: f64, percentile_based: bool) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Range(format!("normalization endpoints need hi > lo, got {lo}..{hi}")));
        }
        Ok(NormalizationRecord {
            lo,
            hi,
            percentile_based,
        })
    }
}

/// Percentile of sorted data with linear interpolation between ranks.
///
/// `p` in `[0, 100]`; data must be non-empty and sorted ascending.
fn percentile_sorted(sorted: &[f32], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0] as f64;
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] as f64 * (1.0 - frac) + sorted[hi.min(n - 1)] as f64 * frac
}

/// Affinely maps valid values so the `lo_pct`/`hi_pct` percentiles land on
/// `-1`/`+1`, clamping the rest into `[-1, 1]`. Invalid pixels become 0 with
/// validity 0.
pub fn normalize_depth(
    d: &DepthMap,
    lo_pct: f64,
    hi_pct: f64,
) -> Result<(DepthMap, NormalizationRecord)> {
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(Error::Range(format!(
            "percentiles must satisfy 0 <= lo < hi <= 100, got {lo_pct}/{hi_pct}"
        )));
    }
    let mut sorted: Vec<f32> = d.valid_values().collect();
    if sorted.is_empty() {
        return Err(Error::EmptyDepth);
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("valid values are finite"));
    let lo = percentile_sorted(&sorted, lo_pct);
    let hi = percentile_sorted(&sorted, hi_pct);
    if !(hi > lo) {
        return Err(Error::DegenerateDepth);
    }
    let record = NormalizationRecord::new(lo, hi, lo_pct > 0.0 || hi_pct < 100.0)?;

    let scale = 2.0 / (hi - lo);
    let n = d.height() * d.width();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        if d.validity()[i] != 0 {
            let v = (d.values()[i] as f64 - lo) * scale - 1.0;
            values.push(v.clamp(-1.0, 1.0) as f32);
        } else {
            values.push(0.0);
        }
    }
    let out = DepthMap::new(
        d.height(),
        d.width(),
        values,
        d.validity().to_vec(),
        DepthUnits::Normalized,
    )?;
    Ok((out, record))
}

/// Exact inverse of the normalization affine map for unclamped pixels.
pub fn denormalize_depth(d: &DepthMap, rec: &NormalizationRecord) -> Result<DepthMap> {
    if d.units() != DepthUnits::Normalized {
        return Err(Error::UnitMismatch {
            expected: DepthUnits::Normalized.to_string(),
            got: d.units().to_string(),
        });
    }
    if !(rec.hi > rec.lo) {
        return Err(Error::Range(format!(
            "normalization record needs hi > lo, got {}..{}",
            rec.lo, rec.hi
        )));
    }
    let half_span = (rec.hi - rec.lo) / 2.0;
    let n = d.height() * d.width();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        if d.validity()[i] != 0 {
            let v = (d.values()[i] as f64 + 1.0) * half_span + rec.lo;
            values.push(v as f32);
        } else {
            values.push(0.0);
        }
    }
    DepthMap::new(
        d.height(),
        d.width(),
        values,
        d.validity().to_vec(),
        DepthUnits::Metric,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, lo: f32, hi: f32) -> DepthMap {
        let values: Vec<f32> = (0..n)
            .map(|i| lo + (hi - lo) * i as f32 / (n - 1) as f32)
            .collect();
        DepthMap::dense(1, n, values, DepthUnits::Metric).unwrap()
    }

    #[test]
    fn full_range_ramp_maps_to_unit_interval() {
        let d = ramp(11, 0.0, 10.0);
        let (norm, rec) = normalize_depth(&d, 0.0, 100.0).unwrap();
        assert_eq!(rec.lo, 0.0);
        assert_eq!(rec.hi, 10.0);
        assert!(!rec.percentile_based);
        assert_eq!(norm.values()[0], -1.0);
        assert_eq!(norm.values()[10], 1.0);
        assert!((norm.values()[5] - 0.0).abs() < 1e-6);
    }

    #[test]
    fn constant_map_is_degenerate() {
        let d = DepthMap::constant(4, 4, 5.0, DepthUnits::Metric).unwrap();
        assert!(matches!(normalize_depth(&d, 0.0, 100.0), Err(Error::DegenerateDepth)));
    }

    #[test]
    fn no_valid_pixels_is_empty() {
        let d = DepthMap::new(2, 2, vec![1.0; 4], vec![0; 4], DepthUnits::Metric).unwrap();
        assert!(matches!(normalize_depth(&d, 0.0, 100.0), Err(Error::EmptyDepth)));
    }

    #[test]
    fn percentile_endpoints_match_sort_oracle() {
        // Independent oracle: nearest-rank interpolation over an explicit sort.
        let d = ramp(101, 0.0, 10.0);
        let (_, rec) = normalize_depth(&d, 2.0, 98.0).unwrap();

        let mut sorted: Vec<f32> = d.values().to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let oracle = |p: f64| {
            let rank = p / 100.0 * (sorted.len() - 1) as f64;
            let lo = rank.floor() as usize;
            let frac = rank - lo as f64;
            sorted[lo] as f64 * (1.0 - frac) + sorted[(lo + 1).min(sorted.len() - 1)] as f64 * frac
        };
        assert!((rec.lo - oracle(2.0)).abs() < 1e-9, "lo {} vs {}", rec.lo, oracle(2.0));
        assert!((rec.hi - oracle(98.0)).abs() < 1e-9);
        assert!(rec.percentile_based);
    }

    #[test]
    fn interior_mapping_follows_percentile_endpoints() {
        let d = ramp(101, 0.0, 10.0);
        let (norm, rec) = normalize_depth(&d, 2.0, 98.0).unwrap();
        // A value exactly halfway between the endpoints maps to 0.
        let mid = ((rec.lo + rec.hi) / 2.0) as f32;
        let idx = d.values().iter().position(|&v| (v - mid).abs() < 0.06).unwrap();
        assert!(norm.values()[idx].abs() < 0.02);
        // Values beyond the endpoints clamp.
        assert_eq!(norm.values()[0], -1.0);
        assert_eq!(norm.values()[100], 1.0);
    }

    #[test]
    fn normalize_then_denormalize_is_identity_at_full_range() {
        let d = ramp(64, 1.0, 9.0);
        let (norm, rec) = normalize_depth(&d, 0.0, 100.0).unwrap();
        let back = denormalize_depth(&norm, &rec).unwrap();
        for (a, b) in d.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn denormalize_midpoint_and_endpoint() {
        let rec = NormalizationRecord::new(2.0, 6.0, false).unwrap();
        let d = DepthMap::dense(1, 1, vec![0.0], DepthUnits::Normalized).unwrap();
        assert_eq!(denormalize_depth(&d, &rec).unwrap().values()[0], 4.0);

        let rec = NormalizationRecord::new(-3.0, 3.0, false).unwrap();
        let d = DepthMap::dense(1, 1, vec![1.0], DepthUnits::Normalized).unwrap();
        assert_eq!(denormalize_depth(&d, &rec).unwrap().values()[0], 3.0);
    }

    #[test]
    fn denormalize_rejects_wrong_units() {
        let rec = NormalizationRecord::new(0.0, 1.0, false).unwrap();
        let d = DepthMap::constant(2, 2, 0.5, DepthUnits::Metric).unwrap();
        assert!(matches!(denormalize_depth(&d, &rec), Err(Error::UnitMismatch { .. })));
    }

    #[test]
    fn normalized_constructor_rejects_out_of_range() {
        let r = DepthMap::dense(1, 2, vec![0.0, 1.5], DepthUnits::Normalized);
        assert!(matches!(r, Err(Error::Range(_))));
    }

    #[test]
    fn output_never_exceeds_unit_range() {
        // Heavy-tailed input: percentile endpoints clamp the outliers.
        let mut values = vec![0.0f32; 100];
        for (i, v) in values.iter_mut().enumerate() {
            *v = i as f32;
        }
        values[99] = 1e6;
        let d = DepthMap::dense(10, 10, values, DepthUnits::Metric).unwrap();
        let (norm, _) = normalize_depth(&d, 2.0, 98.0).unwrap();
        for &v in norm.values() {
            assert!((-1.0..=1.0).contains(&v));
        }
    }
}
