//! Per-component shape features: the C-function histogram of boundary
//! disc occupancy and the perimeter/area ratio.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::morphology::{self, Component, DiscMask};
use crate::raster::BinaryRaster;

pub const FEATURE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFeatures {
    /// `t(u)` at `u = 1/l, 2/l, …, 1`.
    #[serde(rename = "t")]
    pub c_function: Vec<f64>,
    #[serde(rename = "pa")]
    pub pa_ratio: f64,
    pub n_boundary: usize,
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealisationFeatures {
    pub components: Vec<ComponentFeatures>,
    pub radius_r: u32,
    pub source_id: String,
    pub class_label: Option<String>,
}

impl RealisationFeatures {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Options for [`extract_features_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractOptions {
    /// Skip components whose boundary discs reach outside the window.
    pub drop_border_components: bool,
}

/// Histogram bin of an occupancy count. Bin `j` (0-based) holds
/// `T ∈ [j/l, (j+1)/l)`; the last bin is closed so that `T = 1` lands in it.
#[inline]
fn bin_of(hits: usize, l: usize) -> usize {
    hits.min(l - 1)
}

/// Discrete C-function of `comp`. Bin arithmetic is done on integer
/// occupancy counts so no boundary pixel is misfiled by rounding.
pub fn c_function(raster: &BinaryRaster, comp: &Component, mask: &DiscMask) -> Vec<f64> {
    let l = mask.size_l();
    let mut counts = vec![0usize; l];
    for &z in &comp.boundary {
        counts[bin_of(morphology::occupancy_count(raster, z, mask), l)] += 1;
    }
    let n = comp.boundary.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Boundary pixel count over total pixel count.
pub fn pa_ratio(comp: &Component) -> f64 {
    comp.boundary.len() as f64 / comp.area() as f64
}

pub fn component_features(raster: &BinaryRaster, comp: &Component, mask: &DiscMask) -> ComponentFeatures {
    ComponentFeatures {
        c_function: c_function(raster, comp, mask),
        pa_ratio: pa_ratio(comp),
        n_boundary: comp.boundary.len(),
        area: comp.area(),
    }
}

pub fn extract_features(
    raster: &BinaryRaster,
    r: u32,
    source_id: &str,
    label: Option<&str>,
) -> Result<RealisationFeatures> {
    extract_features_with(raster, r, source_id, label, ExtractOptions::default())
}

pub fn extract_features_with(
    raster: &BinaryRaster,
    r: u32,
    source_id: &str,
    label: Option<&str>,
    options: ExtractOptions,
) -> Result<RealisationFeatures> {
    let mask = DiscMask::new(r)?;
    let components: Vec<ComponentFeatures> = morphology::connected_components(raster)
        .par_iter()
        .filter(|c| !(options.drop_border_components && morphology::touches_window_edge(raster, c, r)))
        .map(|c| component_features(raster, c, &mask))
        .collect();
    if components.is_empty() {
        return Err(Error::NoComponents);
    }
    Ok(RealisationFeatures {
        components,
        radius_r: r,
        source_id: source_id.to_owned(),
        class_label: label.map(str::to_owned),
    })
}

#[derive(Serialize, Deserialize)]
struct Record {
    schema: u32,
    r: u32,
    source_id: String,
    class_label: Option<String>,
    components: Vec<ComponentFeatures>,
}

fn validate(index: usize, rec: Record) -> Result<RealisationFeatures> {
    let fail = |message: String| Error::FeatureRecord { index, message };
    if rec.schema != FEATURE_SCHEMA {
        return Err(fail(format!("schema {} unsupported (expected {FEATURE_SCHEMA})", rec.schema)));
    }
    let l = DiscMask::new(rec.r).map_err(|e| fail(e.to_string()))?.size_l();
    if rec.components.is_empty() {
        return Err(fail("no components".into()));
    }
    for (ci, c) in rec.components.iter().enumerate() {
        if c.c_function.len() != l {
            return Err(fail(format!(
                "component {ci}: t has length {} but r={} needs {l}",
                c.c_function.len(),
                rec.r
            )));
        }
        if c.c_function.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(fail(format!("component {ci}: t entries must be finite and nonnegative")));
        }
        if !(c.pa_ratio > 0.0 && c.pa_ratio <= 1.0) {
            return Err(fail(format!("component {ci}: pa {} outside (0, 1]", c.pa_ratio)));
        }
        if c.n_boundary == 0 || c.n_boundary > c.area {
            return Err(fail(format!("component {ci}: n_boundary {} vs area {}", c.n_boundary, c.area)));
        }
    }
    Ok(RealisationFeatures {
        components: rec.components,
        radius_r: rec.r,
        source_id: rec.source_id,
        class_label: rec.class_label,
    })
}

/// Serialises a feature list as a JSON array of versioned records.
pub fn features_to_json(fs: &[RealisationFeatures]) -> Result<String> {
    let records: Vec<Record> = fs
        .iter()
        .map(|f| Record {
            schema: FEATURE_SCHEMA,
            r: f.radius_r,
            source_id: f.source_id.clone(),
            class_label: f.class_label.clone(),
            components: f.components.clone(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

pub fn features_from_json(text: &str) -> Result<Vec<RealisationFeatures>> {
    let values: Vec<serde_json::Value> = serde_json::from_str(text)?;
    values
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            let rec: Record = serde_json::from_value(v)
                .map_err(|e| Error::FeatureRecord { index, message: e.to_string() })?;
            validate(index, rec)
        })
        .collect()
}

pub fn save_features(path: impl AsRef<Path>, fs: &[RealisationFeatures]) -> Result<()> {
    let mut text = features_to_json(fs)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Vec<RealisationFeatures>> {
    features_from_json(&fs::read_to_string(path)?)
}

/// Checks that every realisation was built with the same radius.
pub fn common_radius(fs: &[RealisationFeatures]) -> Result<u32> {
    let r = fs.first().ok_or_else(|| invalid("empty feature list"))?.radius_r;
    match fs.iter().find(|f| f.radius_r != r) {
        Some(f) => Err(Error::RadiusMismatch(r, f.radius_r)),
        None => Ok(r),
    }
}
