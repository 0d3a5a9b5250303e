//! Disc germ-grain models and their rasterisation.
//!
//! Three generators stand in for the model classes: a Boolean model
//! (Poisson germs), a Matérn cluster process and a Matérn type-II hard-core
//! process. Germs are sampled in the window enlarged by the largest disc
//! radius so that discs centred just outside still reach in.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::raster::BinaryRaster;

pub const MIN_WINDOW: usize = 32;

/// Disc radius, either constant or uniform on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiscRadius {
    Fixed(f64),
    Uniform { min: f64, max: f64 },
}

impl DiscRadius {
    pub fn max(&self) -> f64 {
        match *self {
            DiscRadius::Fixed(r) => r,
            DiscRadius::Uniform { max, .. } => max,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            DiscRadius::Fixed(r) => r,
            DiscRadius::Uniform { min, max } if max > min => rng.random_range(min..max),
            DiscRadius::Uniform { min, .. } => min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GermProcess {
    Boolean {
        intensity: f64,
    },
    ClusterProxy {
        parent_intensity: f64,
        mean_offspring: f64,
        cluster_radius: f64,
    },
    HardCoreProxy {
        proposal_intensity: f64,
        hard_core_distance: f64,
    },
}

/// A model class: window, grain radius and germ process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Class name used for output file names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub window: (usize, usize),
    pub disc_radius: DiscRadius,
    #[serde(flatten)]
    pub process: GermProcess,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscConfiguration {
    pub discs: Vec<Disc>,
}

impl DiscConfiguration {
    pub fn len(&self) -> usize {
        self.discs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discs.is_empty()
    }
}

fn rate(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.window;
        if w < MIN_WINDOW || h < MIN_WINDOW {
            return Err(invalid(format!("window {w}x{h} smaller than {MIN_WINDOW}x{MIN_WINDOW}")));
        }
        match self.disc_radius {
            DiscRadius::Fixed(r) if r.is_finite() && r > 0.0 => {}
            DiscRadius::Uniform { min, max } if min.is_finite() && max.is_finite() && min > 0.0 && max >= min => {}
            other => return Err(invalid(format!("bad disc radius {other:?}"))),
        }
        match self.process {
            GermProcess::Boolean { intensity } => rate("intensity", intensity),
            GermProcess::ClusterProxy { parent_intensity, mean_offspring, cluster_radius } => {
                rate("parent_intensity", parent_intensity)?;
                rate("mean_offspring", mean_offspring)?;
                if cluster_radius.is_finite() && cluster_radius > 0.0 {
                    Ok(())
                } else {
                    Err(invalid(format!("cluster_radius must be positive, got {cluster_radius}")))
                }
            }
            GermProcess::HardCoreProxy { proposal_intensity, hard_core_distance } => {
                rate("proposal_intensity", proposal_intensity)?;
                rate("hard_core_distance", hard_core_distance)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn poisson(rng: &mut impl Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
}

/// Rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn grown(w: usize, h: usize, by: f64) -> Self {
        Rect { x0: -by, y0: -by, x1: w as f64 + by, y1: h as f64 + by }
    }

    fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    fn uniform_points(&self, rng: &mut impl Rng, intensity: f64) -> Vec<(f64, f64)> {
        let n = poisson(rng, intensity * self.area());
        (0..n)
            .map(|_| (rng.random_range(self.x0..self.x1), rng.random_range(self.y0..self.y1)))
            .collect()
    }
}

/// Draws germs and grain radii for one realisation.
pub fn simulate(spec: &ModelSpec, seed: u64) -> Result<DiscConfiguration> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = spec.window;
    let margin = spec.disc_radius.max();
    let sampling = Rect::grown(w, h, margin);

    let centres: Vec<(f64, f64)> = match spec.process {
        GermProcess::Boolean { intensity } => sampling.uniform_points(&mut rng, intensity),
        GermProcess::ClusterProxy { parent_intensity, mean_offspring, cluster_radius } => {
            let parents = Rect::grown(w, h, margin + cluster_radius).uniform_points(&mut rng, parent_intensity);
            let mut children = Vec::new();
            for (px, py) in parents {
                for _ in 0..poisson(&mut rng, mean_offspring) {
                    let rho = cluster_radius * rng.random::<f64>().sqrt();
                    let phi = 2.0 * PI * rng.random::<f64>();
                    let (x, y) = (px + rho * phi.cos(), py + rho * phi.sin());
                    if sampling.contains(x, y) {
                        children.push((x, y));
                    }
                }
            }
            children
        }
        GermProcess::HardCoreProxy { proposal_intensity, hard_core_distance } => {
            let proposals = sampling.uniform_points(&mut rng, proposal_intensity);
            let marks: Vec<f64> = proposals.iter().map(|_| rng.random()).collect();
            let d2 = hard_core_distance * hard_core_distance;
            proposals
                .iter()
                .enumerate()
                .filter(|&(i, &(xi, yi))| {
                    !proposals.iter().enumerate().any(|(j, &(xj, yj))| {
                        j != i && marks[j] < marks[i] && (xi - xj).powi(2) + (yi - yj).powi(2) < d2
                    })
                })
                .map(|(_, &p)| p)
                .collect()
        }
    };

    let discs = centres
        .into_iter()
        .map(|(x, y)| Disc { x, y, radius: spec.disc_radius.sample(&mut rng) })
        .collect();
    Ok(DiscConfiguration { discs })
}

/// Pixel `(x, y)` is foreground iff its centre `(x + ½, y + ½)` lies in
/// some disc.
pub fn rasterize(config: &DiscConfiguration, width: usize, height: usize) -> Result<BinaryRaster> {
    let mut bits = vec![false; width.saturating_mul(height)];
    for d in &config.discs {
        let r2 = d.radius * d.radius;
        let x_lo = (d.x - d.radius - 0.5).floor().max(0.0) as usize;
        let y_lo = (d.y - d.radius - 0.5).floor().max(0.0) as usize;
        let x_hi = (d.x + d.radius - 0.5).ceil().min(width as f64 - 1.0);
        let y_hi = (d.y + d.radius - 0.5).ceil().min(height as f64 - 1.0);
        if x_hi < 0.0 || y_hi < 0.0 {
            continue;
        }
        for y in y_lo..=y_hi as usize {
            let dy = y as f64 + 0.5 - d.y;
            for x in x_lo..=x_hi as usize {
                let dx = x as f64 + 0.5 - d.x;
                if dx * dx + dy * dy <= r2 {
                    bits[y * width + x] = true;
                }
            }
        }
    }
    BinaryRaster::from_bits(width, height, bits)
}

/// Simulates and rasterises in one step.
pub fn realise(spec: &ModelSpec, seed: u64) -> Result<BinaryRaster> {
    let config = simulate(spec, seed)?;
    rasterize(&config, spec.window.0, spec.window.1)
}

const BOOLEAN_V1: &str = include_str!("../configs/models/v1/boolean.json");
const CLUSTER_V1: &str = include_str!("../configs/models/v1/cluster.json");
const HARDCORE_V1: &str = include_str!("../configs/models/v1/hardcore.json");

/// The shipped model classes (Boolean, cluster, repulsive), version 1.
pub fn default_specs() -> Vec<ModelSpec> {
    [BOOLEAN_V1, CLUSTER_V1, HARDCORE_V1]
        .iter()
        .map(|t| ModelSpec::from_json(t).expect("shipped model spec is valid"))
        .collect()
}
