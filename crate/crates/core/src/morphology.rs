//! Connected components, boundary pixels and disc occupancy.
//!
//! Foreground is 8-connected; a pixel is on the boundary when one of its
//! 4-neighbours is background or lies outside the window.

use std::collections::VecDeque;

use crate::error::{invalid, Result};
use crate::raster::BinaryRaster;

pub type Pixel = (u32, u32);

/// Inclusive pixel bounds of a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

/// One 8-connected foreground region.
///
/// `pixels` and `boundary` are both in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<Pixel>,
    pub boundary: Vec<Pixel>,
    pub bounding_box: BoundingBox,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

const NEIGHBOURS_4: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

fn is_boundary(raster: &BinaryRaster, x: i64, y: i64) -> bool {
    NEIGHBOURS_4
        .iter()
        .any(|&(dx, dy)| !raster.is_foreground(x + dx, y + dy))
}

/// Labels the foreground into 8-connected components, ordered by their
/// first pixel in row-major scan order.
pub fn connected_components(raster: &BinaryRaster) -> Vec<Component> {
    let (w, h) = (raster.width(), raster.height());
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..w * h {
        if seen[start] || !raster.bits()[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(idx) = queue.pop_front() {
            members.push(idx);
            let (x, y) = ((idx % w) as i64, (idx / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if raster.is_foreground(nx, ny) {
                        let n = ny as usize * w + nx as usize;
                        if !seen[n] {
                            seen[n] = true;
                            queue.push_back(n);
                        }
                    }
                }
            }
        }
        members.sort_unstable();

        let mut bbox = BoundingBox { min_x: u32::MAX, min_y: u32::MAX, max_x: 0, max_y: 0 };
        let mut pixels = Vec::with_capacity(members.len());
        let mut boundary = Vec::new();
        for idx in members {
            let (x, y) = ((idx % w) as u32, (idx / w) as u32);
            bbox.min_x = bbox.min_x.min(x);
            bbox.min_y = bbox.min_y.min(y);
            bbox.max_x = bbox.max_x.max(x);
            bbox.max_y = bbox.max_y.max(y);
            pixels.push((x, y));
            if is_boundary(raster, x as i64, y as i64) {
                boundary.push((x, y));
            }
        }
        components.push(Component { pixels, boundary, bounding_box: bbox });
    }
    components
}

/// Integer offsets of the digital disc of radius `r` (`dx² + dy² ≤ r²`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscMask {
    radius: u32,
    offsets: Vec<(i32, i32)>,
}

impl DiscMask {
    pub fn new(radius: u32) -> Result<Self> {
        if radius < 1 {
            return Err(invalid("disc radius must be at least 1"));
        }
        let r = radius as i32;
        let offsets = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        Ok(Self { radius, offsets })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    /// Number of pixels forming the disc.
    pub fn size_l(&self) -> usize {
        self.offsets.len()
    }
}

/// Same as [`DiscMask::new`].
pub fn disc_mask(r: u32) -> Result<DiscMask> {
    DiscMask::new(r)
}

/// Number of disc pixels around `z` that are foreground. Pixels outside
/// the raster count as background.
pub fn occupancy_count(raster: &BinaryRaster, z: Pixel, mask: &DiscMask) -> usize {
    let (zx, zy) = (z.0 as i64, z.1 as i64);
    mask.offsets
        .iter()
        .filter(|&&(dx, dy)| raster.is_foreground(zx + dx as i64, zy + dy as i64))
        .count()
}

/// Fraction of the disc around `z` covered by foreground. The denominator
/// is always the full disc size.
pub fn occupancy_ratio(raster: &BinaryRaster, z: Pixel, mask: &DiscMask) -> Result<f64> {
    if !raster.is_foreground(z.0 as i64, z.1 as i64) {
        return Err(invalid(format!("pixel ({}, {}) is not foreground", z.0, z.1)));
    }
    Ok(occupancy_count(raster, z, mask) as f64 / mask.size_l() as f64)
}

/// True when some boundary disc of `comp` reaches outside the raster.
pub fn touches_window_edge(raster: &BinaryRaster, comp: &Component, radius: u32) -> bool {
    let r = radius;
    let bb = comp.bounding_box;
    bb.min_x < r
        || bb.min_y < r
        || bb.max_x as usize + r as usize >= raster.width()
        || bb.max_y as usize + r as usize >= raster.height()
}
