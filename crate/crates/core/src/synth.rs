//! Seeded generator of synthetic wafer maps for the eight defect classes.
//!
//! Geometry is in continuous cell coordinates: cell `(i, j)` has its center at
//! `(i + 0.5, j + 0.5)` and the wafer disk is centered on the grid.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{
    DefectClass, LabeledDataset, LabeledItem, Provenance, Sample, WaferMap, DEFECT_DIE, GOOD_DIE,
    N_CLASSES, OFF_WAFER,
};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Per-class counts of the reference dataset divided by ten (floor),
/// in label order.
pub const DESK_COUNTS: [usize; N_CLASSES] = [429, 55, 518, 968, 359, 86, 119, 14];

/// Closed interval sampled uniformly.
pub type Range = (f64, f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub grid: usize,
    pub wafer_radius: f64,
    pub salt_noise_prob: f64,
    /// Center disk radius, as a fraction of `grid`.
    pub center_radius: Range,
    /// Donut inner radius, fraction of `grid`.
    pub donut_inner: Range,
    /// Donut ring thickness, fraction of `grid`.
    pub donut_width: Range,
    /// Edge-Loc angular span in degrees.
    pub edge_loc_span_deg: Range,
    /// Edge-Loc radial depth in cells.
    pub edge_loc_depth: Range,
    /// Edge-Ring band width in cells.
    pub edge_ring_width: Range,
    /// Loc blob radius, fraction of `grid`.
    pub loc_radius: Range,
    /// Loc blob offset from the wafer center, fraction of `wafer_radius`.
    pub loc_offset: Range,
    pub random_rate: Range,
    pub near_full_rate: Range,
    /// Scratch thickness in cells (rounded).
    pub scratch_width: Range,
    /// Scratch length, fraction of the wafer diameter.
    pub scratch_length: Range,
    /// Scratch direction in degrees, counter-clockwise from the row axis.
    pub scratch_angle_deg: Range,
    /// Distance of the scratch midpoint from the wafer center, fraction
    /// of `wafer_radius`.
    pub scratch_offset: Range,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self::for_grid(26)
    }
}

impl SynthParams {
    pub fn for_grid(grid: usize) -> Self {
        Self {
            grid,
            wafer_radius: grid as f64 / 2.0,
            salt_noise_prob: 0.02,
            center_radius: (0.15, 0.3),
            donut_inner: (0.12, 0.2),
            donut_width: (0.08, 0.14),
            edge_loc_span_deg: (20.0, 70.0),
            edge_loc_depth: (2.0, 4.0),
            edge_ring_width: (1.0, 3.0),
            loc_radius: (0.08, 0.15),
            loc_offset: (0.3, 0.6),
            random_rate: (0.10, 0.25),
            near_full_rate: (0.75, 0.95),
            scratch_width: (1.0, 2.0),
            scratch_length: (0.6, 0.9),
            scratch_angle_deg: (20.0, 70.0),
            scratch_offset: (0.0, 0.35),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("synth params: {what}")));
        let half = self.grid as f64 / 2.0;
        if self.grid < 4 {
            return bad("grid must be at least 4");
        }
        if !(self.wafer_radius > 0.0 && self.wafer_radius <= half) {
            return bad("wafer_radius must lie in (0, grid/2]");
        }
        let ranges = [
            ("center_radius", self.center_radius),
            ("donut_inner", self.donut_inner),
            ("donut_width", self.donut_width),
            ("edge_loc_span_deg", self.edge_loc_span_deg),
            ("edge_loc_depth", self.edge_loc_depth),
            ("edge_ring_width", self.edge_ring_width),
            ("loc_radius", self.loc_radius),
            ("loc_offset", self.loc_offset),
            ("random_rate", self.random_rate),
            ("near_full_rate", self.near_full_rate),
            ("scratch_width", self.scratch_width),
            ("scratch_length", self.scratch_length),
            ("scratch_angle_deg", self.scratch_angle_deg),
            ("scratch_offset", self.scratch_offset),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
                return bad(&format!("{name} must be a finite nonnegative range lo <= hi"));
            }
        }
        for (name, p) in [
            ("salt_noise_prob", (self.salt_noise_prob, self.salt_noise_prob)),
            ("random_rate", self.random_rate),
            ("near_full_rate", self.near_full_rate),
            ("loc_offset", self.loc_offset),
            ("scratch_offset", self.scratch_offset),
        ] {
            if p.1 > 1.0 || p.0 < 0.0 {
                return bad(&format!("{name} must lie in [0,1]"));
            }
        }
        let g = self.grid as f64;
        if self.center_radius.1 * g > half
            || (self.donut_inner.1 + self.donut_width.1) * g > half
            || self.loc_radius.1 * g > half
        {
            return bad("radii must not exceed grid/2");
        }
        Ok(())
    }
}

fn uniform(rng: &mut Rng, (lo, hi): Range) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

struct Canvas {
    grid: usize,
    center: f64,
    radius: f64,
    map: WaferMap,
}

impl Canvas {
    fn new(p: &SynthParams) -> Self {
        let center = p.grid as f64 / 2.0;
        let mut cells = vec![OFF_WAFER; p.grid * p.grid];
        for i in 0..p.grid {
            for j in 0..p.grid {
                let (dy, dx) = (i as f64 + 0.5 - center, j as f64 + 0.5 - center);
                if dy.hypot(dx) <= p.wafer_radius {
                    cells[i * p.grid + j] = GOOD_DIE;
                }
            }
        }
        Self {
            grid: p.grid,
            center,
            radius: p.wafer_radius,
            map: WaferMap::new(p.grid, p.grid, cells).expect("canvas is valid by construction"),
        }
    }

    fn on_wafer(&self, i: usize, j: usize) -> bool {
        self.map.get(i, j) != OFF_WAFER
    }

    /// Marks every on-wafer cell whose center satisfies `pred(dy, dx)`, with
    /// offsets measured from the wafer center.
    fn mark_where(&mut self, pred: impl Fn(f64, f64) -> bool) {
        for i in 0..self.grid {
            for j in 0..self.grid {
                let dy = i as f64 + 0.5 - self.center;
                let dx = j as f64 + 0.5 - self.center;
                if self.on_wafer(i, j) && pred(dy, dx) {
                    self.map.set(i, j, DEFECT_DIE);
                }
            }
        }
    }

    fn mark_bernoulli(&mut self, rng: &mut Rng, p: f64) {
        for i in 0..self.grid {
            for j in 0..self.grid {
                if self.on_wafer(i, j) && rng.random::<f64>() < p {
                    self.map.set(i, j, DEFECT_DIE);
                }
            }
        }
    }

    fn mark_cell(&mut self, i: i64, j: i64) {
        let g = self.grid as i64;
        if (0..g).contains(&i) && (0..g).contains(&j) && self.on_wafer(i as usize, j as usize) {
            self.map.set(i as usize, j as usize, DEFECT_DIE);
        }
    }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Generates one map of the given class.
pub fn generate(class: DefectClass, params: &SynthParams, seed: u64) -> Result<WaferMap> {
    params.validate()?;
    let mut rng = rng::rng_for(seed, &[rng::TAG_SYNTH]);
    let mut c = Canvas::new(params);
    let g = params.grid as f64;
    let rim = c.radius;

    match class {
        DefectClass::Center => {
            let r = uniform(&mut rng, params.center_radius) * g;
            c.mark_where(|dy, dx| dy.hypot(dx) <= r);
        }
        DefectClass::Donut => {
            let inner = uniform(&mut rng, params.donut_inner) * g;
            let outer = inner + uniform(&mut rng, params.donut_width) * g;
            c.mark_where(|dy, dx| {
                let d = dy.hypot(dx);
                d >= inner && d <= outer
            });
        }
        DefectClass::EdgeLoc => {
            let span = uniform(&mut rng, params.edge_loc_span_deg).to_radians();
            let depth = uniform(&mut rng, params.edge_loc_depth);
            let mid = 2.0 * PI * rng.random::<f64>();
            c.mark_where(|dy, dx| {
                dy.hypot(dx) >= rim - depth && angle_diff(dy.atan2(dx), mid) <= span / 2.0
            });
        }
        DefectClass::EdgeRing => {
            let width = uniform(&mut rng, params.edge_ring_width).round().max(1.0);
            c.mark_where(|dy, dx| dy.hypot(dx) >= rim - width);
        }
        DefectClass::Loc => {
            let r = uniform(&mut rng, params.loc_radius) * g;
            let off = uniform(&mut rng, params.loc_offset) * rim;
            let a = 2.0 * PI * rng.random::<f64>();
            let (cy, cx) = (off * a.sin(), off * a.cos());
            c.mark_where(|dy, dx| (dy - cy).hypot(dx - cx) <= r);
        }
        DefectClass::NearFull => {
            let p = uniform(&mut rng, params.near_full_rate);
            c.mark_bernoulli(&mut rng, p);
        }
        DefectClass::Random => {
            let p = uniform(&mut rng, params.random_rate);
            c.mark_bernoulli(&mut rng, p);
        }
        DefectClass::Scratch => {
            let r = params.wafer_radius;
            let off = uniform(&mut rng, params.scratch_offset) * r;
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            let mid = (off * phi.sin(), off * phi.cos());
            let half_len = uniform(&mut rng, params.scratch_length) * r;
            let theta = uniform(&mut rng, params.scratch_angle_deg).to_radians();
            // rows grow downwards, so a counter-clockwise angle lowers the row
            let (di, dj) = (-theta.sin() * half_len, theta.cos() * half_len);
            let (a, b) = ((mid.0 - di, mid.1 - dj), (mid.0 + di, mid.1 + dj));
            let width = uniform(&mut rng, params.scratch_width).round().max(1.0) as i64;
            let to_cell = |p: (f64, f64)| {
                (
                    (p.0 + c.center).floor() as i64,
                    (p.1 + c.center).floor() as i64,
                )
            };
            let (p0, p1) = (to_cell(a), to_cell(b));
            let steep = (p1.0 - p0.0).abs() > (p1.1 - p0.1).abs();
            for (i, j) in bresenham(p0, p1) {
                for w in 0..width {
                    // thicken across the dominant direction
                    if steep {
                        c.mark_cell(i, j + w);
                    } else {
                        c.mark_cell(i + w, j);
                    }
                }
            }
        }
    }

    if params.salt_noise_prob > 0.0 {
        for i in 0..c.grid {
            for j in 0..c.grid {
                if c.on_wafer(i, j) && rng.random::<f64>() < params.salt_noise_prob {
                    let flipped = if c.map.get(i, j) == GOOD_DIE {
                        DEFECT_DIE
                    } else {
                        GOOD_DIE
                    };
                    c.map.set(i, j, flipped);
                }
            }
        }
    }
    Ok(c.map)
}

/// Integer line from `a` to `b`, inclusive.
fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut y, mut x) = a;
    let dy = -(b.0 - a.0).abs();
    let dx = (b.1 - a.1).abs();
    let sy = if a.0 < b.0 { 1 } else { -1 };
    let sx = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::new();
    loop {
        out.push((y, x));
        if (y, x) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// `counts[c]` maps of each class, item `k` of class `c` seeded with
/// `derive_seed(seed, [TAG_SYNTH, c, k])`.
pub fn generate_dataset(
    counts: &[usize; N_CLASSES],
    params: &SynthParams,
    seed: u64,
) -> Result<LabeledDataset> {
    params.validate()?;
    let mut items = Vec::with_capacity(counts.iter().sum());
    for class in DefectClass::ALL {
        for k in 0..counts[class.label()] {
            let item_seed = rng::derive_seed(seed, &[rng::TAG_SYNTH, class.label() as u64, k as u64]);
            items.push(LabeledItem {
                id: format!("syn-{}-{k:05}", class.label()),
                sample: Sample::Map(generate(class, params, item_seed)?),
                class,
                provenance: Provenance::Synthetic,
            });
        }
    }
    Ok(LabeledDataset::new(items))
}
