//! Handcrafted wafer features: 13 density zones, 40 Radon statistics and
//! 6 shape descriptors of the largest defect region.

use std::fmt::Write as _;

use crate::data::{WaferMap, DEFECT_DIE, GRID};
use crate::error::{Error, Result};

pub const N_DENSITY: usize = 13;
pub const N_RADON: usize = 40;
pub const N_GEOMETRY: usize = 6;
pub const N_FEATURES: usize = N_DENSITY + N_RADON + N_GEOMETRY;
pub const N_ANGLES: usize = 180;
pub const RESAMPLE_POINTS: usize = 20;

pub const GEOMETRY_NAMES: [&str; N_GEOMETRY] = [
    "area",
    "perimeter",
    "major_axis",
    "minor_axis",
    "eccentricity",
    "solidity",
];

/// Column names of [`extract_59`] in output order.
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = (0..9).map(|k| format!("density_inner_{k}")).collect();
    names.extend(["top", "right", "bottom", "left"].map(|s| format!("density_{s}")));
    names.extend((0..RESAMPLE_POINTS).map(|k| format!("radon_mean_{k}")));
    names.extend((0..RESAMPLE_POINTS).map(|k| format!("radon_std_{k}")));
    names.extend(GEOMETRY_NAMES.iter().map(|s| s.to_string()));
    names
}

/// Grid split points of the 5x5 zone partition: `round(k * 26 / 5)`.
pub fn zone_bounds() -> [usize; 6] {
    let mut b = [0; 6];
    for (k, v) in b.iter_mut().enumerate() {
        *v = (k as f64 * GRID as f64 / 5.0).round() as usize;
    }
    b
}

/// (zone row, zone col) of each density feature.
pub const DENSITY_ZONES: [(usize, usize); N_DENSITY] = [
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 1),
    (2, 2),
    (2, 3),
    (3, 1),
    (3, 2),
    (3, 3),
    (0, 2),
    (2, 4),
    (4, 2),
    (2, 0),
];

fn require_grid(map: &WaferMap, op: &'static str) -> Result<()> {
    if map.height() != GRID || map.width() != GRID {
        return Err(Error::shape(
            op,
            format!("expected {GRID}x{GRID} map, got {}x{}", map.height(), map.width()),
        ));
    }
    Ok(())
}

pub fn density_features(map: &WaferMap) -> Result<[f64; N_DENSITY]> {
    require_grid(map, "density_features")?;
    let b = zone_bounds();
    let mut out = [0.0; N_DENSITY];
    for (f, &(zr, zc)) in out.iter_mut().zip(&DENSITY_ZONES) {
        let (rows, cols) = (b[zr]..b[zr + 1], b[zc]..b[zc + 1]);
        let cells = rows.len() * cols.len();
        let defects = rows
            .flat_map(|i| cols.clone().map(move |j| (i, j)))
            .filter(|&(i, j)| map.get(i, j) == DEFECT_DIE)
            .count();
        *f = defects as f64 / cells as f64;
    }
    Ok(out)
}

/// Projections by position (rows) and angle (columns), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub positions: usize,
    pub angles: usize,
    pub data: Vec<f64>,
}

impl Sinogram {
    pub fn get(&self, pos: usize, angle: usize) -> f64 {
        self.data[pos * self.angles + angle]
    }

    pub fn column(&self, angle: usize) -> Vec<f64> {
        (0..self.positions).map(|p| self.get(p, angle)).collect()
    }
}

/// Side of the square canvas holding any rotation of an `h x w` image:
/// the ceiling of the diagonal, bumped to share parity with `w` so the
/// unrotated image sits at an integer offset.
pub fn canvas_size(h: usize, w: usize) -> usize {
    let mut d = ((h * h + w * w) as f64).sqrt().ceil() as usize;
    d = d.max(h).max(w);
    if !(d - w).is_multiple_of(2) {
        d += 1;
    }
    d
}

/// Radon transform of the defect mask. Each cell's mass is rotated by
/// `-theta` about the image center and spread bilinearly over the four
/// nearest canvas cells, so every projection carries the full mass.
pub fn radon_sinogram(map: &WaferMap, n_angles: usize) -> Result<Sinogram> {
    if n_angles == 0 {
        return Err(Error::InvalidArgument("n_angles must be positive".into()));
    }
    let (h, w) = (map.height(), map.width());
    let d = canvas_size(h, w);
    let mask = map.defect_mask();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let cd = (d as f64 - 1.0) / 2.0;
    let mut data = vec![0.0; d * n_angles];
    let mut col = vec![0.0; d];
    for a in 0..n_angles {
        let theta = (a as f64 * 180.0 / n_angles as f64).to_radians();
        let (s, c) = theta.sin_cos();
        col.fill(0.0);
        for i in 0..h {
            for j in 0..w {
                let m = mask[i * w + j];
                if m == 0.0 {
                    continue;
                }
                let (y, x) = (i as f64 - cy, j as f64 - cx);
                let xr = c * x - s * y + cd;
                // rows collapse under a column sum, so only x needs splatting
                let x0 = xr.floor();
                let fx = xr - x0;
                let x0 = x0 as usize;
                col[x0] += m * (1.0 - fx);
                if fx > 0.0 {
                    col[x0 + 1] += m * fx;
                }
            }
        }
        for (p, v) in col.iter().enumerate() {
            data[p * n_angles + a] = *v;
        }
    }
    Ok(Sinogram {
        positions: d,
        angles: n_angles,
        data,
    })
}

/// Natural cubic spline through `(i, series[i])`, evaluated at `n` points
/// spanning `[0, m - 1]`.
pub fn cubic_resample(series: &[f64], n: usize) -> Result<Vec<f64>> {
    let m = series.len();
    if m < 4 {
        return Err(Error::InvalidArgument(format!(
            "cubic resampling needs at least 4 points, got {m}"
        )));
    }
    let second = natural_second_derivatives(series);
    let span = (m - 1) as f64;
    Ok((0..n)
        .map(|k| {
            let x = if n == 1 { 0.0 } else { span * k as f64 / (n - 1) as f64 };
            spline_eval(series, &second, x)
        })
        .collect())
}

/// Second derivatives at unit-spaced knots with zero end conditions
/// (tridiagonal solve).
fn natural_second_derivatives(y: &[f64]) -> Vec<f64> {
    let m = y.len();
    let mut sd = vec![0.0; m];
    let inner = m - 2;
    // rows: M[i-1] + 4 M[i] + M[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1])
    let mut diag = vec![4.0; inner];
    let mut rhs: Vec<f64> = (1..m - 1)
        .map(|i| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]))
        .collect();
    for k in 1..inner {
        let f = 1.0 / diag[k - 1];
        diag[k] -= f;
        rhs[k] -= f * rhs[k - 1];
    }
    for k in (0..inner).rev() {
        let next = if k + 1 < inner { sd[k + 2] } else { 0.0 };
        sd[k + 1] = (rhs[k] - next) / diag[k];
    }
    sd
}

fn spline_eval(y: &[f64], sd: &[f64], x: f64) -> f64 {
    let i = (x.floor() as usize).min(y.len() - 2);
    let t = x - i as f64;
    let u = 1.0 - t;
    u * y[i] + t * y[i + 1] + ((u * u * u - u) * sd[i] + (t * t * t - t) * sd[i + 1]) / 6.0
}

/// Per-angle mean and population std of the sinogram, each resampled to
/// 20 points; means first.
pub fn radon_features(map: &WaferMap) -> Result<Vec<f64>> {
    let sino = radon_sinogram(map, N_ANGLES)?;
    let p = sino.positions as f64;
    let mut means = Vec::with_capacity(N_ANGLES);
    let mut stds = Vec::with_capacity(N_ANGLES);
    for a in 0..N_ANGLES {
        let col = sino.column(a);
        let mean = col.iter().sum::<f64>() / p;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / p;
        means.push(mean);
        stds.push(var.sqrt());
    }
    let mut out = cubic_resample(&means, RESAMPLE_POINTS)?;
    out.extend(cubic_resample(&stds, RESAMPLE_POINTS)?);
    Ok(out)
}

/// Cells of the largest 8-connected defect region (first found wins ties),
/// in scan order.
pub fn largest_region(map: &WaferMap) -> Vec<(usize, usize)> {
    let (h, w) = (map.height(), map.width());
    let mut seen = vec![false; h * w];
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if seen[start] || map.cells()[start] != DEFECT_DIE {
            continue;
        }
        let mut region = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = (k / w, k % w);
            region.push((i, j));
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= h as i64 || nj >= w as i64 {
                        continue;
                    }
                    let nk = ni as usize * w + nj as usize;
                    if !seen[nk] && map.cells()[nk] == DEFECT_DIE {
                        seen[nk] = true;
                        stack.push(nk);
                    }
                }
            }
        }
        if region.len() > best.len() {
            best = region;
        }
    }
    best.sort_unstable();
    best
}

/// Convex hull (counter-clockwise, no collinear points) of `points`.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite hull input"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|k| {
            let (a, b) = (poly[k], poly[(k + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.abs() / 2.0
}

/// Area, perimeter, major and minor axis, eccentricity and solidity of
/// the largest defect region. Cells are treated as unit squares: second
/// moments include the `1/12` of each square and the hull is taken over
/// cell corners. An empty map gives zeros with solidity 1.
pub fn geometry_features(map: &WaferMap) -> [f64; N_GEOMETRY] {
    let region = largest_region(map);
    if region.is_empty() {
        return [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
    }
    let (h, w) = (map.height(), map.width());
    let mut inside = vec![false; h * w];
    for &(i, j) in &region {
        inside[i * w + j] = true;
    }
    let at = |i: i64, j: i64| i >= 0 && j >= 0 && i < h as i64 && j < w as i64 && inside[i as usize * w + j as usize];
    let mut perimeter = 0usize;
    for &(i, j) in &region {
        let (i, j) = (i as i64, j as i64);
        perimeter += [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
            .iter()
            .filter(|&&(a, b)| !at(a, b))
            .count();
    }
    let area = region.len() as f64;
    let (mi, mj) = region.iter().fold((0.0, 0.0), |(a, b), &(i, j)| (a + i as f64, b + j as f64));
    let (mi, mj) = (mi / area, mj / area);
    let (mut sii, mut sjj, mut sij) = (0.0, 0.0, 0.0);
    for &(i, j) in &region {
        let (di, dj) = (i as f64 - mi, j as f64 - mj);
        sii += di * di;
        sjj += dj * dj;
        sij += di * dj;
    }
    let (sii, sjj, sij) = (sii / area + 1.0 / 12.0, sjj / area + 1.0 / 12.0, sij / area);
    let half_tr = (sii + sjj) / 2.0;
    let disc = (((sii - sjj) / 2.0).powi(2) + sij * sij).sqrt();
    let (l1, l2) = (half_tr + disc, (half_tr - disc).max(0.0));
    let eccentricity = if l1 > 0.0 { (1.0 - l2 / l1).max(0.0).sqrt() } else { 0.0 };

    let corners: Vec<(f64, f64)> = region
        .iter()
        .flat_map(|&(i, j)| {
            let (y, x) = (i as f64, j as f64);
            [(y, x), (y + 1.0, x), (y, x + 1.0), (y + 1.0, x + 1.0)]
        })
        .collect();
    let hull_area = polygon_area(&convex_hull(&corners));
    let solidity = if hull_area < 1.0 { 1.0 } else { (area / hull_area).min(1.0) };
    [
        area,
        perimeter as f64,
        4.0 * l1.sqrt(),
        4.0 * l2.sqrt(),
        eccentricity,
        solidity,
    ]
}

pub fn extract_59(map: &WaferMap) -> Result<Vec<f64>> {
    let mut v = Vec::with_capacity(N_FEATURES);
    v.extend(density_features(map)?);
    v.extend(radon_features(map)?);
    v.extend(geometry_features(map));
    debug_assert_eq!(v.len(), N_FEATURES);
    Ok(v)
}

/// Feature rows for a dataset of maps: `(ids, labels, features)`.
pub fn extract_dataset(ds: &crate::data::LabeledDataset) -> Result<FeatureTable> {
    let mut table = FeatureTable::default();
    for item in &ds.items {
        let map = item.sample.as_map().ok_or_else(|| {
            Error::InvalidArgument(format!("item {} is not a wafer map", item.id))
        })?;
        table.ids.push(item.id.clone());
        table.labels.push(item.class.label());
        table.rows.push(extract_59(map)?);
    }
    Ok(table)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    /// `id,label,<59 feature columns>` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = format!("id,label,{}\n", feature_names().join(","));
        for ((id, label), row) in self.ids.iter().zip(&self.labels).zip(&self.rows) {
            let _ = write!(s, "{id},{label}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{GOOD_DIE, OFF_WAFER};

    fn map_with(defects: &[(usize, usize)]) -> WaferMap {
        let mut m = WaferMap::filled(GRID, GRID, GOOD_DIE).unwrap();
        for &(i, j) in defects {
            m.set(i, j, DEFECT_DIE);
        }
        m
    }

    #[test]
    fn zone_bounds_and_names() {
        assert_eq!(zone_bounds(), [0, 5, 10, 16, 21, 26]);
        assert_eq!(feature_names().len(), N_FEATURES);
    }

    #[test]
    fn density_extremes() {
        let good = WaferMap::filled(GRID, GRID, GOOD_DIE).unwrap();
        assert_eq!(density_features(&good).unwrap(), [0.0; 13]);
        let bad = WaferMap::filled(GRID, GRID, DEFECT_DIE).unwrap();
        assert_eq!(density_features(&bad).unwrap(), [1.0; 13]);
        let small = WaferMap::filled(5, 5, GOOD_DIE).unwrap();
        assert!(density_features(&small).is_err());
    }

    #[test]
    fn top_middle_zone() {
        // zone row 0, col 2 covers rows 0..5, cols 10..16
        let cells: Vec<_> = (0..5).flat_map(|i| (10..16).map(move |j| (i, j))).collect();
        let d = density_features(&map_with(&cells)).unwrap();
        assert_eq!(d[9], 1.0);
        assert!(d[..9].iter().all(|&v| v == 0.0));
        assert_eq!(&d[10..], &[0.0; 3]);
    }

    #[test]
    fn canvas_parity() {
        assert_eq!(canvas_size(26, 26), 38);
        assert_eq!(canvas_size(3, 4), 6);
    }

    #[test]
    fn sinogram_zero_angle_is_column_sums() {
        let m = map_with(&[(3, 4), (3, 5), (10, 20), (25, 0), (0, 25)]);
        let s = radon_sinogram(&m, N_ANGLES).unwrap();
        let off = (s.positions - GRID) / 2;
        for p in 0..s.positions {
            let want = if (off..off + GRID).contains(&p) {
                (0..GRID).filter(|&i| m.get(i, p - off) == DEFECT_DIE).count() as f64
            } else {
                0.0
            };
            assert!((s.get(p, 0) - want).abs() < 1e-12, "position {p}");
        }
    }

    #[test]
    fn empty_mask_gives_zero_radon() {
        let m = WaferMap::filled(GRID, GRID, OFF_WAFER).unwrap();
        assert!(radon_sinogram(&m, 30).unwrap().data.iter().all(|&v| v == 0.0));
        assert_eq!(radon_features(&m).unwrap(), vec![0.0; N_RADON]);
    }

    #[test]
    fn spline_reproduces_lines_and_constants() {
        let c = cubic_resample(&[2.5; 10], 20).unwrap();
        assert!(c.iter().all(|&v| (v - 2.5).abs() < 1e-12));
        let line: Vec<f64> = (0..180).map(|i| i as f64).collect();
        let r = cubic_resample(&line, 20).unwrap();
        for (k, v) in r.iter().enumerate() {
            assert!((v - 179.0 * k as f64 / 19.0).abs() < 1e-9);
        }
        assert!(cubic_resample(&[1.0, 2.0, 3.0], 20).is_err());
    }

    #[test]
    fn spline_interpolates_knots() {
        let y = [0.0, 1.0, 0.5, 2.0, -1.0, 0.0];
        let sd = natural_second_derivatives(&y);
        assert_eq!(sd[0], 0.0);
        assert_eq!(sd[5], 0.0);
        for (i, v) in y.iter().enumerate() {
            assert!((spline_eval(&y, &sd, i as f64) - v).abs() < 1e-12);
        }
        // continuity of the first derivative at an inner knot
        let eps = 1e-6;
        let left = (spline_eval(&y, &sd, 2.0) - spline_eval(&y, &sd, 2.0 - eps)) / eps;
        let right = (spline_eval(&y, &sd, 2.0 + eps) - spline_eval(&y, &sd, 2.0)) / eps;
        assert!((left - right).abs() < 1e-4);
    }

    #[test]
    fn single_cell_and_square_geometry() {
        let g = geometry_features(&map_with(&[(7, 7)]));
        assert_eq!(g, [1.0, 4.0, 4.0 * (1.0f64 / 12.0).sqrt(), 4.0 * (1.0f64 / 12.0).sqrt(), 0.0, 1.0]);

        let sq: Vec<_> = (5..9).flat_map(|i| (10..14).map(move |j| (i, j))).collect();
        let g = geometry_features(&map_with(&sq));
        assert_eq!(g[0], 16.0);
        assert_eq!(g[1], 16.0);
        assert!((g[2] - g[3]).abs() < 1e-12);
        assert!(g[4].abs() < 1e-6);
        assert!((g[5] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn line_is_eccentric() {
        let line: Vec<_> = (3..13).map(|j| (10, j)).collect();
        let g = geometry_features(&map_with(&line));
        assert!(g[4] > 0.95 && g[4] < 1.0);
        assert!(g[3] < 0.2 * g[2]);
        assert_eq!(g[1], 22.0);
    }

    #[test]
    fn largest_region_uses_diagonals() {
        let m = map_with(&[(0, 0), (1, 1), (2, 2), (10, 10), (10, 11)]);
        assert_eq!(largest_region(&m), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(geometry_features(&WaferMap::filled(GRID, GRID, GOOD_DIE).unwrap()), [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn l_shape_solidity() {
        // 3-cell L: hull over corners has area 3.5
        let g = geometry_features(&map_with(&[(4, 4), (5, 4), (5, 5)]));
        assert!((g[5] - 3.0 / 3.5).abs() < 1e-12);
    }

    #[test]
    fn extract_is_59_long_and_deterministic() {
        let m = map_with(&[(12, 12), (12, 13), (13, 12)]);
        let a = extract_59(&m).unwrap();
        assert_eq!(a.len(), 59);
        assert_eq!(a, extract_59(&m).unwrap());
    }
}
