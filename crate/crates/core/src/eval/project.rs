//! Two-dimensional PCA projection and Gaussian KDE grids.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Variance along each of the two components (covariance eigenvalues).
    pub explained: [f64; 2],
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
}

/// Projects mean-centred rows onto the two leading principal directions
/// of the sample covariance (`1 / (n - 1)` normalisation). Each direction
/// is sign-fixed so its largest-magnitude entry is positive.
pub fn project_2d<R: AsRef<[f64]>>(rows: &[R]) -> Result<Projection> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("PCA needs at least 2 rows, got {n}")));
    }
    let d = rows[0].as_ref().len();
    if d < 2 {
        return Err(Error::InvalidInput(format!("PCA needs at least 2 columns, got {d}")));
    }
    if rows.iter().any(|r| r.as_ref().len() != d) {
        return Err(Error::InvalidInput("ragged PCA input".into()));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| rows[i].as_ref()[j] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let total: f64 = cov.diagonal().iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("PCA input has zero variance".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let component = |k: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(order[k]);
        let mut v: Vec<f64> = col.iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let components = [component(0), component(1)];
    let coords = (0..n)
        .map(|i| {
            let row = centred.row(i);
            let p = |c: &Vec<f64>| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [p(&components[0]), p(&components[1])]
        })
        .collect();
    Ok(Projection {
        coords,
        explained: [
            eig.eigenvalues[order[0]].max(0.0),
            eig.eigenvalues[order[1]].max(0.0),
        ],
        components,
        mean,
    })
}

/// Scott's rule for 2-D data: `n^(-1/6)` times the mean of the two per-axis
/// standard deviations. Falls back to 1 for degenerate input.
pub fn scott_bandwidth(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 1.0;
    }
    let sd = |k: usize| {
        let m = points.iter().map(|p| p[k]).sum::<f64>() / n as f64;
        (points.iter().map(|p| (p[k] - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    };
    let h = (n as f64).powf(-1.0 / 6.0) * 0.5 * (sd(0) + sd(1));
    if h > 0.0 && h.is_finite() {
        h
    } else {
        1.0
    }
}

/// Gaussian kernel density `(1/n) Σ exp(-|x - p|² / 2h²) / (2π h²)`.
pub fn kde_at(points: &[[f64; 2]], h: f64, x: [f64; 2]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let norm = 1.0 / (2.0 * PI * h * h);
    let s: f64 = points
        .iter()
        .map(|p| {
            let d2 = (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2);
            (-d2 / (2.0 * h * h)).exp()
        })
        .sum();
    norm * s / points.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major over `ys` then `xs`.
    pub density: Vec<f64>,
}

impl KdeGrid {
    /// Riemann sum of the density over the grid cells.
    pub fn mass(&self) -> f64 {
        let dx = step(&self.xs);
        let dy = step(&self.ys);
        self.density.iter().sum::<f64>() * dx * dy
    }
}

fn step(v: &[f64]) -> f64 {
    if v.len() < 2 {
        0.0
    } else {
        (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Bounding box of `points` grown by `pad` on every side.
pub fn padded_bounds(points: &[[f64; 2]], pad: f64) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    ([lo[0] - pad, lo[1] - pad], [hi[0] + pad, hi[1] + pad])
}

pub fn kde_on(points: &[[f64; 2]], h: f64, xs: &[f64], ys: &[f64]) -> KdeGrid {
    let density = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .map(|(x, y)| kde_at(points, h, [x, y]))
        .collect();
    KdeGrid {
        xs: xs.to_vec(),
        ys: ys.to_vec(),
        density,
    }
}

/// Density on a `size × size` grid over the bounding box expanded by `3h`.
pub fn kde_grid(points: &[[f64; 2]], h: f64, size: usize) -> Result<KdeGrid> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    if points.is_empty() || size == 0 {
        return Err(Error::InvalidInput("KDE needs points and a non-empty grid".into()));
    }
    let (lo, hi) = padded_bounds(points, 3.0 * h);
    Ok(kde_on(points, h, &linspace(lo[0], hi[0], size), &linspace(lo[1], hi[1], size)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_peak() {
        let h = 0.7;
        let v = kde_at(&[[1.5, -2.0]], h, [1.5, -2.0]);
        assert!((v - 1.0 / (2.0 * PI * h * h)).abs() < 1e-12);
    }

    #[test]
    fn grid_mass_close_to_one() {
        let pts = [[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]];
        let g = kde_grid(&pts, 0.5, 150).unwrap();
        assert!((g.mass() - 1.0).abs() < 0.02, "mass {}", g.mass());
        assert!(kde_grid(&pts, 0.0, 10).is_err());
    }

    #[test]
    fn two_dimensional_data_keeps_distances() {
        let rows = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![3.0, 3.0], vec![-1.0, 0.5]];
        let p = project_2d(&rows).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let d0 = ((rows[i][0] - rows[j][0]).powi(2) + (rows[i][1] - rows[j][1]).powi(2)).sqrt();
                let c = &p.coords;
                let d1 = ((c[i][0] - c[j][0]).powi(2) + (c[i][1] - c[j][1]).powi(2)).sqrt();
                assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn duplicates_and_degenerate_input() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![0.0, 5.0, 1.0]];
        let p = project_2d(&rows).unwrap();
        assert_eq!(p.coords[0], p.coords[1]);
        assert!(project_2d(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_err());
        assert!(project_2d(&[vec![1.0, 1.0]]).is_err());
        assert!(project_2d(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn components_are_sign_fixed() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, -2.0 * i as f64 + (i % 3) as f64, 0.1 * i as f64]).collect();
        let p = project_2d(&rows).unwrap();
        for c in &p.components {
            let big = c.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(big > 0.0);
        }
        assert_eq!(p, project_2d(&rows).unwrap());
    }
}
