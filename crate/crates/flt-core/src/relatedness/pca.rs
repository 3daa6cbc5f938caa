//! Linear PCA projection, the baseline that swaps in for UMAP.

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;

/// Principal components of a point cloud: the mean, the top `dims`
/// directions (rows), and all covariance eigenvalues (descending).
pub fn pca_components(points: &[Vec<f64>], dims: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidArgument("PCA on an empty point set".into()));
    }
    let d = points[0].len();
    if dims > d {
        return Err(Error::InvalidArgument(format!(
            "cannot project {d}-dim points to {dims} dims"
        )));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, &v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![0.0; d * d];
    for p in points {
        for i in 0..d {
            let ci = p[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += ci * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= n as f64;
            cov[j * d + i] = cov[i * d + j];
        }
    }

    let (values, vectors) = symmetric_eigen(&cov, d);
    let mut components = Vec::with_capacity(dims);
    for k in 0..dims {
        let mut comp: Vec<f64> = (0..d).map(|i| vectors[i * d + k]).collect();
        // deterministic sign: largest-magnitude coordinate positive
        let lead = comp
            .iter()
            .cloned()
            .fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            comp.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(comp);
    }
    Ok((mean, components, values))
}

/// Centers the points and projects them onto the top `dims` principal
/// directions. Zero-variance directions contribute zero coordinates.
pub fn pca_project(points: &[Vec<f64>], dims: usize) -> Result<Vec<Vec<f64>>> {
    let (mean, components, values) = pca_components(points, dims)?;
    let scale = values.first().copied().unwrap_or(0.0).abs().max(1e-300);
    Ok(points
        .iter()
        .map(|p| {
            components
                .iter()
                .enumerate()
                .map(|(k, comp)| {
                    if values[k] / scale < 1e-12 {
                        0.0
                    } else {
                        comp.iter().zip(p).zip(&mean).map(|((c, &v), &m)| c * (v - m)).sum()
                    }
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::euclidean;

    #[test]
    fn diagonal_line_has_single_component() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let (_, comps, _) = pca_components(&pts, 2).unwrap();
        let s = 1.0 / (2.0f64).sqrt();
        assert!((comps[0][0] - s).abs() < 1e-9);
        assert!((comps[0][1] - s).abs() < 1e-9);
        let proj = pca_project(&pts, 2).unwrap();
        for p in &proj {
            assert!(p[1].abs() < 1e-9, "second component dead on rank-1 data");
        }
    }

    #[test]
    fn axis_aligned_covariance_recovered() {
        // large sample cloud with diag(4, 1) covariance
        let mut r = crate::rng::stream(4, &[]);
        use rand::Rng;
        let pts: Vec<Vec<f64>> = (0..20_000)
            .map(|_| {
                let u: f64 = r.random_range(-1.0..1.0f64)
                    + r.random_range(-1.0..1.0f64)
                    + r.random_range(-1.0..1.0f64);
                let v: f64 = r.random_range(-1.0..1.0f64)
                    + r.random_range(-1.0..1.0f64)
                    + r.random_range(-1.0..1.0f64);
                vec![2.0 * u, v]
            })
            .collect();
        let (_, comps, values) = pca_components(&pts, 2).unwrap();
        assert!(comps[0][0].abs() > 0.99, "first PC along x: {:?}", comps[0]);
        let ratio = values[0] / (values[0] + values[1]);
        assert!((ratio - 0.8).abs() < 0.02, "explained variance ratio {ratio}");
    }

    #[test]
    fn full_dimension_projection_is_isometric() {
        let mut r = crate::rng::stream(6, &[]);
        use rand::Rng;
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..5).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let proj = pca_project(&pts, 5).unwrap();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let orig = euclidean(&pts[i], &pts[j]);
                let new = euclidean(&proj[i], &proj[j]);
                assert!((orig - new).abs() < 1e-9, "{orig} vs {new}");
            }
        }
    }
}
