use std::collections::HashSet;

use super::EmbeddingTable;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-10;

/// Rows projected onto the two leading principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub points: Vec<(f64, f64)>,
    /// Unit eigenvectors, leading axis first.
    pub axes: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
}

/// Eigendecomposition of a symmetric `n x n` row-major matrix by cyclic
/// Jacobi rotations. Returns eigenvalues sorted descending and the matching
/// unit eigenvectors; each vector's largest-magnitude entry is non-negative.
pub fn jacobi_eigen(matrix: &[f64], n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if matrix.len() != n * n {
        return Err(Error::shape(format!("{} entries for a {n}x{n} matrix", matrix.len())));
    }
    let mut a = matrix.to_vec();
    let mut v = vec![0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= OFF_DIAGONAL_TOL * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&col| {
            let mut e: Vec<f64> = (0..n).map(|k| v[k * n + col]).collect();
            let lead = e
                .iter()
                .copied()
                .fold(0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if lead < 0.0 {
                e.iter_mut().for_each(|x| *x = -*x);
            }
            e
        })
        .collect();
    Ok((values, vectors))
}

/// Projects the rows of `token_ids` onto their two leading principal axes.
pub fn pca_project_2d(table: &EmbeddingTable, token_ids: &[u32]) -> Result<Projection> {
    let d = table.dim();
    if d < 2 {
        return Err(Error::invalid("projection needs embedding dimension >= 2"));
    }
    if let Some(&bad) = token_ids.iter().find(|&&id| id as usize >= table.vocab_size()) {
        return Err(Error::invalid(format!("token id {bad} outside the table")));
    }
    let distinct: HashSet<u32> = token_ids.iter().copied().collect();
    if distinct.len() < 3 {
        return Err(Error::invalid("projection needs at least 3 distinct tokens"));
    }
    let first = table.row(token_ids[0]);
    if token_ids.iter().all(|&id| table.row(id) == first) {
        return Err(Error::invalid("degenerate point set"));
    }

    let n = token_ids.len();
    let mut mean = vec![0f64; d];
    for &id in token_ids {
        for (m, &x) in mean.iter_mut().zip(table.row(id)) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = token_ids
        .iter()
        .map(|&id| table.row(id).iter().zip(&mean).map(|(&x, m)| x as f64 - m).collect())
        .collect();

    let mut cov = vec![0f64; d * d];
    for row in &centered {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += row[i] * row[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    if (0..d).map(|i| cov[i * d + i]).sum::<f64>() <= 0.0 {
        return Err(Error::invalid("degenerate point set"));
    }

    let (values, mut vectors) = jacobi_eigen(&cov, d)?;
    vectors.truncate(2);
    let [e1, e2]: [Vec<f64>; 2] = vectors.try_into().expect("two leading axes");
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let points = centered.iter().map(|r| (dot(r, &e1), dot(r, &e2))).collect();
    Ok(Projection {
        points,
        axes: [e1, e2],
        eigenvalues: [values[0], values[1]],
    })
}
