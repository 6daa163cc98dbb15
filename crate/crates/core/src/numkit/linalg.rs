use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalue floor used when repairing an indefinite correlation matrix.
pub const MIN_EIGENVALUE: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-10;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 1000;
// Repeated squaring runs until the normalised power stops changing, so the
// convergence ratio becomes (λ₂/λ₁)^(2^k) and near-ties still separate.
const MAX_SQUARINGS: usize = 64;
const SQUARING_TOL: f64 = 1e-15;

/// A correlation matrix θ together with its lower Cholesky factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    matrix: Array2<f64>,
    factor: Array2<f64>,
    repaired: bool,
}

impl CorrelationMatrix {
    /// Repairs `matrix` if it is not positive definite, then factors it.
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        let (factor, repaired_matrix, repaired) = cholesky_psd(&matrix)?;
        Ok(CorrelationMatrix {
            matrix: repaired_matrix,
            factor,
            repaired,
        })
    }

    pub fn identity(d: usize) -> Self {
        CorrelationMatrix {
            matrix: Array2::eye(d),
            factor: Array2::eye(d),
            repaired: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn factor(&self) -> &Array2<f64> {
        &self.factor
    }

    /// Whether eigenvalue clipping was needed.
    pub fn was_repaired(&self) -> bool {
        self.repaired
    }
}

fn check_square(a: &Array2<f64>) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::InvalidArgument(format!("expected a square matrix, got {r}x{c}")));
    }
    Ok(r)
}

fn check_symmetric(a: &Array2<f64>) -> Result<usize> {
    let d = check_square(a)?;
    for i in 0..d {
        for j in 0..i {
            if (a[[i, j]] - a[[j, i]]).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    a[[i, j]],
                    a[[j, i]]
                )));
            }
        }
    }
    Ok(d)
}

/// Plain Cholesky factorisation; `None` unless strictly positive definite.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let d = a.nrows();
    let mut l = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 1e-12) {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..d {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Some(l)
}

/// Clips eigenvalues at [`MIN_EIGENVALUE`] and rescales to unit diagonal.
pub fn repair_correlation(a: &Array2<f64>) -> Result<Array2<f64>> {
    let d = check_symmetric(a)?;
    let (values, vectors) = symmetric_eigen(a)?;
    let mut clipped = Array2::<f64>::zeros((d, d));
    for (k, &lam) in values.iter().enumerate() {
        let lam = lam.max(MIN_EIGENVALUE);
        let v = vectors.column(k);
        for i in 0..d {
            for j in 0..d {
                clipped[[i, j]] += lam * v[i] * v[j];
            }
        }
    }
    let scale: Vec<f64> = (0..d).map(|i| clipped[[i, i]].sqrt()).collect();
    for i in 0..d {
        for j in 0..d {
            clipped[[i, j]] /= scale[i] * scale[j];
        }
        clipped[[i, i]] = 1.0;
    }
    // Exact symmetry for the factorisation.
    for i in 0..d {
        for j in 0..i {
            let m = 0.5 * (clipped[[i, j]] + clipped[[j, i]]);
            clipped[[i, j]] = m;
            clipped[[j, i]] = m;
        }
    }
    Ok(clipped)
}

/// Cholesky factor of a symmetric matrix, repairing it first when it is not
/// positive definite. Returns `(L, matrix actually factored, repaired?)`.
pub fn cholesky_psd(a: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>, bool)> {
    check_symmetric(a)?;
    if let Some(l) = cholesky(a) {
        return Ok((l, a.clone(), false));
    }
    let repaired = repair_correlation(a)?;
    let l = cholesky(&repaired).ok_or_else(|| {
        Error::Numeric("Cholesky failed after eigenvalue repair".to_string())
    })?;
    Ok((l, repaired, true))
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues are returned in descending order; eigenvectors are columns.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let d = check_symmetric(a)?;
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(d);
    let norm: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * norm {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let vectors = v.select(Axis(1), &order);
    Ok((values, vectors))
}

fn normalize(v: &mut Array1<f64>) -> f64 {
    let n = v.dot(v).sqrt();
    if n > 0.0 {
        *v /= n;
    }
    n
}

fn dominant_eigenvector(m: &Array2<f64>) -> Array1<f64> {
    let d = m.nrows();
    let mut p = m.clone();
    for _ in 0..MAX_SQUARINGS {
        let mut q = p.dot(&p);
        let scale = q.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if scale == 0.0 || !scale.is_finite() {
            break;
        }
        q /= scale;
        let change = (&q - &p).iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        p = q;
        if change <= SQUARING_TOL {
            break;
        }
    }
    // Columns of a high matrix power are all close to the dominant direction;
    // the largest one is the best-conditioned start.
    let best = (0..d)
        .max_by(|&i, &j| {
            let ni = p.column(i).dot(&p.column(i));
            let nj = p.column(j).dot(&p.column(j));
            ni.total_cmp(&nj)
        })
        .unwrap_or(0);
    let mut v = p.column(best).to_owned();
    if normalize(&mut v) == 0.0 || !v.iter().all(|x| x.is_finite()) {
        v = Array1::zeros(d);
        v[0] = 1.0;
        return v;
    }
    for _ in 0..POWER_MAX_ITER {
        let mut next = m.dot(&v);
        if normalize(&mut next) == 0.0 {
            break;
        }
        if next.dot(&v) < 0.0 {
            next.mapv_inplace(|x| -x);
        }
        let delta = (&next - &v).mapv(|x| x * x).sum().sqrt();
        v = next;
        if delta < POWER_TOL {
            break;
        }
    }
    v
}

/// Leading `k` eigenpairs of a symmetric positive semi-definite matrix by
/// deflated power iteration. Vectors follow the sign convention that their
/// largest-magnitude entry is positive.
pub fn top_eigenpairs(a: &Array2<f64>, k: usize) -> Result<Vec<(f64, Array1<f64>)>> {
    let d = check_symmetric(a)?;
    if k > d {
        return Err(Error::InvalidArgument(format!("asked for {k} eigenpairs of a {d}x{d} matrix")));
    }
    let mut m = a.clone();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v = dominant_eigenvector(&m);
        let lambda = v.dot(&m.dot(&v));
        let pivot = v.iter().fold(0.0f64, |acc, &x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.mapv_inplace(|x| -x);
        }
        for i in 0..d {
            for j in 0..d {
                m[[i, j]] -= lambda * v[i] * v[j];
            }
        }
        out.push((lambda, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn reconstruct(l: &Array2<f64>) -> Array2<f64> {
        l.dot(&l.t())
    }

    #[test]
    fn identity_factor() {
        let (l, _, repaired) = cholesky_psd(&Array2::eye(4)).unwrap();
        assert_eq!(l, Array2::<f64>::eye(4));
        assert!(!repaired);
    }

    #[test]
    fn two_by_two_hand_factor() {
        let a = array![[1.0, 0.5], [0.5, 1.0]];
        let (l, _, _) = cholesky_psd(&a).unwrap();
        let expected = array![[1.0, 0.0], [0.5, 0.75f64.sqrt()]];
        for (x, y) in l.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((l[[1, 1]] - 0.8660254).abs() < 1e-7);
    }

    #[test]
    fn rank_deficient_is_repaired() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let (l, fixed, repaired) = cholesky_psd(&a).unwrap();
        assert!(repaired);
        for i in 0..2 {
            assert_eq!(fixed[[i, i]], 1.0);
        }
        let back = reconstruct(&l);
        for (x, y) in back.iter().zip(fixed.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
        let (vals, _) = symmetric_eigen(&fixed).unwrap();
        assert!(vals.iter().all(|&v| v >= 1e-7));
    }

    #[test]
    fn indefinite_matrix_repaired_to_unit_diagonal() {
        let a = array![[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]];
        let (l, fixed, repaired) = cholesky_psd(&a).unwrap();
        assert!(repaired);
        let (vals, _) = symmetric_eigen(&fixed).unwrap();
        assert!(*vals.last().unwrap() >= 1e-7);
        let back = reconstruct(&l);
        for (x, y) in back.iter().zip(fixed.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
        for i in 0..3 {
            assert_eq!(fixed[[i, i]], 1.0);
            for j in 0..3 {
                assert!(fixed[[i, j]].abs() <= 1.0);
            }
        }
    }

    #[test]
    fn non_symmetric_rejected() {
        let a = array![[1.0, 0.2], [0.3, 1.0]];
        assert!(cholesky_psd(&a).is_err());
    }

    #[test]
    fn jacobi_diagonalises() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 1.0]];
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        for k in 0..3 {
            let v = vecs.column(k);
            let av = a.dot(&v);
            for i in 0..3 {
                assert!((av[i] - vals[k] * v[i]).abs() < 1e-12);
            }
        }
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
    }

    #[test]
    fn power_iteration_separates_near_ties() {
        let r = 1e-6;
        let a = array![[1.0, r], [r, 1.0]];
        let pairs = top_eigenpairs(&a, 2).unwrap();
        assert!((pairs[0].0 - (1.0 + r)).abs() < 1e-12, "{}", pairs[0].0);
        assert!((pairs[1].0 - (1.0 - r)).abs() < 1e-12, "{}", pairs[1].0);
    }

    #[test]
    fn power_iteration_on_perfect_correlation() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let pairs = top_eigenpairs(&a, 2).unwrap();
        let s = 0.5f64.sqrt();
        assert!((pairs[0].0 - 2.0).abs() < 1e-12);
        assert!((pairs[0].1[0] - s).abs() < 1e-10 && (pairs[0].1[1] - s).abs() < 1e-10);
        assert!(pairs[1].0.abs() < 1e-12);
    }
}
