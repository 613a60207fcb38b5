//! Small dense linear-algebra helpers.
//!
//! The models here are desk-scale (state dimension ≤ a few dozen), so a
//! self-contained cyclic Jacobi eigensolver is enough for the operator
//! norms needed by the stability certificate and the audited constants.

use ndarray::{Array1, Array2};

/// Largest eigenvalue of a symmetric matrix via cyclic Jacobi rotations.
pub fn sym_eig_max(sym: &Array2<f64>) -> f64 {
    let n = sym.nrows();
    assert_eq!(n, sym.ncols(), "sym_eig_max needs a square matrix");
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return sym[[0, 0]];
    }
    let mut a = sym.clone();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let tau = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                a[[p, p]] = app - t * apq;
                a[[q, q]] = aqq + t * apq;
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[p, k]] = a[[k, p]];
                    a[[k, q]] = s * akp + c * akq;
                    a[[q, k]] = a[[k, q]];
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral (operator 2-) norm.
pub fn spectral_norm(m: &Array2<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = m.t().dot(m);
    sym_eig_max(&gram).max(0.0).sqrt()
}

/// Euclidean norm of a vector.
pub fn norm2(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Max-absolute-entry norm of a vector.
pub fn norm_inf(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
