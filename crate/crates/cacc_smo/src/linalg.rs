//! Dense linear-algebra helpers shared by the design checks, the bounds and the estimator.

use nalgebra::{Complex, DMatrix, DVector, Dyn, SVD};

/// Relative singular-value cut-off used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Thin SVD factors (U, singular values, Vᵀ).
pub type SvdFactors = (DMatrix<f64>, DVector<f64>, DMatrix<f64>);

/// Thin SVD as (U, singular values, Vᵀ), checked against the input.
///
/// nalgebra's bidiagonal QR occasionally returns singular vectors that do not
/// reproduce the matrix (seen on exactly rank-deficient inputs). Each attempt is
/// verified by recomposition; the transpose and a looser convergence threshold
/// are tried in turn, and the attempt with the smallest residual is returned.
pub fn checked_svd(m: &DMatrix<f64>) -> SvdFactors {
    let (r, c) = m.shape();
    let accept = 64.0 * f64::EPSILON * r.max(c) as f64 * m.norm().max(f64::MIN_POSITIVE);
    let split = |svd: SVD<f64, Dyn, Dyn>| (svd.u.expect("svd u"), svd.singular_values, svd.v_t.expect("svd v_t"));
    let attempts: [&dyn Fn() -> Option<SvdFactors>; 4] = [
        &|| Some(split(SVD::new(m.clone(), true, true))),
        &|| {
            let (u, s, vt) = split(SVD::new(m.transpose(), true, true));
            Some((vt.transpose(), s, u.transpose()))
        },
        &|| SVD::try_new(m.clone(), true, true, 1e-12, 0).map(split),
        &|| {
            SVD::try_new(m.transpose(), true, true, 1e-12, 0)
                .map(split)
                .map(|(u, s, vt)| (vt.transpose(), s, u.transpose()))
        },
    ];
    let mut best: Option<(f64, SvdFactors)> = None;
    for attempt in attempts {
        let Some((u, s, vt)) = attempt() else { continue };
        let residual = (&u * DMatrix::from_diagonal(&s) * &vt - m).norm();
        if residual <= accept {
            return (u, s, vt);
        }
        if best.as_ref().is_none_or(|(b, _)| residual < *b) {
            best = Some((residual, (u, s, vt)));
        }
    }
    best.expect("at least one SVD attempt").1
}

/// Moore-Penrose pseudo-inverse. Singular values below `tol * sigma_max` are dropped.
pub fn pseudo_inverse(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let (u, sv, vt) = checked_svd(m);
    let smax = sv.max();
    let mut out = DMatrix::zeros(c, r);
    if smax == 0.0 {
        return out;
    }
    for (k, &s) in sv.iter().enumerate() {
        if s > tol * smax {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// Numerical rank with the relative tolerance `tol`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// e^{A t} by scaling and squaring with a Pade approximant.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    assert!(a.is_square(), "matrix_exponential needs a square matrix");
    if a.nrows() == 0 {
        return DMatrix::zeros(0, 0);
    }
    (a * t).exp()
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn orth(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let (u, sv, _) = checked_svd(m);
    let smax = sv.max();
    if smax == 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let keep: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] > tol * smax).collect();
    DMatrix::from_fn(n, keep.len(), |i, j| u[(i, keep[j])])
}

/// Orthonormal basis of the controllable (reachable) subspace of (A, G).
///
/// Grows the Krylov space one block at a time and re-orthonormalises, so the
/// powers of A never appear explicitly.
pub fn controllable_subspace(a: &DMatrix<f64>, g: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut basis = orth(g, tol);
    for _ in 0..n {
        if basis.ncols() == n {
            break;
        }
        let grown = hcat(&basis, &(a * &basis));
        let next = orth(&grown, tol);
        if next.ncols() == basis.ncols() {
            break;
        }
        basis = next;
    }
    basis
}

/// Orthonormal basis of the observable part (row space of the observability matrix) of (A, C).
pub fn observable_subspace(a: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    controllable_subspace(&a.transpose(), &c.transpose(), tol)
}

/// Minimal (reachable and observable) realisation of (A, B, C).
pub struct MinimalRealization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

pub fn minimal_realization(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> MinimalRealization {
    let v = controllable_subspace(a, b, tol);
    let ar = v.transpose() * a * &v;
    let br = v.transpose() * b;
    let cr = c * &v;
    // the unobservable subspace is invariant, so projecting onto its
    // orthogonal complement gives the quotient dynamics
    let w = observable_subspace(&ar, &cr, tol);
    MinimalRealization {
        a: w.transpose() * &ar * &w,
        b: w.transpose() * br,
        c: cr * w,
    }
}

/// Limit of C x(t) for x' = A x + B w with constant w, as a matrix acting on w,
/// with the sign convention C A^{-1} B (i.e. lim C x = -gain * w).
///
/// Only the reachable, observable part of (A, B, C) matters; modes outside it
/// may be marginal without spoiling the limit. Returns `None` when the minimal
/// part is singular.
pub fn steady_state_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let m = minimal_realization(a, b, c, tol);
    if m.a.nrows() == 0 {
        return Some(DMatrix::zeros(c.nrows(), b.ncols()));
    }
    let inv = m.a.clone().try_inverse()?;
    let scale = m.a.norm().max(1.0);
    if (inv.norm() * scale).is_finite() && inv.norm() * scale < 1e12 {
        Some(&m.c * inv * &m.b)
    } else {
        None
    }
}

/// Eigenvalues of A restricted to the column span of the orthonormal basis V.
pub fn restricted_eigenvalues(a: &DMatrix<f64>, v: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if v.ncols() == 0 {
        return Vec::new();
    }
    let r = v.transpose() * a * v;
    eigenvalues(&r)
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<Complex<f64>> = a.complex_eigenvalues().iter().cloned().collect();
    ev.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap().then(x.im.partial_cmp(&y.im).unwrap()));
    ev
}

pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn vcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

/// Block-diagonal [[a, 0], [0, b]].
pub fn blkdiag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Elementwise absolute value.
pub fn abs(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(f64::abs)
}

pub fn abs_v(v: &DVector<f64>) -> DVector<f64> {
    v.map(f64::abs)
}

/// Diagonal matrix from a slice.
pub fn diag(d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(d))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
