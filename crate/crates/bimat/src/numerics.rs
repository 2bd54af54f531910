//! Dense complex linear-algebra kernels: Hermitian eigendecomposition,
//! spectral calculus, polar decomposition, null spaces, and least squares.
//!
//! Everything here is plain `f64` arithmetic on [`CMat`] (row-major
//! `ndarray::Array2<Complex64>`). The eigensolver is a cyclic complex Jacobi
//! iteration; all other kernels are built on top of it. Spaces in this crate
//! stay below a few hundred dimensions, so one global tolerance knob
//! ([`DEFAULT_TOL`], overridable per call) is enough.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use thiserror::Error;

pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;

/// Default tolerance for PSD checks, unitarity checks, and equation
/// residuals, scaled by the input norm where that makes sense.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("matrix is not positive definite (eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type NumResult<T> = Result<T, NumericsError>;

/// Eigendecomposition of a Hermitian matrix: `m = U diag(λ) U*` with the
/// eigenvalues real and ascending and `U` unitary.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

impl EigDecomposition {
    /// Rebuild `U f(λ) U*` from a scalar function of the spectrum.
    pub fn apply<F: Fn(f64) -> C64>(&self, f: F) -> CMat {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        let mut out = CMat::zeros((n, n));
        for k in 0..n {
            let fv = f(self.eigenvalues[k]);
            if fv == C64::new(0.0, 0.0) {
                continue;
            }
            for r in 0..n {
                let urk = u[[r, k]] * fv;
                for c in 0..n {
                    out[[r, c]] += urk * u[[c, k]].conj();
                }
            }
        }
        out
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

pub fn eye(n: usize) -> CMat {
    CMat::eye(n)
}

pub fn adjoint(m: &CMat) -> CMat {
    let (r, c) = m.dim();
    let mut out = CMat::zeros((c, r));
    for i in 0..r {
        for j in 0..c {
            out[[j, i]] = m[[i, j]].conj();
        }
    }
    out
}

pub fn frob(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `⟨v, w⟩ = Σ conj(v_t) w_t`, conjugate-linear in the first argument.
pub fn vec_inner(v: &CVec, w: &CVec) -> C64 {
    v.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum()
}

pub fn trace(m: &CMat) -> C64 {
    m.diag().iter().copied().sum()
}

pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = CMat::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

fn check_square(m: &CMat) -> NumResult<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(NumericsError::Shape(format!("expected square, got {r}x{c}")));
    }
    Ok(r)
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. The input must be Hermitian up to `tol·‖m‖_F`; it is
/// symmetrized exactly before iterating.
pub fn hermitian_eig(m: &CMat, tol: f64) -> NumResult<EigDecomposition> {
    let n = check_square(m)?;
    if n == 0 {
        return Ok(EigDecomposition { eigenvalues: vec![], eigenvectors: CMat::zeros((0, 0)) });
    }
    let nf = frob(m);
    let asym = frob(&(m - &adjoint(m)));
    if asym > tol.max(1e-13) * nf.max(1.0) {
        return Err(NumericsError::NotHermitian(asym / nf.max(1e-300)));
    }
    let mut a = (m + &adjoint(m)).mapv(|z| z * 0.5);
    let mut u = eye(n);
    let target = 1e-14 * nf.max(1e-300);
    let max_sweeps = 80;
    let mut converged = n == 1;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]].norm_sqr();
            }
        }
        if off.sqrt() <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let abs = apq.norm();
                if abs <= 1e-300 {
                    continue;
                }
                let ph = apq / abs;
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let tau = (aqq - app) / (2.0 * abs);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // V = [[c, s·ph], [-s·conj(ph)… ]] realized as the unitary
                // with V[p,p]=c, V[p,q]=s, V[q,p]=-s·e^{-iφ}, V[q,q]=c·e^{-iφ},
                // which diagonalizes the (p,q) block of a (a ← V* a V).
                let vpp = C64::new(c, 0.0);
                let vpq = C64::new(s, 0.0);
                let vqp = -ph.conj() * s;
                let vqq = ph.conj() * c;
                // a ← a V (columns p, q)
                for r in 0..n {
                    let arp = a[[r, p]];
                    let arq = a[[r, q]];
                    a[[r, p]] = arp * vpp + arq * vqp;
                    a[[r, q]] = arp * vpq + arq * vqq;
                }
                // a ← V* a (rows p, q)
                for cix in 0..n {
                    let apc = a[[p, cix]];
                    let aqc = a[[q, cix]];
                    a[[p, cix]] = vpp.conj() * apc + vqp.conj() * aqc;
                    a[[q, cix]] = vpq.conj() * apc + vqq.conj() * aqc;
                }
                a[[p, q]] = C64::new(0.0, 0.0);
                a[[q, p]] = C64::new(0.0, 0.0);
                // u ← u V
                for r in 0..n {
                    let urp = u[[r, p]];
                    let urq = u[[r, q]];
                    u[[r, p]] = urp * vpp + urq * vqp;
                    u[[r, q]] = urp * vpq + urq * vqq;
                }
            }
        }
    }
    if !converged {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]].norm_sqr();
            }
        }
        if off.sqrt() > target.max(1e-12 * nf.max(1e-300)) {
            return Err(NumericsError::NoConvergence(max_sweeps));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].re.partial_cmp(&a[[j, j]].re).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[[i, i]].re).collect();
    let mut vecs = CMat::zeros((n, n));
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vecs[[r, new]] = u[[r, old]];
        }
    }
    Ok(EigDecomposition { eigenvalues, eigenvectors: vecs })
}

/// `m^z` for a PSD matrix by spectral calculus on the support.
///
/// Eigenvalues below `tol·λ_max` count as zero and `0^z := 0` for `z ≠ 0`;
/// `z = 0` yields the support projection. A materially negative eigenvalue
/// is an error.
pub fn matrix_power(m: &CMat, z: C64, tol: f64) -> NumResult<CMat> {
    let eig = hermitian_eig(m, tol)?;
    let lmax = eig.max_eigenvalue().max(0.0);
    let cutoff = tol * lmax.max(1.0);
    if let Some(&lmin) = eig.eigenvalues.first() {
        if lmin < -cutoff.max(tol) {
            return Err(NumericsError::NotPsd(lmin));
        }
    }
    let support_cut = tol * lmax;
    Ok(eig.apply(|l| {
        if l <= support_cut.max(0.0) {
            // Outside the support everything vanishes, including z = 0,
            // which yields the support projection rather than the identity.
            C64::new(0.0, 0.0)
        } else if z == C64::new(0.0, 0.0) {
            C64::new(1.0, 0.0)
        } else {
            (z * C64::new(l.ln(), 0.0)).exp()
        }
    }))
}

/// Support projection of a PSD matrix (spectral cutoff at `tol·λ_max`).
pub fn support_projection(m: &CMat, tol: f64) -> NumResult<CMat> {
    matrix_power(m, C64::new(0.0, 0.0), tol)
}

/// Polar decomposition `m = W·P` with `P = (m*m)^{1/2}` PSD and `W` a
/// partial isometry whose initial space is the support of `P`.
pub fn polar_decompose(m: &CMat) -> NumResult<(CMat, CMat)> {
    polar_decompose_tol(m, DEFAULT_TOL)
}

pub fn polar_decompose_tol(m: &CMat, tol: f64) -> NumResult<(CMat, CMat)> {
    let mtm = adjoint(m).dot(m);
    let eig = hermitian_eig(&mtm, tol.max(1e-12))?;
    let lmax = eig.max_eigenvalue().max(0.0);
    let cut = (tol * tol * lmax).max(0.0);
    let p = eig.apply(|l| C64::new(l.max(0.0).sqrt(), 0.0));
    let p_pinv = eig.apply(|l| {
        if l > cut && l > 0.0 {
            C64::new(1.0 / l.sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let w = m.dot(&p_pinv);
    Ok((w, p))
}

/// Orthonormal basis of `{v : ‖mv‖ ≤ tol·‖m‖_op}`; empty when `m` is
/// injective, the full standard basis when `m = 0`.
pub fn null_space(m: &CMat, tol: f64) -> NumResult<Vec<CVec>> {
    let (_, cols) = m.dim();
    if cols == 0 {
        return Ok(vec![]);
    }
    let mtm = adjoint(m).dot(m);
    let eig = hermitian_eig(&mtm, 1e-9)?;
    let smax2 = eig.max_eigenvalue().max(0.0);
    // Inputs in this crate are O(1)-scaled, so a matrix whose largest
    // singular value sits at rounding-noise level is the zero matrix; a
    // relative cutoff would otherwise measure the noise against itself.
    if smax2 <= 1e-24 {
        return Ok((0..cols)
            .map(|k| {
                let mut v = CVec::zeros(cols);
                v[k] = C64::new(1.0, 0.0);
                v
            })
            .collect());
    }
    // Going through m*m squares the conditioning: genuinely null directions
    // surface with eigenvalue noise around machine epsilon times λ_max, so
    // the eigenvalue cutoff gets a floor well above that. The returned
    // eigenvectors themselves are accurate to working precision.
    let cut = (smax2 * (tol * tol).max(1e-12)).max(1e-300);
    let mut basis = vec![];
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= cut {
            basis.push(eig.eigenvectors.column(k).to_owned());
        }
    }
    Ok(basis)
}

/// Rank of a general matrix at relative tolerance `tol` (singular values
/// below `tol·σ_max` count as zero).
pub fn rank(m: &CMat, tol: f64) -> NumResult<usize> {
    let (_, cols) = m.dim();
    if cols == 0 || m.dim().0 == 0 {
        return Ok(0);
    }
    Ok(cols - null_space(m, tol)?.len())
}

/// Moore–Penrose pseudo-inverse via the spectral decomposition of `m*m`.
pub fn pinv(m: &CMat, tol: f64) -> NumResult<CMat> {
    let mtm = adjoint(m).dot(m);
    let eig = hermitian_eig(&mtm, 1e-9)?;
    let lmax = eig.max_eigenvalue().max(0.0);
    let cut = (lmax * (tol * tol).max(1e-12)).max(1e-300);
    let inv = eig.apply(|l| {
        if l > cut {
            C64::new(1.0 / l, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(inv.dot(&adjoint(m)))
}

/// Least-squares solution `x` of `a·x = b` (minimal-norm on the residual
/// kernel), columns of `b` solved jointly.
pub fn lstsq(a: &CMat, b: &CMat, tol: f64) -> NumResult<CMat> {
    Ok(pinv(a, tol)?.dot(b))
}

/// Inverse of a Hermitian positive-definite matrix.
pub fn pd_inverse(m: &CMat, tol: f64) -> NumResult<CMat> {
    let eig = hermitian_eig(m, tol.max(1e-12))?;
    let lmax = eig.max_eigenvalue();
    if eig.eigenvalues.iter().any(|&l| l <= tol * lmax.max(1.0)) {
        return Err(NumericsError::NotPositiveDefinite(
            eig.eigenvalues.first().copied().unwrap_or(0.0),
        ));
    }
    Ok(eig.apply(|l| C64::new(1.0 / l, 0.0)))
}

/// Is `m` PSD up to `tol` relative to its largest eigenvalue?
pub fn is_psd(m: &CMat, tol: f64) -> bool {
    match hermitian_eig(m, tol.max(1e-10)) {
        Ok(e) => {
            let lmax = e.max_eigenvalue().max(0.0);
            e.eigenvalues.iter().all(|&l| l >= -tol * lmax.max(1.0))
        }
        Err(_) => false,
    }
}

/// Orthonormal basis of the range of a Hermitian projection-like matrix
/// (eigenvectors with eigenvalue above 1/2).
pub fn projection_range(p: &CMat, tol: f64) -> NumResult<Vec<CVec>> {
    let eig = hermitian_eig(p, tol.max(1e-8))?;
    let mut out = vec![];
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 0.5 {
            out.push(eig.eigenvectors.column(k).to_owned());
        }
    }
    Ok(out)
}

/// Stack matrices vertically.
pub fn vstack(mats: &[CMat]) -> CMat {
    let cols = mats.first().map(|m| m.dim().1).unwrap_or(0);
    let rows: usize = mats.iter().map(|m| m.dim().0).sum();
    let mut out = CMat::zeros((rows, cols));
    let mut r0 = 0;
    for m in mats {
        let (r, c) = m.dim();
        assert_eq!(c, cols);
        for i in 0..r {
            for j in 0..c {
                out[[r0 + i, j]] = m[[i, j]];
            }
        }
        r0 += r;
    }
    out
}

/// Deterministic sampling helpers used by tests, the CLI check suites, and
/// the index optimizers. All randomness flows through a caller-provided RNG.
pub mod sampling {
    use super::{adjoint, CMat, CVec, C64};
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub fn reals<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    pub fn cmat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
        let mut m = CMat::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                m[[i, j]] = C64::new(re, im);
            }
        }
        m
    }

    pub fn cvec<R: Rng>(rng: &mut R, n: usize) -> CVec {
        let mut v = CVec::zeros(n);
        for i in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            v[i] = C64::new(re, im);
        }
        v
    }

    pub fn hermitian<R: Rng>(rng: &mut R, n: usize) -> CMat {
        let m = cmat(rng, n, n);
        (&m + &adjoint(&m)).mapv(|z| z * 0.5)
    }

    /// Random PSD matrix, optionally rank-deficient.
    pub fn psd<R: Rng>(rng: &mut R, n: usize, rank: Option<usize>) -> CMat {
        let k = rank.unwrap_or(n).min(n);
        if k == 0 {
            return CMat::zeros((n, n));
        }
        let x = cmat(rng, n, k);
        x.dot(&adjoint(&x))
    }

    pub fn positive_definite<R: Rng>(rng: &mut R, n: usize) -> CMat {
        let mut m = psd(rng, n, None);
        for i in 0..n {
            m[[i, i]] += C64::new(0.5 + n as f64 * 0.05, 0.0);
        }
        m
    }

    /// Haar-ish random unitary via Gram–Schmidt of a Gaussian matrix.
    pub fn unitary<R: Rng>(rng: &mut R, n: usize) -> CMat {
        let m = cmat(rng, n, n);
        let mut cols: Vec<CVec> = (0..n).map(|j| m.column(j).to_owned()).collect();
        for j in 0..n {
            for i in 0..j {
                let proj = super::vec_inner(&cols[i], &cols[j]);
                let prev = cols[i].clone();
                cols[j].iter_mut().zip(prev.iter()).for_each(|(a, b)| *a -= proj * b);
            }
            let norm = super::vec_norm(&cols[j]).max(1e-300);
            cols[j].mapv_inplace(|z| z / norm);
        }
        let mut u = CMat::zeros((n, n));
        for (j, col) in cols.iter().enumerate() {
            for i in 0..n {
                u[[i, j]] = col[i];
            }
        }
        u
    }
}
