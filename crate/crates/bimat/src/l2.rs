//! The standard form L²(A) of a multi-matrix algebra, realized as blockwise
//! Hilbert–Schmidt matrices with the unweighted trace pairing.
//!
//! Square roots of states live here, the inner product is computed two ways
//! (directly as `Σ Tr(ρ^{1/2} σ^{1/2})` and through the Radon–Nikodym
//! evaluation at `t = i/2`), and the five standard-form axioms are verified
//! with residuals.

use crate::algebra::{corner, Algebra, AlgebraElement, AlgebraError, CornerEmbedding, Functional};
use crate::numerics::{self, adjoint, frob, matrix_power, trace, CMat, CVec, NumericsError};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum L2Error {
    #[error("functional is not positive")]
    NotPositive,
    #[error("element is not a projection")]
    NotProjection,
    #[error("algebras do not match: {0}")]
    AlgebraMismatch(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type L2Result<T> = Result<T, L2Error>;

/// A vector in L²(A): one `n_i × n_i` matrix per block, with
/// `⟨ξ, η⟩ = Σ_i Tr(ξ_i* η_i)` and the two multiplication actions.
#[derive(Debug, Clone)]
pub struct L2Vector {
    algebra: Algebra,
    blocks: Vec<CMat>,
}

impl L2Vector {
    pub fn new(algebra: &Algebra, blocks: Vec<CMat>) -> L2Result<Self> {
        let elt = algebra.element(blocks)?;
        Ok(L2Vector { algebra: algebra.clone(), blocks: elt.blocks().to_vec() })
    }

    pub fn zero(algebra: &Algebra) -> Self {
        L2Vector {
            algebra: algebra.clone(),
            blocks: algebra.block_sizes().iter().map(|&n| CMat::zeros((n, n))).collect(),
        }
    }

    pub fn algebra(&self) -> &Algebra {
        &self.algebra
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn inner(&self, other: &L2Vector) -> C64 {
        self.blocks
            .iter()
            .zip(other.blocks.iter())
            .map(|(a, b)| trace(&adjoint(a).dot(b)))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    pub fn add(&self, other: &L2Vector) -> L2Vector {
        L2Vector {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().zip(other.blocks.iter()).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &L2Vector) -> L2Vector {
        L2Vector {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().zip(other.blocks.iter()).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, z: C64) -> L2Vector {
        L2Vector {
            algebra: self.algebra.clone(),
            blocks: self.blocks.iter().map(|b| b.mapv(|w| w * z)).collect(),
        }
    }

    /// Left action `a·ξ`.
    pub fn left_mul(&self, a: &AlgebraElement) -> L2Vector {
        L2Vector {
            algebra: self.algebra.clone(),
            blocks: self
                .blocks
                .iter()
                .zip(a.blocks().iter())
                .map(|(x, ab)| ab.dot(x))
                .collect(),
        }
    }

    /// Right action `ξ·a`.
    pub fn right_mul(&self, a: &AlgebraElement) -> L2Vector {
        L2Vector {
            algebra: self.algebra.clone(),
            blocks: self
                .blocks
                .iter()
                .zip(a.blocks().iter())
                .map(|(x, ab)| x.dot(ab))
                .collect(),
        }
    }

    /// Is the vector in the positive cone (blockwise PSD)?
    pub fn in_cone(&self, tol: f64) -> bool {
        self.blocks.iter().all(|b| numerics::is_psd(b, tol))
    }

    /// Flat coordinates, matching the canonical identity-bimodule layout.
    pub fn to_flat(&self) -> CVec {
        self.algebra.flatten(&self.algebra.element(self.blocks.clone()).unwrap())
    }

    pub fn from_flat(algebra: &Algebra, v: &CVec) -> L2Vector {
        let e = algebra.unflatten(v);
        L2Vector { algebra: algebra.clone(), blocks: e.blocks().to_vec() }
    }

    pub fn random<R: rand::Rng>(algebra: &Algebra, rng: &mut R) -> L2Vector {
        let blocks =
            algebra.block_sizes().iter().map(|&n| numerics::sampling::cmat(rng, n, n)).collect();
        L2Vector { algebra: algebra.clone(), blocks }
    }
}

/// `√φ` for a positive functional: the blockwise PSD square roots of the
/// densities. Lies in the positive cone, with `‖√φ‖² = φ(1)`.
pub fn sqrt_state(phi: &Functional) -> L2Result<L2Vector> {
    if !phi.is_positive() {
        return Err(L2Error::NotPositive);
    }
    let blocks = phi
        .densities()
        .iter()
        .map(|rho| matrix_power(rho, C64::new(0.5, 0.0), 1e-11))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(L2Vector { algebra: phi.algebra().clone(), blocks })
}

/// `⟨√φ, √ψ⟩ = Σ_i Tr(ρ_i^{1/2} σ_i^{1/2})`.
pub fn inner_direct(phi: &Functional, psi: &Functional) -> L2Result<f64> {
    let a = sqrt_state(phi)?;
    let b = sqrt_state(psi)?;
    Ok(a.inner(&b).re)
}

/// Result of the Radon–Nikodym evaluation of the inner product: the value of
/// `f(t) = Σ_i Tr(ρ_i^{1+it} σ_i^{-it})` at `t = i/2`, plus diagnostic
/// samples of `f` on supplied real arguments.
#[derive(Debug, Clone)]
pub struct AnalyticInner {
    pub value: f64,
    pub samples: Vec<(f64, C64)>,
}

fn rn_term(rho: &CMat, sigma: &CMat, t: C64) -> L2Result<C64> {
    // ρ^{1+it} σ^{-it}, powers taken on the supports.
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let p = matrix_power(rho, one + i * t, 1e-11)?;
    let q = matrix_power(sigma, -(i * t), 1e-11)?;
    Ok(trace(&p.dot(&q)))
}

/// The inner product as the analytic continuation of `φ([Dφ:Dψ]_t)` to
/// `t = i/2`, evaluated directly by spectral calculus (legitimate because
/// both exponents have nonnegative real part on that strip).
pub fn inner_analytic(
    phi: &Functional,
    psi: &Functional,
    t_samples: &[f64],
) -> L2Result<AnalyticInner> {
    if !phi.is_positive() || !psi.is_positive() {
        return Err(L2Error::NotPositive);
    }
    let mut value = C64::new(0.0, 0.0);
    for (rho, sigma) in phi.densities().iter().zip(psi.densities()) {
        value += rn_term(rho, sigma, C64::new(0.0, 0.5))?;
    }
    let mut samples = vec![];
    for &t in t_samples {
        let mut s = C64::new(0.0, 0.0);
        for (rho, sigma) in phi.densities().iter().zip(psi.densities()) {
            s += rn_term(rho, sigma, C64::new(t, 0.0))?;
        }
        samples.push((t, s));
    }
    Ok(AnalyticInner { value: value.re, samples })
}

/// The modular conjugation `J`: blockwise adjoint. Antilinear, involutive,
/// fixes the positive cone pointwise, and satisfies `J(aξb) = b* J(ξ) a*`.
pub fn modular_conjugation(xi: &L2Vector) -> L2Vector {
    L2Vector { algebra: xi.algebra.clone(), blocks: xi.blocks.iter().map(adjoint).collect() }
}

/// One axiom's outcome in a standard-form check.
#[derive(Debug, Clone)]
pub struct AxiomCheck {
    pub name: &'static str,
    pub residual: f64,
    pub passed: bool,
}

/// Residual report for the five standard-form axioms.
#[derive(Debug, Clone)]
pub struct StandardFormReport {
    pub axioms: Vec<AxiomCheck>,
}

impl StandardFormReport {
    pub fn all_pass(&self) -> bool {
        self.axioms.iter().all(|a| a.passed)
    }

    pub fn axiom(&self, k: usize) -> &AxiomCheck {
        &self.axioms[k]
    }
}

/// Verify the standard-form axioms for `(L²A, J, cone)` with the honest `J`.
pub fn check_standard_form(algebra: &Algebra, tol: f64) -> L2Result<StandardFormReport> {
    check_standard_form_with(algebra, tol, modular_conjugation)
}

/// The deliberately corrupted conjugation (blockwise transpose instead of
/// adjoint), used as a negative control: axiom (5) must fail.
pub fn transpose_conjugation(xi: &L2Vector) -> L2Vector {
    L2Vector {
        algebra: xi.algebra().clone(),
        blocks: xi.blocks().iter().map(|b| b.t().to_owned()).collect(),
    }
}

/// Standard-form checker parameterized by the conjugation map.
pub fn check_standard_form_with(
    algebra: &Algebra,
    tol: f64,
    conj: impl Fn(&L2Vector) -> L2Vector,
) -> L2Result<StandardFormReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5f0a);
    let mut axioms = vec![];
    let scale = |x: f64, r: f64| x / (1.0 + r);

    // Axiom 1: J A J = A' on L²A. Two halves: JaJ commutes with the left
    // action on samples, and the commutant of the left action has dimension
    // exactly dim A, so the inclusion J A J ⊆ A' is onto.
    {
        let mut resid: f64 = 0.0;
        for _ in 0..6 {
            let a = algebra.random_element(&mut rng);
            let b = algebra.random_element(&mut rng);
            let xi = L2Vector::random(algebra, &mut rng);
            let jaj = |v: &L2Vector| conj(&conj(v).left_mul(&a));
            let lhs = jaj(&xi).left_mul(&b);
            let rhs = jaj(&xi.left_mul(&b));
            let r = lhs.sub(&rhs).norm() / (1.0 + a.norm() * b.norm() * xi.norm());
            resid = resid.max(r);
        }
        let dim = commutant_dimension_of_left_action(algebra)?;
        let dim_ok = dim == algebra.dim();
        axioms.push(AxiomCheck {
            name: "JAJ = A'",
            residual: resid,
            passed: resid <= tol && dim_ok,
        });
    }

    // Axiom 2: JcJ = c* for central c.
    {
        let mut resid: f64 = 0.0;
        for p in algebra.minimal_central_projections() {
            let c = p.scale(C64::new(0.3, -0.7));
            let xi = L2Vector::random(algebra, &mut rng);
            let lhs = conj(&conj(&xi).left_mul(&c));
            let rhs = xi.left_mul(&c.adjoint());
            resid = resid.max(scale(lhs.sub(&rhs).norm(), xi.norm()));
        }
        axioms.push(AxiomCheck { name: "JcJ = c*", residual: resid, passed: resid <= tol });
    }

    // Axiom 3: Jξ = ξ on the positive cone.
    {
        let mut resid: f64 = 0.0;
        for _ in 0..6 {
            let phi = Functional::random_positive(algebra, &mut rng, true);
            let xi = sqrt_state(&phi)?;
            resid = resid.max(scale(conj(&xi).sub(&xi).norm(), xi.norm()));
        }
        axioms.push(AxiomCheck { name: "J fixes cone", residual: resid, passed: resid <= tol });
    }

    // Axiom 4: a J a J maps the cone into itself.
    {
        let mut worst: f64 = 0.0;
        for _ in 0..6 {
            let a = algebra.random_element(&mut rng);
            let phi = Functional::random_positive(algebra, &mut rng, false);
            let xi = sqrt_state(&phi)?;
            let v = conj(&conj(&xi).left_mul(&a)).left_mul(&a);
            // Distance to the cone: anti-Hermitian defect plus the most
            // negative eigenvalue of the Hermitian part.
            for b in v.blocks() {
                let h = (b + &adjoint(b)).mapv(|z| z * 0.5);
                let anti = frob(&(b - &adjoint(b)));
                let neg = match numerics::hermitian_eig(&h, 1e-7) {
                    Ok(e) => (-e.eigenvalues.first().copied().unwrap_or(0.0)).max(0.0),
                    Err(_) => f64::INFINITY,
                };
                worst = worst.max(scale(neg + anti, frob(b)));
            }
        }
        axioms.push(AxiomCheck {
            name: "aJaJ preserves cone",
            residual: worst,
            passed: worst <= tol,
        });
    }

    // Axiom 5: ξ·a = J a* J ξ.
    {
        let mut resid: f64 = 0.0;
        for _ in 0..6 {
            let a = algebra.random_element(&mut rng);
            let xi = L2Vector::random(algebra, &mut rng);
            let lhs = xi.right_mul(&a);
            let rhs = conj(&conj(&xi).left_mul(&a.adjoint()));
            resid = resid.max(lhs.sub(&rhs).norm() / (1.0 + a.norm() * xi.norm()));
        }
        axioms.push(AxiomCheck { name: "ξa = Ja*Jξ", residual: resid, passed: resid <= tol });
    }

    Ok(StandardFormReport { axioms })
}

/// Dimension of the commutant of the left action of `A` on L²(A), computed
/// by solving the commutation equations against all matrix units.
fn commutant_dimension_of_left_action(algebra: &Algebra) -> L2Result<usize> {
    let dim = algebra.dim();
    let mut gens = vec![];
    for (i, &n) in algebra.block_sizes().iter().enumerate() {
        for p in 0..n {
            for q in 0..n {
                gens.push(left_action_matrix(algebra, &algebra.matrix_unit(i, p, q)));
            }
        }
    }
    let mut rows = vec![];
    for g in &gens {
        let n = dim;
        let mut m = CMat::zeros((n * n, n * n));
        for r in 0..n {
            for c in 0..n {
                for k in 0..n {
                    m[[r * n + c, k * n + c]] += g[[r, k]];
                    m[[r * n + c, r * n + k]] -= g[[k, c]];
                }
            }
        }
        rows.push(m);
    }
    let stacked = numerics::vstack(&rows);
    let ns = numerics::null_space(&stacked, 1e-9)?;
    Ok(ns.len())
}

/// The realized matrix of the left action of `a` on the flat coordinates of
/// L²(A).
pub fn left_action_matrix(algebra: &Algebra, a: &AlgebraElement) -> CMat {
    let dim = algebra.dim();
    let mut m = CMat::zeros((dim, dim));
    for (i, &n) in algebra.block_sizes().iter().enumerate() {
        let off = algebra.block_offset(i);
        let ab = a.block(i);
        for p in 0..n {
            for p2 in 0..n {
                let v = ab[[p, p2]];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                for q in 0..n {
                    m[[off + p * n + q, off + p2 * n + q]] += v;
                }
            }
        }
    }
    m
}

/// The realized matrix of the right action of `a` on the flat coordinates.
pub fn right_action_matrix(algebra: &Algebra, a: &AlgebraElement) -> CMat {
    let dim = algebra.dim();
    let mut m = CMat::zeros((dim, dim));
    for (i, &n) in algebra.block_sizes().iter().enumerate() {
        let off = algebra.block_offset(i);
        let ab = a.block(i);
        for q2 in 0..n {
            for q in 0..n {
                let v = ab[[q2, q]];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                for p in 0..n {
                    m[[off + p * n + q, off + p * n + q2]] += v;
                }
            }
        }
    }
    m
}

/// The unitary identification `L²(pAp) ≅ p(L²A)p`; maps `√φ` to `√(φ∘E)`
/// for `E(a) = pap`.
#[derive(Debug)]
pub struct L2Corner {
    pub corner_algebra: Algebra,
    pub embedding: CornerEmbedding,
}

impl L2Corner {
    /// Apply the identification to a corner L² vector.
    pub fn map(&self, ambient: &Algebra, xi: &L2Vector) -> L2Vector {
        let elt = self.corner_algebra.element(xi.blocks().to_vec()).unwrap();
        let emb = self.embedding.embed(ambient, &elt);
        L2Vector::new(ambient, emb.blocks().to_vec()).unwrap()
    }

    /// Compress an ambient vector back to the corner (adjoint of `map`).
    pub fn unmap(&self, ambient: &Algebra, xi: &L2Vector) -> L2Vector {
        let elt = ambient.element(xi.blocks().to_vec()).unwrap();
        let comp = self.embedding.compress(&self.corner_algebra, &elt);
        L2Vector::new(&self.corner_algebra, comp.blocks().to_vec()).unwrap()
    }
}

pub fn l2_corner(algebra: &Algebra, p: &AlgebraElement, tol: f64) -> L2Result<L2Corner> {
    let (corner_algebra, embedding) = corner(algebra, p, tol).map_err(|e| match e {
        AlgebraError::NotProjection(_) => L2Error::NotProjection,
        other => L2Error::Algebra(other),
    })?;
    Ok(L2Corner { corner_algebra, embedding })
}
