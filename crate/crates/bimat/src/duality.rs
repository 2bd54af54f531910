//! Duality data for canonical bimodules: coevaluation maps `R`, `S`, the
//! zig-zag and normalization equations, the normalization algorithm with its
//! closed-form positive solver, statistical dimension matrices, the
//! canonical trace on `End(H)`, the bar involution, Jones projections, and
//! uniqueness-of-dual comparison.


use crate::bimodule::{
    associator, fused_canonical, fused_copy_index, left_unitor, promote_left_linear,
    promote_right_linear, right_unitor, BimResult, Bimodule, BimoduleError, BimoduleMap,
};
use crate::numerics::{self, adjoint, eye, frob, matrix_power, trace, CMat, NumericsError};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DualityError {
    #[error("input maps do not satisfy the zig-zag equations (residual {0:.3e})")]
    ZigzagViolation(f64),
    #[error("side state is degenerate on sector ({0},{1}): the input duality maps are singular")]
    SingularState(usize, usize),
    #[error("duality data is not normalized")]
    NotNormalized,
    #[error("the bimodule is zero")]
    ZeroModule,
    #[error("operation requires factors on both sides")]
    NotFactors,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    Bimodule(#[from] BimoduleError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type DualResult<T> = Result<T, DualityError>;

/// A candidate dual `(H̄, R, S)` for a bimodule `H`, with
/// `R: L²A → H ⊠ H̄` and `S: L²B → H̄ ⊠ H` stored as realized matrices.
#[derive(Debug, Clone)]
pub struct DualityData {
    h: Bimodule,
    hbar: Bimodule,
    r: CMat,
    s: CMat,
    normalized: bool,
}

/// The bilinear endomorphism of `H` supported on sector `(i,j)` with the
/// given copy-space matrix.
pub fn end_element_at(h: &Bimodule, i: usize, j: usize, m: &CMat) -> BimResult<BimoduleMap> {
    let (r, s) = h.mult().dim();
    let mut blocks = vec![];
    for i2 in 0..r {
        for j2 in 0..s {
            if i2 == i && j2 == j {
                blocks.push(m.clone());
            } else {
                blocks.push(CMat::zeros((h.mult()[[i2, j2]], h.mult()[[i2, j2]])));
            }
        }
    }
    BimoduleMap::from_blocks(h, h, &blocks)
}

/// A random bilinear endomorphism of `H`.
pub fn random_end_element<R: rand::Rng>(h: &Bimodule, rng: &mut R, hermitian: bool) -> BimoduleMap {
    let (r, s) = h.mult().dim();
    let mut blocks = vec![];
    for i in 0..r {
        for j in 0..s {
            let m = h.mult()[[i, j]];
            let blk = if hermitian {
                numerics::sampling::hermitian(rng, m)
            } else {
                numerics::sampling::cmat(rng, m, m)
            };
            blocks.push(blk);
        }
    }
    BimoduleMap::from_blocks(h, h, &blocks).expect("block shapes match")
}

impl DualityData {
    pub fn new(h: &Bimodule, hbar: &Bimodule, r: CMat, s: CMat, normalized: bool) -> Self {
        DualityData { h: h.clone(), hbar: hbar.clone(), r, s, normalized }
    }

    pub fn h(&self) -> &Bimodule {
        &self.h
    }

    pub fn hbar(&self) -> &Bimodule {
        &self.hbar
    }

    pub fn r(&self) -> &CMat {
        &self.r
    }

    pub fn s(&self) -> &CMat {
        &self.s
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Residuals of the two zig-zag equations
    /// `(R*⊗1)(1⊗S) = 1_H` and `(S*⊗1)(1⊗R) = 1_{H̄}`.
    pub fn zigzag_residuals(&self) -> DualResult<(f64, f64)> {
        let h = &self.h;
        let hbar = &self.hbar;
        let l2a = Bimodule::l2(h.left());
        let l2b = Bimodule::l2(h.right());
        let f_h_hbar = fused_canonical(h, hbar)?;
        let f_hbar_h = fused_canonical(hbar, h)?;

        // zig1: H → H.
        let ru_inv = adjoint(&right_unitor(h)?);
        let one_s = promote_left_linear(&self.s, &l2b, &f_hbar_h, h)?;
        let assoc_inv = adjoint(&associator(h, hbar, h)?);
        let rstar_one = promote_right_linear(&adjoint(&self.r), &f_h_hbar, &l2a, h)?;
        let lu = left_unitor(h)?;
        let zig1 = lu.dot(&rstar_one).dot(&assoc_inv).dot(&one_s).dot(&ru_inv);
        let res1 = frob(&(&zig1 - &eye(h.dim()))) / (1.0 + (h.dim() as f64).sqrt());

        // zig2: H̄ → H̄.
        let ru_inv2 = adjoint(&right_unitor(hbar)?);
        let one_r = promote_left_linear(&self.r, &l2a, &f_h_hbar, hbar)?;
        let assoc_inv2 = adjoint(&associator(hbar, h, hbar)?);
        let sstar_one = promote_right_linear(&adjoint(&self.s), &f_hbar_h, &l2b, hbar)?;
        let lu2 = left_unitor(hbar)?;
        let zig2 = lu2.dot(&sstar_one).dot(&assoc_inv2).dot(&one_r).dot(&ru_inv2);
        let res2 = frob(&(&zig2 - &eye(hbar.dim()))) / (1.0 + (hbar.dim() as f64).sqrt());
        Ok((res1, res2))
    }

    /// The left normalization state: `R*((p_i x q_j) ⊗ 1)R` as a scalar on
    /// `L²A_i`, together with the deviation of that operator from a scalar.
    pub fn left_state_on(&self, i: usize, j: usize, m: &CMat) -> DualResult<(C64, f64)> {
        let x = end_element_at(&self.h, i, j, m)?;
        let promoted = promote_right_linear(x.matrix(), &self.h, &self.h, &self.hbar)?;
        let op = adjoint(&self.r).dot(&promoted).dot(&self.r);
        let l2a = Bimodule::l2(self.h.left());
        Ok(scalar_on_l2_block(&op, &l2a, i))
    }

    /// The right normalization state: `S*(1 ⊗ (p_i x q_j))S` on `L²B_j`.
    pub fn right_state_on(&self, i: usize, j: usize, m: &CMat) -> DualResult<(C64, f64)> {
        let x = end_element_at(&self.h, i, j, m)?;
        let promoted = promote_left_linear(x.matrix(), &self.h, &self.h, &self.hbar)?;
        let op = adjoint(&self.s).dot(&promoted).dot(&self.s);
        let l2b = Bimodule::l2(self.h.right());
        Ok(scalar_on_l2_block(&op, &l2b, j))
    }

    /// Worst-case residual of the normalization condition over a spanning
    /// set of `End(H)` and all minimal central pairs.
    pub fn normalization_residual(&self) -> DualResult<f64> {
        let (r, s) = self.h.mult().dim();
        let mut worst: f64 = 0.0;
        for i in 0..r {
            for j in 0..s {
                let m = self.h.mult()[[i, j]];
                if m == 0 {
                    continue;
                }
                for u in 0..m {
                    for v in 0..m {
                        let mut unit = CMat::zeros((m, m));
                        unit[[u, v]] = C64::new(1.0, 0.0);
                        let (lhs, res_l) = self.left_state_on(i, j, &unit)?;
                        let (rhs, res_r) = self.right_state_on(i, j, &unit)?;
                        worst = worst.max((lhs - rhs).norm()).max(res_l).max(res_r);
                    }
                }
            }
        }
        Ok(worst)
    }

    /// Mark the data normalized after verifying both equation families.
    pub fn verify(mut self, tol: f64) -> DualResult<DualityData> {
        let (z1, z2) = self.zigzag_residuals()?;
        if z1.max(z2) > tol {
            return Err(DualityError::ZigzagViolation(z1.max(z2)));
        }
        let n = self.normalization_residual()?;
        self.normalized = n <= tol;
        Ok(self)
    }

    /// Dual data with `H̄` twisted by a unitary endomorphism `u`:
    /// `R' = (1⊗u)R`, `S' = (u⊗1)S`. Preserves both equation families.
    pub fn twist_by(&self, u: &BimoduleMap) -> DualResult<DualityData> {
        let one_u = promote_left_linear(u.matrix(), &self.hbar, &self.hbar, &self.h)?;
        let u_one = promote_right_linear(u.matrix(), &self.hbar, &self.hbar, &self.h)?;
        Ok(DualityData {
            h: self.h.clone(),
            hbar: self.hbar.clone(),
            r: one_u.dot(&self.r),
            s: u_one.dot(&self.s),
            normalized: self.normalized,
        })
    }
}

/// Read off the scalar by which an operator acts on the `(i,i)` sector of
/// an identity bimodule, plus the deviation from scalarity there.
fn scalar_on_l2_block(op: &CMat, l2: &Bimodule, i: usize) -> (C64, f64) {
    let n = l2.left().block_sizes()[i];
    let mut sub = CMat::zeros((n * n, n * n));
    for p in 0..n {
        for q in 0..n {
            for p2 in 0..n {
                for q2 in 0..n {
                    sub[[p * n + q, p2 * n + q2]] =
                        op[[l2.index(i, i, 0, p, q), l2.index(i, i, 0, p2, q2)]];
                }
            }
        }
    }
    let scalar = trace(&sub) / ((n * n) as f64);
    let resid = frob(&(&sub - &eye(n * n).mapv(|z| z * scalar)));
    (scalar, resid)
}

/// Canonical duality data: `H̄ = conjugate(H)`, with `R` and `S` assembled
/// from per-sector coevaluations summed over an orthonormal multiplicity
/// basis. The scale is fixed so each irreducible summand contributes 1 to
/// `R*R`; normalization then holds with the plain matrix trace on each
/// multiplicity block.
pub fn canonical_duality(h: &Bimodule) -> DualResult<DualityData> {
    canonical_duality_data(h)?.verify(1e-8)
}

/// Canonical duality data without the per-instance verification sweep.
///
/// The canonical coevaluations satisfy the zig-zag and normalization
/// equations by construction; [`canonical_duality`] additionally proves it
/// numerically per instance, which builds triple-product spaces and
/// dominates the cost on larger objects. Consumers that only extract
/// dimension data use this path — [`statistical_dimension`] still
/// cross-checks every entry against both sides.
pub fn canonical_duality_fast(h: &Bimodule) -> DualResult<DualityData> {
    let mut d = canonical_duality_data(h)?;
    d.normalized = true;
    Ok(d)
}

fn canonical_duality_data(h: &Bimodule) -> DualResult<DualityData> {
    let hbar = h.conjugate();
    let f_h_hbar = fused_canonical(h, &hbar)?;
    let f_hbar_h = fused_canonical(&hbar, h)?;
    let l2a = Bimodule::l2(h.left());
    let l2b = Bimodule::l2(h.right());
    let (rb, sb) = h.mult().dim();

    let mut r = CMat::zeros((f_h_hbar.dim(), l2a.dim()));
    for i in 0..rb {
        let n = h.left().block_sizes()[i];
        for j in 0..sb {
            for c in 0..h.mult()[[i, j]] {
                let copy = fused_copy_index(h, &hbar, i, i, j, c, c);
                for p in 0..n {
                    for q in 0..n {
                        r[[f_h_hbar.index(i, i, copy, p, q), l2a.index(i, i, 0, p, q)]] =
                            C64::new(1.0, 0.0);
                    }
                }
            }
        }
    }

    let mut s = CMat::zeros((f_hbar_h.dim(), l2b.dim()));
    for j in 0..sb {
        let k = h.right().block_sizes()[j];
        for i in 0..rb {
            for c in 0..h.mult()[[i, j]] {
                let copy = fused_copy_index(&hbar, h, j, j, i, c, c);
                for u in 0..k {
                    for w in 0..k {
                        s[[f_hbar_h.index(j, j, copy, u, w), l2b.index(j, j, 0, u, w)]] =
                            C64::new(1.0, 0.0);
                    }
                }
            }
        }
    }

    Ok(DualityData::new(h, &hbar, r, s, false))
}

/// The unique positive solution of `x a x = x⁻¹ b x⁻¹` for positive
/// definite `a`, `b`: `x = √(√a⁻¹ √(√a b √a) √a⁻¹)`.
pub fn solve_normalization_element(a: &CMat, b: &CMat, tol: f64) -> DualResult<CMat> {
    for m in [a, b] {
        let eig = numerics::hermitian_eig(m, tol.max(1e-8))?;
        let lmax = eig.max_eigenvalue();
        if eig.eigenvalues.iter().any(|&l| l <= tol.max(1e-12) * lmax.max(1.0)) {
            return Err(DualityError::NotPositiveDefinite);
        }
    }
    let half = C64::new(0.5, 0.0);
    let sqrt_a = matrix_power(a, half, 1e-12)?;
    let sqrt_a_inv = matrix_power(a, C64::new(-0.5, 0.0), 1e-12)?;
    let inner = matrix_power(&sqrt_a.dot(b).dot(&sqrt_a), half, 1e-12)?;
    let x2 = sqrt_a_inv.dot(&inner).dot(&sqrt_a_inv);
    Ok(matrix_power(&x2, half, 1e-12)?)
}

/// Normalize zig-zag duality data: per sector, express both side states
/// against the matrix trace, solve `x a x = x⁻¹ b x⁻¹`, and replace
/// `R ← (x⊗1)R̃`, `S ← (1⊗x⁻¹)S̃`.
pub fn normalize(
    h: &Bimodule,
    hbar: &Bimodule,
    r_tilde: CMat,
    s_tilde: CMat,
    tol: f64,
) -> DualResult<DualityData> {
    let candidate = DualityData::new(h, hbar, r_tilde, s_tilde, false);
    let (z1, z2) = candidate.zigzag_residuals()?;
    if z1.max(z2) > 1e-6 {
        return Err(DualityError::ZigzagViolation(z1.max(z2)));
    }
    let (rb, sb) = h.mult().dim();
    let mut x_blocks = vec![];
    let mut x_inv_blocks = vec![];
    for i in 0..rb {
        for j in 0..sb {
            let m = h.mult()[[i, j]];
            if m == 0 {
                x_blocks.push(CMat::zeros((0, 0)));
                x_inv_blocks.push(CMat::zeros((0, 0)));
                continue;
            }
            // a, b with φ(y) = Tr(y a), ψ(y) = Tr(y b): a_{uv} = φ(E_{vu}).
            let mut a = CMat::zeros((m, m));
            let mut b = CMat::zeros((m, m));
            for u in 0..m {
                for v in 0..m {
                    let mut unit = CMat::zeros((m, m));
                    unit[[v, u]] = C64::new(1.0, 0.0);
                    let (phi, _) = candidate.left_state_on(i, j, &unit)?;
                    let (psi, _) = candidate.right_state_on(i, j, &unit)?;
                    a[[u, v]] = phi;
                    b[[u, v]] = psi;
                }
            }
            let x = solve_normalization_element(&a, &b, tol).map_err(|e| match e {
                DualityError::NotPositiveDefinite => DualityError::SingularState(i, j),
                other => other,
            })?;
            let x_inv = numerics::pd_inverse(&x, 1e-10)?;
            x_blocks.push(x);
            x_inv_blocks.push(x_inv);
        }
    }
    let x_map = BimoduleMap::from_blocks(h, h, &x_blocks)?;
    let x_inv_map = BimoduleMap::from_blocks(h, h, &x_inv_blocks)?;
    let x_prom = promote_right_linear(x_map.matrix(), h, h, hbar)?;
    let x_inv_prom = promote_left_linear(x_inv_map.matrix(), h, h, hbar)?;
    let r = x_prom.dot(candidate.r());
    let s = x_inv_prom.dot(candidate.s());
    let out = DualityData::new(h, hbar, r, s, false).verify(tol.max(1e-8))?;
    if !out.is_normalized() {
        return Err(DualityError::ZigzagViolation(out.normalization_residual()?));
    }
    Ok(out)
}

/// The statistical dimension matrix: entry `(i,j)` is the scalar
/// `R*((p_i q_j)⊗1)R` on `L²A_i`, cross-checked against the `S` side.
pub fn statistical_dimension(d: &DualityData) -> DualResult<Array2<f64>> {
    if !d.is_normalized() {
        return Err(DualityError::NotNormalized);
    }
    let (r, s) = d.h().mult().dim();
    let mut out = Array2::zeros((r, s));
    for i in 0..r {
        for j in 0..s {
            let m = d.h().mult()[[i, j]];
            if m == 0 {
                continue;
            }
            let unit = eye(m);
            let (lhs, res_l) = d.left_state_on(i, j, &unit)?;
            let (rhs, res_r) = d.right_state_on(i, j, &unit)?;
            if (lhs - rhs).norm() + res_l + res_r > 1e-7 * (1.0 + lhs.norm()) {
                return Err(DualityError::ZigzagViolation((lhs - rhs).norm()));
            }
            out[[i, j]] = lhs.re;
        }
    }
    Ok(out)
}

/// Values of the canonical (non-normalized) state `φ_{ij}(x) = R*(pxq⊗1)R`
/// for a bilinear endomorphism `x`, one value per central pair.
pub fn canonical_state(d: &DualityData, x: &BimoduleMap) -> DualResult<Array2<C64>> {
    let (r, s) = d.h().mult().dim();
    let blocks = x.blocks()?;
    let mut out = Array2::from_elem((r, s), C64::new(0.0, 0.0));
    for i in 0..r {
        for j in 0..s {
            if d.h().mult()[[i, j]] == 0 {
                continue;
            }
            let (v, _) = d.left_state_on(i, j, &blocks[i * s + j])?;
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// The bar involution `x ↦ x̄ ∈ End(H̄)`, computed by both bend formulas;
/// returns the left-bend map and the residual between the two bends.
pub fn bar_involution(d: &DualityData, x: &BimoduleMap) -> DualResult<(BimoduleMap, f64)> {
    if !d.is_normalized() {
        return Err(DualityError::NotNormalized);
    }
    let h = d.h();
    let hbar = d.hbar();
    let l2a = Bimodule::l2(h.left());
    let l2b = Bimodule::l2(h.right());
    let f_h_hbar = fused_canonical(h, hbar)?;
    let f_hbar_h = fused_canonical(hbar, h)?;

    // Left bend: (S*⊗1)(1⊗x⊗1)(1⊗R), bracketed through the associator.
    let left = {
        let ru_inv = adjoint(&right_unitor(hbar)?);
        let one_r = promote_left_linear(d.r(), &l2a, &f_h_hbar, hbar)?;
        let x_in_h_hbar = promote_right_linear(x.matrix(), h, h, hbar)?;
        let one_x_one = promote_left_linear(&x_in_h_hbar, &f_h_hbar, &f_h_hbar, hbar)?;
        let assoc_inv = adjoint(&associator(hbar, h, hbar)?);
        let sstar_one = promote_right_linear(&adjoint(d.s()), &f_hbar_h, &l2b, hbar)?;
        let lu = left_unitor(hbar)?;
        lu.dot(&sstar_one).dot(&assoc_inv).dot(&one_x_one).dot(&one_r).dot(&ru_inv)
    };

    // Right bend: (1⊗R*)(1⊗x⊗1)(S⊗1).
    let right = {
        let lu_inv = adjoint(&left_unitor(hbar)?);
        let s_one = promote_right_linear(d.s(), &l2b, &f_hbar_h, hbar)?;
        let assoc = associator(hbar, h, hbar)?;
        let x_in_hbar_h = promote_left_linear(x.matrix(), h, h, hbar)?;
        let one_x_one = promote_right_linear(&x_in_hbar_h, &f_hbar_h, &f_hbar_h, hbar)?;
        let one_rstar = promote_left_linear(&adjoint(d.r()), &f_h_hbar, &l2a, hbar)?;
        let ru = right_unitor(hbar)?;
        ru.dot(&one_rstar).dot(&assoc).dot(&one_x_one).dot(&s_one).dot(&lu_inv)
    };

    let resid = frob(&(&left - &right)) / (1.0 + frob(&left));
    let map = BimoduleMap::new(hbar, hbar, crate::bimodule::Linearity::Bilinear, left, 1e-7)?;
    Ok((map, resid))
}

/// The comparison map `v := (S*⊗1)(1⊗R')` between two duals of the same
/// bimodule. For normalized data it is the unique intertwiner and unitary.
pub fn compare_duals(d1: &DualityData, d2: &DualityData) -> DualResult<BimoduleMap> {
    if !d1.is_normalized() || !d2.is_normalized() {
        return Err(DualityError::NotNormalized);
    }
    if d1.h() != d2.h() {
        return Err(DualityError::ZigzagViolation(f64::INFINITY));
    }
    let h = d1.h();
    let hbar1 = d1.hbar();
    let hbar2 = d2.hbar();
    let l2a = Bimodule::l2(h.left());
    let l2b = Bimodule::l2(h.right());
    let f_h_hbar2 = fused_canonical(h, hbar2)?;
    let f_hbar1_h = fused_canonical(hbar1, h)?;

    let ru_inv = adjoint(&right_unitor(hbar1)?);
    let one_r2 = promote_left_linear(d2.r(), &l2a, &f_h_hbar2, hbar1)?;
    let assoc_inv = adjoint(&associator(hbar1, h, hbar2)?);
    let sstar_one = promote_right_linear(&adjoint(d1.s()), &f_hbar1_h, &l2b, hbar2)?;
    let lu = left_unitor(hbar2)?;
    let v = lu.dot(&sstar_one).dot(&assoc_inv).dot(&one_r2).dot(&ru_inv);
    Ok(BimoduleMap::new(hbar1, hbar2, crate::bimodule::Linearity::Bilinear, v, 1e-6)?)
}

/// Jones projections for a bimodule between factors:
/// `e₁ = (R*R)⁻¹ RR*⊗1`, `e₂ = (S*S)⁻¹ 1⊗SS*` on `H⊠H̄⊠H`, with
/// `e₁ ≥ e₁e₂e₁` forcing `(R*R)(S*S) ≥ 1`.
#[derive(Debug)]
pub struct JonesReport {
    pub e1: CMat,
    pub e2: CMat,
    pub dim_r: f64,
    pub dim_s: f64,
    pub projection_residual: f64,
    pub ordering_residual: f64,
}

pub fn jones_projections(d: &DualityData) -> DualResult<JonesReport> {
    let h = d.h();
    if !h.left().is_factor() || !h.right().is_factor() {
        return Err(DualityError::NotFactors);
    }
    if h.is_zero() {
        return Err(DualityError::ZeroModule);
    }
    let hbar = d.hbar();
    let f_h_hbar = fused_canonical(h, hbar)?;
    let f_hbar_h = fused_canonical(hbar, h)?;
    let l2a = Bimodule::l2(h.left());
    let l2b = Bimodule::l2(h.right());

    let rr = adjoint(d.r()).dot(d.r());
    let (dim_r, _) = scalar_on_l2_block(&rr, &l2a, 0);
    let ss = adjoint(d.s()).dot(d.s());
    let (dim_s, _) = scalar_on_l2_block(&ss, &l2b, 0);

    let rrstar = d.r().dot(&adjoint(d.r()));
    let e1raw = promote_right_linear(&rrstar, &f_h_hbar, &f_h_hbar, h)?;
    let e1 = e1raw.mapv(|z| z / dim_r);

    let ssstar = d.s().dot(&adjoint(d.s()));
    let e2raw = promote_left_linear(&ssstar, &f_hbar_h, &f_hbar_h, h)?;
    let a = associator(h, hbar, h)?;
    let e2 = adjoint(&a).dot(&e2raw).dot(&a).mapv(|z| z / dim_s);

    let mut projection_residual: f64 = 0.0;
    for e in [&e1, &e2] {
        projection_residual =
            projection_residual.max(frob(&(e.dot(e) - e))).max(frob(&(&adjoint(e) - e)));
    }
    // e₁ − e₁e₂e₁ must be PSD.
    let diff = &e1 - &e1.dot(&e2).dot(&e1);
    let eig = numerics::hermitian_eig(&((&diff + &adjoint(&diff)).mapv(|z| z * 0.5)), 1e-7)?;
    let ordering_residual = (-eig.eigenvalues.first().copied().unwrap_or(0.0)).max(0.0);

    Ok(JonesReport {
        e1,
        e2,
        dim_r: dim_r.re,
        dim_s: dim_s.re,
        projection_residual,
        ordering_residual,
    })
}

/// Statistical dimension matrix of a canonical bimodule via canonical
/// duality (fast construction; every entry is still cross-checked between
/// the `R` and `S` sides).
pub fn dim_of_bimodule(h: &Bimodule) -> DualResult<Array2<f64>> {
    statistical_dimension(&canonical_duality_fast(h)?)
}

/// Round a numerically-integer matrix, checking the rounding error.
pub fn round_integer_matrix(m: &Array2<f64>, tol: f64) -> Option<Array2<i64>> {
    let mut out = Array2::zeros(m.dim());
    for ((i, j), &v) in m.indexed_iter() {
        let r = v.round();
        if (v - r).abs() > tol {
            return None;
        }
        out[[i, j]] = r as i64;
    }
    Some(out)
}
