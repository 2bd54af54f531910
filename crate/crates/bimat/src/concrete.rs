//! Concrete von Neumann algebras on an ambient `C^d`: span saturation,
//! commutants, centers, joins, recognition of the multi-matrix block
//! structure, and extraction of canonical homomorphisms from inclusions.
//!
//! This is the ingestion path: index scenes hand us algebras as generator
//! lists, and everything downstream (dimension matrices, relative
//! commutants, corner indices) wants them in canonical form.

use crate::algebra::{Algebra, AlgebraElement, Homomorphism};
use crate::numerics::{self, adjoint, eye, frob, trace, CMat, NumericsError};

use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConcreteError {
    #[error("structure recognition failed: {0}")]
    Structure(String),
    #[error("not a unital inclusion: {0}")]
    NotUnital(String),
    #[error("element is outside the algebra (residual {0:.3e})")]
    NotInAlgebra(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Algebra(#[from] crate::algebra::AlgebraError),
}

pub type ConcResult<T> = Result<T, ConcreteError>;

fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    trace(&adjoint(a).dot(b))
}

/// Gram–Schmidt over the Hilbert–Schmidt inner product, dropping dependents.
fn orthonormalize(mats: &[CMat], tol: f64) -> Vec<CMat> {
    let mut basis: Vec<CMat> = vec![];
    for m in mats {
        let mut v = m.clone();
        for _pass in 0..2 {
            for b in &basis {
                let c = hs_inner(b, &v);
                v = &v - &b.mapv(|z| z * c);
            }
        }
        let n = frob(&v);
        if n > tol {
            basis.push(v.mapv(|z| z / n));
        }
    }
    basis
}

/// A unital *-subalgebra of `B(C^d)`, stored by an orthonormal basis.
#[derive(Debug, Clone)]
pub struct ConcreteAlgebra {
    space_dim: usize,
    basis: Vec<CMat>,
}

impl ConcreteAlgebra {
    /// The von Neumann algebra generated by the given matrices: the double
    /// commutant of their self-adjoint span (which at finite dimension is
    /// the *-algebra they generate together with the identity).
    pub fn from_generators(space_dim: usize, generators: &[CMat]) -> ConcResult<Self> {
        let mut seed: Vec<CMat> = vec![eye(space_dim)];
        for g in generators {
            if g.dim() != (space_dim, space_dim) {
                return Err(ConcreteError::Structure(format!(
                    "generator has shape {:?}, space is {space_dim}",
                    g.dim()
                )));
            }
            seed.push(g.clone());
            seed.push(adjoint(g));
        }
        let span = ConcreteAlgebra { space_dim, basis: orthonormalize(&seed, 1e-10) };
        span.commutant()?.commutant()
    }

    pub fn from_basis_unchecked(space_dim: usize, basis: Vec<CMat>) -> Self {
        ConcreteAlgebra { space_dim, basis }
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    /// Distance of `m` from the span of the algebra.
    pub fn span_residual(&self, m: &CMat) -> f64 {
        let mut v = m.clone();
        for b in &self.basis {
            let c = hs_inner(b, &v);
            v = &v - &b.mapv(|z| z * c);
        }
        frob(&v)
    }

    pub fn contains(&self, m: &CMat, tol: f64) -> bool {
        self.span_residual(m) <= tol * (1.0 + frob(m))
    }

    pub fn contains_algebra(&self, other: &ConcreteAlgebra, tol: f64) -> bool {
        other.basis.iter().all(|b| self.contains(b, tol))
    }

    /// The commutant in `B(C^d)`, by solving the commutation equations
    /// against the basis.
    pub fn commutant(&self) -> ConcResult<ConcreteAlgebra> {
        let d = self.space_dim;
        let mut rows = vec![];
        for g in &self.basis {
            let mut m = CMat::zeros((d * d, d * d));
            for r in 0..d {
                for c in 0..d {
                    for k in 0..d {
                        m[[r * d + c, k * d + c]] += g[[r, k]];
                        m[[r * d + c, r * d + k]] -= g[[k, c]];
                    }
                }
            }
            rows.push(m);
        }
        let stacked = numerics::vstack(&rows);
        let ns = numerics::null_space(&stacked, 1e-9)?;
        let mats: Vec<CMat> = ns
            .iter()
            .map(|v| {
                let mut m = CMat::zeros((d, d));
                for r in 0..d {
                    for c in 0..d {
                        m[[r, c]] = v[r * d + c];
                    }
                }
                m
            })
            .collect();
        Ok(ConcreteAlgebra { space_dim: d, basis: orthonormalize(&mats, 1e-10) })
    }

    /// The relative commutant of `other` inside this algebra: elements of
    /// `self` commuting with every basis element of `other`.
    pub fn relative_commutant(&self, other: &ConcreteAlgebra) -> ConcResult<ConcreteAlgebra> {
        let d = self.space_dim;
        let n = self.basis.len();
        // Unknown x = Σ c_t basis_t; constraint [x, g] = 0 for g in other.
        let mut rows = vec![];
        for g in &other.basis {
            let mut m = CMat::zeros((d * d, n));
            for (t, b) in self.basis.iter().enumerate() {
                let comm = b.dot(g) - g.dot(b);
                for r in 0..d {
                    for c in 0..d {
                        m[[r * d + c, t]] = comm[[r, c]];
                    }
                }
            }
            rows.push(m);
        }
        let stacked = numerics::vstack(&rows);
        let ns = numerics::null_space(&stacked, 1e-9)?;
        let mats: Vec<CMat> = ns
            .iter()
            .map(|coef| {
                let mut m = CMat::zeros((d, d));
                for (t, b) in self.basis.iter().enumerate() {
                    m = &m + &b.mapv(|z| z * coef[t]);
                }
                m
            })
            .collect();
        Ok(ConcreteAlgebra { space_dim: d, basis: orthonormalize(&mats, 1e-10) })
    }

    pub fn center(&self) -> ConcResult<ConcreteAlgebra> {
        self.relative_commutant(self)
    }

    /// The von Neumann algebra generated by this algebra and another one,
    /// as the double commutant of the union.
    pub fn join(&self, other: &ConcreteAlgebra) -> ConcResult<ConcreteAlgebra> {
        let mut gens = self.basis.clone();
        gens.extend(other.basis.iter().cloned());
        let union = ConcreteAlgebra { space_dim: self.space_dim, basis: orthonormalize(&gens, 1e-10) };
        union.commutant()?.commutant()
    }

    fn random_hermitian_member<R: Rng>(&self, rng: &mut R) -> CMat {
        let mut m = CMat::zeros((self.space_dim, self.space_dim));
        for b in &self.basis {
            let re: f64 = rng.random_range(-1.0..1.0);
            let im: f64 = rng.random_range(-1.0..1.0);
            m = &m + &b.mapv(|z| z * C64::new(re, im));
        }
        (&m + &adjoint(&m)).mapv(|z| z * 0.5)
    }

    /// Recognize the multi-matrix block structure.
    pub fn structure(&self, seed: u64) -> ConcResult<MultiMatrixStructure> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.space_dim;
        let center = self.center()?;
        // A random Hermitian central element separates the blocks.
        for attempt in 0..8 {
            let z = center.random_hermitian_member(&mut rng);
            let eig = numerics::hermitian_eig(&z, 1e-8)?;
            let scale = eig
                .eigenvalues
                .iter()
                .fold(0.0f64, |a, &l| a.max(l.abs()))
                .max(1e-6);
            // Cluster the spectrum.
            let mut clusters: Vec<Vec<usize>> = vec![];
            for idx in 0..d {
                let l = eig.eigenvalues[idx];
                match clusters.last_mut() {
                    Some(cl)
                        if (l - eig.eigenvalues[*cl.last().unwrap()]).abs() < 1e-5 * scale =>
                    {
                        cl.push(idx)
                    }
                    _ => clusters.push(vec![idx]),
                }
            }
            if clusters.len() != center.dim() {
                continue;
            }
            let projections: Vec<CMat> = clusters
                .iter()
                .map(|cl| {
                    let mut p = CMat::zeros((d, d));
                    for &idx in cl {
                        let col = eig.eigenvectors.column(idx);
                        for r in 0..d {
                            for c in 0..d {
                                p[[r, c]] += col[r] * col[c].conj();
                            }
                        }
                    }
                    p
                })
                .collect();
            match self.blocks_from_central_projections(&projections, &mut rng) {
                Ok(st) => return Ok(st),
                Err(_) if attempt + 1 < 8 => continue,
                Err(e) => return Err(e),
            }
        }
        Err(ConcreteError::Structure("could not separate central spectrum".into()))
    }

    fn blocks_from_central_projections<R: Rng>(
        &self,
        projections: &[CMat],
        rng: &mut R,
    ) -> ConcResult<MultiMatrixStructure> {
        let mut block_sizes = vec![];
        let mut mults = vec![];
        let mut units: Vec<Vec<CMat>> = vec![];
        for p in projections {
            // Corner algebra p·self·p.
            let corner_basis: Vec<CMat> =
                self.basis.iter().map(|b| p.dot(b).dot(p)).collect();
            let corner = orthonormalize(&corner_basis, 1e-8);
            let dim_corner = corner.len();
            let n = (dim_corner as f64).sqrt().round() as usize;
            if n * n != dim_corner {
                return Err(ConcreteError::Structure(format!(
                    "corner dimension {dim_corner} is not a perfect square"
                )));
            }
            let rank_p = numerics::rank(p, 1e-8)?;
            if rank_p % n != 0 {
                return Err(ConcreteError::Structure(
                    "central projection rank incompatible with block size".into(),
                ));
            }
            let mult = rank_p / n;
            // Minimal projections from the spectral clusters of a random
            // Hermitian corner element.
            let corner_alg = ConcreteAlgebra {
                space_dim: self.space_dim,
                basis: corner.clone(),
            };
            let mut diag_projs: Option<Vec<CMat>> = None;
            for _ in 0..8 {
                let s = corner_alg.random_hermitian_member(rng);
                // The kernel of p contributes eigenvalue 0; shift by a
                // multiple of p to push the block spectrum away from it.
                let shifted = &s + &p.mapv(|z| z * 10.0);
                let eig = numerics::hermitian_eig(&shifted, 1e-8)?;
                let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs())).max(1e-6);
                let mut clusters: Vec<(f64, Vec<usize>)> = vec![];
                for idx in 0..self.space_dim {
                    let l = eig.eigenvalues[idx];
                    match clusters.last_mut() {
                        Some((last, cl)) if (l - *last).abs() < 1e-5 * scale => {
                            *last = l;
                            cl.push(idx);
                        }
                        _ => clusters.push((l, vec![idx])),
                    }
                }
                let nonzero: Vec<&(f64, Vec<usize>)> =
                    clusters.iter().filter(|(l, _)| l.abs() > 1.0).collect();
                if nonzero.len() != n || nonzero.iter().any(|(_, cl)| cl.len() != mult) {
                    continue;
                }
                let projs: Vec<CMat> = nonzero
                    .iter()
                    .map(|(_, cl)| {
                        let mut q = CMat::zeros((self.space_dim, self.space_dim));
                        for &idx in cl {
                            let col = eig.eigenvectors.column(idx);
                            for r in 0..self.space_dim {
                                for c in 0..self.space_dim {
                                    q[[r, c]] += col[r] * col[c].conj();
                                }
                            }
                        }
                        q
                    })
                    .collect();
                diag_projs = Some(projs);
                break;
            }
            let diag = diag_projs.ok_or_else(|| {
                ConcreteError::Structure("could not split a block into minimal projections".into())
            })?;
            // Partial isometries e_{v1} via polar parts of Q_v s' Q_1.
            let mut e_v1: Vec<CMat> = vec![diag[0].clone()];
            for v in 1..n {
                let sp = corner_alg.random_hermitian_member(rng);
                let w = diag[v].dot(&sp).dot(&diag[0]);
                let (u, pos) = numerics::polar_decompose_tol(&w, 1e-8)?;
                if numerics::rank(&pos, 1e-6)? != mult {
                    return Err(ConcreteError::Structure(
                        "degenerate connecting element between minimal projections".into(),
                    ));
                }
                e_v1.push(u);
            }
            // Units e_{pq} = e_{p1} e_{1q}.
            let mut block_units = vec![];
            for pp in 0..n {
                for q in 0..n {
                    let e = if pp == 0 && q == 0 {
                        diag[0].clone()
                    } else {
                        e_v1[pp].dot(&adjoint(&e_v1[q]))
                    };
                    block_units.push(e);
                }
            }
            // Validate the unit relations.
            let mut resid: f64 = 0.0;
            for pp in 0..n {
                for q in 0..n {
                    for r2 in 0..n {
                        for s2 in 0..n {
                            let prod = block_units[pp * n + q].dot(&block_units[r2 * n + s2]);
                            let expect = if q == r2 {
                                block_units[pp * n + s2].clone()
                            } else {
                                CMat::zeros((self.space_dim, self.space_dim))
                            };
                            resid = resid.max(frob(&(&prod - &expect)));
                        }
                    }
                }
            }
            if resid > 1e-6 * (1.0 + self.space_dim as f64) {
                return Err(ConcreteError::Structure(format!(
                    "matrix unit relations fail (residual {resid:.3e})"
                )));
            }
            block_sizes.push(n);
            mults.push(mult);
            units.push(block_units);
        }
        let algebra = Algebra::new(block_sizes)?;
        Ok(MultiMatrixStructure { space_dim: self.space_dim, algebra, mults, units })
    }
}

/// A recognized multi-matrix structure: the abstract algebra, the ambient
/// multiplicity of each block's standard representation, and concrete
/// matrix units.
#[derive(Debug, Clone)]
pub struct MultiMatrixStructure {
    space_dim: usize,
    pub algebra: Algebra,
    pub mults: Vec<usize>,
    /// `units[block][p * n + q]` is the concrete matrix of `e^{(block)}_{pq}`.
    units: Vec<Vec<CMat>>,
}

impl MultiMatrixStructure {
    pub fn unit(&self, block: usize, p: usize, q: usize) -> &CMat {
        let n = self.algebra.block_sizes()[block];
        &self.units[block][p * n + q]
    }

    /// Concrete matrix of an abstract element.
    pub fn realize(&self, x: &AlgebraElement) -> CMat {
        let mut out = CMat::zeros((self.space_dim, self.space_dim));
        for (i, &n) in self.algebra.block_sizes().iter().enumerate() {
            let blk = x.block(i);
            for p in 0..n {
                for q in 0..n {
                    let v = blk[[p, q]];
                    if v == C64::new(0.0, 0.0) {
                        continue;
                    }
                    out = &out + &self.units[i][p * n + q].mapv(|z| z * v);
                }
            }
        }
        out
    }

    /// Abstract coordinates of a concrete algebra member.
    pub fn abstract_element(&self, m: &CMat) -> ConcResult<AlgebraElement> {
        let mut blocks = vec![];
        for (i, &n) in self.algebra.block_sizes().iter().enumerate() {
            let mut blk = CMat::zeros((n, n));
            for p in 0..n {
                for q in 0..n {
                    blk[[p, q]] = hs_inner(&self.units[i][p * n + q], m) / (self.mults[i] as f64);
                }
            }
            blocks.push(blk);
        }
        let elt = self.algebra.element(blocks)?;
        let resid = frob(&(&self.realize(&elt) - m));
        if resid > 1e-6 * (1.0 + frob(m)) {
            return Err(ConcreteError::NotInAlgebra(resid));
        }
        Ok(elt)
    }
}

/// The canonical homomorphism realizing a unital inclusion `sub ⊆ big` of
/// recognized algebras on the same space.
pub fn inclusion_hom(
    sub: &MultiMatrixStructure,
    big: &MultiMatrixStructure,
) -> ConcResult<Homomorphism> {
    let source = &sub.algebra;
    let mut images = vec![];
    for i in 0..source.num_blocks() {
        let n = source.block_sizes()[i];
        for p in 0..n {
            for q in 0..n {
                images.push(big.abstract_element(sub.unit(i, p, q))?);
            }
        }
    }
    Ok(crate::algebra::hom_from_unit_images(source, &big.algebra, &images)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sampling;

    #[test]
    fn generated_algebra_of_full_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = sampling::cmat(&mut rng, 3, 3);
        let alg = ConcreteAlgebra::from_generators(3, &[g]).unwrap();
        assert_eq!(alg.dim(), 9, "a generic matrix generates M_3");
        let comm = alg.commutant().unwrap();
        assert_eq!(comm.dim(), 1, "commutant of M_3 is scalar");
    }

    #[test]
    fn structure_of_scrambled_multimatrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Build A = M_2 ⊕ C with multiplicities (1, 2) on a 4-dim space:
        // realized as blkdiag(x, y, y), conjugated by a random unitary.
        let d = 4;
        let u = sampling::unitary(&mut rng, d);
        let embed = |x: &CMat, y: C64| -> CMat {
            let mut m = CMat::zeros((d, d));
            for p in 0..2 {
                for q in 0..2 {
                    m[[p, q]] = x[[p, q]];
                }
            }
            m[[2, 2]] = y;
            m[[3, 3]] = y;
            u.dot(&m).dot(&adjoint(&u))
        };
        let g1 = embed(&sampling::cmat(&mut rng, 2, 2), C64::new(0.3, -0.2));
        let g2 = embed(&sampling::cmat(&mut rng, 2, 2), C64::new(-1.1, 0.4));
        let alg = ConcreteAlgebra::from_generators(d, &[g1, g2]).unwrap();
        assert_eq!(alg.dim(), 5);
        let st = alg.structure(7).unwrap();
        let mut sizes = st.algebra.block_sizes().to_vec();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2]);
        // Mults match: block of size 2 has mult 1, size 1 has mult 2.
        for (i, &n) in st.algebra.block_sizes().iter().enumerate() {
            if n == 2 {
                assert_eq!(st.mults[i], 1);
            } else {
                assert_eq!(st.mults[i], 2);
            }
        }
        // Round-trip elements.
        let x = st.algebra.random_element(&mut rng);
        let m = st.realize(&x);
        assert!(alg.contains(&m, 1e-7));
        let back = st.abstract_element(&m).unwrap();
        assert!(back.sub(&x).unwrap().norm() < 1e-7 * (1.0 + x.norm()));
    }

    #[test]
    fn inclusion_hom_recovers_multiplicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // N = M_2 included in M = M_6 with multiplicity 3, scrambled.
        let d = 6;
        let u = sampling::unitary(&mut rng, d);
        let embed = |x: &CMat| -> CMat {
            let kr = numerics::kron(x, &eye(3));
            u.dot(&kr).dot(&adjoint(&u))
        };
        let sub_gens = vec![embed(&sampling::cmat(&mut rng, 2, 2))];
        let big_gens = vec![sampling::cmat(&mut rng, d, d)];
        let sub = ConcreteAlgebra::from_generators(d, &sub_gens).unwrap();
        let big = ConcreteAlgebra::from_generators(d, &big_gens).unwrap();
        assert!(big.contains_algebra(&sub, 1e-7));
        let st_sub = sub.structure(11).unwrap();
        let st_big = big.structure(12).unwrap();
        let hom = inclusion_hom(&st_sub, &st_big).unwrap();
        assert_eq!(hom.multiplicities()[[0, 0]], 3);
        // Realized map composes with the structures correctly on samples.
        let x = st_sub.algebra.random_element(&mut rng);
        let via = st_big.realize(&hom.apply(&x).unwrap());
        let direct = st_sub.realize(&x);
        assert!(frob(&(&via - &direct)) < 1e-6 * (1.0 + frob(&direct)));
    }

    #[test]
    fn joins_and_relative_commutants() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // On C^2 ⊗ C^2: M = M_2 ⊗ 1, A = 1 ⊗ M_2. Join is M_4, relative
        // commutant of M in M∨A is A.
        let d = 4;
        let m_gens = vec![numerics::kron(&sampling::cmat(&mut rng, 2, 2), &eye(2))];
        let a_gens = vec![numerics::kron(&eye(2), &sampling::cmat(&mut rng, 2, 2))];
        let m = ConcreteAlgebra::from_generators(d, &m_gens).unwrap();
        let a = ConcreteAlgebra::from_generators(d, &a_gens).unwrap();
        let join = m.join(&a).unwrap();
        assert_eq!(join.dim(), 16);
        let rel = join.relative_commutant(&m).unwrap();
        assert_eq!(rel.dim(), 4);
        assert!(rel.contains_algebra(&a, 1e-7) && a.contains_algebra(&rel, 1e-7));
        // Center of M_2 ⊗ 1 is scalars.
        assert_eq!(m.center().unwrap().dim(), 1);
        // Commutant of M on C^4 is 1 ⊗ M_2.
        let mc = m.commutant().unwrap();
        assert_eq!(mc.dim(), 4);
        assert!(mc.contains_algebra(&a, 1e-7));
    }
}
