//! JSON scene and environment formats consumed by the command-line front
//! end: named algebras, homomorphisms, bimodules, functionals, diagram
//! generator bindings, and concrete inequality configurations.

use crate::algebra::{Algebra, Functional, Homomorphism};
use crate::bimodule::{Bimodule, Linearity};
use crate::concrete::{inclusion_hom, ConcreteAlgebra, MultiMatrixStructure};
use crate::diagram::{Binding, DiagObject, Environment};
use crate::duality::canonical_duality;
use crate::index::{dim_matrix, minimal_expectation, pp_index_spectral};
use crate::numerics::{self, CMat, CVec};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed scene: {0}")]
    Malformed(String),
    #[error("unknown name `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Inner(String),
}

pub type SceneResult<T> = Result<T, SceneError>;

fn inner<E: std::fmt::Display>(e: E) -> SceneError {
    SceneError::Inner(e.to_string())
}

/// A complex matrix in JSON: rows of `[re, im]` pairs.
pub type MatrixDef = Vec<Vec<[f64; 2]>>;

pub fn matrix_from_def(def: &MatrixDef) -> SceneResult<CMat> {
    let rows = def.len();
    let cols = def.first().map(|r| r.len()).unwrap_or(0);
    if def.iter().any(|r| r.len() != cols) {
        return Err(SceneError::Malformed("ragged matrix".into()));
    }
    let mut m = CMat::zeros((rows, cols));
    for (i, row) in def.iter().enumerate() {
        for (j, &[re, im]) in row.iter().enumerate() {
            m[[i, j]] = C64::new(re, im);
        }
    }
    if !numerics::all_finite(&m) {
        return Err(SceneError::Malformed("matrix has non-finite entries".into()));
    }
    Ok(m)
}

pub fn matrix_to_def(m: &CMat) -> MatrixDef {
    let (rows, cols) = m.dim();
    (0..rows)
        .map(|i| (0..cols).map(|j| [m[[i, j]].re, m[[i, j]].im]).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgebraDef {
    pub blocks: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomDef {
    pub source: String,
    pub target: String,
    pub multiplicities: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BimoduleDef {
    Canonical { left: String, right: String, multiplicities: Vec<Vec<usize>> },
    Conjugate { conjugate_of: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalDef {
    pub algebra: String,
    pub densities: Vec<MatrixDef>,
}

/// A generator binding in a diagram environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BindingDef {
    /// Coevaluation `R: L²A → H ⊠ H̄` of the canonical duality of `H`.
    DualityR { bimodule: String, dual: String },
    /// Coevaluation `S: L²B → H̄ ⊠ H`.
    DualityS { bimodule: String, dual: String },
    /// A bilinear endomorphism of a wire, random Hermitian from a seed or
    /// given per-sector blocks.
    EndElement {
        bimodule: String,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        blocks: Option<Vec<MatrixDef>>,
        #[serde(default)]
        hermitian: bool,
    },
    /// Left multiplication by an algebra element, as a right-linear box on
    /// the empty bundle.
    LeftMult {
        algebra: String,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        blocks: Option<Vec<MatrixDef>>,
    },
    /// Right multiplication, a left-linear box.
    RightMult {
        algebra: String,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        blocks: Option<Vec<MatrixDef>>,
    },
    /// A vector of a wire as a plain box from the trivial algebra.
    Vector {
        bimodule: String,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        entries: Option<Vec<[f64; 2]>>,
    },
}

/// A full scene: named objects plus optional diagram bindings.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Scene {
    #[serde(default)]
    pub algebras: BTreeMap<String, AlgebraDef>,
    #[serde(default)]
    pub homomorphisms: BTreeMap<String, HomDef>,
    #[serde(default)]
    pub bimodules: BTreeMap<String, BimoduleDef>,
    #[serde(default)]
    pub functionals: BTreeMap<String, FunctionalDef>,
    #[serde(default)]
    pub bindings: BTreeMap<String, BindingDef>,
}

/// Resolved scene objects.
pub struct ResolvedScene {
    pub algebras: BTreeMap<String, Algebra>,
    pub homomorphisms: BTreeMap<String, Homomorphism>,
    pub bimodules: BTreeMap<String, Bimodule>,
    pub functionals: BTreeMap<String, Functional>,
}

impl Scene {
    pub fn from_json(text: &str) -> SceneResult<Scene> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(&self) -> SceneResult<ResolvedScene> {
        let mut algebras = BTreeMap::new();
        for (name, def) in &self.algebras {
            algebras.insert(name.clone(), Algebra::new(def.blocks.clone()).map_err(inner)?);
        }
        let get_alg = |m: &BTreeMap<String, Algebra>, n: &str| -> SceneResult<Algebra> {
            m.get(n).cloned().ok_or_else(|| SceneError::Unknown(n.to_string()))
        };
        let mut homomorphisms = BTreeMap::new();
        for (name, def) in &self.homomorphisms {
            let src = get_alg(&algebras, &def.source)?;
            let tgt = get_alg(&algebras, &def.target)?;
            let mult = usize_matrix(&def.multiplicities)?;
            homomorphisms.insert(
                name.clone(),
                Homomorphism::canonical_embedding(&src, &tgt, mult).map_err(inner)?,
            );
        }
        let mut bimodules: BTreeMap<String, Bimodule> = BTreeMap::new();
        // Canonical ones first, then conjugates.
        for (name, def) in &self.bimodules {
            if let BimoduleDef::Canonical { left, right, multiplicities } = def {
                let l = get_alg(&algebras, left)?;
                let r = get_alg(&algebras, right)?;
                let mult = usize_matrix(multiplicities)?;
                bimodules
                    .insert(name.clone(), Bimodule::new(&l, &r, mult).map_err(inner)?);
            }
        }
        for (name, def) in &self.bimodules {
            if let BimoduleDef::Conjugate { conjugate_of } = def {
                let base = bimodules
                    .get(conjugate_of)
                    .ok_or_else(|| SceneError::Unknown(conjugate_of.clone()))?
                    .clone();
                bimodules.insert(name.clone(), base.conjugate());
            }
        }
        let mut functionals = BTreeMap::new();
        for (name, def) in &self.functionals {
            let alg = get_alg(&algebras, &def.algebra)?;
            let densities = def
                .densities
                .iter()
                .map(matrix_from_def)
                .collect::<SceneResult<Vec<_>>>()?;
            functionals
                .insert(name.clone(), Functional::new(&alg, densities).map_err(inner)?);
        }
        Ok(ResolvedScene { algebras, homomorphisms, bimodules, functionals })
    }

    /// Build a diagram environment from the scene's bindings.
    pub fn environment(&self) -> SceneResult<Environment> {
        let resolved = self.resolve()?;
        let mut env = Environment::new();
        for (name, a) in &resolved.algebras {
            env.add_algebra(name, a.clone());
        }
        for (name, b) in &resolved.bimodules {
            env.add_bimodule(name, b.clone());
        }
        let get_bim = |n: &str| -> SceneResult<Bimodule> {
            resolved.bimodules.get(n).cloned().ok_or_else(|| SceneError::Unknown(n.to_string()))
        };
        let get_alg = |n: &str| -> SceneResult<Algebra> {
            resolved.algebras.get(n).cloned().ok_or_else(|| SceneError::Unknown(n.to_string()))
        };
        let mut duality_cache: BTreeMap<String, crate::duality::DualityData> = BTreeMap::new();
        for (name, def) in &self.bindings {
            let binding = match def {
                BindingDef::DualityR { bimodule, dual } | BindingDef::DualityS { bimodule, dual } => {
                    let h = get_bim(bimodule)?;
                    let hbar = get_bim(dual)?;
                    if hbar != h.conjugate() {
                        return Err(SceneError::Malformed(format!(
                            "`{dual}` is not the conjugate of `{bimodule}`"
                        )));
                    }
                    let d = match duality_cache.get(bimodule) {
                        Some(d) => d.clone(),
                        None => {
                            let d = canonical_duality(&h).map_err(inner)?;
                            duality_cache.insert(bimodule.clone(), d.clone());
                            d
                        }
                    };
                    match def {
                        BindingDef::DualityR { .. } => Binding {
                            source: DiagObject::empty(h.left()),
                            target: DiagObject {
                                left: h.left().clone(),
                                wires: vec![h.clone(), hbar.clone()],
                            },
                            linearity: Linearity::Bilinear,
                            matrix: d.r().clone(),
                        },
                        _ => Binding {
                            source: DiagObject::empty(h.right()),
                            target: DiagObject {
                                left: h.right().clone(),
                                wires: vec![hbar.clone(), h.clone()],
                            },
                            linearity: Linearity::Bilinear,
                            matrix: d.s().clone(),
                        },
                    }
                }
                BindingDef::EndElement { bimodule, seed, blocks, hermitian } => {
                    let h = get_bim(bimodule)?;
                    let map = match blocks {
                        Some(defs) => {
                            let blks = defs
                                .iter()
                                .map(matrix_from_def)
                                .collect::<SceneResult<Vec<_>>>()?;
                            crate::bimodule::BimoduleMap::from_blocks(&h, &h, &blks)
                                .map_err(inner)?
                        }
                        None => {
                            use rand::SeedableRng;
                            let mut rng =
                                rand_chacha::ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
                            crate::duality::random_end_element(&h, &mut rng, *hermitian)
                        }
                    };
                    Binding {
                        source: DiagObject::wire(&h),
                        target: DiagObject::wire(&h),
                        linearity: Linearity::Bilinear,
                        matrix: map.matrix().clone(),
                    }
                }
                BindingDef::LeftMult { algebra, seed, blocks }
                | BindingDef::RightMult { algebra, seed, blocks } => {
                    let a = get_alg(algebra)?;
                    let elt = match blocks {
                        Some(defs) => {
                            let blks = defs
                                .iter()
                                .map(matrix_from_def)
                                .collect::<SceneResult<Vec<_>>>()?;
                            a.element(blks).map_err(inner)?
                        }
                        None => {
                            use rand::SeedableRng;
                            let mut rng =
                                rand_chacha::ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
                            a.random_element(&mut rng)
                        }
                    };
                    let (matrix, linearity) = match def {
                        BindingDef::LeftMult { .. } => {
                            (crate::l2::left_action_matrix(&a, &elt), Linearity::RightOnly)
                        }
                        _ => (crate::l2::right_action_matrix(&a, &elt), Linearity::LeftOnly),
                    };
                    Binding {
                        source: DiagObject::empty(&a),
                        target: DiagObject::empty(&a),
                        linearity,
                        matrix,
                    }
                }
                BindingDef::Vector { bimodule, seed, entries } => {
                    let h = get_bim(bimodule)?;
                    let v: CVec = match entries {
                        Some(es) => {
                            if es.len() != h.dim() {
                                return Err(SceneError::Malformed(format!(
                                    "vector `{name}` should have {} entries",
                                    h.dim()
                                )));
                            }
                            CVec::from_iter(es.iter().map(|&[re, im]| C64::new(re, im)))
                        }
                        None => {
                            use rand::SeedableRng;
                            let mut rng =
                                rand_chacha::ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
                            h.random_vector(&mut rng)
                        }
                    };
                    let mut m = CMat::zeros((h.dim(), 1));
                    for r in 0..h.dim() {
                        m[[r, 0]] = v[r];
                    }
                    Binding {
                        source: DiagObject::empty(&Algebra::trivial()),
                        target: DiagObject::wire(&h),
                        linearity: Linearity::Plain,
                        matrix: m,
                    }
                }
            };
            env.add_binding(name, binding).map_err(inner)?;
        }
        Ok(env)
    }
}

fn usize_matrix(rows: &[Vec<usize>]) -> SceneResult<Array2<usize>> {
    let r = rows.len();
    let c = rows.first().map(|x| x.len()).unwrap_or(0);
    if rows.iter().any(|x| x.len() != c) {
        return Err(SceneError::Malformed("ragged multiplicity matrix".into()));
    }
    let mut m = Array2::zeros((r, c));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}

/// A concrete inequality configuration: named algebras as generator lists
/// on one ambient space, and a list of checks to run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityScene {
    pub space: usize,
    pub algebras: BTreeMap<String, Vec<MatrixDef>>,
    pub checks: Vec<IneqCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IneqCheck {
    /// `‖⟦N'∩A : M'∩A⟧‖ ≤ ⟦M:N⟧` for factors `N ⊆ M ⊆ A`.
    RelativeCommutantBound { n: String, m: String, ambient: String },
    /// `‖⟦M∨A : N∨A⟧‖ ≤ ⟦M:N⟧` for factors `N ⊆ M` and `A` commuting
    /// with `M`.
    JoinBound { n: String, m: String, commuting: String },
    /// `‖⟦B:A⟧‖ ≤ √μ` for the quasi-basis index `μ` of the unitized base
    /// expectation of `A ⊆ B`. At finite dimension the Pimsner–Popa
    /// constant can drop below the quasi-basis index and the bound only
    /// holds for the latter; the Pimsner–Popa value is reported as data.
    PpCenterBound { sub: String, big: String },
    /// `Σ_i [p_i B p_i : p_i A] = ‖⟦B:A⟧‖²` over the minimal central
    /// projections of `A` inside a factor `B`.
    CornerSum { sub: String, big: String },
}

/// The two sides of one inequality, with a sweep over matrix norms
/// (asserted only for the ℓ² norm; the others are reported as data).
#[derive(Debug, Clone, Serialize)]
pub struct IneqOutcome {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub norm_sweep: BTreeMap<String, f64>,
}

fn l2_norm(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn operator_norm(m: &Array2<f64>) -> f64 {
    let (r, c) = m.dim();
    let mut cm = CMat::zeros((r, c));
    for ((i, j), &v) in m.indexed_iter() {
        cm[[i, j]] = C64::new(v, 0.0);
    }
    let g = numerics::adjoint(&cm).dot(&cm);
    match numerics::hermitian_eig(&g, 1e-9) {
        Ok(e) => e.max_eigenvalue().max(0.0).sqrt(),
        Err(_) => f64::NAN,
    }
}

fn l1_norm(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

fn norm_sweep(m: &Array2<f64>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    out.insert("l2".into(), l2_norm(m));
    out.insert("operator".into(), operator_norm(m));
    out.insert("l1".into(), l1_norm(m));
    out
}

struct NamedAlgebras {
    algebras: BTreeMap<String, ConcreteAlgebra>,
    structures: BTreeMap<String, MultiMatrixStructure>,
}

impl NamedAlgebras {
    fn get(&self, n: &str) -> SceneResult<(&ConcreteAlgebra, &MultiMatrixStructure)> {
        Ok((
            self.algebras.get(n).ok_or_else(|| SceneError::Unknown(n.to_string()))?,
            self.structures.get(n).ok_or_else(|| SceneError::Unknown(n.to_string()))?,
        ))
    }
}

/// Run every check in an inequality scene.
pub fn run_inequality_scene(scene: &InequalityScene) -> SceneResult<Vec<IneqOutcome>> {
    let mut named = NamedAlgebras { algebras: BTreeMap::new(), structures: BTreeMap::new() };
    for (name, gens) in &scene.algebras {
        let mats = gens.iter().map(matrix_from_def).collect::<SceneResult<Vec<_>>>()?;
        for m in &mats {
            if m.dim() != (scene.space, scene.space) {
                return Err(SceneError::Malformed(format!(
                    "generator of `{name}` has shape {:?}, space is {}",
                    m.dim(),
                    scene.space
                )));
            }
        }
        let alg = ConcreteAlgebra::from_generators(scene.space, &mats).map_err(inner)?;
        let st = alg.structure(0xA11CE).map_err(inner)?;
        named.structures.insert(name.clone(), st);
        named.algebras.insert(name.clone(), alg);
    }
    let mut out = vec![];
    for check in &scene.checks {
        out.push(run_check(&named, check, scene.space)?);
    }
    Ok(out)
}

fn factor_dim_between(
    named: &NamedAlgebras,
    sub: &str,
    big: &str,
) -> SceneResult<(f64, Array2<f64>)> {
    let (suba, subst) = named.get(sub)?;
    let (biga, bigst) = named.get(big)?;
    if !biga.contains_algebra(suba, 1e-6) {
        return Err(SceneError::Malformed(format!("`{sub}` is not contained in `{big}`")));
    }
    let hom = inclusion_hom(subst, bigst).map_err(inner)?;
    let d = dim_matrix(&hom).map_err(inner)?;
    Ok((l2_norm(&d), d))
}

fn run_check(named: &NamedAlgebras, check: &IneqCheck, space: usize) -> SceneResult<IneqOutcome> {
    let tol = 1e-6;
    match check {
        IneqCheck::RelativeCommutantBound { n, m, ambient } => {
            let (na, _) = named.get(n)?;
            let (ma, _) = named.get(m)?;
            let (aa, _) = named.get(ambient)?;
            if !ma.contains_algebra(na, 1e-6) || !aa.contains_algebra(ma, 1e-6) {
                return Err(SceneError::Malformed("need N ⊆ M ⊆ A".into()));
            }
            let n_in_a = aa.relative_commutant(na).map_err(inner)?;
            let m_in_a = aa.relative_commutant(ma).map_err(inner)?;
            let st_n = n_in_a.structure(0xBEE).map_err(inner)?;
            let st_m = m_in_a.structure(0xBEF).map_err(inner)?;
            let hom = inclusion_hom(&st_m, &st_n).map_err(inner)?;
            let d = dim_matrix(&hom).map_err(inner)?;
            let (_, dmn) = factor_dim_between(named, n, m)?;
            let rhs = dmn[[0, 0]];
            let lhs = l2_norm(&d);
            Ok(IneqOutcome {
                check: format!("‖⟦{n}'∩{ambient} : {m}'∩{ambient}⟧‖ ≤ ⟦{m}:{n}⟧"),
                lhs,
                rhs,
                holds: lhs <= rhs + tol * (1.0 + rhs),
                norm_sweep: norm_sweep(&d),
            })
        }
        IneqCheck::JoinBound { n, m, commuting } => {
            let (na, _) = named.get(n)?;
            let (ma, _) = named.get(m)?;
            let (ca, _) = named.get(commuting)?;
            let join_m = ma.join(ca).map_err(inner)?;
            let join_n = na.join(ca).map_err(inner)?;
            let st_jm = join_m.structure(0xCAB).map_err(inner)?;
            let st_jn = join_n.structure(0xCAC).map_err(inner)?;
            let hom = inclusion_hom(&st_jn, &st_jm).map_err(inner)?;
            let d = dim_matrix(&hom).map_err(inner)?;
            let (_, dmn) = factor_dim_between(named, n, m)?;
            let rhs = dmn[[0, 0]];
            let lhs = l2_norm(&d);
            Ok(IneqOutcome {
                check: format!("‖⟦{m}∨{commuting} : {n}∨{commuting}⟧‖ ≤ ⟦{m}:{n}⟧"),
                lhs,
                rhs,
                holds: lhs <= rhs + tol * (1.0 + rhs),
                norm_sweep: norm_sweep(&d),
            })
        }
        IneqCheck::PpCenterBound { sub, big } => {
            let (_, subst) = named.get(sub)?;
            let (_, bigst) = named.get(big)?;
            let hom = inclusion_hom(subst, bigst).map_err(inner)?;
            let d = dim_matrix(&hom).map_err(inner)?;
            let me = minimal_expectation(&hom).map_err(inner)?;
            let (_, watatani) = crate::index::quasi_basis(&me.unitized).map_err(inner)?;
            let pp = pp_index_spectral(&me.unitized).map_err(inner)?;
            let lhs = l2_norm(&d);
            let rhs = watatani.sqrt();
            let mut sweep = norm_sweep(&d);
            sweep.insert("pimsner_popa_mu".into(), pp);
            sweep.insert("quasi_basis_mu".into(), watatani);
            Ok(IneqOutcome {
                check: format!("‖⟦{big}:{sub}⟧‖ ≤ √Ind(E) on C^{space}"),
                lhs,
                rhs,
                holds: lhs <= rhs + tol * (1.0 + rhs),
                norm_sweep: sweep,
            })
        }
        IneqCheck::CornerSum { sub, big } => {
            let (_, subst) = named.get(sub)?;
            let (_, bigst) = named.get(big)?;
            if !bigst.algebra.is_factor() {
                return Err(SceneError::Malformed("corner sum needs a factor ambient".into()));
            }
            let hom = inclusion_hom(subst, bigst).map_err(inner)?;
            let d = dim_matrix(&hom).map_err(inner)?;
            let total_sq = d.iter().map(|v| v * v).sum::<f64>();
            // Corner indices through the corner machinery.
            let mut sum = 0.0;
            for z in hom.source().minimal_central_projections() {
                let p = hom.apply(&z).map_err(inner)?;
                let (_, chom) = crate::index::corner_inclusion(&hom, &p).map_err(inner)?;
                let dc = dim_matrix(&chom).map_err(inner)?;
                sum += dc.iter().map(|v| v * v).sum::<f64>();
            }
            Ok(IneqOutcome {
                check: format!("Σ [p{big}p : p{sub}] = ‖⟦{big}:{sub}⟧‖²"),
                lhs: sum,
                rhs: total_sq,
                holds: (sum - total_sq).abs() <= tol * (1.0 + total_sq),
                norm_sweep: norm_sweep(&d),
            })
        }
    }
}
