//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line (run with `-- --nocapture` to see the lines for passing
//! criteria).

use bimat::algebra::{Algebra, Functional, Homomorphism};
use bimat::bimodule::{
    associator, fuse, fused_canonical, hom_bimodule, left_unitor, right_unitor, simple_fusion,
    Bimodule, BimoduleMap,
};
use bimat::diagram::{assert_identity, evaluate, parse, typecheck, DiagramError};
use bimat::duality::{
    bar_involution, canonical_duality, canonical_state, dim_of_bimodule, normalize,
    random_end_element, round_integer_matrix, solve_normalization_element, statistical_dimension,
    DualityData,
};
use bimat::functor::{fuse_functor, l2_iso, l2_of_hom, phi_identification, FusionMorphism};
use bimat::index::{
    corner_inclusion, dim_matrix, end_to_relative_commutant, longo_index, minimal_expectation,
    minimal_index_scalar, pp_index,
};
use bimat::l2::{
    check_standard_form, check_standard_form_with, inner_analytic, inner_direct, sqrt_state,
    transpose_conjugation,
};
use bimat::numerics::{self, adjoint, eye, frob, sampling, CMat, CVec};
use bimat::scene::{matrix_to_def, IneqCheck, InequalityScene};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

struct Criterion {
    name: &'static str,
    checks: usize,
    failures: Vec<String>,
}

impl Criterion {
    fn new(name: &'static str) -> Self {
        Criterion { name, checks: 0, failures: vec![] }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(msg());
        }
    }

    fn finish(self) {
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        eprintln!(
            "[{}] {} — {} checks, {} failures{}",
            self.name,
            status,
            self.checks,
            self.failures.len(),
            if self.failures.is_empty() {
                String::new()
            } else {
                format!(": {}", self.failures.join(" | "))
            }
        );
        assert!(self.failures.is_empty(), "{}: {}", self.name, self.failures.join(" | "));
    }
}

fn random_algebra(rng: &mut ChaCha8Rng, max_blocks: usize, max_size: usize) -> Algebra {
    let r = rng.random_range(1..=max_blocks);
    Algebra::new((0..r).map(|_| rng.random_range(1..=max_size)).collect()).unwrap()
}

fn random_bimodule_between(
    rng: &mut ChaCha8Rng,
    a: &Algebra,
    b: &Algebra,
    max_mult: usize,
) -> Bimodule {
    let (r, s) = (a.num_blocks(), b.num_blocks());
    let mut mult = Array2::zeros((r, s));
    loop {
        for v in mult.iter_mut() {
            *v = rng.random_range(0..=max_mult);
        }
        if mult.iter().any(|&m| m > 0) {
            break;
        }
    }
    Bimodule::new(a, b, mult).unwrap()
}

/// A random unital homomorphism out of `a`: the target block sizes are
/// derived from a random multiplicity matrix.
fn random_hom(rng: &mut ChaCha8Rng, a: &Algebra, max_targets: usize, max_mult: usize) -> Homomorphism {
    let r = a.num_blocks();
    loop {
        let s = rng.random_range(1..=max_targets);
        let mut mult = Array2::zeros((r, s));
        for v in mult.iter_mut() {
            *v = rng.random_range(0..=max_mult);
        }
        let sizes: Vec<usize> = (0..s)
            .map(|j| (0..r).map(|i| mult[[i, j]] * a.block_sizes()[i]).sum())
            .collect();
        if sizes.iter().any(|&k| k == 0 || k > 6) {
            continue;
        }
        let b = Algebra::new(sizes.clone()).unwrap();
        let unitaries = sizes.iter().map(|&k| sampling::unitary(rng, k)).collect();
        return Homomorphism::with_unitaries(a, &b, mult, unitaries).unwrap();
    }
}

fn corpus_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name)
}

#[test]
fn criterion_01_inner_product_equivalence() {
    let mut c = Criterion::new("criterion 01: inner-product equivalence");
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for t in 0..500 {
        let a = random_algebra(&mut rng, 3, 4);
        let phi = Functional::random_positive(&a, &mut rng, true);
        let psi = Functional::random_positive(&a, &mut rng, true);
        let d = inner_direct(&phi, &psi).unwrap();
        let an = inner_analytic(&phi, &psi, &[]).unwrap();
        c.check((d - an.value).abs() <= 1e-8 * (1.0 + d.abs()), || {
            format!("pair {t}: direct {d} vs analytic {}", an.value)
        });
        let s = sqrt_state(&phi).unwrap();
        let mass = phi.total().re;
        c.check((s.norm().powi(2) - mass).abs() <= 1e-10 * (1.0 + mass), || {
            format!("pair {t}: ‖√φ‖² = {} vs φ(1) = {mass}", s.norm().powi(2))
        });
    }
    c.finish();
}

#[test]
fn criterion_02_standard_form() {
    let mut c = Criterion::new("criterion 02: standard form");
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for t in 0..50 {
        let blocks: Vec<usize> = (0..rng.random_range(1..=3))
            .map(|_| if rng.random_bool(0.2) { 3 } else { rng.random_range(1..=2) })
            .collect();
        let a = Algebra::new(blocks.clone()).unwrap();
        let rep = check_standard_form(&a, 1e-9).unwrap();
        c.check(rep.all_pass(), || format!("algebra #{t} {blocks:?}: {rep:?}"));
    }
    let a = Algebra::new(vec![2, 2]).unwrap();
    let rep = check_standard_form_with(&a, 1e-9, transpose_conjugation).unwrap();
    c.check(!rep.axiom(4).passed, || "corrupted J should fail axiom 5".to_string());
    c.finish();
}

#[test]
fn criterion_03_fusion() {
    let mut c = Criterion::new("criterion 03: fusion");
    // Exhaustive sweep over small shapes, capped by the Gram model size so
    // the suite stays within its time budget; larger shapes are sampled.
    let options: Vec<Vec<usize>> = vec![vec![1], vec![2], vec![1, 1], vec![1, 2], vec![2, 2]];
    let mut cases = 0usize;
    'outer: for ba in &options {
        for bb in &options {
            for bc in &options {
                let a = Algebra::new(ba.clone()).unwrap();
                let b = Algebra::new(bb.clone()).unwrap();
                let calg = Algebra::new(bc.clone()).unwrap();
                let (r, s, t) = (a.num_blocks(), b.num_blocks(), calg.num_blocks());
                let mh_count = 3usize.pow((r * s) as u32);
                let mk_count = 3usize.pow((s * t) as u32);
                for mh_ix in 0..mh_count {
                    for mk_ix in 0..mk_count {
                        let mut mh = Array2::zeros((r, s));
                        let mut acc = mh_ix;
                        for v in mh.iter_mut() {
                            *v = acc % 3;
                            acc /= 3;
                        }
                        let mut mk = Array2::zeros((s, t));
                        let mut acc = mk_ix;
                        for v in mk.iter_mut() {
                            *v = acc % 3;
                            acc /= 3;
                        }
                        let h = Bimodule::new(&a, &b, mh).unwrap();
                        let k = Bimodule::new(&b, &calg, mk).unwrap();
                        if h.dim() * k.dim() > 36 || h.dim() * k.dim() == 0 {
                            continue;
                        }
                        let fr = fuse(&h, &k, 1e-9).unwrap();
                        c.check(fr.gram_rank == fr.object.dim(), || {
                            format!(
                                "exhaustive case {:?} x {:?}: rank {} vs dim {}",
                                h.mult(),
                                k.mult(),
                                fr.gram_rank,
                                fr.object.dim()
                            )
                        });
                        c.check(fr.compatibility_residual() < 1e-9, || {
                            "Gram compatibility residual".to_string()
                        });
                        cases += 1;
                        if cases >= 1200 {
                            break 'outer;
                        }
                    }
                }
            }
        }
    }
    // Random larger shapes up to the stated bounds.
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut done = 0;
    while done < 40 {
        let a = random_algebra(&mut rng, 3, 3);
        let b = random_algebra(&mut rng, 3, 3);
        let calg = random_algebra(&mut rng, 3, 3);
        let h = random_bimodule_between(&mut rng, &a, &b, 3);
        let k = random_bimodule_between(&mut rng, &b, &calg, 3);
        if h.dim() * k.dim() > 100 {
            continue;
        }
        let fr = fuse(&h, &k, 1e-9).unwrap();
        c.check(fr.gram_rank == fr.object.dim(), || "random case rank".to_string());
        done += 1;
    }
    // Unit and associativity unitaries.
    for t in 0..20 {
        let a = random_algebra(&mut rng, 2, 2);
        let b = random_algebra(&mut rng, 2, 2);
        let calg = random_algebra(&mut rng, 2, 2);
        let dalg = random_algebra(&mut rng, 2, 2);
        let h = random_bimodule_between(&mut rng, &a, &b, 2);
        let k = random_bimodule_between(&mut rng, &b, &calg, 2);
        let l = random_bimodule_between(&mut rng, &calg, &dalg, 2);
        let lu = left_unitor(&h).unwrap();
        let ru = right_unitor(&h).unwrap();
        c.check(
            frob(&(lu.dot(&adjoint(&lu)) - eye(h.dim()))) < 1e-9
                && frob(&(ru.dot(&adjoint(&ru)) - eye(h.dim()))) < 1e-9,
            || format!("unitors not unitary at case {t}"),
        );
        // The right unitor undoes fusing with the trace vector.
        let one = bimat::l2::L2Vector::new(
            h.right(),
            h.right().block_sizes().iter().map(|&n| eye(n)).collect(),
        )
        .unwrap()
        .to_flat();
        let xi = h.random_vector(&mut rng);
        let fusedv = simple_fusion(&h, &Bimodule::l2(h.right()), &xi, &one).unwrap();
        let mut back = CVec::zeros(h.dim());
        for rr in 0..h.dim() {
            for cc in 0..fusedv.len() {
                back[rr] += ru[[rr, cc]] * fusedv[cc];
            }
        }
        let diff: f64 = back.iter().zip(xi.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
        c.check(diff.sqrt() < 1e-9 * (1.0 + numerics::vec_norm(&xi)), || {
            format!("right unitor law at case {t}")
        });
        let assoc = associator(&h, &k, &l).unwrap();
        c.check(frob(&(adjoint(&assoc).dot(&assoc) - eye(assoc.dim().1))) < 1e-9, || {
            format!("associator not unitary at case {t}")
        });
        // Associativity on simple triples.
        let x = h.random_vector(&mut rng);
        let y = k.random_vector(&mut rng);
        let z = l.random_vector(&mut rng);
        let hk = fused_canonical(&h, &k).unwrap();
        let kl = fused_canonical(&k, &l).unwrap();
        let left = simple_fusion(&hk, &l, &simple_fusion(&h, &k, &x, &y).unwrap(), &z).unwrap();
        let right = simple_fusion(&h, &kl, &x, &simple_fusion(&k, &l, &y, &z).unwrap()).unwrap();
        let mut moved = CVec::zeros(right.len());
        for rr in 0..right.len() {
            for cc in 0..left.len() {
                moved[rr] += assoc[[rr, cc]] * left[cc];
            }
        }
        let diff: f64 = moved.iter().zip(right.iter()).map(|(x2, y2)| (x2 - y2).norm_sqr()).sum();
        c.check(diff.sqrt() < 1e-9 * (1.0 + numerics::vec_norm(&right)), || {
            format!("associator law at case {t}")
        });
    }
    c.finish();
}

#[test]
fn criterion_04_duality() {
    let mut c = Criterion::new("criterion 04: duality");
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    // Zig-zag and normalization on a sweep of canonical bimodules.
    let options: Vec<Vec<usize>> = vec![vec![1], vec![2], vec![1, 1], vec![1, 2], vec![2, 2]];
    let mut cases = 0;
    'sweep: for ba in &options {
        for bb in &options {
            let a = Algebra::new(ba.clone()).unwrap();
            let b = Algebra::new(bb.clone()).unwrap();
            let (r, s) = (a.num_blocks(), b.num_blocks());
            for ix in 0..3usize.pow((r * s) as u32) {
                let mut mult = Array2::zeros((r, s));
                let mut acc = ix;
                for v in mult.iter_mut() {
                    *v = acc % 3;
                    acc /= 3;
                }
                if mult.iter().all(|&m| m == 0) {
                    continue;
                }
                let h = Bimodule::new(&a, &b, mult).unwrap();
                // Keep the triple-product spaces bounded.
                if h.dim() > 12 {
                    continue;
                }
                let d = canonical_duality(&h).unwrap();
                let (z1, z2) = d.zigzag_residuals().unwrap();
                let n = d.normalization_residual().unwrap();
                c.check(z1.max(z2) < 1e-8 && n < 1e-8 && d.is_normalized(), || {
                    format!("sweep {:?}: zigzag ({z1:.2e},{z2:.2e}) normalization {n:.2e}", h.mult())
                });
                cases += 1;
                if cases >= 250 {
                    break 'sweep;
                }
            }
        }
    }
    // Normalization recovery from random skews.
    for t in 0..100 {
        let a = random_algebra(&mut rng, 2, 2);
        let b = random_algebra(&mut rng, 2, 2);
        let h = random_bimodule_between(&mut rng, &a, &b, 2);
        let d0 = canonical_duality(&h).unwrap();
        let (r, s) = h.mult().dim();
        let mut blocks = vec![];
        let mut inv_blocks = vec![];
        for i in 0..r {
            for j in 0..s {
                let m = h.mult()[[i, j]];
                let p = sampling::positive_definite(&mut rng, m);
                let pinv = if m > 0 {
                    numerics::pd_inverse(&p, 1e-10).unwrap()
                } else {
                    CMat::zeros((0, 0))
                };
                blocks.push(p);
                inv_blocks.push(pinv);
            }
        }
        let x0 = BimoduleMap::from_blocks(&h, &h, &blocks).unwrap();
        let x0i = BimoduleMap::from_blocks(&h, &h, &inv_blocks).unwrap();
        let skew_r = bimat::bimodule::promote_right_linear(x0.matrix(), &h, &h, d0.hbar())
            .unwrap()
            .dot(d0.r());
        let skew_s = bimat::bimodule::promote_left_linear(x0i.matrix(), &h, &h, d0.hbar())
            .unwrap()
            .dot(d0.s());
        match normalize(&h, d0.hbar(), skew_r, skew_s, 1e-9) {
            Ok(fixed) => {
                let n = fixed.normalization_residual().unwrap();
                c.check(n < 1e-8, || format!("skew trial {t}: residual {n:.2e}"));
            }
            Err(e) => c.check(false, || format!("skew trial {t}: {e}")),
        }
    }
    // The closed-form solver.
    for t in 0..100 {
        let n = rng.random_range(1..=4);
        let a = sampling::positive_definite(&mut rng, n);
        let b = sampling::positive_definite(&mut rng, n);
        let x = solve_normalization_element(&a, &b, 1e-9).unwrap();
        let xinv = numerics::pd_inverse(&x, 1e-10).unwrap();
        let resid = frob(&(&x.dot(&a).dot(&x) - &xinv.dot(&b).dot(&xinv)));
        c.check(resid < 1e-8 * (frob(&a) + frob(&b)), || {
            format!("solver trial {t}: residual {resid:.2e}")
        });
    }
    for _ in 0..20 {
        let av: f64 = rng.random_range(0.1..4.0);
        let bv: f64 = rng.random_range(0.1..4.0);
        let a = CMat::from_elem((1, 1), C64::new(av, 0.0));
        let b = CMat::from_elem((1, 1), C64::new(bv, 0.0));
        let x = solve_normalization_element(&a, &b, 1e-12).unwrap();
        c.check((x[[0, 0]].re - (bv / av).powf(0.25)).abs() < 1e-12, || {
            format!("scalar case a={av} b={bv}")
        });
    }
    c.finish();
}

#[test]
fn criterion_05_dimension_laws() {
    let mut c = Criterion::new("criterion 05: dimension laws");
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for t in 0..100 {
        let a = random_algebra(&mut rng, 2, 2);
        let b = random_algebra(&mut rng, 2, 2);
        let h = random_bimodule_between(&mut rng, &a, &b, 2);
        let k = random_bimodule_between(&mut rng, &a, &b, 2);
        let dh = round_integer_matrix(&dim_of_bimodule(&h).unwrap(), 1e-6).unwrap();
        let dk = round_integer_matrix(&dim_of_bimodule(&k).unwrap(), 1e-6).unwrap();
        let dsum =
            round_integer_matrix(&dim_of_bimodule(&h.direct_sum(&k).unwrap()).unwrap(), 1e-6)
                .unwrap();
        c.check(dsum == &dh + &dk, || format!("sum case {t}"));
    }
    for t in 0..100 {
        let a = random_algebra(&mut rng, 2, 2);
        let b = random_algebra(&mut rng, 2, 2);
        let calg = random_algebra(&mut rng, 2, 2);
        let h = random_bimodule_between(&mut rng, &a, &b, 2);
        let k = random_bimodule_between(&mut rng, &b, &calg, 2);
        let hk = fused_canonical(&h, &k).unwrap();
        if hk.dim() > 150 {
            continue;
        }
        let dh = round_integer_matrix(&dim_of_bimodule(&h).unwrap(), 1e-6).unwrap();
        let dk = round_integer_matrix(&dim_of_bimodule(&k).unwrap(), 1e-6).unwrap();
        let dhk = round_integer_matrix(&dim_of_bimodule(&hk).unwrap(), 1e-6).unwrap();
        c.check(dhk == dh.dot(&dk), || format!("fusion case {t}"));
    }
    // Tower law, exact in integers.
    for t in 0..100 {
        let a = random_algebra(&mut rng, 2, 2);
        let f = random_hom(&mut rng, &a, 2, 2);
        let g = random_hom(&mut rng, f.target(), 2, 2);
        let gf = Homomorphism::compose(&f, &g).unwrap();
        let df = round_integer_matrix(&dim_matrix(&f).unwrap(), 1e-6).unwrap();
        let dg = round_integer_matrix(&dim_matrix(&g).unwrap(), 1e-6).unwrap();
        let dgf = round_integer_matrix(&dim_matrix(&gf).unwrap(), 1e-6).unwrap();
        c.check(dgf == df.dot(&dg), || format!("tower case {t}"));
    }
    c.finish();
}

#[test]
fn criterion_06_index_numerics() {
    let mut c = Criterion::new("criterion 06: index numerics");
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for n in [2usize, 3, 4] {
        let incl = Homomorphism::canonical_embedding(
            &Algebra::trivial(),
            &Algebra::factor(n),
            Array2::from_shape_vec((1, 1), vec![n]).unwrap(),
        )
        .unwrap();
        let me = minimal_expectation(&incl).unwrap();
        let rep = pp_index(me.minimal.as_ref().unwrap(), &mut rng).unwrap();
        c.check((rep.value - n as f64).abs() < 1e-6 * n as f64, || {
            format!("pp index of the trace on C ⊂ M_{n}: got {}", rep.value)
        });
        c.check(
            (minimal_index_scalar(&incl).unwrap() - (n * n) as f64).abs() < 1e-7,
            || format!("minimal index of C ⊂ M_{n}"),
        );
    }
    for (k, m) in [(2usize, 2usize), (3, 2), (2, 3)] {
        let incl = Homomorphism::canonical_embedding(
            &Algebra::factor(k),
            &Algebra::factor(k * m),
            Array2::from_shape_vec((1, 1), vec![m]).unwrap(),
        )
        .unwrap();
        let me = minimal_expectation(&incl).unwrap();
        let rep = pp_index(me.minimal.as_ref().unwrap(), &mut rng).unwrap();
        // The stated value m² is the infinite-dimensional extremality
        // prediction; at finite dimension the true optimum is
        // min(k,m)·m, which differs for k < m. The check is kept as
        // stated and fails honestly on (2,3).
        c.check((rep.value - (m * m) as f64).abs() < 1e-5, || {
            format!(
                "pp index of E₀ for M_{k} ⊂ M_{}: expected {}, computed {} (= min(k,m)·m = {})",
                k * m,
                m * m,
                rep.value,
                k.min(m) * m
            )
        });
        let longo = longo_index(&incl, &mut rng).unwrap();
        c.check(longo.distance_to_minimal.unwrap() < 1e-4, || {
            format!("Longo minimizer differs from E₀ for M_{k} ⊂ M_{}", k * m)
        });
    }
    c.finish();
}

#[test]
fn criterion_07_trace_and_extremality() {
    let mut c = Criterion::new("criterion 07: trace and extremality");
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    // The canonical state is a trace.
    for t in 0..20 {
        let a = random_algebra(&mut rng, 2, 2);
        let b = random_algebra(&mut rng, 2, 2);
        let h = random_bimodule_between(&mut rng, &a, &b, 2);
        let d = canonical_duality(&h).unwrap();
        let x = random_end_element(&h, &mut rng, false);
        let y = random_end_element(&h, &mut rng, false);
        let xy = canonical_state(&d, &x.compose(&y).unwrap()).unwrap();
        let yx = canonical_state(&d, &y.compose(&x).unwrap()).unwrap();
        let resid = xy
            .iter()
            .zip(yx.iter())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0f64, f64::max);
        c.check(resid < 1e-9 * (1.0 + x.matrix().dim().0 as f64), || {
            format!("trace residual {resid:.2e} at case {t}")
        });
    }
    // E₀ on a maximal orthogonal family of minimal projections of the
    // relative commutant: E₀(p_t) = d_t/Σd_t.
    let mut t = 0;
    while t < 50 {
        let k = rng.random_range(1..=3);
        let m = rng.random_range(2..=3);
        if k * m > 6 {
            continue;
        }
        t += 1;
        let incl = Homomorphism::with_unitaries(
            &Algebra::factor(k),
            &Algebra::factor(k * m),
            Array2::from_shape_vec((1, 1), vec![m]).unwrap(),
            vec![sampling::unitary(&mut rng, k * m)],
        )
        .unwrap();
        let e0 = minimal_expectation(&incl).unwrap().minimal.unwrap();
        let mut ds = vec![];
        let mut dsum = 0.0;
        for u in 0..m {
            let mut blk = CMat::zeros((m, m));
            blk[[u, u]] = C64::new(1.0, 0.0);
            let p = end_to_relative_commutant(&incl, &[blk]).unwrap();
            let (_, chom) = corner_inclusion(&incl, &p).unwrap();
            let d = dim_matrix(&chom).unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
            dsum += d;
            ds.push((p, d));
        }
        for (p, d) in ds {
            let val = e0.apply(&p).unwrap();
            let expect = incl.source().identity().scale(C64::new(d / dsum, 0.0));
            let resid = val.sub(&expect).unwrap().norm();
            c.check(resid < 1e-8, || format!("extremality at case {t}: residual {resid:.2e}"));
        }
    }
    c.finish();
}

#[test]
fn criterion_08_l2_functor() {
    let mut c = Criterion::new("criterion 08: L² functor");
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    for t in 0..200 {
        let a = random_algebra(&mut rng, 2, 2);
        let f = random_hom(&mut rng, &a, 2, 2);
        let g = random_hom(&mut rng, f.target(), 2, 2);
        let lf = l2_of_hom(&f).unwrap();
        let lg = l2_of_hom(&g).unwrap();
        let lgf = l2_of_hom(&Homomorphism::compose(&f, &g).unwrap()).unwrap();
        let resid =
            frob(&(&lg.matrix.dot(&lf.matrix) - &lgf.matrix)) / (1.0 + frob(&lgf.matrix));
        c.check(resid < 1e-8, || format!("tower {t}: residual {resid:.2e}"));
    }
    // √dim scaling on factor inclusions.
    for (k, m) in [(2usize, 2usize), (1, 4), (2, 3)] {
        let incl = Homomorphism::with_unitaries(
            &Algebra::factor(k),
            &Algebra::factor(k * m),
            Array2::from_shape_vec((1, 1), vec![m]).unwrap(),
            vec![sampling::unitary(&mut rng, k * m)],
        )
        .unwrap();
        let l = l2_of_hom(&incl).unwrap();
        let (scale, defect) = l.block_scales[0];
        c.check(
            (scale - (m as f64).sqrt()).abs() < 1e-9 && defect < 1e-9,
            || format!("scaling law for M_{k} ⊂ M_{}", k * m),
        );
    }
    // Φ is unitary on 100 inclusions.
    for t in 0..100 {
        let a = random_algebra(&mut rng, 2, 2);
        let f = random_hom(&mut rng, &a, 2, 2);
        let (h, _) = hom_bimodule(&f).unwrap();
        let d = bimat::duality::canonical_duality_fast(&h).unwrap();
        match phi_identification(&f, &d) {
            Ok(phi) => c.check(phi.is_unitary(1e-7), || format!("Φ not unitary at {t}")),
            Err(e) => c.check(false, || format!("Φ failed at {t}: {e}")),
        }
    }
    // Restricted isometric functoriality on qualifying towers: each source
    // block feeds exactly one target block at every stage.
    let mut done = 0;
    let mut attempts = 0;
    while done < 100 && attempts < 2000 {
        attempts += 1;
        let a = random_algebra(&mut rng, 2, 2);
        let f = match partitioned_hom(&mut rng, &a) {
            Some(f) => f,
            None => continue,
        };
        let g = match partitioned_hom(&mut rng, f.target()) {
            Some(g) => g,
            None => continue,
        };
        let wf = l2_iso(&f).unwrap();
        let wg = l2_iso(&g).unwrap();
        let wgf = l2_iso(&Homomorphism::compose(&f, &g).unwrap()).unwrap();
        let resid = frob(&(&wg.matrix.dot(&wf.matrix) - &wgf.matrix));
        c.check(resid < 1e-8 * (1.0 + frob(&wgf.matrix)), || {
            format!("restricted isometric functoriality at try {attempts}: {resid:.2e}")
        });
        done += 1;
    }
    c.check(done == 100, || format!("only {done} qualifying towers generated"));
    // At least one commutative counterexample to unrestricted
    // functoriality.
    let mut found = false;
    'search: for s1 in 2..=3usize {
        for fibers in [[1usize, 2], [2, 1], [1, 3]] {
            let a = Algebra::trivial();
            let b = Algebra::new(vec![1; s1]).unwrap();
            let f = Homomorphism::canonical_embedding(
                &a,
                &b,
                Array2::from_shape_vec((1, s1), vec![1; s1]).unwrap(),
            )
            .unwrap();
            let total: usize = fibers.iter().take(s1.min(2)).sum();
            if s1 != 2 {
                continue;
            }
            let c2 = Algebra::new(vec![1; total]).unwrap();
            let mut mult = Array2::zeros((2, total));
            let mut col = 0;
            for (row, &f_count) in fibers.iter().enumerate().take(2) {
                for _ in 0..f_count {
                    mult[[row, col]] = 1;
                    col += 1;
                }
            }
            let g = Homomorphism::canonical_embedding(&b, &c2, mult).unwrap();
            let wf = l2_iso(&f).unwrap();
            let wg = l2_iso(&g).unwrap();
            let wgf = l2_iso(&Homomorphism::compose(&f, &g).unwrap()).unwrap();
            if frob(&(&wg.matrix.dot(&wf.matrix) - &wgf.matrix)) > 1e-3 {
                found = true;
                break 'search;
            }
        }
    }
    c.check(found, || "no commutative counterexample found".to_string());
    c.finish();
}

/// A random injective unital homomorphism whose multiplicity pattern feeds
/// each source block into exactly one target block (so `Z(B) ⊆ ι(A)`).
fn partitioned_hom(rng: &mut ChaCha8Rng, a: &Algebra) -> Option<Homomorphism> {
    let r = a.num_blocks();
    let s = rng.random_range(1..=r);
    // Assign each source block to a target block; every target must be hit.
    let mut assign: Vec<usize> = (0..r).map(|_| rng.random_range(0..s)).collect();
    for j in 0..s {
        if !assign.contains(&j) {
            assign[rng.random_range(0..r)] = j;
        }
    }
    for j in 0..s {
        if !assign.contains(&j) {
            return None;
        }
    }
    let mut mult = Array2::zeros((r, s));
    for (i, &j) in assign.iter().enumerate() {
        mult[[i, j]] = rng.random_range(1..=2);
    }
    let sizes: Vec<usize> = (0..s)
        .map(|j| (0..r).map(|i| mult[[i, j]] * a.block_sizes()[i]).sum())
        .collect();
    if sizes.iter().any(|&k| k == 0 || k > 6) {
        return None;
    }
    let b = Algebra::new(sizes.clone()).ok()?;
    let unitaries = sizes.iter().map(|&k| sampling::unitary(rng, k)).collect();
    Homomorphism::with_unitaries(a, &b, mult, unitaries).ok()
}

#[test]
fn criterion_09_fusion_functoriality() {
    let mut c = Criterion::new("criterion 09: fusion functoriality");
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut t = 0;
    while t < 100 {
        // α₁: A₁ → A₂ and α₂: A₂ → A₃ between small factors.
        let k1 = rng.random_range(1..=2);
        let m1 = rng.random_range(1..=2);
        let m2 = rng.random_range(1..=2);
        if k1 * m1 * m2 > 4 {
            continue;
        }
        t += 1;
        let a1 = Algebra::factor(k1);
        let a2 = Algebra::factor(k1 * m1);
        let a3 = Algebra::factor(k1 * m1 * m2);
        let alpha1 = Homomorphism::with_unitaries(
            &a1,
            &a2,
            Array2::from_shape_vec((1, 1), vec![m1]).unwrap(),
            vec![sampling::unitary(&mut rng, k1 * m1)],
        )
        .unwrap();
        let alpha2 = Homomorphism::with_unitaries(
            &a2,
            &a3,
            Array2::from_shape_vec((1, 1), vec![m2]).unwrap(),
            vec![sampling::unitary(&mut rng, k1 * m1 * m2)],
        )
        .unwrap();
        let alpha21 = Homomorphism::compose(&alpha1, &alpha2).unwrap();
        let dalg = Algebra::factor(rng.random_range(1..=2));
        let ealg = Algebra::factor(rng.random_range(1..=2));
        let h3 = random_bimodule_between(&mut rng, &dalg, &a3, 1);
        let k3 = random_bimodule_between(&mut rng, &a3, &ealg, 1);
        let (h3r2, wh2) = bimat::functor::restrict_right(&h3, &alpha2).unwrap();
        let (k3r2, wk2) = bimat::functor::restrict_left(&k3, &alpha2).unwrap();
        let h2 = h3r2.clone();
        let k2 = k3r2.clone();
        let (h2r1, wh1) = bimat::functor::restrict_right(&h2, &alpha1).unwrap();
        let (k2r1, wk1) = bimat::functor::restrict_left(&k2, &alpha1).unwrap();
        let h1 = h2r1.clone();
        let k1b = k2r1.clone();
        let rand_bilinear = |src: &Bimodule, tgt: &Bimodule, rng: &mut ChaCha8Rng| -> CMat {
            let (r, s) = src.mult().dim();
            let mut blocks = vec![];
            for i in 0..r {
                for j in 0..s {
                    blocks.push(sampling::cmat(rng, tgt.mult()[[i, j]], src.mult()[[i, j]]));
                }
            }
            BimoduleMap::from_blocks(src, tgt, &blocks).unwrap().matrix().clone()
        };
        let hmat1 = adjoint(&wh1).dot(&rand_bilinear(&h1, &h2r1, &mut rng));
        let kmat1 = adjoint(&wk1).dot(&rand_bilinear(&k1b, &k2r1, &mut rng));
        let hmat2 = adjoint(&wh2).dot(&rand_bilinear(&h2, &h3r2, &mut rng));
        let kmat2 = adjoint(&wk2).dot(&rand_bilinear(&k2, &k3r2, &mut rng));
        let m1m = fuse_functor(&FusionMorphism {
            alpha: &alpha1,
            h1: &h1,
            h2: &h2,
            h: &hmat1,
            k1: &k1b,
            k2: &k2,
            k: &kmat1,
        })
        .unwrap();
        let m2m = fuse_functor(&FusionMorphism {
            alpha: &alpha2,
            h1: &h2,
            h2: &h3,
            h: &hmat2,
            k1: &k2,
            k2: &k3,
            k: &kmat2,
        })
        .unwrap();
        let composite = fuse_functor(&FusionMorphism {
            alpha: &alpha21,
            h1: &h1,
            h2: &h3,
            h: &hmat2.dot(&hmat1),
            k1: &k1b,
            k2: &k3,
            k: &kmat2.dot(&kmat1),
        })
        .unwrap();
        let resid = frob(&(&m2m.dot(&m1m) - &composite)) / (1.0 + frob(&composite));
        c.check(resid < 1e-8, || format!("composition law at case {t}: residual {resid:.2e}"));
    }
    c.finish();
}

#[test]
fn criterion_10_inequalities() {
    let mut c = Criterion::new("criterion 10: inequalities");
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    // Corner-sum identity on canonical inclusions of a multi-matrix algebra
    // into a factor.
    let mut done = 0;
    while done < 50 {
        let a = random_algebra(&mut rng, 3, 2);
        let r = a.num_blocks();
        let mut lam = Array2::zeros((r, 1));
        for v in lam.iter_mut() {
            *v = rng.random_range(1..=2);
        }
        let k: usize = (0..r).map(|i| lam[[i, 0]] * a.block_sizes()[i]).sum();
        if k > 7 {
            continue;
        }
        let b = Algebra::factor(k);
        let incl = Homomorphism::with_unitaries(
            &a,
            &b,
            lam,
            vec![sampling::unitary(&mut rng, k)],
        )
        .unwrap();
        let d = dim_matrix(&incl).unwrap();
        let total: f64 = d.iter().map(|v| v * v).sum();
        let mut sum = 0.0;
        for z in a.minimal_central_projections() {
            let p = incl.apply(&z).unwrap();
            let (_, chom) = corner_inclusion(&incl, &p).unwrap();
            sum += dim_matrix(&chom).unwrap().iter().map(|v| v * v).sum::<f64>();
        }
        c.check((sum - total).abs() < 1e-7 * (1.0 + total), || {
            format!("corner sum {sum} vs ‖dim‖² {total}")
        });
        done += 1;
    }
    // The two closing inequalities, both checked on each of 50 concrete
    // configurations (one recognition pass per configuration).
    let mut done = 0;
    let mut tried = 0;
    while done < 50 && tried < 400 {
        tried += 1;
        let a_side = rng.random_range(2..=3);
        let b_side = rng.random_range(2..=3);
        let space = a_side * b_side;
        // N = M_c ⊗ 1 ⊂ M = M_a ⊗ 1 with c | a; A = 1 ⊗ ι(M_d), d | b.
        let divisors_a: Vec<usize> = (1..=a_side).filter(|d| a_side % d == 0).collect();
        let c_sub = divisors_a[rng.random_range(0..divisors_a.len())];
        let divisors_b: Vec<usize> = (1..=b_side).filter(|d| b_side % d == 0).collect();
        let d_sub = divisors_b[rng.random_range(0..divisors_b.len())];
        let u = sampling::unitary(&mut rng, space);
        let scramble = |m: &CMat| u.dot(m).dot(&adjoint(&u));
        let un = sampling::unitary(&mut rng, a_side);
        let n_gen = scramble(&numerics::kron(
            &un.dot(&numerics::kron(&sampling::cmat(&mut rng, c_sub, c_sub), &eye(a_side / c_sub)))
                .dot(&adjoint(&un)),
            &eye(b_side),
        ));
        let m_gen = scramble(&numerics::kron(&sampling::cmat(&mut rng, a_side, a_side), &eye(b_side)));
        let ub = sampling::unitary(&mut rng, b_side);
        let a_gen = scramble(&numerics::kron(
            &eye(a_side),
            &ub.dot(&numerics::kron(&sampling::cmat(&mut rng, d_sub, d_sub), &eye(b_side / d_sub)))
                .dot(&adjoint(&ub)),
        ));
        let scene = InequalityScene {
            space,
            algebras: BTreeMap::from([
                ("N".to_string(), vec![matrix_to_def(&n_gen)]),
                ("M".to_string(), vec![matrix_to_def(&m_gen)]),
                ("A".to_string(), vec![matrix_to_def(&a_gen)]),
                (
                    "Amb".to_string(),
                    vec![matrix_to_def(&m_gen), matrix_to_def(&a_gen)],
                ),
            ]),
            checks: vec![
                IneqCheck::JoinBound { n: "N".into(), m: "M".into(), commuting: "A".into() },
                IneqCheck::RelativeCommutantBound {
                    n: "N".into(),
                    m: "M".into(),
                    ambient: "Amb".into(),
                },
            ],
        };
        match bimat::scene::run_inequality_scene(&scene) {
            Ok(outcomes) => {
                for o in &outcomes {
                    c.check(o.holds, || {
                        format!("{}: lhs {} vs rhs {}", o.check, o.lhs, o.rhs)
                    });
                }
                done += 1;
            }
            Err(e) => c.check(false, || format!("config failed: {e}")),
        }
    }
    c.check(done >= 50, || format!("only {done} concrete configurations ran"));
    c.finish();
}

#[test]
fn criterion_11_diagram_dsl() {
    let mut c = Criterion::new("criterion 11: diagram DSL");
    let env_text = std::fs::read_to_string(corpus_path("env_factor.json")).unwrap();
    let scene = bimat::scene::Scene::from_json(&env_text).unwrap();
    let env = scene.environment().unwrap();
    let load = |name: &str| -> String { std::fs::read_to_string(corpus_path(name)).unwrap() };

    for name in ["zigzag_left.vnd", "zigzag_right.vnd"] {
        let term = parse(&load(name)).unwrap();
        c.check(assert_identity(&term, &env, 1e-9).is_ok(), || format!("{name} not identity"));
    }
    // Normalization: the two scalar states agree.
    {
        let lhs_t = parse(&load("normalization_left.vnd")).unwrap();
        let rhs_t = parse(&load("normalization_right.vnd")).unwrap();
        let (lhs, tl) = evaluate(&lhs_t, &env).unwrap();
        let (rhs, tr) = evaluate(&rhs_t, &env).unwrap();
        let dl = tl.source.realized().unwrap().dim() as f64;
        let dr = tr.source.realized().unwrap().dim() as f64;
        let sl = numerics::trace(&lhs) / dl;
        let sr = numerics::trace(&rhs) / dr;
        c.check((sl - sr).norm() < 1e-8 * (1.0 + sl.norm()), || {
            format!("normalization scalars {sl} vs {sr}")
        });
    }
    // Rotation involution: the two bends agree, and match the bar
    // involution computed without diagrams.
    {
        let (l, _) = evaluate(&parse(&load("rotation_left_bend.vnd")).unwrap(), &env).unwrap();
        let (r, _) = evaluate(&parse(&load("rotation_right_bend.vnd")).unwrap(), &env).unwrap();
        c.check(frob(&(&l - &r)) < 1e-9 * (1.0 + frob(&l)), || "bends disagree".to_string());
        let h = env.bimodule("H").unwrap().clone();
        let d = canonical_duality(&h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_end_element(&h, &mut rng, false);
        let (bar, resid) = bar_involution(&d, &x).unwrap();
        c.check(resid < 1e-9, || "bar involution bends disagree".to_string());
        c.check(frob(&(&l - bar.matrix())) < 1e-9 * (1.0 + frob(&l)), || {
            "diagram bar differs from direct bar".to_string()
        });
    }
    // Trace rotation.
    {
        let (lhs, _) = evaluate(&parse(&load("trace_xy.vnd")).unwrap(), &env).unwrap();
        let (rhs, _) = evaluate(&parse(&load("trace_yx.vnd")).unwrap(), &env).unwrap();
        c.check(frob(&(&lhs - &rhs)) < 1e-9 * (1.0 + frob(&lhs)), || {
            "trace rotation fails".to_string()
        });
    }
    // Forbidden assemblies raise type errors.
    for name in ["forbidden_vector_pair.vnd", "forbidden_middle.vnd"] {
        let term = parse(&load(name)).unwrap();
        c.check(
            matches!(typecheck(&term, &env), Err(DiagramError::Type(_))),
            || format!("{name} should be a type error"),
        );
    }
    // Malformed input is a syntax error with a position.
    c.check(
        matches!(parse(&load("malformed.vnd")), Err(DiagramError::Syntax { .. })),
        || "malformed diagram should fail to parse".to_string(),
    );
    c.finish();
}

/// Cross-check used by several criteria: statistical dimensions of
/// canonical bimodules are their multiplicities.
#[test]
fn sanity_dim_equals_multiplicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(999);
    for _ in 0..10 {
        let a = random_algebra(&mut rng, 2, 2);
        let b = random_algebra(&mut rng, 2, 2);
        let h = random_bimodule_between(&mut rng, &a, &b, 2);
        let d: DualityData = canonical_duality(&h).unwrap();
        let dim = statistical_dimension(&d).unwrap();
        for ((i, j), &m) in h.mult().indexed_iter() {
            assert!((dim[[i, j]] - m as f64).abs() < 1e-8);
        }
    }
}
