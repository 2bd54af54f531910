//! Bundled invariant suites behind `bimat check`: each suite runs a family
//! of identities and counts passes and failures.

use bimat::algebra::{Algebra, Functional, Homomorphism};
use bimat::bimodule::Bimodule;
use bimat::diagram::{assert_identity, evaluate, parse, Binding, DiagObject, Environment};
use bimat::duality::{canonical_duality, random_end_element};
use bimat::index::{minimal_expectation, minimal_index_scalar, pp_index};
use bimat::l2::{check_standard_form, check_standard_form_with, inner_analytic, inner_direct, transpose_conjugation};
use bimat::numerics::{frob, trace};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Suite {
    name: &'static str,
    passed: usize,
    failures: Vec<String>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite { name, passed: 0, failures: vec![] }
    }

    fn check(&mut self, what: &str, ok: bool) {
        if ok {
            self.passed += 1;
        } else {
            self.failures.push(what.to_string());
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "suite": self.name,
            "passed": self.passed,
            "failed": self.failures.len(),
            "failures": self.failures,
        })
    }
}

fn duality_env(k: usize, m: usize) -> (Environment, bimat::duality::DualityData) {
    let a = Algebra::factor(k);
    let b = Algebra::factor(k * m);
    let h = Bimodule::new(&a, &b, Array2::from_shape_vec((1, 1), vec![m]).unwrap()).unwrap();
    let d = canonical_duality(&h).unwrap();
    let mut env = Environment::new();
    env.add_algebra("A", a.clone());
    env.add_algebra("B", b.clone());
    env.add_bimodule("H", h.clone());
    env.add_bimodule("Hbar", d.hbar().clone());
    env.add_binding(
        "R",
        Binding {
            source: DiagObject::empty(&a),
            target: DiagObject { left: a.clone(), wires: vec![h.clone(), d.hbar().clone()] },
            linearity: bimat::bimodule::Linearity::Bilinear,
            matrix: d.r().clone(),
        },
    )
    .unwrap();
    env.add_binding(
        "S",
        Binding {
            source: DiagObject::empty(&b),
            target: DiagObject { left: b.clone(), wires: vec![d.hbar().clone(), h.clone()] },
            linearity: bimat::bimodule::Linearity::Bilinear,
            matrix: d.s().clone(),
        },
    )
    .unwrap();
    (env, d)
}

fn bind_end(env: &mut Environment, d: &bimat::duality::DualityData, name: &str, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_end_element(d.h(), &mut rng, false);
    env.add_binding(
        name,
        Binding {
            source: DiagObject::wire(d.h()),
            target: DiagObject::wire(d.h()),
            linearity: bimat::bimodule::Linearity::Bilinear,
            matrix: x.matrix().clone(),
        },
    )
    .unwrap();
}

fn zigzag_suite(_seed: u64, tol: f64) -> Suite {
    let mut s = Suite::new("zigzag");
    for (k, m) in [(1usize, 2usize), (2, 2), (2, 3), (3, 2)] {
        let (env, _) = duality_env(k, m);
        let left = parse("(R* | id(H)) ; (id(H) | S)").unwrap();
        s.check(
            &format!("left zig-zag for M_{k} in M_{}", k * m),
            assert_identity(&left, &env, tol.max(1e-9)).is_ok(),
        );
        let right = parse("(S* | id(Hbar)) ; (id(Hbar) | R)").unwrap();
        s.check(
            &format!("right zig-zag for M_{k} in M_{}", k * m),
            assert_identity(&right, &env, tol.max(1e-9)).is_ok(),
        );
    }
    s
}

fn normalization_suite(seed: u64, _tol: f64) -> Suite {
    let mut s = Suite::new("normalization");
    for (k, m) in [(2usize, 2usize), (2, 3)] {
        let (mut env, d) = duality_env(k, m);
        bind_end(&mut env, &d, "x", seed);
        let (lhs, tl) = evaluate(&parse("R* ; (x | id(Hbar)) ; R").unwrap(), &env).unwrap();
        let (rhs, tr) = evaluate(&parse("S* ; (id(Hbar) | x) ; S").unwrap(), &env).unwrap();
        let dl = tl.source.realized().unwrap().dim();
        let dr = tr.source.realized().unwrap().dim();
        let sl = trace(&lhs) / (dl as f64);
        let sr = trace(&rhs) / (dr as f64);
        s.check(
            &format!("normalization scalars agree for M_{k} in M_{}", k * m),
            (sl - sr).norm() < 1e-8 * (1.0 + sl.norm()),
        );
        let n = d.normalization_residual().unwrap();
        s.check(&format!("normalization residual for M_{k} in M_{}", k * m), n < 1e-8);
    }
    s
}

fn rotation_suite(seed: u64, _tol: f64) -> Suite {
    let mut s = Suite::new("rotation");
    for (k, m) in [(2usize, 2usize), (1, 3)] {
        let (mut env, d) = duality_env(k, m);
        bind_end(&mut env, &d, "x", seed + k as u64);
        let left =
            parse("(S* | id(Hbar)) ; (id(Hbar) | x | id(Hbar)) ; (id(Hbar) | R)").unwrap();
        let right =
            parse("(id(Hbar) | R*) ; (id(Hbar) | x | id(Hbar)) ; (S | id(Hbar))").unwrap();
        let (l, _) = evaluate(&left, &env).unwrap();
        let (r, _) = evaluate(&right, &env).unwrap();
        s.check(
            &format!("rotation bends agree for M_{k} in M_{}", k * m),
            frob(&(&l - &r)) < 1e-8 * (1.0 + frob(&l)),
        );
    }
    // Trace rotation.
    let (mut env, d) = duality_env(2, 2);
    bind_end(&mut env, &d, "x", seed + 11);
    bind_end(&mut env, &d, "y", seed + 12);
    let (lhs, _) =
        evaluate(&parse("R* ; (x | id(Hbar)) ; (y | id(Hbar)) ; R").unwrap(), &env).unwrap();
    let (rhs, _) =
        evaluate(&parse("R* ; (y | id(Hbar)) ; (x | id(Hbar)) ; R").unwrap(), &env).unwrap();
    s.check("trace rotation", frob(&(&lhs - &rhs)) < 1e-8 * (1.0 + frob(&lhs)));
    s
}

fn standard_form_suite(seed: u64, tol: f64) -> Suite {
    let mut s = Suite::new("standardform");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..8 {
        let blocks: Vec<usize> =
            (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=2)).collect();
        let a = Algebra::new(blocks.clone()).unwrap();
        let rep = check_standard_form(&a, tol.max(1e-9)).unwrap();
        s.check(&format!("standard form #{t} on {blocks:?}"), rep.all_pass());
    }
    let a = Algebra::new(vec![2, 2]).unwrap();
    let rep = check_standard_form_with(&a, tol.max(1e-9), transpose_conjugation).unwrap();
    s.check("corrupted conjugation fails axiom 5", !rep.axiom(4).passed);
    s
}

fn fusion_suite(seed: u64, _tol: f64) -> Suite {
    let mut s = Suite::new("fusion");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..6 {
        let r = rng.random_range(1..=2);
        let sb = rng.random_range(1..=2);
        let tb = rng.random_range(1..=2);
        let a = Algebra::new((0..r).map(|_| rng.random_range(1..=2)).collect()).unwrap();
        let b = Algebra::new((0..sb).map(|_| rng.random_range(1..=2)).collect()).unwrap();
        let c = Algebra::new((0..tb).map(|_| rng.random_range(1..=2)).collect()).unwrap();
        let mut mh = Array2::zeros((r, sb));
        let mut mk = Array2::zeros((sb, tb));
        for v in mh.iter_mut() {
            *v = rng.random_range(0..=2);
        }
        for v in mk.iter_mut() {
            *v = rng.random_range(0..=2);
        }
        let h = Bimodule::new(&a, &b, mh).unwrap();
        let k = Bimodule::new(&b, &c, mk).unwrap();
        let fr = bimat::bimodule::fuse(&h, &k, 1e-9).unwrap();
        s.check(
            &format!("fusion #{t}: Gram rank equals canonical dimension"),
            fr.gram_rank == fr.object.dim() && fr.compatibility_residual() < 1e-9,
        );
    }
    s
}

fn dimlaws_suite(seed: u64, _tol: f64) -> Suite {
    let mut s = Suite::new("dimlaws");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..4 {
        let a = Algebra::new(vec![1, 2]).unwrap();
        let b = Algebra::new(vec![2, 3]).unwrap();
        let lam1 = Array2::from_shape_vec((2, 2), vec![2, 1, 0, 1]).unwrap();
        let f = Homomorphism::with_unitaries(
            &a,
            &b,
            lam1,
            vec![
                bimat::numerics::sampling::unitary(&mut rng, 2),
                bimat::numerics::sampling::unitary(&mut rng, 3),
            ],
        )
        .unwrap();
        let c = Algebra::factor(5);
        let g = Homomorphism::with_unitaries(
            &b,
            &c,
            Array2::from_shape_vec((2, 1), vec![1, 1]).unwrap(),
            vec![bimat::numerics::sampling::unitary(&mut rng, 5)],
        )
        .unwrap();
        let gf = Homomorphism::compose(&f, &g).unwrap();
        let df = bimat::index::dim_matrix(&f).unwrap();
        let dg = bimat::index::dim_matrix(&g).unwrap();
        let dgf = bimat::index::dim_matrix(&gf).unwrap();
        let prod = df.dot(&dg);
        let ok = dgf
            .indexed_iter()
            .all(|((i, j), &v)| (v - prod[[i, j]]).abs() < 1e-7 * (1.0 + v.abs()));
        s.check(&format!("tower law #{t}"), ok);
    }
    s
}

fn innerproduct_suite(seed: u64, _tol: f64) -> Suite {
    let mut s = Suite::new("innerproduct");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let algebras =
        [Algebra::factor(3), Algebra::new(vec![1, 2]).unwrap(), Algebra::new(vec![2, 2]).unwrap()];
    for (t, a) in algebras.iter().enumerate() {
        let mut ok = true;
        for _ in 0..20 {
            let phi = Functional::random_positive(a, &mut rng, true);
            let psi = Functional::random_positive(a, &mut rng, true);
            let d = inner_direct(&phi, &psi).unwrap();
            let an = inner_analytic(&phi, &psi, &[]).unwrap();
            ok &= (d - an.value).abs() <= 1e-8 * (1.0 + d.abs());
            let sq = bimat::l2::sqrt_state(&phi).unwrap();
            ok &= (sq.norm().powi(2) - phi.total().re).abs() <= 1e-10 * (1.0 + phi.total().re);
        }
        s.check(&format!("inner products agree on algebra #{t}"), ok);
    }
    s
}

fn index_suite(seed: u64, _tol: f64) -> Suite {
    let mut s = Suite::new("index");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in [2usize, 3] {
        let incl = Homomorphism::canonical_embedding(
            &Algebra::trivial(),
            &Algebra::factor(n),
            Array2::from_shape_vec((1, 1), vec![n]).unwrap(),
        )
        .unwrap();
        let me = minimal_expectation(&incl).unwrap();
        let rep = pp_index(me.minimal.as_ref().unwrap(), &mut rng).unwrap();
        s.check(
            &format!("pp index of trace on C in M_{n} is {n}"),
            (rep.value - n as f64).abs() < 1e-6 * n as f64,
        );
        s.check(
            &format!("minimal index of C in M_{n} is {}", n * n),
            (minimal_index_scalar(&incl).unwrap() - (n * n) as f64).abs() < 1e-7,
        );
    }
    let incl = Homomorphism::canonical_embedding(
        &Algebra::factor(2),
        &Algebra::factor(4),
        Array2::from_shape_vec((1, 1), vec![2]).unwrap(),
    )
    .unwrap();
    let me = minimal_expectation(&incl).unwrap();
    let rep = pp_index(me.minimal.as_ref().unwrap(), &mut rng).unwrap();
    s.check("pp index of the minimal expectation for M_2 in M_4 is 4", (rep.value - 4.0).abs() < 1e-5);
    s
}

type SuiteFn = fn(u64, f64) -> Suite;

pub fn run(which: Option<&str>, seed: u64, tol: f64, meta: Value) -> Result<(Value, bool), String> {
    let all: Vec<(&str, SuiteFn)> = vec![
        ("zigzag", zigzag_suite),
        ("normalization", normalization_suite),
        ("rotation", rotation_suite),
        ("standardform", standard_form_suite),
        ("fusion", fusion_suite),
        ("dimlaws", dimlaws_suite),
        ("innerproduct", innerproduct_suite),
        ("index", index_suite),
    ];
    let selected: Vec<_> = match which {
        None => all,
        Some(name) => {
            let found: Vec<_> = all.into_iter().filter(|(n, _)| *n == name).collect();
            if found.is_empty() {
                return Err(format!("unknown suite `{name}`"));
            }
            found
        }
    };
    let mut reports = vec![];
    let mut total_pass = 0usize;
    let mut total_fail = 0usize;
    for (_, f) in &selected {
        let s = f(seed, tol);
        total_pass += s.passed;
        total_fail += s.failures.len();
        reports.push(s.to_json());
    }
    Ok((
        json!({
            "meta": meta,
            "suites": reports,
            "total_passed": total_pass,
            "total_failed": total_fail,
        }),
        total_fail == 0,
    ))
}
