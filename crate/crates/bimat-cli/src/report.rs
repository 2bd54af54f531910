//! Scene-driven computations behind the individual subcommands.

use bimat::algebra::Homomorphism;
use bimat::bimodule::{fuse as bimodule_fuse, promote_left_linear, promote_right_linear, BimoduleMap};
use bimat::duality::{
    canonical_duality, normalize as normalize_duality, statistical_dimension, DualityData,
};
use bimat::index::{longo_index, minimal_expectation, minimal_index, pp_index, quasi_basis};
use bimat::scene::{matrix_to_def, InequalityScene, Scene};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::path::Path;

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn load_scene(path: &Path) -> Result<Scene, String> {
    Scene::from_json(&read(path)?).map_err(|e| e.to_string())
}

fn dim_json(d: &ndarray::Array2<f64>) -> Value {
    let rows: Vec<Vec<f64>> = (0..d.dim().0)
        .map(|i| (0..d.dim().1).map(|j| d[[i, j]]).collect())
        .collect();
    json!(rows)
}

fn get_hom(scene: &Scene, name: &str) -> Result<Homomorphism, String> {
    let resolved = scene.resolve().map_err(|e| e.to_string())?;
    resolved
        .homomorphisms
        .get(name)
        .cloned()
        .ok_or_else(|| format!("no homomorphism named `{name}` in the scene"))
}

pub fn dim(path: &Path, hom: &str, meta: Value) -> Result<(Value, bool), String> {
    let scene = load_scene(path)?;
    let h = get_hom(&scene, hom)?;
    let d = bimat::index::dim_matrix(&h).map_err(|e| e.to_string())?;
    Ok((json!({"meta": meta, "dim": dim_json(&d)}), true))
}

pub fn index(
    path: &Path,
    hom: Option<&str>,
    seed: u64,
    meta: Value,
) -> Result<(Value, bool), String> {
    let text = read(path)?;
    if hom.is_none() {
        // A concrete inequality configuration.
        let scene: InequalityScene = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let outcomes = bimat::scene::run_inequality_scene(&scene).map_err(|e| e.to_string())?;
        let all = outcomes.iter().all(|o| o.holds);
        return Ok((json!({"meta": meta, "inequalities": outcomes}), all));
    }
    let scene = Scene::from_json(&text).map_err(|e| e.to_string())?;
    let h = get_hom(&scene, hom.unwrap())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = bimat::index::dim_matrix(&h).map_err(|e| e.to_string())?;
    let mi = minimal_index(&h).map_err(|e| e.to_string())?;
    let me = minimal_expectation(&h).map_err(|e| e.to_string())?;
    let e = me.minimal.as_ref().unwrap_or(&me.unitized);
    let pp = pp_index(e, &mut rng).map_err(|e| e.to_string())?;
    let watatani = quasi_basis(e).ok().map(|(_, w)| w);
    let longo = if h.source().is_factor() && h.target().is_factor() {
        Some(longo_index(&h, &mut rng).map_err(|e| e.to_string())?)
    } else {
        None
    };
    Ok((
        json!({
            "meta": meta,
            "dim_matrix": dim_json(&d),
            "minimal_index": dim_json(&mi),
            "expectation_central_values": me.central_values,
            "pp_index": {
                "value": pp.value,
                "sphere_route": pp.sphere,
                "spectral_route": pp.spectral,
                "quasi_basis_index": watatani,
            },
            "longo_index": longo.map(|l| json!({
                "value": l.value,
                "distance_to_minimal_expectation": l.distance_to_minimal,
            })),
        }),
        true,
    ))
}

pub fn fuse_report(
    scene: &Scene,
    left: &str,
    right: &str,
    tol: f64,
) -> Result<Value, String> {
    let resolved = scene.resolve().map_err(|e| e.to_string())?;
    let h = resolved.bimodules.get(left).ok_or_else(|| format!("no bimodule `{left}`"))?;
    let k = resolved.bimodules.get(right).ok_or_else(|| format!("no bimodule `{right}`"))?;
    let fr = bimodule_fuse(h, k, tol).map_err(|e| e.to_string())?;
    let mult: Vec<Vec<usize>> = (0..fr.object.mult().dim().0)
        .map(|i| (0..fr.object.mult().dim().1).map(|j| fr.object.mult()[[i, j]]).collect())
        .collect();
    Ok(json!({
        "multiplicities": mult,
        "canonical_dimension": fr.object.dim(),
        "gram_rank": fr.gram_rank,
        "gram_compatibility_residual": fr.compatibility_residual(),
    }))
}

pub fn fuse(
    path: &Path,
    left: &str,
    right: &str,
    tol: f64,
    meta: Value,
) -> Result<(Value, bool), String> {
    let scene = load_scene(path)?;
    let rep = fuse_report(&scene, left, right, tol)?;
    let ok = rep["gram_rank"] == rep["canonical_dimension"];
    Ok((json!({"meta": meta, "fusion": rep}), ok))
}

pub fn normalize(
    path: &Path,
    bimodule: &str,
    skew: bool,
    seed: u64,
    tol: f64,
    meta: Value,
) -> Result<(Value, bool), String> {
    let scene = load_scene(path)?;
    let resolved = scene.resolve().map_err(|e| e.to_string())?;
    let h = resolved
        .bimodules
        .get(bimodule)
        .ok_or_else(|| format!("no bimodule `{bimodule}`"))?;
    let d0 = canonical_duality(h).map_err(|e| e.to_string())?;
    let (z1, z2) = d0.zigzag_residuals().map_err(|e| e.to_string())?;
    let n0 = d0.normalization_residual().map_err(|e| e.to_string())?;
    let mut out = json!({
        "canonical": {"zigzag": [z1, z2], "normalization": n0},
    });
    let mut ok = z1.max(z2).max(n0) <= tol.max(1e-8);
    if skew {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skewed = skew_data(&d0, h, &mut rng).map_err(|e| e.to_string())?;
        let nskew = skewed.normalization_residual().map_err(|e| e.to_string())?;
        let fixed = normalize_duality(h, d0.hbar(), skewed.r().clone(), skewed.s().clone(), tol)
            .map_err(|e| e.to_string())?;
        let nfixed = fixed.normalization_residual().map_err(|e| e.to_string())?;
        let dim = statistical_dimension(&fixed).map_err(|e| e.to_string())?;
        out["skewed_normalization"] = json!(nskew);
        out["renormalized"] = json!({
            "normalization": nfixed,
            "dim": dim_json(&dim),
        });
        ok = ok && nfixed <= tol.max(1e-8);
    }
    Ok((json!({"meta": meta, "normalize": out}), ok))
}

fn skew_data(
    d0: &DualityData,
    h: &bimat::bimodule::Bimodule,
    rng: &mut ChaCha8Rng,
) -> Result<DualityData, String> {
    let (r, s) = h.mult().dim();
    let mut blocks = vec![];
    let mut inv_blocks = vec![];
    for i in 0..r {
        for j in 0..s {
            let m = h.mult()[[i, j]];
            let p = bimat::numerics::sampling::positive_definite(rng, m);
            let pinv = if m > 0 {
                bimat::numerics::pd_inverse(&p, 1e-10).map_err(|e| e.to_string())?
            } else {
                bimat::CMat::zeros((0, 0))
            };
            blocks.push(p);
            inv_blocks.push(pinv);
        }
    }
    let x0 = BimoduleMap::from_blocks(h, h, &blocks).map_err(|e| e.to_string())?;
    let x0_inv = BimoduleMap::from_blocks(h, h, &inv_blocks).map_err(|e| e.to_string())?;
    let skew_r = promote_right_linear(x0.matrix(), h, h, d0.hbar())
        .map_err(|e| e.to_string())?
        .dot(d0.r());
    let skew_s = promote_left_linear(x0_inv.matrix(), h, h, d0.hbar())
        .map_err(|e| e.to_string())?
        .dot(d0.s());
    Ok(DualityData::new(h, d0.hbar(), skew_r, skew_s, false))
}

pub fn eval(
    env_path: &Path,
    diagram_path: &Path,
    assert_identity: bool,
    tol: f64,
    meta: Value,
) -> Result<(Value, bool), String> {
    let scene = load_scene(env_path)?;
    let env = scene.environment().map_err(|e| e.to_string())?;
    let text = read(diagram_path)?;
    let term = bimat::diagram::parse(&text).map_err(|e| e.to_string())?;
    let (matrix, typed) = bimat::diagram::evaluate(&term, &env).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut identity_residual = None;
    if assert_identity {
        match bimat::diagram::assert_identity(&term, &env, tol.max(1e-9)) {
            Ok(r) => identity_residual = Some(r),
            Err(e) => {
                return Ok((
                    json!({"meta": meta, "eval": {"assertion": format!("{e}")}}),
                    false,
                ))
            }
        }
        ok = identity_residual.is_some();
    }
    Ok((
        json!({
            "meta": meta,
            "eval": {
                "source_dim": typed.source.realized().map_err(|e| e.to_string())?.dim(),
                "target_dim": typed.target.realized().map_err(|e| e.to_string())?.dim(),
                "coercions": typed.coercions,
                "identity_residual": identity_residual,
                "matrix": matrix_to_def(&matrix),
            }
        }),
        ok,
    ))
}

pub fn l2map(path: &Path, hom: &str, meta: Value) -> Result<(Value, bool), String> {
    let scene = load_scene(path)?;
    let h = get_hom(&scene, hom)?;
    let l = bimat::functor::l2_of_hom(&h).map_err(|e| e.to_string())?;
    Ok((
        json!({
            "meta": meta,
            "l2map": {
                "matrix": matrix_to_def(&l.matrix),
                "block_scales": l.block_scales.iter().map(|(s, d)| json!({
                    "scale": s, "defect": d
                })).collect::<Vec<_>>(),
            }
        }),
        true,
    ))
}
