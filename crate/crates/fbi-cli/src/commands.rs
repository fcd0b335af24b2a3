use crate::config::{AlphaSpec, Format, ModelKind, RunConfig};
use anyhow::{anyhow, bail, Result};
use clap::Args;
use fbi::chiral::{band_structure, default_path, kpath, ChiralModel, Potential};
use fbi::ed::{self, FockSpace, Hamiltonian, SpectrumRow};
use fbi::elliptic::{self, Sampled};
use fbi::flatband::{flat_state, FlatBandBasis};
use fbi::formfactor::{self, FormFactorTable};
use fbi::hf;
use fbi::io::{self, Cutoffs, EnergyRecord};
use fbi::lattice::{self, Vec2, Q1};
use fbi::linalg::{c, max_abs};
use fbi::magic::{magic_angles, DEFAULT_K_PROBE};
use fbi::uniqueness;
use serde_json::{json, Map, Value};

/// Command output: a JSON document or CSV text.
pub enum Output {
    Json(Value),
    Csv(String),
}

fn parse_pair(field: &str, s: &str) -> Result<Vec2> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| anyhow!("{field}: expected `a,b` (got `{s}`)")))
        .collect::<Result<_>>()?;
    match v.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => bail!("{field}: expected two comma-separated numbers (got `{s}`)"),
    }
}

/// Round every float to 12 significant digits so output is stable.
pub fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = io::round12(n.as_f64().unwrap_or(0.0));
            serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

fn header(cmd: &str, cfg: &RunConfig, alpha: Option<f64>) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(cmd));
    m.insert("model".into(), json!(cfg.kind.name()));
    m.insert("layers".into(), json!(cfg.model.n_layers));
    m.insert("potential".into(), json!(cfg.model.potential.name));
    if let Some(a) = alpha {
        m.insert("alpha".into(), json!(a));
    }
    m.insert("grid".into(), json!([cfg.grid.nkx, cfg.grid.nky]));
    m.insert("cutoffs".into(), json!({ "plane_wave": cfg.cutoff, "g_shell": cfg.g_cut() }));
    m.insert("coulomb".into(), json!({ "epsilon": cfg.epsilon, "d": cfg.gate_distance }));
    m.insert("seed".into(), json!(cfg.seed));
    m
}

fn with(mut h: Map<String, Value>, body: Value) -> Value {
    if let Value::Object(b) = body {
        h.extend(b);
    }
    Value::Object(h)
}

/// Coupling from the config; `auto:i` picks the i-th real magic angle.
pub fn resolve_alpha(cfg: &RunConfig) -> Result<f64> {
    match cfg.alpha {
        AlphaSpec::Value(a) => Ok(a),
        AlphaSpec::Auto(i) => {
            let found = magic_angles(&cfg.model, cfg.cutoff, DEFAULT_K_PROBE, i + 1, true)?;
            found
                .get(i)
                .map(|m| m.alpha.re)
                .ok_or_else(|| anyhow!("alpha: only {} real magic angles found for auto:{i}", found.len()))
        }
    }
}

fn pipeline(cfg: &RunConfig) -> Result<(f64, FlatBandBasis, FormFactorTable)> {
    let alpha = resolve_alpha(cfg)?;
    let basis = FlatBandBasis::compute(&cfg.model, alpha, cfg.cutoff, cfg.grid, cfg.m)?;
    let table = FormFactorTable::compute(&basis, cfg.g_cut())?;
    Ok((alpha, basis, table))
}

#[derive(Args, Debug, Clone)]
pub struct MagicArgs {
    /// Number of magic angles to report.
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    /// Probe momentum in dual coordinates.
    #[arg(long = "k-probe", default_value = "0.1,0.2")]
    pub k_probe: String,
    /// Keep complex candidates.
    #[arg(long)]
    pub complex: bool,
}

pub fn magic(cfg: &RunConfig, a: &MagicArgs) -> Result<Output> {
    let k = parse_pair("k-probe", &a.k_probe)?;
    let found = magic_angles(&cfg.model, cfg.cutoff, k, a.count, !a.complex)?;
    if cfg.format == Format::Csv {
        let mut s = String::from("index,alpha_re,alpha_im,multiplicity,flat_bands,residual\n");
        for (i, m) in found.iter().enumerate() {
            s.push_str(&format!(
                "{i},{},{},{},{},{}\n",
                io::fmt(m.alpha.re),
                io::fmt(m.alpha.im),
                m.multiplicity,
                2 * m.multiplicity,
                io::fmt(m.residual)
            ));
        }
        return Ok(Output::Csv(s));
    }
    let rows: Vec<Value> = found
        .iter()
        .map(|m| {
            json!({
                "alpha": { "re": m.alpha.re, "im": m.alpha.im },
                "multiplicity": m.multiplicity,
                "flat_bands": 2 * m.multiplicity,
                "residual": m.residual,
                "singular_values": m.singular_values,
            })
        })
        .collect();
    Ok(Output::Json(with(header("magic", cfg, None), json!({ "k_probe": k, "angles": rows }))))
}

#[derive(Args, Debug, Clone)]
pub struct BandsArgs {
    /// Points along the path.
    #[arg(long, default_value_t = 61)]
    pub points: usize,
    /// Bands closest to zero energy (split evenly about zero).
    #[arg(long, default_value_t = 6)]
    pub bands: usize,
    /// Path corners in dual coordinates, `a,b;c,d;...` (default K-Gamma-K'-K).
    #[arg(long)]
    pub path: Option<String>,
}

pub fn bands(cfg: &RunConfig, a: &BandsArgs) -> Result<Output> {
    if a.points < 2 || a.bands == 0 {
        bail!("bands: need at least 2 points and 1 band");
    }
    let corners = match &a.path {
        Some(p) => p.split(';').map(|s| parse_pair("path", s)).collect::<Result<Vec<_>>>()?,
        None => default_path(),
    };
    let alpha = resolve_alpha(cfg)?;
    let path = kpath(&corners, a.points);
    let half = a.bands.div_ceil(2);
    let sv = band_structure(&cfg.model, alpha, &path, cfg.cutoff, half)?;
    let energies: Vec<Vec<f64>> = sv
        .iter()
        .map(|s| {
            let mut e: Vec<f64> = s.iter().rev().map(|x| -x).chain(s.iter().copied()).collect();
            if e.len() > a.bands {
                e.remove(0);
            }
            e
        })
        .collect();
    if cfg.format == Format::Csv {
        let mut s = String::from("point,kx,ky,band,energy\n");
        for (i, (k, e)) in path.iter().zip(&energies).enumerate() {
            for (b, x) in e.iter().enumerate() {
                s.push_str(&format!("{i},{},{},{b},{}\n", io::fmt(k[0]), io::fmt(k[1]), io::fmt(*x)));
            }
        }
        return Ok(Output::Csv(s));
    }
    let max_flat = energies
        .iter()
        .map(|e| {
            let mut v: Vec<f64> = e.iter().map(|x| x.abs()).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect::<Vec<_>>();
    Ok(Output::Json(with(
        header("bands", cfg, Some(alpha)),
        json!({ "path_corners": corners, "k": path, "energies": energies, "abs_energy_sorted": max_flat }),
    )))
}

#[derive(Args, Debug, Clone)]
pub struct FormFactorArgs {
    /// Write the full table as CSV.
    #[arg(long = "dump-table")]
    pub dump_table: Option<std::path::PathBuf>,
    /// Write the flat-band basis dump.
    #[arg(long = "dump-basis")]
    pub dump_basis: Option<std::path::PathBuf>,
}

pub fn formfactor(cfg: &RunConfig, a: &FormFactorArgs) -> Result<Output> {
    let (alpha, basis, table) = pipeline(cfg)?;
    if let Some(p) = &a.dump_table {
        std::fs::write(p, table.to_csv())?;
    }
    if let Some(p) = &a.dump_basis {
        std::fs::write(p, io::dump_basis(&basis)?)?;
    }
    if cfg.format == Format::Csv {
        return Ok(Output::Csv(table.to_csv()));
    }
    let herm = uniqueness::a_blocks(&table, 0)
        .iter()
        .map(|(g, a)| {
            let (nq, ng) = table.negate(0, *g);
            debug_assert_eq!(nq, 0);
            table.a_block(0, nq, ng).map(|b| max_abs(&(a.adjoint() - b))).unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max);
    let body = json!({
        "identity_residual": table.identity_residual(),
        "dagger_residual": table.dagger_residual(),
        "shift_residual": formfactor::shift_residual(&basis, [1, 0])?,
        "block_residual": table.block_residual(),
        "sum_rule_residual": table.sum_rule_residual(),
        "gamma_dagger_residual": herm,
        "kernel_residual": basis.kernel_residual()?,
        "crossings": basis.crossings,
        "m": table.m,
        "shell_sizes": table.shells.iter().map(Vec::len).collect::<Vec<_>>(),
    });
    Ok(Output::Json(with(header("formfactor", cfg, Some(alpha)), body)))
}

#[derive(Args, Debug, Clone)]
pub struct HfArgs {
    /// Random half-filled states to evaluate besides the two FSDs.
    #[arg(long, default_value_t = 0)]
    pub random: usize,
}

pub fn hf(cfg: &RunConfig, a: &HfArgs) -> Result<Output> {
    let (alpha, _basis, table) = pipeline(cfg)?;
    let int = cfg.interaction();
    let cut = Cutoffs { plane_wave: cfg.cutoff, g_shell: table.g_cut };
    let name = cfg.kind.name();
    let mut states: Vec<(String, Vec<fbi::linalg::CMat>)> =
        vec![("fsd+".into(), hf::fsd(table.n_k(), table.m, 1)), ("fsd-".into(), hf::fsd(table.n_k(), table.m, -1))];
    for i in 0..a.random {
        states.push((format!("random-{i}"), hf::random_density(table.n_k(), table.m, cfg.seed.wrapping_add(i as u64))));
    }
    let mut rows = Vec::new();
    let mut csv = String::from("state,J,K,total,K_cs\n");
    for (label, p) in &states {
        let e = hf::energies(&table, &int, p);
        let kcs = hf::fock_cs(&table, &int, p)?;
        let rec = EnergyRecord::new(name, cfg.grid, alpha, e, cut, cfg.seed);
        csv.push_str(&format!("{label},{},{},{},{}\n", io::fmt(e.j), io::fmt(e.k), io::fmt(e.total), io::fmt(kcs)));
        let mut v = serde_json::to_value(&rec)?;
        if let Value::Object(o) = &mut v {
            o.insert("state".into(), json!(label));
            o.insert("K_cs".into(), json!(kcs));
        }
        rows.push(v);
    }
    if cfg.format == Format::Csv {
        return Ok(Output::Csv(csv));
    }
    Ok(Output::Json(with(header("hf", cfg, Some(alpha)), json!({ "records": rows }))))
}

#[derive(Args, Debug, Clone)]
pub struct EdArgs {
    /// Eigenvalues per particle-number sector.
    #[arg(long, default_value_t = 4)]
    pub eigs: usize,
    /// Diagonalise every sector rather than half filling and its neighbours.
    #[arg(long = "all-sectors")]
    pub all_sectors: bool,
}

pub fn ed(cfg: &RunConfig, a: &EdArgs) -> Result<Output> {
    let (alpha, _basis, table) = pipeline(cfg)?;
    let int = cfg.interaction();
    let space = FockSpace::new(table.n_k(), 2 * table.m)?;
    let h = Hamiltonian::build(&table, &int, space)?;
    let n_modes = space.n_modes();
    let half = n_modes / 2;
    let sectors: Vec<usize> = if a.all_sectors { (0..=n_modes).collect() } else { vec![half - 1, half, half + 1] };
    let mut rows = Vec::new();
    for &n in &sectors {
        for (i, e) in h.sector_spectrum(n, a.eigs)?.into_iter().enumerate() {
            rows.push(SpectrumRow { sector: n, index: i, energy: e });
        }
    }
    if cfg.format == Format::Csv {
        return Ok(Output::Csv(ed::spectrum_csv(&rows)));
    }
    let rhos = ed::all_rhos(&table, &int, &space)?;
    let min_e = rows.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
    let sector_min = |n: usize| rows.iter().filter(|r| r.sector == n).map(|r| r.energy).fold(f64::INFINITY, f64::min);
    let mut fsd = Vec::new();
    for sign in [1, -1] {
        let psi = ed::fsd_state(&space, sign);
        fsd.push(json!({
            "sign": sign,
            "energy": h.expectation(&psi),
            "frustration": ed::frustration(&rhos, &psi),
        }));
    }
    let uniform = vec![vec![c((1.0 / (table.n_k() * table.m) as f64).sqrt(), 0.0); table.m]; table.n_k()];
    let threshold = 0.01 * int.v([0.0, 0.0]) / (table.n_k() as f64 * lattice::CELL_AREA);
    let mut gaps = Vec::new();
    for sign in [1, -1] {
        for add in [false, true] {
            gaps.push(json!({
                "sign": sign,
                "direction": if add { "add" } else { "remove" },
                "analytic": hf::charge_gap(&table, &int, sign, add, &uniform)?,
                "ed": ed::excitation_energy(&h, sign, add, &uniform)?,
                "threshold": threshold,
            }));
        }
    }
    let body = json!({
        "n_modes": n_modes,
        "spectrum": rows,
        "min_eigenvalue": min_e,
        "sector_gap": { "minus": sector_min(half - 1) - sector_min(half), "plus": sector_min(half + 1) - sector_min(half) },
        "hermiticity_residual": h.hermiticity_residual(half),
        "fsd": fsd,
        "charge_gap": gaps,
    });
    Ok(Output::Json(with(header("ed", cfg, Some(alpha)), body)))
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    /// Real-space grid side for the evenness and determinant checks (0 skips them).
    #[arg(long = "r-grid", default_value_t = 64)]
    pub r_grid: usize,
}

pub fn verify(cfg: &RunConfig, a: &VerifyArgs) -> Result<Output> {
    let (alpha, basis, table) = pipeline(cfg)?;
    let r = (a.r_grid > 0).then_some(a.r_grid);
    let report = uniqueness::verdict(cfg.kind.name(), &basis, &table, cfg.seed, r)?;
    let body = serde_json::to_value(&report)?;
    Ok(Output::Json(with(header("verify", cfg, Some(alpha)), body)))
}

#[derive(Args, Debug, Clone)]
pub struct EllipticArgs {
    /// Momentum in dual coordinates (default: a generic point for tbg2, q1 otherwise).
    #[arg(long)]
    pub k: Option<String>,
    /// Real-space sampling grid side.
    #[arg(long = "r-grid", default_value_t = 64)]
    pub r_grid: usize,
    /// Random points for the theta and wp identities.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
}

fn special_function_checks(samples: usize, seed: u64) -> Result<Value> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let w = lattice::omega();
    let i = c(0.0, 1.0);
    let pi = std::f64::consts::PI;
    let (p1, p2) = elliptic::periods();
    let (mut t1, mut tw, mut rot, mut per, mut series) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-0.8..0.8));
        let t = elliptic::theta(z);
        let s = t.norm().max(1.0);
        t1 = t1.max((elliptic::theta(z + 1.0) + t).norm() / s);
        let qp = -(-i * pi * w - 2.0 * i * pi * z).exp() * t;
        tw = tw.max((elliptic::theta(z + w) - qp).norm() / qp.norm().max(1.0));
        let x = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let Ok(v) = elliptic::wp(x) else { continue };
        let sc = v.norm().max(1.0);
        rot = rot.max((elliptic::wp(w * x)? - w * v).norm() / sc);
        per = per.max((elliptic::wp(x + p1)? - v).norm() / sc).max((elliptic::wp(x + p2)? - v).norm() / sc);
        series = series.max((elliptic::wp_series(x)? - v).norm() / sc);
    }
    Ok(json!({
        "theta_shift_1": t1,
        "theta_shift_omega": tw,
        "wp_rotation": rot,
        "wp_periodicity": per,
        "wp_series_agreement": series,
    }))
}

fn in_span_defect(model: &ChiralModel, alpha: f64, cutoff: f64, k: Vec2, m: usize, x: &Sampled) -> Result<f64> {
    let st = flat_state(model, alpha, cutoff, k, Some(m))?;
    let mut captured = 0.0;
    for b in 0..m {
        captured += Sampled::from_state(model, &st, b, x.n).inner(x).norm_sqr();
    }
    Ok((1.0 - captured / x.inner(x).re).abs())
}

pub fn elliptic_cmd(cfg: &RunConfig, a: &EllipticArgs) -> Result<Output> {
    let special = special_function_checks(a.samples, cfg.seed)?;
    let alpha = resolve_alpha(cfg)?;
    let n = a.r_grid;
    let cut = cfg.cutoff;
    let default_k = if cfg.kind == ModelKind::Tbg2 { [0.3, -0.2] } else { lattice::to_dual(Q1) };
    let kd = match &a.k {
        Some(s) => parse_pair("k", s)?,
        None => default_k,
    };
    let k = lattice::from_dual(kd);
    let oracle = match cfg.kind {
        ModelKind::Tbg2 => {
            let u0 = flat_state(&cfg.model, alpha, cut, [0.0, 0.0], Some(1))?;
            let cf = elliptic::closed_form_flatband(&cfg.model, &u0, k, n)?;
            let num = Sampled::from_state(&cfg.model, &flat_state(&cfg.model, alpha, cut, k, Some(1))?, 0, n);
            let (zero, _) = cf.argmin();
            let predicted = elliptic::predicted_zero(k);
            json!({
                "overlap": cf.overlap(&num),
                "operator_residual": elliptic::operator_residual(&cfg.model, alpha, k, cut, &cf)?,
                "zero": zero,
                "predicted_zero": predicted,
                "zero_distance": elliptic::lattice_distance(zero, predicted),
                "grid_cell": elliptic::grid_spacing(n),
            })
        }
        ModelKind::Tbg4 => {
            let st0 = flat_state(&cfg.model, alpha, cut, [0.0, 0.0], Some(2))?;
            let (v, w) = elliptic::tbg4_oracle(&cfg.model, &st0, k, n)?;
            json!({
                "v_residual": elliptic::operator_residual(&cfg.model, alpha, k, cut, &v)?,
                "w_residual": elliptic::operator_residual(&cfg.model, alpha, k, cut, &w)?,
                "v_in_span_defect": in_span_defect(&cfg.model, alpha, cut, k, 2, &v)?,
                "w_in_span_defect": in_span_defect(&cfg.model, alpha, cut, k, 2, &w)?,
                "inner_wv": w.inner(&v).norm(),
                "v_min": v.argmin().0,
                "w_min": w.argmin().0,
                "r_s": elliptic::r_s(),
            })
        }
        ModelKind::Ettg4 => {
            let tbg = ChiralModel::tbg(Potential::u0());
            let a_tbg = alpha / 2f64.sqrt();
            let u0 = flat_state(&tbg, a_tbg, cut, [0.0, 0.0], Some(1))?;
            let (v, w) = elliptic::ettg4_oracle(&tbg, &u0, k, n)?;
            let gram = (v.inner(&w).norm() / (v.norm() * w.norm())).powi(2);
            json!({
                "tbg_alpha": a_tbg,
                "v_residual": elliptic::operator_residual(&cfg.model, alpha, k, cut, &v)?,
                "w_residual": elliptic::operator_residual(&cfg.model, alpha, k, cut, &w)?,
                "v_in_span_defect": in_span_defect(&cfg.model, alpha, cut, k, 2, &v)?,
                "w_in_span_defect": in_span_defect(&cfg.model, alpha, cut, k, 2, &w)?,
                "independence": 1.0 - gram,
            })
        }
        ModelKind::NLayer => bail!("elliptic: closed forms exist only for tbg2, tbg4 and ettg4"),
    };
    Ok(Output::Json(with(header("elliptic", cfg, Some(alpha)), json!({ "k_dual": kd, "special_functions": special, "oracle": oracle }))))
}
