//! Text, CSV and JSON exchange formats.
//!
//! The flat-band dump is a small header of `# key value` lines followed by a
//! CSV table `k,band,G1,G2,sigma,j,re,im`. Bands are signed (`1..M` on the A
//! sublattice, `-1..-M` on B) and values are the Fourier coefficients
//! normalised to `sum |u(G)|^2 = |Omega|`. Floats in the dump round-trip
//! exactly; reports use 12 significant digits.

use crate::chiral::ChiralModel;
use crate::error::{FbiError, Result};
use crate::flatband::{FlatBandBasis, KState};
use crate::hf::Energies;
use crate::lattice::{KGrid, CELL_AREA};
use crate::linalg::CMat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

const DUMP_MAGIC: &str = "# fbi flat-band basis v1";

/// Float with 12 significant digits.
pub fn fmt(x: f64) -> String {
    format!("{x:.11e}")
}

/// `x` rounded to 12 significant digits, for JSON output.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        fmt(x).parse().unwrap_or(x)
    } else {
        x
    }
}

/// Plane-wave and form-factor cutoffs used by a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub plane_wave: f64,
    pub g_shell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub grid: [usize; 2],
    pub alpha: f64,
    pub model: String,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub total: f64,
    pub cutoffs: Cutoffs,
    pub seed: u64,
}

impl EnergyRecord {
    pub fn new(model: &str, grid: KGrid, alpha: f64, e: Energies, cutoffs: Cutoffs, seed: u64) -> Self {
        EnergyRecord {
            grid: [grid.nkx, grid.nky],
            alpha: round12(alpha),
            model: model.to_string(),
            j: round12(e.j),
            k: round12(e.k),
            total: round12(e.total),
            cutoffs,
            seed,
        }
    }
}

pub fn dump_basis(b: &FlatBandBasis) -> Result<String> {
    let model = serde_json::to_string(&b.model).map_err(|e| FbiError::Parse(e.to_string()))?;
    let crossings: Vec<String> = b.crossings.iter().map(|c| c.to_string()).collect();
    let mut s = String::new();
    s.push_str(DUMP_MAGIC);
    s.push('\n');
    s.push_str(&format!("# model {model}\n"));
    s.push_str(&format!("# alpha {:e}\n", b.alpha));
    s.push_str(&format!("# cutoff {:e}\n", b.cutoff));
    s.push_str(&format!("# grid {} {}\n", b.grid.nkx, b.grid.nky));
    s.push_str(&format!("# m {}\n", b.m));
    s.push_str(&format!("# crossings {}\n", crossings.join(" ")));
    s.push_str("k,band,G1,G2,sigma,j,re,im\n");
    let scale = CELL_AREA.sqrt();
    for (k, st) in b.states.iter().enumerate() {
        for band in 0..2 * b.m {
            let (label, sigma) = if band < b.m { (band as i64 + 1, 0) } else { (-((band - b.m) as i64 + 1), 1) };
            for &(j, g) in &st.entries {
                let z = st.amplitude(band, sigma, j, g) * scale;
                s.push_str(&format!("{k},{label},{},{},{sigma},{j},{:e},{:e}\n", g[0], g[1], z.re, z.im));
            }
        }
    }
    Ok(s)
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> FbiError {
    FbiError::Parse(format!("basis dump line {line}: {msg}"))
}

/// Inverse of [`dump_basis`]. The B-sublattice rows are checked against the
/// conjugates of the A rows.
pub fn load_basis(text: &str) -> Result<FlatBandBasis> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == DUMP_MAGIC => {}
        _ => return Err(parse_err(1, "missing header")),
    }
    let mut header: HashMap<String, String> = HashMap::new();
    for (n, l) in lines.by_ref() {
        if let Some(rest) = l.strip_prefix("# ") {
            let (key, val) = rest.split_once(' ').unwrap_or((rest, ""));
            header.insert(key.to_string(), val.trim().to_string());
        } else if l.trim() == "k,band,G1,G2,sigma,j,re,im" {
            break;
        } else {
            return Err(parse_err(n + 1, "expected header or column names"));
        }
    }
    let get = |key: &str| header.get(key).ok_or_else(|| FbiError::Parse(format!("basis dump: missing `{key}`")));
    let model: ChiralModel = serde_json::from_str(get("model")?).map_err(|e| FbiError::Parse(e.to_string()))?;
    let num = |key: &str| -> Result<f64> { get(key)?.parse().map_err(|_| FbiError::Parse(format!("basis dump: bad `{key}`"))) };
    let alpha = num("alpha")?;
    let cutoff = num("cutoff")?;
    let m = num("m")? as usize;
    let dims: Vec<usize> = get("grid")?.split_whitespace().filter_map(|x| x.parse().ok()).collect();
    if dims.len() != 2 {
        return Err(FbiError::Parse("basis dump: bad `grid`".into()));
    }
    let grid = KGrid::new(dims[0], dims[1])?;
    let crossings: Vec<usize> = get("crossings")?
        .split_whitespace()
        .map(|x| x.parse().map_err(|_| FbiError::Parse("basis dump: bad `crossings`".into())))
        .collect::<Result<_>>()?;

    let mut entries: Vec<Vec<(usize, [i32; 2])>> = vec![Vec::new(); grid.len()];
    let mut index: Vec<HashMap<(usize, [i32; 2]), usize>> = vec![HashMap::new(); grid.len()];
    let mut a_vals: Vec<HashMap<(usize, usize), C64>> = vec![HashMap::new(); grid.len()];
    let mut b_vals: Vec<Vec<(usize, usize, [i32; 2], C64)>> = vec![Vec::new(); grid.len()];
    for (n, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 8 {
            return Err(parse_err(n + 1, "expected 8 columns"));
        }
        let int = |i: usize| -> Result<i64> { f[i].trim().parse().map_err(|_| parse_err(n + 1, format!("bad integer `{}`", f[i]))) };
        let flt = |i: usize| -> Result<f64> { f[i].trim().parse().map_err(|_| parse_err(n + 1, format!("bad number `{}`", f[i]))) };
        let (k, band, g, sigma, j) = (int(0)? as usize, int(1)?, [int(2)? as i32, int(3)? as i32], int(4)?, int(5)? as usize);
        let z = C64::new(flt(6)?, flt(7)?) / CELL_AREA.sqrt();
        if k >= grid.len() || band == 0 || band.unsigned_abs() as usize > m || j >= model.n_layers {
            return Err(parse_err(n + 1, "index out of range"));
        }
        match (band > 0, sigma) {
            (true, 0) => {
                let row = *index[k].entry((j, g)).or_insert_with(|| {
                    entries[k].push((j, g));
                    entries[k].len() - 1
                });
                a_vals[k].insert((row, band as usize - 1), z);
            }
            (false, 1) => b_vals[k].push(((-band) as usize - 1, j, g, z)),
            _ => return Err(parse_err(n + 1, "band sign and sublattice disagree")),
        }
    }

    let mut states = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let n = entries[k].len();
        if n == 0 {
            return Err(FbiError::Parse(format!("basis dump: no rows for k index {k}")));
        }
        let mut coeffs = CMat::zeros(n, m);
        for (&(row, b), &z) in &a_vals[k] {
            coeffs[(row, b)] = z;
        }
        for &(b, j, g, z) in &b_vals[k] {
            let row = index[k].get(&(j, g)).ok_or_else(|| FbiError::Parse(format!("basis dump: B row without A partner at k index {k}")))?;
            if (coeffs[(*row, b)].conj() - z).norm() > 1e-12 {
                return Err(FbiError::Parse(format!("basis dump: B rows are not the sublattice images at k index {k}")));
            }
        }
        states.push(KState::new(grid.point(k), entries[k].clone(), coeffs, model.n_layers));
    }
    Ok(FlatBandBasis { model, alpha, cutoff, grid, m, states, crossings })
}
