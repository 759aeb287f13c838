use std::collections::BTreeMap;

use crate::classical::ratio;
use crate::error::{Error, Result};
use crate::measure::{Density, RandomVariable};

use super::ProblemSpec;

/// Smallest `z` such that `X* = K₂` where `H_{Q*} > z G_{P*}`, `X* = K₁`
/// where `H_{Q*} < z G_{P*}`, together with the boundary values of `X*` on
/// `{H_{Q*} = z G_{P*}}`.
///
/// Ratios use `c/0 = +∞` for `c > 0` and `0/0 = 0`; ratios within a relative
/// `tol` count as equal. Atoms with `K₁ = K₂` carry no information and are
/// skipped.
pub fn infer_threshold(
    spec: &ProblemSpec,
    x_star: &RandomVariable,
    q_star: &Density,
    p_star: &Density,
    tol: f64,
) -> Result<(f64, BTreeMap<usize, f64>)> {
    let scan = scan(spec, x_star.values(), q_star.values(), p_star.values(), tol);
    match scan.found {
        Some(found) => Ok(found),
        None => Err(Error::StructureViolation(format!(
            "every candidate threshold leaves a deviation of at least {:e}",
            scan.deviation
        ))),
    }
}

/// Threshold data when `γ_α` vanishes: `z = 0` and the boundary is where
/// `Q*` has no mass.
pub(crate) fn trivial_threshold(
    spec: &ProblemSpec,
    x_star: &RandomVariable,
    q_star: &Density,
) -> (f64, BTreeMap<usize, f64>) {
    let boundary = (0..spec.len())
        .filter(|&i| !spec.pinned(i) && q_star.values()[i] == 0.0)
        .map(|i| (i, x_star.values()[i]))
        .collect();
    (0.0, boundary)
}

/// Smallest deviation from threshold form over all candidate `z`. A missing
/// `P*` is read as `G_{P*} = 0`.
pub(crate) fn structure_deviation(
    spec: &ProblemSpec,
    x_star: &RandomVariable,
    q_star: &Density,
    p_star: Option<&Density>,
    tol: f64,
) -> f64 {
    let zeros = vec![0.0; spec.len()];
    let p = p_star.map_or(&zeros[..], |p| p.values());
    scan(spec, x_star.values(), q_star.values(), p, tol).deviation
}

struct Scan {
    found: Option<(f64, BTreeMap<usize, f64>)>,
    deviation: f64,
}

fn scan(spec: &ProblemSpec, x: &[f64], q: &[f64], p: &[f64], tol: f64) -> Scan {
    let (k1, k2) = (spec.k1.values(), spec.k2.values());
    let free: Vec<usize> = (0..x.len()).filter(|&i| !spec.pinned(i)).collect();
    let ratios: Vec<f64> = (0..x.len()).map(|i| ratio(q[i], p[i])).collect();

    let mut candidates: Vec<f64> = free
        .iter()
        .map(|&i| ratios[i])
        .filter(|r| r.is_finite())
        .chain([0.0, f64::INFINITY])
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let equal = |r: f64, z: f64| {
        if z.is_infinite() || r.is_infinite() {
            r == z
        } else {
            (r - z).abs() <= tol * z.abs().max(1.0)
        }
    };

    let mut least = f64::INFINITY;
    for &z in &candidates {
        let mut deviation: f64 = 0.0;
        let mut boundary = BTreeMap::new();
        for &i in &free {
            let box_violation = (k1[i] - x[i]).max(x[i] - k2[i]).max(0.0);
            let d = if equal(ratios[i], z) {
                boundary.insert(i, x[i]);
                box_violation
            } else if ratios[i] > z {
                (k2[i] - x[i]).abs()
            } else {
                (x[i] - k1[i]).abs()
            };
            deviation = deviation.max(d);
        }
        least = least.min(deviation);
        if deviation <= tol {
            return Scan {
                found: Some((z, boundary)),
                deviation,
            };
        }
    }
    Scan {
        found: None,
        deviation: least,
    }
}
