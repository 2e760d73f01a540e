//! Parameter certification and construction.
//!
//! Four inequality families are evaluated for every cycle saddle `O_k`,
//! `k = 1..p`, with cycle indices taken modulo `p`:
//!
//! * **unstable**: both `lambda_{k+1}^k` and `lambda_{k+2}^k` are positive;
//! * **stable**: every other off-axis eigenvalue `lambda_j^k` is negative;
//! * **dissipative**: the strongest unstable eigenvalue is weaker than every
//!   stable one, `-sigma_k` included;
//! * **p23**: `sigma_{k+1}/rho_{k+1,k} <= sigma_{k+2}/rho_{k+2,k}`, the
//!   nullcline-plane ordering that yields a compact invariant region.
//!
//! Every margin is the plain difference of the two sides, signed so that a
//! positive value means the inequality holds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::geometry3d::{p3_box_scan, restrict_triple};
use crate::model::{eigenvalue, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Unstable,
    Stable,
    Dissipative,
    P23,
}

/// One violated inequality. `j` names the offending direction where the
/// family is indexed by one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub family: Family,
    pub k: usize,
    pub j: Option<usize>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleConditions {
    pub k: usize,
    pub unstable_ok: bool,
    pub stable_ok: bool,
    pub dissipative_ok: bool,
    pub p23_ok: bool,
    pub nu: f64,
    pub unstable_margin: f64,
    pub stable_margin: f64,
    pub dissipative_margin: f64,
    pub p23_margin: f64,
    /// Largest `dx_2/dt` found on the interior grid of `P_3 ∩ B` for the
    /// triple starting at `k`. Negative means the box-restricted
    /// domination holds on the grid; advisory only.
    pub box_p23_max_dx2: f64,
    pub box_p23_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub saddles: Vec<SaddleConditions>,
    pub hyperbolic_cycle: bool,
    pub unstable_ok: bool,
    pub stable_ok: bool,
    pub dissipative_ok: bool,
    pub p23_ok: bool,
    pub all_pass: bool,
    pub violations: Vec<Violation>,
}

/// Grid resolution of the box-restricted advisory scan.
pub const BOX_SCAN_GRID: usize = 200;

/// Directions that must be stable at `O_k`: everything except `k`, `k+1`,
/// `k+2` (mod `p`).
pub fn stable_directions(params: &SystemParams, k: usize) -> Vec<usize> {
    let (k1, k2) = (params.cyc(k, 1), params.cyc(k, 2));
    (1..=params.n()).filter(|&j| j != k && j != k1 && j != k2).collect()
}

fn saddle_conditions(params: &SystemParams, k: usize, violations: &mut Vec<Violation>) -> SaddleConditions {
    let sk = params.sigma_of(k);
    let (k1, k2) = (params.cyc(k, 1), params.cyc(k, 2));

    let lam1 = eigenvalue(params, k, k1);
    let lam2 = eigenvalue(params, k, k2);
    for (j, lam) in [(k1, lam1), (k2, lam2)] {
        if !(lam > 0.0) {
            violations.push(Violation {
                family: Family::Unstable,
                k,
                j: Some(j),
                margin: lam,
            });
        }
    }
    let unstable_margin = lam1.min(lam2);

    let mut stable_margin = f64::INFINITY;
    let mut weakest_stable = sk;
    for j in stable_directions(params, k) {
        let lam = eigenvalue(params, k, j);
        if !(lam < 0.0) {
            violations.push(Violation {
                family: Family::Stable,
                k,
                j: Some(j),
                margin: -lam,
            });
        }
        stable_margin = stable_margin.min(-lam);
        weakest_stable = weakest_stable.min(lam.abs());
    }

    let strongest_unstable = lam1.max(lam2);
    let dissipative_margin = weakest_stable - strongest_unstable;
    if !(dissipative_margin > 0.0) {
        violations.push(Violation {
            family: Family::Dissipative,
            k,
            j: None,
            margin: dissipative_margin,
        });
    }

    let p23_margin = params.sigma_of(k2) / params.rho(k2, k) - params.sigma_of(k1) / params.rho(k1, k);
    if !(p23_margin >= 0.0) {
        violations.push(Violation {
            family: Family::P23,
            k,
            j: None,
            margin: p23_margin,
        });
    }

    let box_p23_max_dx2 = p3_box_scan(&restrict_triple(params, k), BOX_SCAN_GRID).max_dx2;

    SaddleConditions {
        k,
        unstable_ok: unstable_margin > 0.0,
        stable_ok: stable_margin > 0.0,
        dissipative_ok: dissipative_margin > 0.0,
        p23_ok: p23_margin >= 0.0,
        nu: weakest_stable / strongest_unstable,
        unstable_margin,
        stable_margin,
        dissipative_margin,
        p23_margin,
        box_p23_max_dx2,
        box_p23_ok: box_p23_max_dx2 < 0.0,
    }
}

/// Evaluates every inequality family for every cycle saddle.
pub fn check_all(params: &SystemParams) -> ConditionReport {
    let mut violations = Vec::new();
    let saddles: Vec<SaddleConditions> = (1..=params.p())
        .map(|k| saddle_conditions(params, k, &mut violations))
        .collect();
    let unstable_ok = saddles.iter().all(|s| s.unstable_ok);
    let stable_ok = saddles.iter().all(|s| s.stable_ok);
    let dissipative_ok = saddles.iter().all(|s| s.dissipative_ok);
    let p23_ok = saddles.iter().all(|s| s.p23_ok);
    let hyperbolic_cycle = saddles.iter().all(|s| s.unstable_ok && s.stable_ok);
    ConditionReport {
        saddles,
        hyperbolic_cycle,
        unstable_ok,
        stable_ok,
        dissipative_ok,
        p23_ok,
        all_pass: hyperbolic_cycle && dissipative_ok && p23_ok,
        violations,
    }
}

/// The worked example: `sigma_i = 1`, `rho_{k+1,k} = 0.9`, `rho_{k+2,k} = 0.8`,
/// `rho_jk = 1.3` for every other off-diagonal entry, `n = p = 5`.
pub fn canonical_p5() -> SystemParams {
    let n = 5;
    let mut rho = vec![vec![1.3; n]; n];
    for k in 1..=n {
        rho[k - 1][k - 1] = 1.0;
        rho[super::model::cyc(n, k, 1) - 1][k - 1] = 0.9;
        rho[super::model::cyc(n, k, 2) - 1][k - 1] = 0.8;
    }
    SystemParams::new(n, n, vec![1.0; n], rho).expect("canonical parameters are valid")
}

/// Lower cut-off for the unstable-direction inhibitions.
const EPS0: f64 = 0.05;
/// Fraction of each admissible interval trimmed from both ends so sampled
/// eigenvalues stay away from zero.
const INTERIOR: f64 = 0.1;

fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let pad = INTERIOR * (hi - lo);
    rng.random_range(lo + pad..hi - pad)
}

/// Draws a parameter set satisfying every family, following the constructive
/// argument: pick `sigma`, then `rho_{k+1,k}` and `rho_{k+2,k}` under the
/// unstable, p23 and dissipative constraints, then make every remaining
/// `rho_jk` large enough for the stable and dissipative ones.
///
/// Deterministic in `seed`.
pub fn sample_params(n: usize, p: usize, seed: u64) -> crate::Result<SystemParams> {
    if p == 3 {
        return Err(crate::Error::Unsupported(
            "p = 3 is not a supported cycle length".into(),
        ));
    }
    if p < 4 || p > n {
        return Err(crate::Error::InvalidInput(format!(
            "cycle length p = {p} must satisfy 4 <= p <= n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let s = |i: usize| sigma[i - 1];
    let mut rho = vec![vec![0.0; n]; n];
    for (i, row) in rho.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    for k in 1..=p {
        let (k1, k2) = (super::model::cyc(p, k, 1), super::model::cyc(p, k, 2));
        // rho_{k+1,k}: unstable needs < s1/sk; dissipative (sigma_k term)
        // needs > s1/sk - 1; the p23 window for rho_{k+2,k} must stay open.
        let hi1 = s(k1) / s(k);
        let lo1 = [EPS0, hi1 - 1.0, hi1 - s(k1) / s(k2), EPS0 * s(k1) / s(k2)]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let r1 = draw(&mut rng, lo1, hi1);
        // rho_{k+2,k}: p23 caps it at r1 * s2/s1, which also keeps it under s2/sk.
        let hi2 = r1 * s(k2) / s(k1);
        let lo2 = EPS0.max(s(k2) / s(k) - 1.0);
        let r2 = draw(&mut rng, lo2, hi2);
        rho[k1 - 1][k - 1] = r1;
        rho[k2 - 1][k - 1] = r2;

        for j in (1..=n).filter(|&j| j != k && j != k1 && j != k2) {
            let bound = [(k1, r1), (k2, r2)]
                .iter()
                .map(|&(ki, ri)| (s(ki) + s(j)) / s(k) - ri)
                .fold(s(j) / s(k), f64::max);
            rho[j - 1][k - 1] = bound + rng.random_range(0.05..1.0);
        }
    }
    // Columns of saddles outside the cycle are unconstrained.
    for k in p + 1..=n {
        for j in (1..=n).filter(|&j| j != k) {
            rho[j - 1][k - 1] = rng.random_range(0.5..1.5);
        }
    }
    SystemParams::new(n, p, sigma, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spectrum_at;

    #[test]
    fn canonical_values() {
        let params = canonical_p5();
        assert_eq!(params.rho(2, 1), 0.9);
        assert_eq!(params.rho(3, 1), 0.8);
        assert_eq!(params.rho(4, 1), 1.3);
        assert_eq!(params.rho(5, 1), 1.3);
        assert_eq!(params.rho(1, 5), 0.9);
        assert_eq!(params.rho(1, 4), 0.8);
        assert_eq!(params.rho(1, 1), 1.0);
    }

    #[test]
    fn canonical_passes_everything() {
        let report = check_all(&canonical_p5());
        assert!(report.all_pass);
        assert!(report.violations.is_empty());
        for s in &report.saddles {
            assert!((s.nu - 1.5).abs() < 1e-12);
            assert!(s.unstable_margin > 0.0 && s.stable_margin > 0.0);
            assert!(s.dissipative_margin > 0.0 && s.p23_margin > 0.0);
            assert!(s.box_p23_ok);
        }
    }

    #[test]
    fn weak_stable_inhibition_fails_at_k1_j4() {
        let params = canonical_p5().with_rho(4, 1, 0.95).unwrap();
        let report = check_all(&params);
        assert!(!report.stable_ok);
        assert!(!report.saddles[0].stable_ok);
        let v = report.violations.iter().find(|v| v.family == Family::Stable).unwrap();
        assert_eq!((v.k, v.j), (1, Some(4)));
        // lambda_4^1 = sigma_4 - rho_41 sigma_1 = 0.05, i.e. a margin of -0.05.
        assert!((v.margin + 0.05).abs() < 1e-12);
    }

    #[test]
    fn swapped_inhibitions_break_p23() {
        let mut params = canonical_p5();
        for k in 1..=5 {
            params = params.with_rho(params.cyc(k, 1), k, 0.7).unwrap();
            params = params.with_rho(params.cyc(k, 2), k, 0.9).unwrap();
        }
        let report = check_all(&params);
        assert!(!report.p23_ok);
        assert!(report.saddles.iter().all(|s| !s.p23_ok));
        assert!((report.saddles[0].p23_margin - (1.0 / 0.9 - 1.0 / 0.7)).abs() < 1e-12);
        assert!(report.unstable_ok && report.stable_ok);
    }

    #[test]
    fn sampler_is_deterministic_and_valid() {
        for seed in 0..20 {
            let a = sample_params(5, 5, seed).unwrap();
            assert_eq!(a, sample_params(5, 5, seed).unwrap());
            assert!(check_all(&a).all_pass, "seed {seed}");
        }
        assert_ne!(sample_params(5, 5, 1).unwrap(), sample_params(5, 5, 2).unwrap());
    }

    #[test]
    fn sampler_handles_external_coordinates() {
        let params = sample_params(9, 6, 3).unwrap();
        let report = check_all(&params);
        assert!(report.all_pass, "{:?}", report.violations);
        for k in 1..=6 {
            let spec = spectrum_at(&params, k).unwrap();
            assert_eq!(spec.unstable_set.len(), 2);
        }
    }

    #[test]
    fn stable_directions_skip_the_triple() {
        let params = canonical_p5();
        assert_eq!(stable_directions(&params, 4), vec![2, 3]);
    }
}
