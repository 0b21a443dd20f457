//! Speed bounds from quadratic test functions.
//!
//! Upper bounds use `f(x) = (x+1)/2 - (x^2-1)/(2(N-2))`: with
//! `S(alpha) = L_alpha f` at `v = 1`, every configuration satisfies
//! `L_alpha f >= 0` once `v >= 1 + max_alpha(-S(alpha))`. The lower bound is
//! asymptotic and comes from optimising the parameter `B` of
//! `g(x) = -(x^2-1)/(2(N-2)) + B(x+1)` against two families of scenarios.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::config_algebra::{
    all_configurations, drift_functional, drift_sum, worst_case_candidates, Configuration, TestFunction,
};
use crate::error::{Error, Result};
use crate::scalar::{rational_string, Scalar};
use crate::Rational;

fn q(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Size {
    Finite(usize),
    Asymptotic,
}

impl Serialize for Size {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Size::Finite(n) => s.serialize_u64(*n as u64),
            Size::Asymptotic => s.serialize_str("asymptotic"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    Configuration(Vec<usize>),
    /// Number of equal levels in the asymptotic family.
    Levels(u32),
    Scenario { b: f64, y: f64, z: f64 },
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    #[serde(rename = "N")]
    pub n: Size,
    pub direction: Direction,
    pub value: f64,
    /// Exact value when the bound is rational.
    #[serde(serialize_with = "ser_opt_rational")]
    pub exact: Option<Rational>,
    pub witness: Witness,
    pub method: String,
}

fn ser_opt_rational<S: Serializer>(x: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(r) => s.serialize_str(&rational_string(r)),
        None => s.serialize_none(),
    }
}

/// `f(x) = (x+1)/2 - (x^2-1)/(2(N-2))`.
pub fn upper_test_function<S: Scalar>(n: usize) -> Result<TestFunction<S>> {
    if n < 4 {
        return Err(Error::contract(format!("upper test function needs N >= 4, got {n}")));
    }
    Ok(TestFunction::quadratic(n, S::ratio(-1, 2 * (n as i64 - 2)), S::ratio(1, 2)))
}

/// `S(alpha)` for the upper test function.
pub fn s_value(alpha: &Configuration) -> Result<Rational> {
    let f = upper_test_function::<Rational>(alpha.n())?;
    drift_functional(alpha, &f, &Rational::one())
}

fn best_of(scored: Vec<(Rational, Configuration)>) -> (Rational, Configuration) {
    // largest -S; ties go to the lexicographically smallest alpha
    scored
        .into_iter()
        .map(|(s, c)| (-s, c))
        .reduce(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
        .expect("non-empty candidate list")
}

fn upper_report(n: usize, worst: Rational, c: Configuration, method: &str) -> BoundReport {
    let exact = Rational::one() + worst;
    BoundReport {
        n: Size::Finite(n),
        direction: Direction::Upper,
        value: exact.to_f64_lossy(),
        exact: Some(exact),
        witness: Witness::Configuration(c.alpha().to_vec()),
        method: method.into(),
    }
}

/// `1 + max(-S(alpha))` over the candidate worst configurations.
pub fn finite_upper_bound(n: usize) -> Result<BoundReport> {
    let f = upper_test_function::<Rational>(n)?;
    let one = Rational::one();
    let scored = worst_case_candidates(n)?
        .into_iter()
        .map(|(_, c)| Ok((drift_functional(&c, &f, &one)?, c)))
        .collect::<Result<Vec<_>>>()?;
    let (worst, c) = best_of(scored);
    Ok(upper_report(n, worst, c, "candidate-list"))
}

/// Same bound certified over all `2^(N-2)` configurations.
pub fn finite_upper_bound_exhaustive(n: usize) -> Result<BoundReport> {
    if !(5..=20).contains(&n) {
        return Err(Error::UnsupportedSize {
            n,
            hint: "exhaustive certification enumerates 2^(N-2) configurations; use 5 <= N <= 20".into(),
        });
    }
    let f = upper_test_function::<Rational>(n)?;
    let one = Rational::one();
    let scored = all_configurations(n)
        .into_par_iter()
        .map(|c| (drift_functional(&c, &f, &one).expect("sizes match"), c))
        .collect();
    let (worst, c) = best_of(scored);
    Ok(upper_report(n, worst, c, "all-configurations"))
}

/// Stated closed form of the finite-N upper bound, by residue of `N` mod 3.
pub fn closed_form_upper_bound(n: usize) -> Result<Rational> {
    if n < 5 {
        return Err(Error::contract(format!("closed forms hold for N >= 5, got {n}")));
    }
    let n = n as i64;
    let excess = match n % 3 {
        0 => q(n * (7 * n - 9), 27 * (n * n - 3 * n + 2)),
        1 => q(7 * n * n - 2 * n - 5, 27 * n * (n - 2)),
        _ => q(7 * n * n * n - 9 * n * n - 3 * n + 13, 27 * n * (n * n - 3 * n + 2)),
    };
    Ok(Rational::one() + excess)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedFormEntry {
    pub case: &'static str,
    /// Occupancy vector as printed; may fail to be a configuration of `N`.
    pub alpha: Vec<usize>,
    #[serde(serialize_with = "ser_rational")]
    pub closed_form: Rational,
    /// `S` evaluated on `alpha` through the telescoped drift sum.
    #[serde(serialize_with = "ser_rational")]
    pub direct: Rational,
    pub is_configuration: bool,
}

fn ser_rational<S: Serializer>(x: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rational_string(x))
}

/// The nine stated `S(alpha)` closed forms next to a direct evaluation.
pub fn closed_form_table(n: usize) -> Result<Vec<ClosedFormEntry>> {
    if n < 5 {
        return Err(Error::contract(format!("closed forms hold for N >= 5, got {n}")));
    }
    let f = upper_test_function::<Rational>(n)?;
    let ni = n as i64;
    let p2 = ni * ni - 3 * ni + 2;
    let mut rows: Vec<(&'static str, Vec<usize>, Rational)> = vec![
        ("i", vec![n], Rational::zero()),
        ("ii", vec![n - 1, 1], q(-(ni - 1), ni * (ni - 2))),
        ("iii", vec![n - 2, 2], q(-2, ni)),
    ];
    if n % 2 == 0 {
        let h = n / 2;
        rows.push(("iv", vec![h, h], q(-ni, 4 * (ni - 2))));
        rows.push(("v", vec![h, h - 1, 1], q(-ni * ni * ni + ni * ni + 2 * ni - 4, 4 * ni * p2)));
        rows.push(("vi", vec![h - 1, h - 1, 2], q(-(ni * ni + ni + 2), 4 * ni * (ni - 1))));
    } else {
        rows.push(("iv", vec![(n - 1) / 2, (n + 1) / 2], q(-(ni * ni - 1), 4 * ni * (ni - 2))));
        rows.push(("v", vec![(n + 1) / 2, (n - 1) / 2, 1], q(-(ni + 1).pow(3), 4 * ni * p2)));
        rows.push(("vi", vec![(n - 1) / 2, (n - 3) / 2, 2], q(-(ni * ni - 1), 4 * ni * (ni - 2))));
    }
    let t = n / 3;
    match n % 3 {
        0 => {
            rows.push(("vii", vec![t, t, t], q(-ni * (7 * ni - 9), 27 * p2)));
            rows.push(("viii", vec![t, t, t - 1, 1], q(-(7 * ni.pow(3) - 12 * ni * ni + 27), 27 * ni * p2)));
            rows.push((
                "ix",
                vec![t, t - 1, t - 1, 2],
                q(-(7 * ni.pow(3) - 15 * ni * ni + 27 * ni - 27), 27 * ni * p2),
            ));
        }
        1 => {
            rows.push(("vii", vec![t + 1, t, t], q(-7 * ni * ni + 2 * ni + 5, 27 * ni * (ni - 2))));
            rows.push(("viii", vec![t, t, t, 1], q(-7 * ni * ni + 5 * ni + 2, 27 * ni * (ni - 2))));
            rows.push(("ix", vec![t, t, t - 1, 2], q(-(7 * ni * ni - 8 * ni + 19), 27 * ni * (ni - 2))));
        }
        _ => {
            rows.push((
                "vii",
                vec![t + 1, t + 1, t],
                q(-7 * ni.pow(3) + 9 * ni * ni + 3 * ni - 13, 27 * ni * p2),
            ));
            rows.push(("viii", vec![t + 1, t, t, 1], q(-(7 * ni.pow(3) - 12 * ni * ni + 19), 27 * ni * p2)));
            rows.push(("ix", vec![t, t, t, 2], q(-(7 * ni * ni - ni + 28), 27 * ni * (ni - 1))));
        }
    }
    let one = Rational::one();
    Ok(rows
        .into_iter()
        .map(|(case, alpha, closed_form)| {
            let direct = drift_sum(&alpha, &f, &one);
            let is_configuration =
                alpha.iter().sum::<usize>() == n && Configuration::new(alpha.clone()).is_ok();
            ClosedFormEntry {
                case,
                alpha,
                closed_form,
                direct,
                is_configuration,
            }
        })
        .collect())
}

/// Limit of `S` over `k` equal levels of `N/k` counters:
/// `-2(k^2-1)/(3k^2) + (k+1)/(2k) - 1/k`.
pub fn asymptotic_s(k: u32) -> Rational {
    let k = i64::from(k);
    q(-2 * (k * k - 1), 3 * k * k) + q(k + 1, 2 * k) - q(1, k)
}

/// `1 + max_k(-S(k))` over `k = 1..=10`, which is `34/27` at `k = 3`.
pub fn asymptotic_upper() -> Result<BoundReport> {
    let (k, s) = (1..=10u32)
        .map(|k| (k, asymptotic_s(k)))
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .unwrap();
    if asymptotic_s(2) != q(-1, 4) || asymptotic_s(4) != q(-1, 4) {
        return Err(Error::Invariant("S(2) and S(4) should both be -1/4".into()));
    }
    let exact = Rational::one() - s;
    Ok(BoundReport {
        n: Size::Asymptotic,
        direction: Direction::Upper,
        value: exact.to_f64_lossy(),
        exact: Some(exact),
        witness: Witness::Levels(k),
        method: "equal-levels".into(),
    })
}

/// Singletons-only scenario: `v_g <= 2/3 + B`.
pub fn lower_scenario_singletons<S: Scalar>(b: &S) -> Result<S> {
    if !(*b > S::zero() && *b < S::one()) {
        return Err(Error::contract(format!("B = {b} outside (0, 1)")));
    }
    Ok(S::ratio(2, 3) + b.clone())
}

/// `-(2/(N(N-1))) sum_{k=1}^{N-2} g(k)`, which tends to `1/3 - B`.
pub fn singleton_partial_sum(n: usize, b: &Rational) -> Result<Rational> {
    if n < 3 {
        return Err(Error::contract(format!("need N >= 3, got {n}")));
    }
    let g = TestFunction::quadratic(n, q(-1, 2 * (n as i64 - 2)), b.clone());
    let sum: Rational = (1..=n as i64 - 2).map(|k| g.at(k)).sum();
    Ok(-sum * q(2, (n * (n - 1)) as i64))
}

fn check_large_level(b: f64, y: f64, z: f64) -> Result<()> {
    let eps = 1e-12;
    if !(3.0 / 7.0 - eps..=0.5 + eps).contains(&b) {
        return Err(Error::contract(format!("B = {b} outside [3/7, 1/2]")));
    }
    if y < -eps || z < 1.0 - b - eps || y + z > 1.0 + eps {
        return Err(Error::contract(format!(
            "(y, z) = ({y}, {z}) outside y >= 0, z >= 1 - B, y + z <= 1"
        )));
    }
    Ok(())
}

/// `G(B, y, z)` without range checks.
pub fn g_function(b: f64, y: f64, z: f64) -> f64 {
    2.0 / 3.0 + b + z * z * (1.0 - 2.0 * b) + 2.0 / 3.0 * y.powi(3) - b * y * y - 2.0 * b * z * y
        + 2.0 * z * y * y
        + 2.0 * z * z * y
        + (y + z).powi(3) / 3.0
        - b * (y + z).powi(2)
}

/// One large level between singletons: `v_g <= G(B, y, z)`.
pub fn lower_scenario_large_level(b: f64, y: f64, z: f64) -> Result<f64> {
    check_large_level(b, y, z)?;
    Ok(g_function(b, y, z))
}

/// `dG/dy = 3y^2 + y(6z - 4B) + 3z^2 - 4Bz`.
pub fn g_dy(b: f64, y: f64, z: f64) -> f64 {
    3.0 * y * y + y * (6.0 * z - 4.0 * b) + 3.0 * z * z - 4.0 * b * z
}

/// `H(B, z) = G(B, 0, z) = 2/3 + B + z^2(1 - 3B) + z^3/3`.
/// `dG/dz = 2z(1 - 2B) - 2By + 2y^2 + 4zy + (y + z)^2 - 2B(y + z)`.
pub fn g_dz(b: f64, y: f64, z: f64) -> f64 {
    2.0 * z * (1.0 - 2.0 * b) - 2.0 * b * y + 2.0 * y * y + 4.0 * z * y + (y + z).powi(2) - 2.0 * b * (y + z)
}

pub fn h_function(b: f64, z: f64) -> f64 {
    2.0 / 3.0 + b + z * z * (1.0 - 3.0 * b) + z.powi(3) / 3.0
}

pub fn h_dz(b: f64, z: f64) -> f64 {
    2.0 * z * (1.0 - 3.0 * b) + z * z
}

/// `2/3 + B - (4/3)(3B - 1)^3`, the minimum of `H` over `z`.
pub fn lower_envelope(b: f64) -> f64 {
    2.0 / 3.0 + b - 4.0 / 3.0 * (3.0 * b - 1.0).powi(3)
}

pub fn lower_envelope_db(b: f64) -> f64 {
    1.0 - 12.0 * (3.0 * b - 1.0).powi(2)
}

/// `B* = 1/3 + sqrt(3)/18`.
pub fn b_star() -> f64 {
    1.0 / 3.0 + 3f64.sqrt() / 18.0
}

/// `1 + sqrt(3)/27 = 1 + 3^(-5/2)`.
pub fn lower_bound_constant() -> f64 {
    1.0 + 3f64.sqrt() / 27.0
}

/// Minimum of the cubic `G(B, ., z)` over `y` in `[0, 1 - z]`; returns `(y, G)`.
fn min_over_y(b: f64, z: f64) -> (f64, f64) {
    let hi = (1.0 - z).max(0.0);
    let mut cands = vec![0.0, hi];
    let (qa, qb, qc) = (3.0, 6.0 * z - 4.0 * b, 3.0 * z * z - 4.0 * b * z);
    let disc = qb * qb - 4.0 * qa * qc;
    if disc >= 0.0 {
        for r in [(-qb - disc.sqrt()) / (2.0 * qa), (-qb + disc.sqrt()) / (2.0 * qa)] {
            if (0.0..=hi).contains(&r) {
                cands.push(r);
            }
        }
    }
    cands
        .into_iter()
        .map(|y| (y, g_function(b, y, z)))
        .fold((0.0, f64::INFINITY), |a, c| if c.1 < a.1 { c } else { a })
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Grid minimum followed by golden-section refinement in the neighbouring cells.
fn grid_then_golden(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, resolution: usize) -> f64 {
    let step = (hi - lo) / resolution as f64;
    let best = (0..=resolution)
        .map(|i| lo + step * i as f64)
        .map(|x| (x, f(x)))
        .fold((lo, f64::INFINITY), |a, c| if c.1 < a.1 { c } else { a })
        .0;
    golden_min(f, (best - step).max(lo), (best + step).min(hi), 1e-13)
}

/// `min_{y,z} G(B, y, z)` over the admissible region, with its minimiser.
pub fn large_level_minimum(b: f64, resolution: usize) -> (f64, f64, f64) {
    let inner = |z: f64| min_over_y(b, z).1;
    let mut z = grid_then_golden(&inner, 1.0 - b, 1.0, resolution);
    // the minimum is flat to rounding within ~1e-8 of z; sharpen on the
    // first-order condition (envelope theorem: d/dz min_y G = dG/dz at y*)
    let slope = |z: f64| g_dz(b, min_over_y(b, z).0, z);
    let width = (1.0 - (1.0 - b)) / resolution as f64;
    let (mut lo, mut hi) = ((z - width).max(1.0 - b), (z + width).min(1.0));
    if slope(lo) < 0.0 && slope(hi) > 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let candidate = 0.5 * (lo + hi);
        if inner(candidate) <= inner(z) + 1e-15 {
            z = candidate;
        }
    }
    let (y, g) = min_over_y(b, z);
    (y, z, g)
}

/// Outcome of the lower-bound search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerBoundSearch {
    pub report: BoundReport,
    pub b_opt: f64,
    pub y_opt: f64,
    pub z_opt: f64,
    pub b_analytic: f64,
    pub bound_analytic: f64,
}

/// Maximise over `B in [3/7, 1/2]` the smaller of the two scenario
/// constraints, by nested grid search with golden-section refinement.
pub fn lower_bound_optimize(grid_resolution: usize) -> Result<LowerBoundSearch> {
    if grid_resolution < 1000 {
        return Err(Error::contract(format!("grid resolution {grid_resolution} below 1000")));
    }
    let inner_res = (grid_resolution / 10).max(100);
    let certificate = |b: f64| -> f64 {
        let singles = 2.0 / 3.0 + b;
        singles.min(large_level_minimum(b, inner_res).2)
    };
    let b = grid_then_golden(&|b| -certificate(b), 3.0 / 7.0, 0.5, grid_resolution);
    let (y, z, g) = large_level_minimum(b, inner_res);
    let value = g.min(2.0 / 3.0 + b);
    Ok(LowerBoundSearch {
        report: BoundReport {
            n: Size::Asymptotic,
            direction: Direction::Lower,
            value,
            exact: None,
            witness: Witness::Scenario { b, y, z },
            method: "scenario-envelope".into(),
        },
        b_opt: b,
        y_opt: y,
        z_opt: z,
        b_analytic: b_star(),
        bound_analytic: lower_bound_constant(),
    })
}
