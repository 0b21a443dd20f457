//! LP-optimal test functions.
//!
//! For fixed `N` the best bound certified by any `h` is
//!
//! ```text
//! min v   s.t.   v + sum_k h(k) E[dX_k | alpha] >= V_alpha(N)   for every alpha,
//! ```
//!
//! with `v` and `h(1..=N-2)` free. The solver works on the dual
//! `max sum_alpha V_alpha y_alpha` over the simplex `{y >= 0, sum y = 1}` cut by
//! `sum_alpha E[dX_k | alpha] y_alpha = 0`, whose row prices are `(v, h)`. All
//! data are scaled by `C(N, 2)` to integers.

pub mod simplex;

use std::cmp::Ordering;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::config_algebra::{all_configurations, expected_increments, Configuration, TestFunction};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Rational;
use simplex::{StandardForm, Status};

/// Largest `N` for full enumeration of the `2^(N-2)` configurations.
pub const MAX_ENUMERATED_N: usize = 20;

/// Sizes solved entirely in exact arithmetic.
pub const EXACT_LIMIT: usize = 12;

const MAX_PIVOTS: usize = 1_000_000;

pub fn enumerate_configurations(n: usize) -> Result<Vec<Configuration>> {
    if !(2..=MAX_ENUMERATED_N).contains(&n) {
        return Err(Error::UnsupportedSize {
            n,
            hint: format!(
                "full enumeration covers 2 <= N <= {MAX_ENUMERATED_N}; restrict to the candidate list instead"
            ),
        });
    }
    Ok(all_configurations(n))
}

/// One constraint `v + sum_k coeffs[k-1] h(k) >= rhs` per configuration.
#[derive(Clone, Debug)]
pub struct LpProblem {
    pub n: usize,
    pub configurations: Vec<Configuration>,
    /// `E[dX_k | alpha]` for `k = 1..=N-2`.
    pub coefficients: Vec<Vec<Rational>>,
    /// `V_alpha(N)`.
    pub rhs: Vec<Rational>,
}

impl LpProblem {
    /// Number of variables: `h(1..=N-2)` and `v`.
    pub fn n_vars(&self) -> usize {
        self.n - 1
    }
}

/// Constraints over every configuration of `N` counters.
pub fn build_lp(n: usize) -> Result<LpProblem> {
    if n < 3 {
        return Err(Error::contract(format!("need N >= 3, got {n}")));
    }
    build_lp_restricted(n, enumerate_configurations(n)?)
}

/// Constraints over a chosen set of configurations.
pub fn build_lp_restricted(n: usize, configurations: Vec<Configuration>) -> Result<LpProblem> {
    if let Some(c) = configurations.iter().find(|c| c.n() != n) {
        return Err(Error::contract(format!("{:?} is not a configuration of {n} counters", c.alpha())));
    }
    let (coefficients, rhs) = configurations
        .par_iter()
        .map(|c| (expected_increments::<Rational>(c), c.v_alpha::<Rational>()))
        .unzip();
    Ok(LpProblem {
        n,
        configurations,
        coefficients,
        rhs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, Serialize)]
pub struct LpSolution {
    #[serde(rename = "N")]
    pub n: usize,
    pub status: LpStatus,
    pub bound: f64,
    /// `h(1), ..., h(N-2)`.
    pub h_values: Vec<f64>,
    /// Indices of the configurations whose constraint is tight.
    pub active_set: Vec<usize>,
    #[serde(skip)]
    pub exact_bound: Option<Rational>,
    #[serde(skip)]
    pub exact_h: Option<Vec<Rational>>,
    /// Constraint violations found by the exact re-verification.
    pub violations: usize,
    pub pivots_float: usize,
    pub pivots_exact: usize,
    pub method: &'static str,
}

/// Constraint data scaled by `C(N, 2)`, which makes every entry an integer.
struct IntegerData {
    pairs: i64,
    columns: Vec<Vec<i64>>,
    rhs: Vec<i64>,
}

fn integer_data(p: &LpProblem) -> IntegerData {
    let pairs = (p.n * (p.n - 1) / 2) as i64;
    let scale = Rational::from_integer(BigInt::from(pairs));
    let to_int = |x: &Rational| -> i64 {
        let scaled = x * &scale;
        debug_assert!(scaled.is_integer());
        scaled.to_integer().try_into().expect("small integer data")
    };
    IntegerData {
        pairs,
        columns: p.coefficients.par_iter().map(|col| col.iter().map(to_int).collect()).collect(),
        rhs: p.rhs.par_iter().map(to_int).collect(),
    }
}

/// Dual standard form: rows are `sum y = 1` and the scaled increment rows;
/// columns are configurations.
fn dual_form<S: Scalar + Send + Sync>(d: &IntegerData) -> StandardForm<S> {
    let columns = d
        .columns
        .par_iter()
        .map(|col| std::iter::once(S::one()).chain(col.iter().map(|&a| S::from_int(a))).collect())
        .collect();
    let mut b = vec![S::zero(); d.columns.first().map_or(0, |c| c.len()) + 1];
    b[0] = S::one();
    StandardForm {
        columns,
        b,
        c: d.rhs.iter().map(|&v| S::from_int(v)).collect(),
    }
}

/// Sign of `v + sum_k h(k) E[dX_k | alpha] - V_alpha` per configuration, for
/// row prices `duals = (C(N,2) v, h)`. Evaluated in integers after clearing
/// denominators.
fn slack_signs(d: &IntegerData, duals: &[Rational]) -> Vec<Ordering> {
    let lcm = duals.iter().fold(BigInt::one(), |acc, y| acc.lcm(y.denom()));
    let scaled: Vec<BigInt> = duals.iter().map(|y| (y * &lcm).to_integer()).collect();
    d.columns
        .par_iter()
        .zip(&d.rhs)
        .map(|(col, &rhs)| {
            let mut acc = scaled[0].clone() - &lcm * rhs;
            for (&a, y) in col.iter().zip(&scaled[1..]) {
                if a != 0 {
                    acc += y * a;
                }
            }
            acc.sign_ordering()
        })
        .collect()
}

trait SignOrdering {
    fn sign_ordering(&self) -> Ordering;
}

impl SignOrdering for BigInt {
    fn sign_ordering(&self) -> Ordering {
        match self.sign() {
            Sign::Minus => Ordering::Less,
            Sign::NoSign => Ordering::Equal,
            Sign::Plus => Ordering::Greater,
        }
    }
}

/// Number of constraints violated by `(v, h)`, in exact arithmetic.
pub fn count_violations(p: &LpProblem, v: &Rational, h: &[Rational]) -> usize {
    let d = integer_data(p);
    let pairs = Rational::from_integer(BigInt::from(d.pairs));
    let duals: Vec<Rational> = std::iter::once(v * pairs).chain(h.iter().cloned()).collect();
    slack_signs(&d, &duals).iter().filter(|s| s.is_lt()).count()
}

/// Smallest `v` feasible together with the given `h`:
/// `max_alpha (V_alpha - sum_k h(k) E[dX_k | alpha])`.
pub fn objective_of(p: &LpProblem, h: &TestFunction<Rational>) -> Result<Rational> {
    if h.n() != p.n {
        return Err(Error::contract("test function size does not match the LP"));
    }
    let hv = h.gap_values();
    p.coefficients
        .par_iter()
        .zip(&p.rhs)
        .map(|(col, rhs)| col.iter().zip(&hv).fold(rhs.clone(), |acc, (a, hk)| acc - a * hk))
        .max()
        .ok_or_else(|| Error::contract("LP without constraints"))
}

fn finish(
    p: &LpProblem,
    d: &IntegerData,
    duals: &[Rational],
    pivots_float: usize,
    pivots_exact: usize,
    method: &'static str,
) -> LpSolution {
    let v = &duals[0] / Rational::from_integer(BigInt::from(d.pairs));
    let h: Vec<Rational> = duals[1..].to_vec();
    let signs = slack_signs(d, duals);
    let violations = signs.iter().filter(|s| s.is_lt()).count();
    let active_set = signs.iter().enumerate().filter(|(_, s)| s.is_eq()).map(|(i, _)| i).collect();
    LpSolution {
        n: p.n,
        status: LpStatus::Optimal,
        bound: v.to_f64_lossy(),
        h_values: h.iter().map(|x| x.to_f64_lossy()).collect(),
        active_set,
        exact_bound: Some(v),
        exact_h: Some(h),
        violations,
        pivots_float,
        pivots_exact,
        method,
    }
}

fn not_optimal(p: &LpProblem, status: Status, pivots_float: usize, pivots_exact: usize) -> LpSolution {
    // dual infeasible <=> primal unbounded and vice versa
    let status = match status {
        Status::Infeasible => LpStatus::Unbounded,
        _ => LpStatus::Infeasible,
    };
    LpSolution {
        n: p.n,
        status,
        bound: f64::NAN,
        h_values: Vec::new(),
        active_set: Vec::new(),
        exact_bound: None,
        exact_h: None,
        violations: 0,
        pivots_float,
        pivots_exact,
        method: "none",
    }
}

/// Solve exactly for `N <= 12`. Above that, solve in floating point and
/// certify the final basis in exact arithmetic: its basic values must be
/// non-negative and every constraint must hold for its row prices. If the
/// certificate fails, the exact solver restarts from that basis. Either way
/// the returned vertex is exactly optimal.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    let d = integer_data(p);
    if p.n <= EXACT_LIMIT {
        let res = simplex::solve(&dual_form::<Rational>(&d), None, MAX_PIVOTS)?;
        if res.status != Status::Optimal {
            return Ok(not_optimal(p, res.status, 0, res.iterations));
        }
        return Ok(finish(p, &d, &res.duals, 0, res.iterations, "exact"));
    }
    let fres = simplex::solve(&dual_form::<f64>(&d), None, MAX_PIVOTS)?;
    let exact_form = dual_form::<Rational>(&d);
    if fres.status == Status::Optimal {
        let n = exact_form.columns.len();
        if let Some((x, y)) = simplex::basis_solution(&exact_form, &fres.basis) {
            let primal_ok = x
                .iter()
                .zip(&fres.basis)
                .all(|(v, &j)| !v.is_negative() && (j < n || v.is_zero()));
            if primal_ok && !slack_signs(&d, &y).iter().any(|s| s.is_lt()) {
                return Ok(finish(p, &d, &y, fres.iterations, 0, "float+certificate"));
            }
        }
    }
    let warm = (fres.status == Status::Optimal).then_some(&fres.basis[..]);
    let res = simplex::solve(&exact_form, warm, MAX_PIVOTS)?;
    if res.status != Status::Optimal {
        return Ok(not_optimal(p, res.status, fres.iterations, res.iterations));
    }
    Ok(finish(p, &d, &res.duals, fres.iterations, res.iterations, "float+exact"))
}

/// Least-squares quadratic `a k^2 + b k + c` through `(k, h[k-1])`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParabolaFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub vertex: Option<(f64, f64)>,
    pub rms_residual: f64,
    /// Set when the data carry no curvature information (constant input).
    pub degenerate: bool,
}

/// Fit over `k = 1..=len`. For `A(x^2-1) + B(x+1)` input the fit returns
/// `(a, b, c) = (A, B, B - A)`.
pub fn fit_parabola(h: &[f64]) -> Result<ParabolaFit> {
    if h.len() < 3 {
        return Err(Error::contract(format!("need at least 3 values, got {}", h.len())));
    }
    let first = h[0];
    if h.iter().all(|&v| v == first) {
        return Ok(ParabolaFit {
            a: 0.0,
            b: 0.0,
            c: first,
            vertex: None,
            rms_residual: 0.0,
            degenerate: true,
        });
    }
    // normal equations in the centred variable u = k - mean for conditioning
    let n = h.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for (i, &y) in h.iter().enumerate() {
        let u = i as f64 + 1.0 - mean;
        let mut p = 1.0;
        for (j, sj) in s.iter_mut().enumerate() {
            *sj += p;
            if j < 3 {
                t[j] += p * y;
            }
            p *= u;
        }
    }
    let m = [[s[4], s[3], s[2]], [s[3], s[2], s[1]], [s[2], s[1], s[0]]];
    let rhs = [t[2], t[1], t[0]];
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(m);
    let solve_col = |col: usize| {
        let mut mm = m;
        for r in 0..3 {
            mm[r][col] = rhs[r];
        }
        det3(mm) / d
    };
    let (qa, qb, qc) = (solve_col(0), solve_col(1), solve_col(2));
    // back to k: a (k - mean)^2 + b (k - mean) + c
    let a = qa;
    let b = qb - 2.0 * qa * mean;
    let c = qa * mean * mean - qb * mean + qc;
    let rms = (h
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let k = i as f64 + 1.0;
            (a * k * k + b * k + c - y).powi(2)
        })
        .sum::<f64>()
        / n)
        .sqrt();
    let vertex = (a != 0.0).then(|| {
        let x = -b / (2.0 * a);
        (x, a * x * x + b * x + c)
    });
    Ok(ParabolaFit {
        a,
        b,
        c,
        vertex,
        rms_residual: rms,
        degenerate: false,
    })
}
