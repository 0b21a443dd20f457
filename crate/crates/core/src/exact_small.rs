//! Stationary analysis for three and four counters.
//!
//! With `N = 3` the gap chain is a reflected walk on `Z+` with a closed-form
//! geometric law. With `N = 4` it is a walk on the quadrant and is solved by
//! power iteration on an `(L + 1) x (L + 1)` box.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::Rational;

fn q(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryN3 {
    #[serde(serialize_with = "ser_rational")]
    pub pi0: Rational,
    /// Ratio `pi(k + 1) / pi(k)` for `k >= 1`.
    #[serde(serialize_with = "ser_rational")]
    pub tail_rate: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub speed: Rational,
}

fn ser_rational<S: serde::Serializer>(x: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&crate::scalar::rational_string(x))
}

impl StationaryN3 {
    /// `pi(k)`: `1/4` at zero and `3 / 2^(k+2)` beyond.
    pub fn pi(&self, k: u32) -> Rational {
        if k == 0 {
            self.pi0.clone()
        } else {
            Rational::new(BigInt::from(3), BigInt::one() << (k + 2) as usize)
        }
    }
}

/// `P(k -> k')` for the three-counter gap walk.
pub fn n3_transition(from: u64, to: u64) -> Rational {
    match (from, to) {
        (0, 1) => Rational::one(),
        (k, t) if k >= 1 && t == k + 1 => q(1, 3),
        (k, t) if k >= 1 && t + 1 == k => q(2, 3),
        _ => Rational::zero(),
    }
}

/// Closed-form stationary law for `N = 3`, checked for exact balance on a
/// window of states before being returned.
pub fn solve_n3() -> Result<StationaryN3> {
    let s = StationaryN3 {
        pi0: q(1, 4),
        tail_rate: q(1, 2),
        speed: Rational::zero(),
    };
    let window = 40u32;
    for k in 0..window {
        let inflow: Rational = (k.saturating_sub(1)..=k + 1)
            .map(|j| s.pi(j) * n3_transition(u64::from(j), u64::from(k)))
            .sum();
        if inflow != s.pi(k) {
            return Err(Error::Invariant(format!("N=3 balance fails at k={k}")));
        }
    }
    // total mass: 1/4 + 3/4 * (1 - 2^-window) over the window
    let mass: Rational = (0..=window).map(|k| s.pi(k)).sum();
    let missing = Rational::one() - mass;
    if missing != Rational::new(BigInt::from(3), BigInt::one() << (window + 2) as usize) {
        return Err(Error::Invariant("N=3 law does not sum to one".into()));
    }
    let speed = q(2, 1) * &s.pi0 + q(4, 3) * (Rational::one() - &s.pi0);
    Ok(StationaryN3 { speed, ..s })
}

/// Exact `N = 4` kernel out of gap state `(k, l)`.
pub fn n4_transitions(k: u64, l: u64) -> Vec<((u64, u64), Rational)> {
    match (k, l) {
        (0, 0) => vec![((1, 0), Rational::one())],
        (k, 0) => vec![((k + 1, 0), q(1, 6)), ((k - 1, 0), q(1, 6)), ((k - 1, 1), q(2, 3))],
        (0, l) => vec![((0, l - 1), q(1, 2)), ((1, l), q(1, 2))],
        (k, l) => vec![((k + 1, l), q(1, 6)), ((k, l - 1), q(1, 2)), ((k - 1, l + 1), q(1, 3))],
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StationaryN4 {
    /// Truncation radius: states `0 <= k, l <= L`.
    #[serde(rename = "L")]
    pub l: usize,
    /// Row-major `grid[k * (L + 1) + l]`.
    #[serde(skip)]
    pub grid: Vec<f64>,
    /// Masses of the origin, the `k` axis, the `l` axis and the interior.
    #[serde(rename = "Pi")]
    pub pi: [f64; 4],
    pub pi0: f64,
    pub speed: f64,
    /// Final `l1` change of one kernel application.
    pub residual: f64,
    /// The two region balance identities, which vanish under stationarity.
    pub balance: [f64; 2],
    pub iterations: usize,
}

impl StationaryN4 {
    pub fn at(&self, k: usize, l: usize) -> f64 {
        self.grid[k * (self.l + 1) + l]
    }
}

const N4_MAX_ITERATIONS: usize = 10_000_000;

/// Power iteration on the box `[0, L]^2`; moves leaving the box keep the mass
/// at the cell they would exit from. Iterates the lazy kernel `(I + P) / 2`
/// (the plain kernel is periodic) until `|pi P - pi|_1 < tol`.
pub fn solve_n4(l_max: usize, tol: f64) -> Result<StationaryN4> {
    if l_max < 10 {
        return Err(Error::contract(format!("truncation radius {l_max} below 10")));
    }
    if !(tol > 0.0) {
        return Err(Error::contract("tolerance must be positive"));
    }
    let side = l_max + 1;
    let idx = |k: usize, l: usize| k * side + l;
    // sparse kernel as (from, to, p); at most three successors per cell
    let mut edges: Vec<(u32, u32, f64)> = Vec::with_capacity(3 * side * side);
    for k in 0..side {
        for l in 0..side {
            for ((nk, nl), p) in n4_transitions(k as u64, l as u64) {
                let (nk, nl) = (nk as usize, nl as usize);
                let to = if nk > l_max || nl > l_max { idx(k, l) } else { idx(nk, nl) };
                edges.push((idx(k, l) as u32, to as u32, crate::Scalar::to_f64_lossy(&p)));
            }
        }
    }

    let mut pi = vec![0.0; side * side];
    pi[0] = 1.0;
    let mut next = vec![0.0; side * side];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < N4_MAX_ITERATIONS {
        next.iter_mut().for_each(|v| *v = 0.0);
        for &(from, to, p) in &edges {
            next[to as usize] += p * pi[from as usize];
        }
        residual = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        for (a, b) in pi.iter_mut().zip(&next) {
            *a = 0.5 * (*a + b);
        }
        iterations += 1;
        if residual < tol {
            break;
        }
    }
    if residual >= tol {
        return Err(Error::NoConvergence { iterations, residual });
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);

    let p0 = pi[0];
    let p1: f64 = (1..side).map(|k| pi[idx(k, 0)]).sum();
    let p2: f64 = (1..side).map(|l| pi[idx(0, l)]).sum();
    let p3 = 1.0 - p0 - p1 - p2;
    let speed = 1.0 + p0 + p1 / 3.0 + p2 / 2.0 + p3 / 6.0;
    let balance = [
        p0 - 2.0 / 3.0 * p1 + 0.5 * p2 - p3 / 6.0,
        2.0 / 3.0 * p1 - 0.5 * p2 - p3 / 6.0,
    ];
    Ok(StationaryN4 {
        l: l_max,
        grid: pi,
        pi: [p0, p1, p2, p3],
        pi0: p0,
        speed,
        residual,
        balance,
        iterations,
    })
}

/// `(26/19, 10/7)`. The upper end is `10/7 - (2/7) Pi0` at `Pi0 = 0`; the lower
/// end is a stated constant, checked only against the trivial bound `8/7`.
pub fn n4_bounds() -> Result<(Rational, Rational)> {
    let lower = q(26, 19);
    let upper = q(10, 7) - q(2, 7) * Rational::zero();
    if lower < q(8, 7) || lower > upper {
        return Err(Error::Invariant("N=4 bounds out of order".into()));
    }
    Ok((lower, upper))
}
