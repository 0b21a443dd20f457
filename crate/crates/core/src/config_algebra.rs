//! Configurations, expected gap increments and the test-function drift
//! functional, together with the merge/rebalance calculus on configurations.
//!
//! A configuration `alpha = (alpha_1, ..., alpha_M)` lists how many counters
//! share each occupied level, top level first. With `l_i = alpha_1 + ... +
//! alpha_i`, the gap `X_{l_i - 1}` separates level `i` from level `i + 1`.
//!
//! For a test function `h` (with `h(-1) = 0`) and a candidate speed `v`
//!
//! ```text
//! L_alpha h = v - V_alpha(N) + sum_k h(k) E[dX_k | alpha]
//! ```
//!
//! and `L_alpha h >= 0` for every `alpha` certifies `V(N) <= v`.

use serde::Serialize;

use crate::dynamics::GapState;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Occupancy vector of the distinct levels, top level first.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Configuration {
    alpha: Vec<usize>,
}

impl Configuration {
    pub fn new(alpha: Vec<usize>) -> Result<Self> {
        match alpha.first() {
            None => return Err(Error::contract("empty configuration")),
            Some(&a) if a < 2 => {
                return Err(Error::contract(format!("top level holds {a} < 2 counters: {alpha:?}")))
            }
            _ => {}
        }
        if alpha.contains(&0) {
            return Err(Error::contract(format!("empty level in {alpha:?}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> &[usize] {
        &self.alpha
    }

    pub fn n(&self) -> usize {
        self.alpha.iter().sum()
    }

    /// Number of levels `M`.
    pub fn levels(&self) -> usize {
        self.alpha.len()
    }

    /// `l_0 = 0, l_1, ..., l_M = N`.
    pub fn cumulative(&self) -> Vec<usize> {
        let mut l = Vec::with_capacity(self.alpha.len() + 1);
        l.push(0);
        for &a in &self.alpha {
            l.push(l.last().unwrap() + a);
        }
        l
    }

    /// `V_alpha(N) = 1 + sum alpha_i (alpha_i - 1) / (N (N - 1))`.
    pub fn v_alpha<S: Scalar>(&self) -> S {
        let n = self.n() as i64;
        let pairs: i64 = self.alpha.iter().map(|&a| (a * (a - 1)) as i64).sum();
        S::one() + S::ratio(pairs, n * (n - 1))
    }

    /// Gap state with zero gaps inside blocks and unit gaps between them.
    pub fn representative(&self) -> GapState {
        let n = self.n();
        let mut gaps = vec![0u64; n.saturating_sub(2)];
        for &l in &self.cumulative()[1..self.alpha.len()] {
            gaps[l - 2] = 1;
        }
        GapState::new(gaps)
    }
}

/// Group the counters described by `x` into levels.
pub fn configuration_of(x: &GapState) -> Configuration {
    let mut alpha = vec![2usize];
    for &g in &x.gaps {
        if g == 0 {
            *alpha.last_mut().unwrap() += 1;
        } else {
            alpha.push(1);
        }
    }
    Configuration { alpha }
}

/// All `2^(N-2)` configurations of `N` counters, in lexicographic order.
pub fn all_configurations(n: usize) -> Vec<Configuration> {
    fn rec(rem: usize, cur: &mut Vec<usize>, out: &mut Vec<Configuration>) {
        if rem == 0 {
            out.push(Configuration { alpha: cur.clone() });
            return;
        }
        for a in 1..=rem {
            cur.push(a);
            rec(rem - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for a1 in 2..=n {
        let mut cur = vec![a1];
        rec(n - a1, &mut cur, &mut out);
    }
    out
}

/// Values `h(k)` on `k = -1..=N+1` with `h(-1) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction<S> {
    n: usize,
    values: Vec<S>,
    quadratic: Option<(S, S)>,
}

impl<S: Scalar> TestFunction<S> {
    /// `h(x) = A (x^2 - 1) + B (x + 1)`.
    pub fn quadratic(n: usize, a: S, b: S) -> Self {
        let values = (-1..=n as i64 + 1)
            .map(|x| a.clone() * S::from_int(x * x - 1) + b.clone() * S::from_int(x + 1))
            .collect();
        Self {
            n,
            values,
            quadratic: Some((a, b)),
        }
    }

    /// Tabulated `h(1), ..., h(N-2)`. The values at `0`, `N-1`, `N`, `N+1` do
    /// not enter the drift functional and are set to zero.
    pub fn from_values(n: usize, h: &[S]) -> Result<Self> {
        if n < 3 || h.len() != n - 2 {
            return Err(Error::contract(format!(
                "expected {} values for N={n}, got {}",
                n.saturating_sub(2),
                h.len()
            )));
        }
        let mut values = vec![S::zero(); n + 3];
        for (k, v) in h.iter().enumerate() {
            values[k + 2] = v.clone();
        }
        Ok(Self {
            n,
            values,
            quadratic: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `h(k)` for `-1 <= k <= N + 1`.
    pub fn at(&self, k: i64) -> S {
        assert!(
            (-1..=self.n as i64 + 1).contains(&k),
            "h({k}) outside [-1, {}]",
            self.n + 1
        );
        self.values[(k + 1) as usize].clone()
    }

    /// `h(k + 1) - h(k)`.
    pub fn delta(&self, k: i64) -> S {
        self.at(k + 1) - self.at(k)
    }

    /// `(A, B)` when built by [`quadratic`](Self::quadratic).
    pub fn quadratic_params(&self) -> Option<(&S, &S)> {
        self.quadratic.as_ref().map(|(a, b)| (a, b))
    }

    /// `h(1), ..., h(N-2)`.
    pub fn gap_values(&self) -> Vec<S> {
        (1..=self.n as i64 - 2).map(|k| self.at(k)).collect()
    }
}

/// Contribution of level `i + 1` (size `a`, sitting below `l = l_i` counters,
/// level above of size `prev`; `prev = 0` for the top level) to the expected
/// gap increments, as `(position, numerator over C(N, 2))`. Positions outside
/// `1..=N-2` are dropped.
pub fn level_increments(l: usize, prev: usize, a: usize, n: usize) -> Vec<(usize, i64)> {
    let (l, a) = (l as i64, a as i64);
    let pairs_a = a * (a - 1) / 2;
    let mut out = Vec::with_capacity(3);
    // gap above the level: closes when one of its counters catches up
    let mut above = -(l * a + pairs_a);
    match prev {
        2 => above += 1,
        1 => above += l - 1,
        _ => {}
    }
    out.push((l - 1, above));
    if a >= 2 {
        out.push((l, l * a));
    }
    if a >= 3 {
        out.push((l + 1, pairs_a));
    }
    out.into_iter()
        .filter(|&(p, v)| p >= 1 && p <= n as i64 - 2 && v != 0)
        .map(|(p, v)| (p as usize, v))
        .collect()
}

/// Case number (1 to 9) for the pair `(alpha_{i+1}, alpha_i)`: rows by
/// `alpha_{i+1}` in `>=3, 2, 1`, columns by `alpha_i` in the same order.
pub fn increment_case(alpha_i: usize, alpha_ip1: usize) -> u8 {
    let bucket = |a: usize| match a {
        1 => 2u8,
        2 => 1,
        _ => 0,
    };
    3 * bucket(alpha_ip1) + bucket(alpha_i) + 1
}

/// `E[X_k(1) - X_k(0) | alpha]` for `k = 1..=N-2` (index `k - 1`).
pub fn expected_increments<S: Scalar>(c: &Configuration) -> Vec<S> {
    let n = c.n();
    let mut num = vec![0i64; n.saturating_sub(2)];
    let l = c.cumulative();
    let mut prev = 0;
    for (i, &a) in c.alpha.iter().enumerate() {
        for (p, v) in level_increments(l[i], prev, a, n) {
            num[p - 1] += v;
        }
        prev = a;
    }
    let pairs = (n * (n - 1) / 2) as i64;
    num.into_iter().map(|v| S::ratio(v, pairs)).collect()
}

fn nn1<S: Scalar>(n: usize) -> S {
    S::from_int((n * (n - 1)) as i64)
}

/// `E*(l, c) = [c(2l+c-1) dh(l-1) + c(c-1) dh(l) - c(c-1)] / (N(N-1))`.
pub fn e_star<S: Scalar>(l: usize, c: usize, h: &TestFunction<S>) -> S {
    let (li, ci) = (l as i64, c as i64);
    let c1 = S::from_int(ci * (ci - 1));
    (S::from_int(ci * (2 * li + ci - 1)) * h.delta(li - 1) + c1.clone() * h.delta(li) - c1) / nn1(h.n())
}

/// The same quantity from the un-telescoped three-term form
/// `[-c(2l+c-1) h(l-1) + 2lc h(l) + c(c-1) h(l+1) - c(c-1)] / (N(N-1))`.
pub fn e_star_raw<S: Scalar>(l: usize, c: usize, h: &TestFunction<S>) -> S {
    let (li, ci) = (l as i64, c as i64);
    let c1 = S::from_int(ci * (ci - 1));
    (-S::from_int(ci * (2 * li + ci - 1)) * h.at(li - 1)
        + S::from_int(2 * li * ci) * h.at(li)
        + c1.clone() * h.at(li + 1)
        - c1)
        / nn1(h.n())
}

fn indicator<S: Scalar>(b: bool) -> S {
    if b {
        S::one()
    } else {
        S::zero()
    }
}

/// `E(l_i, alpha_i, alpha_{i+1})`: contribution of level `i + 1` to the drift
/// functional, including the corrections attached to small levels. Pass
/// `alpha_i = 0` for the top level.
pub fn level_contribution<S: Scalar>(l: usize, alpha_i: usize, alpha_ip1: usize, h: &TestFunction<S>) -> S {
    let li = l as i64;
    let d: S = nn1(h.n());
    e_star(l, alpha_ip1, h)
        + indicator::<S>(alpha_i == 2) * S::from_int(2) * h.at(li - 1) / d.clone()
        + indicator::<S>(alpha_i == 1) * S::from_int(2 * (li - 1)) * h.at(li - 1) / d.clone()
        - indicator::<S>(alpha_ip1 == 2) * S::from_int(2) * h.at(li + 1) / d.clone()
        - indicator::<S>(alpha_ip1 == 1) * S::from_int(2 * li) * h.at(li) / d
}

/// Telescoped drift functional evaluated on a raw occupancy vector. The
/// boundary term refers to the nominal size `h.n()`; for a genuine
/// configuration that is `l_M`.
pub fn drift_sum<S: Scalar>(alpha: &[usize], h: &TestFunction<S>, v: &S) -> S {
    let n = h.n() as i64;
    let mut acc = v.clone() - S::one();
    let mut l = 0;
    for &a in alpha {
        acc = acc + e_star(l, a, h);
        l += a;
    }
    let last = alpha.last().copied().unwrap_or(0);
    let boundary = indicator::<S>(last == 2) * h.at(n - 1)
        + indicator::<S>(last == 1) * S::from_int(n - 1) * h.at(n - 1);
    acc - S::from_int(2) * boundary / nn1(h.n())
}

/// `L_alpha h = v - 1 + sum_i E*(l_i, alpha_{i+1}) - boundary`.
pub fn drift_functional<S: Scalar>(c: &Configuration, h: &TestFunction<S>, v: &S) -> Result<S> {
    check_size(c, h)?;
    Ok(drift_sum(&c.alpha, h, v))
}

/// `L_alpha h` straight from the definition, using the expected increments.
pub fn drift_direct<S: Scalar>(c: &Configuration, h: &TestFunction<S>, v: &S) -> Result<S> {
    check_size(c, h)?;
    let inc: Vec<S> = expected_increments(c);
    let mut acc = v.clone() - c.v_alpha::<S>();
    for (k, e) in inc.into_iter().enumerate() {
        acc = acc + h.at(k as i64 + 1) * e;
    }
    Ok(acc)
}

/// `L_alpha h` as `v - 1 + sum_i E(l_i, alpha_i, alpha_{i+1})`.
pub fn drift_by_levels<S: Scalar>(c: &Configuration, h: &TestFunction<S>, v: &S) -> Result<S> {
    check_size(c, h)?;
    let l = c.cumulative();
    let mut acc = v.clone() - S::one();
    let mut prev = 0;
    for (i, &a) in c.alpha.iter().enumerate() {
        acc = acc + level_contribution(l[i], prev, a, h);
        prev = a;
    }
    Ok(acc)
}

fn check_size<S>(c: &Configuration, h: &TestFunction<S>) -> Result<()> {
    if c.n() != h.n {
        return Err(Error::contract(format!(
            "configuration of {} counters against a test function for N={}",
            c.n(),
            h.n
        )));
    }
    Ok(())
}

/// Closed form of `Q_n(a, b)` for `n` in `0..=2`.
pub fn q_n<S: Scalar>(n: u8, a: i64, b: i64, beta: i64) -> Result<S> {
    let core = 2 * beta * (a - b - beta);
    match n {
        0 => Ok(S::zero()),
        1 => Ok(S::from_int(core)),
        2 => Ok(S::from_int(-core * (a + b - 1))),
        _ => Err(Error::contract(format!("Q_n defined for n <= 2, got {n}"))),
    }
}

/// `x choose n` as a polynomial in `x`, for `n <= 2`.
fn binomial_poly(x: i64, n: u8) -> i64 {
    match n {
        0 => 1,
        1 => x,
        2 => x * (x - 1) / 2,
        _ => unreachable!(),
    }
}

/// `E_c P_n(x) = -c(2x+c-1) P_n(x-1) + 2xc P_n(x) + c(c-1) P_n(x+1)`.
pub fn e_operator_binomial(c: i64, x: i64, n: u8) -> i64 {
    -c * (2 * x + c - 1) * binomial_poly(x - 1, n) + 2 * x * c * binomial_poly(x, n)
        + c * (c - 1) * binomial_poly(x + 1, n)
}

/// `Q_n(a, b)` evaluated from the operator at base point `l`.
pub fn q_n_raw(n: u8, a: i64, b: i64, beta: i64, l: i64) -> Result<i64> {
    if n > 2 {
        return Err(Error::contract(format!("Q_n defined for n <= 2, got {n}")));
    }
    Ok(e_operator_binomial(b, l + a, n) + e_operator_binomial(a, l, n)
        - e_operator_binomial(b + beta, l + a - beta, n)
        - e_operator_binomial(a - beta, l, n))
}

/// Occupancy vector after moving `beta` counters from level `k - 1` to level
/// `k` (1-based; negative `beta` moves upwards). Emptied levels are dropped.
pub fn moved_alpha(alpha: &[usize], k: usize, beta: i64) -> Result<Vec<usize>> {
    if k < 2 || k > alpha.len() {
        return Err(Error::contract(format!("level k={k} outside 2..={}", alpha.len())));
    }
    let (up, down) = (alpha[k - 2] as i64, alpha[k - 1] as i64);
    if beta < -down || beta > up {
        return Err(Error::contract(format!("beta={beta} outside [-{down}, {up}]")));
    }
    let mut out = alpha.to_vec();
    out[k - 2] = (up - beta) as usize;
    out[k - 1] = (down + beta) as usize;
    out.retain(|&a| a > 0);
    Ok(out)
}

/// `D_k(beta) = -2 beta (a_{k-1} - a_k - beta) (2A(a_k + a_{k-1}) - 3A - B + 1) / (N(N-1))`,
/// the decrease of `L_alpha h` for quadratic `h` when `beta` counters move
/// from level `k - 1` to level `k`. The last level is excluded when it holds
/// one or two counters.
pub fn d_k<S: Scalar>(c: &Configuration, k: usize, beta: i64, a: &S, b: &S) -> Result<S> {
    let m = c.levels();
    if k == m && c.alpha[m - 1] <= 2 {
        return Err(Error::contract("last level with 1 or 2 counters is kept as it is"));
    }
    moved_alpha(&c.alpha, k, beta)?;
    let (up, down) = (c.alpha[k - 2] as i64, c.alpha[k - 1] as i64);
    let factor = S::from_int(2) * a.clone() * S::from_int(up + down) - S::from_int(3) * a.clone() - b.clone()
        + S::one();
    Ok(S::from_int(-2 * beta * (up - down - beta)) * factor / nn1(c.n()))
}

/// Candidate worst configurations for `B = 1/2`, tagged by case (i)-(ix).
/// Orderings follow the closed-form table where that gives a valid
/// configuration; ill-formed entries are replaced or dropped, and duplicates
/// keep their first tag.
pub fn worst_case_candidates(n: usize) -> Result<Vec<(&'static str, Configuration)>> {
    if n < 5 {
        return Err(Error::UnsupportedSize {
            n,
            hint: "use the exact N=3 / N=4 analysis".into(),
        });
    }
    let mut raw: Vec<(&'static str, Vec<usize>)> = vec![
        ("i", vec![n]),
        ("ii", vec![n - 1, 1]),
        ("iii", vec![n - 2, 2]),
    ];
    if n % 2 == 0 {
        let h = n / 2;
        raw.push(("iv", vec![h, h]));
        raw.push(("v", vec![h, h - 1, 1]));
        raw.push(("vi", vec![h - 1, h - 1, 2]));
    } else {
        raw.push(("iv", vec![(n - 1) / 2, (n + 1) / 2]));
        raw.push(("v", vec![(n - 1) / 2, (n - 1) / 2, 1]));
        raw.push(("vi", vec![(n - 1) / 2, (n - 3) / 2, 2]));
    }
    let t = n / 3;
    match n % 3 {
        0 => {
            raw.push(("vii", vec![t, t, t]));
            raw.push(("viii", vec![t, t, t - 1, 1]));
            raw.push(("ix", vec![t, t - 1, t - 1, 2]));
        }
        1 => {
            raw.push(("vii", vec![t + 1, t, t]));
            raw.push(("viii", vec![t, t, t, 1]));
            raw.push(("ix", vec![t, t, t - 1, 2]));
        }
        _ => {
            raw.push(("vii", vec![t + 1, t + 1, t]));
            raw.push(("viii", vec![t + 1, t, t, 1]));
            raw.push(("ix", vec![t, t, t, 2]));
        }
    }
    let mut out: Vec<(&'static str, Configuration)> = Vec::new();
    for (tag, alpha) in raw {
        if alpha.iter().sum::<usize>() != n {
            continue;
        }
        if let Ok(c) = Configuration::new(alpha) {
            if !out.iter().any(|(_, d)| *d == c) {
                out.push((tag, c));
            }
        }
    }
    Ok(out)
}

/// The candidate list without tags.
pub fn worst_case_reduce<S: Scalar>(n: usize, b: &S) -> Result<Vec<Configuration>> {
    if *b != S::ratio(1, 2) {
        return Err(Error::contract("the candidate list is derived for B = 1/2 only"));
    }
    Ok(worst_case_candidates(n)?.into_iter().map(|(_, c)| c).collect())
}

/// One merge/rebalance move for `B = 1/2`, if any applies. Merges level `k - 1`
/// into `k` when `alpha_{k-1} + alpha_k <= (N + 1)/2`; otherwise balances the
/// two levels so that the lower one holds as many counters as the upper one or
/// one more. Moves that would leave fewer than two counters on top, and moves
/// at the last level when it holds one or two counters, are not made.
pub fn reduction_move(c: &Configuration) -> Option<Configuration> {
    let n = c.n();
    let m = c.levels();
    let eligible = |k: usize| !(k == m && c.alpha[m - 1] <= 2);
    for k in (2..=m).filter(|&k| eligible(k)) {
        if 2 * (c.alpha[k - 2] + c.alpha[k - 1]) <= n + 1 {
            let beta = c.alpha[k - 2] as i64;
            if let Ok(next) = moved_alpha(&c.alpha, k, beta).and_then(Configuration::new) {
                return Some(next);
            }
        }
    }
    for k in (2..=m).filter(|&k| eligible(k)) {
        let d = c.alpha[k - 2] as i64 - c.alpha[k - 1] as i64;
        if d >= 1 || d < -1 {
            let beta = (d + 1).div_euclid(2);
            if let Ok(next) = moved_alpha(&c.alpha, k, beta).and_then(Configuration::new) {
                return Some(next);
            }
        }
    }
    None
}

/// Apply [`reduction_move`] until none applies; returns the whole path.
pub fn reduction_path(c: &Configuration) -> Result<Vec<Configuration>> {
    let mut path = vec![c.clone()];
    // each state is visited at most once along a terminating path
    let cap = 1usize << c.n().min(24);
    while let Some(next) = reduction_move(path.last().unwrap()) {
        if path.contains(&next) || path.len() > cap {
            return Err(Error::Invariant(format!("reduction cycles from {:?}", c.alpha)));
        }
        path.push(next);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{expected_gap_increments, expected_updates};
    use crate::Rational;
    use num_bigint::BigInt;
    use num_traits::Zero;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    fn f(n: usize) -> TestFunction<Rational> {
        TestFunction::quadratic(n, q(-1, 2 * (n as i64 - 2)), q(1, 2))
    }

    fn cfg(a: &[usize]) -> Configuration {
        Configuration::new(a.to_vec()).unwrap()
    }

    #[test]
    fn configuration_examples() {
        assert_eq!(configuration_of(&GapState::new(vec![0, 0, 0])), cfg(&[5]));
        assert_eq!(configuration_of(&GapState::new(vec![2, 0])), cfg(&[2, 2]));
        assert_eq!(configuration_of(&GapState::new(vec![0, 1, 0, 3])), cfg(&[3, 2, 1]));
        assert!(Configuration::new(vec![1, 2]).is_err());
        assert!(Configuration::new(vec![2, 0, 1]).is_err());
    }

    #[test]
    fn representative_round_trips() {
        for n in 2..9 {
            for c in all_configurations(n) {
                assert_eq!(configuration_of(&c.representative()), c);
            }
        }
    }

    #[test]
    fn configuration_counts() {
        assert_eq!(all_configurations(4).len(), 4);
        assert_eq!(
            all_configurations(4),
            vec![cfg(&[2, 1, 1]), cfg(&[2, 2]), cfg(&[3, 1]), cfg(&[4])]
        );
        for n in 2..12 {
            assert_eq!(all_configurations(n).len(), 1 << (n - 2));
        }
    }

    #[test]
    fn increment_examples() {
        assert_eq!(expected_increments::<Rational>(&cfg(&[2, 1])), vec![q(-1, 3)]);
        assert_eq!(expected_increments::<Rational>(&cfg(&[2, 2])), vec![q(-2, 3), q(2, 3)]);
        assert_eq!(
            expected_increments::<Rational>(&cfg(&[5])),
            vec![Rational::from_integer(1.into()), Rational::zero(), Rational::zero()]
        );
    }

    #[test]
    fn increments_match_oracle() {
        for n in 3..=8 {
            for c in all_configurations(n) {
                let x = c.representative();
                assert_eq!(expected_increments::<Rational>(&c), expected_gap_increments(&x), "{c:?}");
                assert_eq!(c.v_alpha::<Rational>(), expected_updates(&x), "{c:?}");
            }
        }
    }

    #[test]
    fn case_numbering() {
        assert_eq!(increment_case(2, 1), 8);
        assert_eq!(increment_case(2, 2), 5);
        assert_eq!(increment_case(4, 3), 1);
        assert_eq!(increment_case(1, 1), 9);
    }

    #[test]
    fn e_star_forms_agree() {
        let h = f(6);
        assert_eq!(e_star(2, 3, &h), e_star_raw(2, 3, &h));
        for n in 4..10 {
            let h = f(n);
            for l in 0..n {
                for c in 1..=n - l {
                    assert_eq!(e_star(l, c, &h), e_star_raw(l, c, &h));
                }
            }
        }
        // c = 1 and l = 0 special forms
        let h = f(7);
        assert_eq!(e_star(3, 1, &h), q(6, 42) * h.delta(2));
        assert_eq!(e_star(0, 4, &h), q(12, 42) * (h.at(1) - h.at(-1) - q(1, 1)));
    }

    #[test]
    fn three_routes_to_the_drift_functional() {
        for n in 3..=8 {
            let hs = [
                f(n.max(3)),
                TestFunction::quadratic(n, q(1, 3), q(-2, 5)),
                TestFunction::from_values(n, &(1..=n as i64 - 2).map(|k| q(k * k - 3, 7)).collect::<Vec<_>>())
                    .unwrap(),
            ];
            let v = q(11, 9);
            for h in &hs {
                for c in all_configurations(n) {
                    let a = drift_functional(&c, h, &v).unwrap();
                    assert_eq!(a, drift_direct(&c, h, &v).unwrap(), "{c:?}");
                    assert_eq!(a, drift_by_levels(&c, h, &v).unwrap(), "{c:?}");
                }
            }
        }
    }

    #[test]
    fn level_contribution_matches_table_row() {
        let n = 8;
        let h = TestFunction::quadratic(n, q(2, 7), q(-1, 3));
        for prev in 1..=3 {
            for a in 1..=3 {
                let l = 4;
                let row: Rational = level_increments(l, prev, a, n)
                    .into_iter()
                    .map(|(p, v)| h.at(p as i64) * q(v, 28))
                    .sum();
                let expect = row - q((a * (a - 1)) as i64, 56);
                assert_eq!(level_contribution(l, prev, a, &h), expect, "({prev}, {a})");
            }
        }
        // both singletons
        let l = 4;
        assert_eq!(
            level_contribution(l, 1, 1, &h),
            e_star(l, 1, &h) + q(6, 56) * h.at(3) - q(8, 56) * h.at(4)
        );
    }

    #[test]
    fn single_level_has_no_boundary() {
        let h = f(9);
        let v = q(1, 1);
        let c = cfg(&[9]);
        assert_eq!(drift_functional(&c, &h, &v).unwrap(), e_star(0, 9, &h));
        assert!(drift_functional(&c, &h, &v).unwrap().is_zero());
    }

    #[test]
    fn q_identity() {
        for n in 0..=2u8 {
            assert!(q_n::<Rational>(n, 7, 3, 0).unwrap().is_zero());
        }
        assert!(q_n::<Rational>(1, 3, 2, 1).unwrap().is_zero());
        assert!(q_n::<Rational>(2, 3, 2, 1).unwrap().is_zero());
        assert_eq!(q_n::<Rational>(2, 5, 1, 2).unwrap(), q(-40, 1));
        assert!(q_n::<Rational>(3, 1, 1, 1).is_err());
        for n in 0..=2u8 {
            for a in 1..6 {
                for b in 1..6 {
                    for beta in -b..=a {
                        for l in 0..5 {
                            let closed = q_n::<Rational>(n, a, b, beta).unwrap();
                            assert_eq!(closed, q(q_n_raw(n, a, b, beta, l).unwrap(), 1));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn d_k_is_a_difference_of_functionals() {
        let n = 8;
        let (a, b) = (q(-1, 12), q(1, 2));
        let h = TestFunction::quadratic(n, a.clone(), b.clone());
        let one = q(1, 1);
        let mut checked = 0;
        for c in all_configurations(n) {
            for k in 2..=c.levels() {
                let (up, down) = (c.alpha[k - 2] as i64, c.alpha[k - 1] as i64);
                for beta in -down..=up {
                    let Ok(d) = d_k(&c, k, beta, &a, &b) else { continue };
                    let moved = moved_alpha(c.alpha(), k, beta).unwrap();
                    let diff = drift_sum(c.alpha(), &h, &one) - drift_sum(&moved, &h, &one);
                    assert_eq!(d, diff, "{c:?} k={k} beta={beta}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn merging_below_threshold_is_worse() {
        let n = 12;
        let (a, b) = (q(-1, 20), q(1, 2));
        for c in all_configurations(n) {
            for k in 2..c.levels() {
                if 2 * (c.alpha[k - 2] + c.alpha[k - 1]) <= n + 1 {
                    let d = d_k(&c, k, c.alpha[k - 2] as i64, &a, &b).unwrap();
                    assert!(d >= Rational::zero());
                }
            }
        }
    }

    #[test]
    fn candidate_lists() {
        let list = worst_case_reduce(12, &q(1, 2)).unwrap();
        for a in [
            &[12][..],
            &[11, 1],
            &[10, 2],
            &[6, 6],
            &[6, 5, 1],
            &[5, 5, 2],
            &[4, 4, 4],
            &[4, 4, 3, 1],
            &[4, 3, 3, 2],
        ] {
            assert!(list.contains(&cfg(a)), "{a:?}");
        }
        assert!(worst_case_reduce(7, &q(1, 2)).unwrap().contains(&cfg(&[3, 4])));
        for n in 5..40 {
            for c in worst_case_reduce(n, &q(1, 2)).unwrap() {
                assert_eq!(c.n(), n);
                assert!(c.alpha()[0] >= 2);
            }
        }
        assert!(worst_case_reduce(4, &q(1, 2)).is_err());
        assert!(worst_case_reduce(8, &q(1, 3)).is_err());
    }

    #[test]
    fn reduction_never_increases_the_functional() {
        for n in 5..=11 {
            let h = f(n);
            let one = q(1, 1);
            let list = worst_case_reduce(n, &q(1, 2)).unwrap();
            let worst = list
                .iter()
                .map(|c| drift_functional(c, &h, &one).unwrap())
                .min()
                .unwrap();
            for c in all_configurations(n) {
                let path = reduction_path(&c).unwrap();
                for w in path.windows(2) {
                    let before = drift_functional(&w[0], &h, &one).unwrap();
                    let after = drift_functional(&w[1], &h, &one).unwrap();
                    assert!(after <= before, "{:?} -> {:?}", w[0], w[1]);
                }
                let end = drift_functional(path.last().unwrap(), &h, &one).unwrap();
                assert!(end >= worst);
            }
        }
    }

    #[test]
    fn float_instantiation_agrees() {
        let n = 7;
        let h = TestFunction::quadratic(n, -0.1f64, 0.5);
        let hq = TestFunction::quadratic(n, q(-1, 10), q(1, 2));
        for c in all_configurations(n) {
            let a = drift_functional(&c, &h, &1.2).unwrap();
            let b = drift_functional(&c, &hq, &q(6, 5)).unwrap();
            assert!((a - b.to_f64_lossy()).abs() < 1e-12);
        }
    }
}
