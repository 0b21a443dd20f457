//! Counter dynamics, the gap chain and its one-step law, Monte Carlo speed
//! estimation, empirical tails and Foster–Lyapunov drifts.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Rational;

/// Absolute counter levels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterState {
    levels: Vec<i64>,
}

impl CounterState {
    /// All `n` counters at level 0.
    pub fn new(n: usize) -> Result<Self> {
        Self::from_levels(vec![0; n])
    }

    pub fn from_levels(levels: Vec<i64>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::contract(format!(
                "need at least 2 counters, got {}",
                levels.len()
            )));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[i64] {
        &self.levels
    }

    pub fn n(&self) -> usize {
        self.levels.len()
    }

    /// Select the pair `(i, j)`: the smaller counter moves up, both move when
    /// equal. Returns the new state and the number of counters updated.
    pub fn step(&self, i: usize, j: usize) -> Result<(CounterState, u8)> {
        let n = self.n();
        if i >= n || j >= n || i == j {
            return Err(Error::contract(format!(
                "pair ({i}, {j}) is not a pair of distinct counters among {n}"
            )));
        }
        let mut next = self.clone();
        let updated = next.apply(i, j);
        Ok((next, updated))
    }

    /// In-place version of [`step`](Self::step) without index checks.
    #[inline]
    pub fn apply(&mut self, i: usize, j: usize) -> u8 {
        let (a, b) = (self.levels[i], self.levels[j]);
        if a == b {
            self.levels[i] += 1;
            self.levels[j] += 1;
            2
        } else if a < b {
            self.levels[i] += 1;
            1
        } else {
            self.levels[j] += 1;
            1
        }
    }

    /// Number of counters at the maximum level.
    pub fn top_block(&self) -> usize {
        let max = self.levels.iter().copied().max().unwrap_or_default();
        self.levels.iter().filter(|&&l| l == max).count()
    }

    /// Gaps between consecutive ordered counters, starting below the second
    /// highest.
    pub fn gap_state(&self) -> GapState {
        let mut sorted = self.levels.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let gaps = sorted[1..]
            .windows(2)
            .map(|w| (w[0] - w[1]) as u64)
            .collect();
        GapState { gaps }
    }
}

/// The gap vector `x` of length `N - 2`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GapState {
    pub gaps: Vec<u64>,
}

impl GapState {
    pub fn new(gaps: Vec<u64>) -> Self {
        Self { gaps }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            gaps: vec![0; n.saturating_sub(2)],
        }
    }

    /// Number of counters described by this gap vector.
    pub fn n(&self) -> usize {
        self.gaps.len() + 2
    }

    /// Counter levels realising the gaps: the top two at 0, then descending.
    pub fn representative(&self) -> CounterState {
        let mut levels = Vec::with_capacity(self.n());
        levels.push(0);
        levels.push(0);
        let mut h = 0i64;
        for &g in &self.gaps {
            h -= g as i64;
            levels.push(h);
        }
        CounterState { levels }
    }

    pub fn max_gap(&self) -> u64 {
        self.gaps.iter().copied().max().unwrap_or(0)
    }
}

fn n_choose_2(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Exact one-step law of the gap chain, by exhausting all `C(N, 2)` pairs.
///
/// Probabilities are returned in canonical (sorted, merged) order.
pub fn one_step_distribution(x: &GapState) -> Vec<(GapState, Rational)> {
    let (counts, total) = one_step_counts(x);
    counts
        .into_iter()
        .map(|(g, c)| (g, Rational::new(BigInt::from(c), BigInt::from(total))))
        .collect()
}

/// Pair counts per successor together with the total number of pairs.
fn one_step_counts(x: &GapState) -> (BTreeMap<GapState, usize>, usize) {
    let rep = x.representative();
    let n = rep.n();
    let mut counts = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut next = rep.clone();
            next.apply(i, j);
            *counts.entry(next.gap_state()).or_insert(0) += 1;
        }
    }
    (counts, n_choose_2(n))
}

/// `E[X_k(1) - x_k | X(0) = x]` for `k = 1..=N-2`, from the exhaustive oracle.
pub fn expected_gap_increments(x: &GapState) -> Vec<Rational> {
    let (counts, total) = one_step_counts(x);
    let mut sums = vec![BigInt::zero(); x.gaps.len()];
    for (g, c) in &counts {
        for (k, s) in sums.iter_mut().enumerate() {
            *s += BigInt::from(*c as i64) * (BigInt::from(g.gaps[k]) - BigInt::from(x.gaps[k]));
        }
    }
    sums.into_iter()
        .map(|s| Rational::new(s, BigInt::from(total)))
        .collect()
}

/// Expected number of counters updated in one step from `x`, exactly.
pub fn expected_updates(x: &GapState) -> Rational {
    let rep = x.representative();
    let n = rep.n();
    let mut updates = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            updates += if rep.levels[i] == rep.levels[j] { 2 } else { 1 };
        }
    }
    Rational::new(BigInt::from(updates), BigInt::from(n_choose_2(n)))
}

/// `E_x L(X(1)) - L(x)` for `L(x) = sum x_i^2`, exactly.
pub fn quadratic_drift(x: &GapState) -> Rational {
    let (counts, total) = one_step_counts(x);
    let sq = |g: &GapState| -> BigInt { g.gaps.iter().map(|&v| BigInt::from(v) * BigInt::from(v)).sum() };
    let base = sq(x);
    let mut acc = BigInt::zero();
    for (g, c) in &counts {
        acc += BigInt::from(*c as i64) * (sq(g) - &base);
    }
    Rational::new(acc, BigInt::from(total))
}

/// `E_x L(X(1)) - L(x)` for `L(x) = sum exp(r x_i)`, expectation taken exactly
/// over the one-step law and evaluated in floating point.
pub fn exponential_drift(x: &GapState, r: f64) -> Result<f64> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::contract(format!("rate r = {r} outside (0, 1]")));
    }
    let (counts, total) = one_step_counts(x);
    let mut acc = 0.0;
    for (g, c) in &counts {
        let change: f64 = g
            .gaps
            .iter()
            .zip(&x.gaps)
            .filter(|(a, b)| a != b)
            .map(|(&a, &b)| (r * b as f64).exp() * (r * (a as f64 - b as f64)).exp_m1())
            .sum();
        acc += *c as f64 * change;
    }
    Ok(acc / total as f64)
}

/// Monte Carlo estimate of the speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub steps: u64,
    pub burn_in: u64,
    pub seed: u64,
}

/// Number of batches used for the batch-means standard error.
pub const BATCHES: usize = 100;

/// Default burn-in `100 * N * C(N, 2)`.
pub fn default_burn_in(n: usize) -> u64 {
    100 * n as u64 * n_choose_2(n) as u64
}

/// Fixed-count batch-means accumulator over a known number of samples.
#[derive(Clone, Debug)]
pub struct BatchMeans {
    total: u64,
    seen: u64,
    batch_sums: Vec<f64>,
    batch_sizes: Vec<u64>,
    sum: f64,
}

impl BatchMeans {
    pub fn new(total: u64, batches: usize) -> Self {
        let batches = batches.min(total.max(1) as usize).max(1);
        Self {
            total,
            seen: 0,
            batch_sums: vec![0.0; batches],
            batch_sizes: vec![0; batches],
            sum: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, value: f64) {
        let b = (self.seen as u128 * self.batch_sums.len() as u128 / self.total.max(1) as u128) as usize;
        let b = b.min(self.batch_sums.len() - 1);
        self.batch_sums[b] += value;
        self.batch_sizes[b] += 1;
        self.sum += value;
        self.seen += 1;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.seen.max(1) as f64
    }

    pub fn stderr(&self) -> f64 {
        let means: Vec<f64> = self
            .batch_sums
            .iter()
            .zip(&self.batch_sizes)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let b = means.len();
        if b < 2 {
            return 0.0;
        }
        let m = means.iter().sum::<f64>() / b as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1) as f64;
        (var / b as f64).sqrt()
    }
}

/// Counter-race simulator with uniform pair selection.
#[derive(Clone, Debug)]
pub struct Simulator {
    state: CounterState,
    pairs: Vec<(u32, u32)>,
    rng: ChaCha8Rng,
}

impl Simulator {
    /// Counters start all equal at level 0.
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        let state = CounterState::new(n)?;
        let pairs = (0..n as u32)
            .flat_map(|i| (i + 1..n as u32).map(move |j| (i, j)))
            .collect();
        Ok(Self {
            state,
            pairs,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    #[inline]
    pub fn step(&mut self) -> u8 {
        let (i, j) = self.pairs[self.rng.gen_range(0..self.pairs.len())];
        self.state.apply(i as usize, j as usize)
    }

    pub fn state(&self) -> &CounterState {
        &self.state
    }
}

/// Estimate `V(N)` as the mean number of counters updated per step after
/// `burn_in` steps, with a batch-means standard error.
pub fn simulate_speed(n: usize, steps: u64, burn_in: u64, seed: u64) -> Result<SpeedEstimate> {
    if n < 2 {
        return Err(Error::contract(format!("need N >= 2, got {n}")));
    }
    if steps == 0 {
        return Err(Error::contract("steps must be positive"));
    }
    let mut sim = Simulator::new(n, seed)?;
    for _ in 0..burn_in {
        sim.step();
    }
    let mut acc = BatchMeans::new(steps, BATCHES);
    for _ in 0..steps {
        acc.push(f64::from(sim.step()));
    }
    Ok(SpeedEstimate {
        mean: acc.mean(),
        stderr: acc.stderr(),
        steps,
        burn_in,
        seed,
    })
}

/// Seed of replica `index` derived from `base` (SplitMix64 finaliser; replica 0
/// keeps the base seed).
pub fn replica_seed(base: u64, index: u64) -> u64 {
    if index == 0 {
        return base;
    }
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent replicas run in parallel; output ordered by replica index.
pub fn simulate_replicas(
    n: usize,
    steps: u64,
    burn_in: u64,
    seed: u64,
    replicas: usize,
) -> Result<Vec<SpeedEstimate>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| simulate_speed(n, steps, burn_in, replica_seed(seed, r)))
        .collect()
}

/// Pool replicas: mean of means, standard error of the average.
pub fn pool(estimates: &[SpeedEstimate]) -> Option<SpeedEstimate> {
    let first = estimates.first()?;
    let r = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.mean).sum::<f64>() / r;
    let stderr = estimates.iter().map(|e| e.stderr.powi(2)).sum::<f64>().sqrt() / r;
    Some(SpeedEstimate {
        mean,
        stderr,
        steps: estimates.iter().map(|e| e.steps).sum(),
        burn_in: first.burn_in,
        seed: first.seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub k: usize,
    pub t: f64,
    pub value: f64,
}

/// Empirical tails `psi_k(t) = #{i : C_i(floor(tN)) >= k} / N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailMeasurement {
    pub values: Vec<TailPoint>,
}

impl TailMeasurement {
    pub fn get(&self, k: usize, t: f64) -> Option<f64> {
        self.values
            .iter()
            .find(|p| p.k == k && (p.t - t).abs() < 1e-12)
            .map(|p| p.value)
    }
}

/// Run from all counters at 0 and record the fraction of counters at level
/// `>= k` for `k = 0..=max_level` at each time in `times` (time `t` is step
/// `floor(tN)`).
pub fn empirical_tails(n: usize, times: &[f64], max_level: usize, seed: u64) -> Result<TailMeasurement> {
    if n < 3 {
        return Err(Error::contract(format!("need N >= 3, got {n}")));
    }
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::contract("times must be finite and non-negative"));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut sim = Simulator::new(n, seed)?;
    // at_least[k] = number of counters with level >= k
    let mut at_least: Vec<u64> = vec![n as u64];
    let mut step = 0u64;
    let mut values = Vec::with_capacity(times.len() * (max_level + 1));
    let bump = |at_least: &mut Vec<u64>, level: i64| {
        let level = level as usize;
        if at_least.len() <= level {
            at_least.resize(level + 1, 0);
        }
        at_least[level] += 1;
    };
    for idx in order {
        let t = times[idx];
        let target = (t * n as f64).floor() as u64;
        while step < target {
            let (i, j) = sim.pairs[sim.rng.gen_range(0..sim.pairs.len())];
            let (i, j) = (i as usize, j as usize);
            let before = (sim.state.levels[i], sim.state.levels[j]);
            sim.state.apply(i, j);
            if sim.state.levels[i] != before.0 {
                bump(&mut at_least, sim.state.levels[i]);
            }
            if sim.state.levels[j] != before.1 {
                bump(&mut at_least, sim.state.levels[j]);
            }
            step += 1;
        }
        for k in 0..=max_level {
            let c = at_least.get(k).copied().unwrap_or(0);
            values.push(TailPoint {
                k,
                t,
                value: c as f64 / n as f64,
            });
        }
    }
    Ok(TailMeasurement { values })
}

/// Lyapunov function whose drift is checked far from the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lyapunov {
    /// `sum x_i^2` beyond `max_i x_i > (5/4) N (N+1)`.
    Quadratic,
    /// `sum exp(r x_i)` beyond `max_i x_i > 2 ln(16 N^2)`.
    Exponential { r: f64 },
}

impl Lyapunov {
    pub fn threshold(&self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            Lyapunov::Quadratic => 1.25 * nf * (nf + 1.0),
            Lyapunov::Exponential { .. } => 2.0 * (16.0 * nf * nf).ln(),
        }
    }
}

/// Outcome of a sampled drift check.
#[derive(Clone, Debug, Serialize)]
pub struct DriftCheck {
    #[serde(rename = "N")]
    pub n: usize,
    pub lyapunov: Lyapunov,
    pub threshold: f64,
    pub samples: usize,
    /// Largest drift seen.
    pub max_drift: f64,
    /// States whose drift exceeds -1.
    pub failures: usize,
    pub worst: GapState,
}

/// Drift at `samples` random gap states beyond the threshold. One coordinate
/// is drawn uniformly from `(t, 3t]`, the others from `[0, 2t]`; the drift is
/// the exact one-step expectation.
pub fn drift_check(n: usize, lyapunov: Lyapunov, samples: usize, seed: u64) -> Result<DriftCheck> {
    if n < 3 {
        return Err(Error::contract(format!("need N >= 3, got {n}")));
    }
    if samples == 0 {
        return Err(Error::contract("samples must be positive"));
    }
    let threshold = lyapunov.threshold(n);
    let t = threshold.floor() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<GapState> = (0..samples)
        .map(|_| {
            let mut gaps: Vec<u64> = (0..n - 2).map(|_| rng.gen_range(0..=2 * t)).collect();
            let i = rng.gen_range(0..n - 2);
            gaps[i] = rng.gen_range(t + 1..=3 * t.max(1));
            GapState::new(gaps)
        })
        .collect();
    let drifts: Vec<f64> = states
        .par_iter()
        .map(|x| match lyapunov {
            Lyapunov::Quadratic => Ok(crate::Scalar::to_f64_lossy(&quadratic_drift(x))),
            Lyapunov::Exponential { r } => exponential_drift(x, r),
        })
        .collect::<Result<_>>()?;
    let failures = match lyapunov {
        // exact comparison for the rational drift
        Lyapunov::Quadratic => states.par_iter().filter(|x| quadratic_drift(x) > -Rational::from_integer(1.into())).count(),
        Lyapunov::Exponential { .. } => drifts.iter().filter(|&&d| d > -1.0).count(),
    };
    let (worst_i, max_drift) = drifts
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
    Ok(DriftCheck {
        n,
        lyapunov,
        threshold,
        samples,
        max_drift,
        failures,
        worst: states[worst_i].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn equal_levels_both_move() {
        let s = CounterState::from_levels(vec![5, 5]).unwrap();
        let (next, updated) = s.step(0, 1).unwrap();
        assert_eq!(next.levels(), &[6, 6]);
        assert_eq!(updated, 2);
    }

    #[test]
    fn smaller_counter_moves() {
        let s = CounterState::from_levels(vec![5, 3]).unwrap();
        let (next, updated) = s.step(0, 1).unwrap();
        assert_eq!(next.levels(), &[5, 4]);
        assert_eq!(updated, 1);
    }

    #[test]
    fn bad_pair_is_rejected() {
        let s = CounterState::new(3).unwrap();
        assert!(s.step(0, 3).is_err());
        assert!(s.step(1, 1).is_err());
    }

    #[test]
    fn n3_from_all_equal() {
        let s = CounterState::new(3).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let (next, updated) = s.step(i, j).unwrap();
            assert_eq!(updated, 2);
            assert_eq!(next.gap_state(), GapState::new(vec![1]));
        }
    }

    #[test]
    fn n3_one_step_law() {
        let d = one_step_distribution(&GapState::new(vec![0]));
        assert_eq!(d, vec![(GapState::new(vec![1]), Rational::one())]);

        let d = one_step_distribution(&GapState::new(vec![4]));
        assert_eq!(
            d,
            vec![(GapState::new(vec![3]), q(2, 3)), (GapState::new(vec![5]), q(1, 3))]
        );
    }

    #[test]
    fn n4_boundary_row() {
        let d = one_step_distribution(&GapState::new(vec![2, 0]));
        assert_eq!(
            d,
            vec![
                (GapState::new(vec![1, 0]), q(1, 6)),
                (GapState::new(vec![1, 1]), q(2, 3)),
                (GapState::new(vec![3, 0]), q(1, 6)),
            ]
        );
    }

    #[test]
    fn quadratic_drift_n3() {
        assert_eq!(quadratic_drift(&GapState::new(vec![0])), Rational::one());
        for k in 1..20i64 {
            assert_eq!(quadratic_drift(&GapState::new(vec![k as u64])), q(-2 * k + 3, 3));
        }
        assert!(quadratic_drift(&GapState::new(vec![30, 0])) <= -Rational::one());
    }

    #[test]
    fn exponential_drift_examples() {
        let d = exponential_drift(&GapState::new(vec![0]), 0.5).unwrap();
        assert!((d - (0.5f64.exp() - 1.0)).abs() < 1e-12);

        let m = (2.0 * (16.0f64 * 16.0).ln()).ceil() as u64 + 1;
        assert!(exponential_drift(&GapState::new(vec![m, m]), 0.5).unwrap() <= -1.0);

        for n in 3..9 {
            let d = exponential_drift(&GapState::zeros(n), 0.5).unwrap();
            assert!(d <= 2.0 * (0.5f64.exp() - 1.0) + 1e-12);
        }
        assert!(exponential_drift(&GapState::zeros(4), 0.0).is_err());
    }

    #[test]
    fn simulation_is_reproducible() {
        let a = simulate_speed(6, 20_000, 1_000, 7).unwrap();
        let b = simulate_speed(6, 20_000, 1_000, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        let c = simulate_speed(6, 20_000, 1_000, 8).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn two_counters_always_move_together() {
        let e = simulate_speed(2, 1_000, 0, 1).unwrap();
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn speed_estimate_stays_in_range() {
        let e = simulate_speed(5, 10_000, 100, 3).unwrap();
        assert!((1.0..=2.0).contains(&e.mean));
        assert!(e.stderr >= 0.0);
    }

    #[test]
    fn top_block_keeps_two() {
        let mut sim = Simulator::new(7, 11).unwrap();
        for _ in 0..10_000 {
            sim.step();
            assert!(sim.state().top_block() >= 2);
        }
    }

    #[test]
    fn replicas_are_ordered_and_reproducible() {
        let a = simulate_replicas(4, 5_000, 100, 9, 3).unwrap();
        let b = simulate_replicas(4, 5_000, 100, 9, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].seed, 9);
        assert_ne!(a[1].seed, a[2].seed);
        let p = pool(&a).unwrap();
        assert!((p.mean - a.iter().map(|e| e.mean).sum::<f64>() / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tails_initial_condition() {
        let m = empirical_tails(50, &[0.0, 1.0], 3, 1).unwrap();
        assert_eq!(m.get(0, 0.0), Some(1.0));
        for k in 1..=3 {
            assert_eq!(m.get(k, 0.0), Some(0.0));
        }
        assert_eq!(m.get(0, 1.0), Some(1.0));
    }

    #[test]
    fn tails_first_level_matches_mean_field() {
        // psi_1(t) = 1 - exp(-2t); sampling sd about sqrt(p(1-p)/N)
        let n = 1000;
        let m = empirical_tails(n, &[1.0], 1, 5).unwrap();
        let v = m.get(1, 1.0).unwrap();
        assert!((v - (1.0 - (-2.0f64).exp())).abs() < 0.05, "{v}");
    }

    #[test]
    fn batch_means_of_constant_has_zero_error() {
        let mut b = BatchMeans::new(1000, 100);
        for _ in 0..1000 {
            b.push(1.5);
        }
        assert_eq!(b.mean(), 1.5);
        assert_eq!(b.stderr(), 0.0);
    }

    fn gap_vector() -> impl Strategy<Value = Vec<u64>> {
        (1usize..=6).prop_flat_map(|m| prop::collection::vec(0u64..4, m))
    }

    proptest! {
        #[test]
        fn one_step_law_is_a_distribution(gaps in gap_vector()) {
            let x = GapState::new(gaps);
            let n = x.n() as i64;
            let d = one_step_distribution(&x);
            let total: Rational = d.iter().map(|(_, p)| p.clone()).sum();
            prop_assert_eq!(total, Rational::one());
            for (g, p) in &d {
                prop_assert!(*p > Rational::zero());
                // p * C(N,2) is an integer
                let scaled = p * Rational::from_integer(BigInt::from(n * (n - 1) / 2));
                prop_assert!(scaled.is_integer());
                let changed = g.gaps.iter().zip(&x.gaps).filter(|(a, b)| a != b).count();
                prop_assert!(changed <= 2);
                for (a, b) in g.gaps.iter().zip(&x.gaps) {
                    prop_assert!(a.abs_diff(*b) <= 1);
                }
            }
        }

        #[test]
        fn increments_depend_only_on_sign_pattern(gaps in gap_vector(), scale in 2u64..7) {
            let x = GapState::new(gaps.clone());
            let y = GapState::new(gaps.iter().map(|&g| g * scale).collect());
            prop_assert_eq!(expected_gap_increments(&x), expected_gap_increments(&y));
            prop_assert_eq!(expected_updates(&x), expected_updates(&y));
        }
    }
}
