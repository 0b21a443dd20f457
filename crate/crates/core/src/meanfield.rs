//! Mean-field hierarchy for the level tails and its travelling front.
//!
//! `phi_k(t)` is the limiting fraction of counters at level `>= k`, with
//!
//! ```text
//! phi_0 = 1,   phi_{k+1}' = phi_k (phi_k - phi_{k+1}),   phi_k(0) = 0 for k >= 1.
//! ```
//!
//! Particle time `psi` runs twice as fast: `psi_k(t) = phi_k(2t)`, so that
//! `phi_1(t) = 1 - exp(-t)` and `psi_1'(0) = 2`. Speeds are reported in both
//! conventions; the `psi` speed is the one comparable with `V(N)`.

use num_traits::Float;
use serde::Serialize;

use crate::error::{Error, Result};

/// Right-hand side of the hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// `phi_{k+1}' = phi_k (phi_k - phi_{k+1})`.
    CounterRace,
    /// Baseline where only the smaller of two sampled counters moves:
    /// `phi_{k+1}' = (phi_k^2 - phi_{k+1}^2) / 2`, front speed 1 in `psi` time.
    PowerOfTwo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeScale {
    Phi,
    Psi,
}

fn c<T: Float>(x: f64) -> T {
    T::from(x).expect("representable constant")
}

/// Integration output: snapshots of `phi_0..=phi_K` plus the exact-step
/// crossing times of level 1/2.
#[derive(Clone, Debug, Serialize)]
pub struct MeanFieldState<T> {
    #[serde(rename = "K")]
    pub k: usize,
    pub dt: T,
    pub horizon: T,
    pub model: Model,
    pub time_scale: TimeScale,
    /// Snapshot times (`phi` time).
    pub times: Vec<T>,
    /// `phi[s][k]` at `times[s]`.
    pub phi: Vec<Vec<T>>,
    /// First time `phi_k` reaches 1/2, by linear interpolation inside the step.
    pub crossings: Vec<Option<T>>,
}

impl<T: Float> MeanFieldState<T> {
    /// `phi_k(t)` by linear interpolation between snapshots.
    pub fn at(&self, level: usize, t: T) -> Option<T> {
        if level > self.k || t < T::zero() || t > *self.times.last()? {
            return None;
        }
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            return Some(self.phi[0][level]);
        }
        if i == self.times.len() {
            return Some(self.phi[i - 1][level]);
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        Some(self.phi[i - 1][level] * (T::one() - w) + self.phi[i][level] * w)
    }

    pub fn final_values(&self) -> &[T] {
        self.phi.last().expect("at least the initial snapshot")
    }
}

/// Integration parameters beyond `(K, T, dt)`.
#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    pub model: Model,
    /// Number of stored snapshots after the initial one.
    pub snapshots: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            model: Model::CounterRace,
            snapshots: 4000,
        }
    }
}

/// Classical RK4 for `phi_1..=phi_K` up to `phi` time `horizon`.
pub fn integrate<T: Float>(k: usize, horizon: T, dt: T) -> Result<MeanFieldState<T>> {
    integrate_with(k, horizon, dt, IntegrateOptions::default())
}

/// Below this a level and everything above it are treated as not yet reached.
const FRONT_CUTOFF: f64 = 1e-15;

pub fn integrate_with<T: Float>(k: usize, horizon: T, dt: T, opts: IntegrateOptions) -> Result<MeanFieldState<T>> {
    if k < 2 {
        return Err(Error::contract(format!("need K >= 2 levels, got {k}")));
    }
    if !(horizon > T::zero()) || !(dt > T::zero()) {
        return Err(Error::contract("horizon and dt must be positive"));
    }
    let steps = (horizon / dt).round().to_usize().unwrap_or(0).max(1);
    let stride = (steps / opts.snapshots.max(1)).max(1);
    let half = c::<T>(0.5);
    let cutoff = c::<T>(FRONT_CUTOFF);
    let slack = c::<T>(1e-12);

    let deriv = |phi: &[T], out: &mut [T], lo: usize, hi: usize| {
        for j in lo..=hi {
            let (a, b) = (phi[j - 1], phi[j]);
            out[j] = match opts.model {
                Model::CounterRace => a * (a - b),
                Model::PowerOfTwo => half * (a * a - b * b),
            };
        }
    };

    let mut phi = vec![T::zero(); k + 1];
    phi[0] = T::one();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![T::zero(); k + 1], vec![T::zero(); k + 1], vec![T::zero(); k + 1], vec![T::zero(); k + 1], phi.clone());
    let mut times = vec![T::zero()];
    let mut snaps = vec![phi.clone()];
    let mut crossings: Vec<Option<T>> = vec![None; k + 1];
    crossings[0] = Some(T::zero());
    // levels below `lo` sit exactly at 1 and have zero derivative
    let mut lo = 1;
    // highest level above the cutoff; RK4 stages reach up to four levels further
    let mut front = 0;
    let two = c::<T>(2.0);
    let six = c::<T>(6.0);

    for step in 1..=steps {
        while lo <= k && phi[lo] == T::one() && phi[lo - 1] == T::one() {
            lo += 1;
        }
        while front < k && phi[front + 1] > cutoff {
            front += 1;
        }
        if lo > k {
            break;
        }
        let hi = (front + 4).min(k);
        deriv(&phi, &mut k1, lo, hi);
        for j in lo..=hi {
            tmp[j] = phi[j] + half * dt * k1[j];
        }
        deriv(&tmp, &mut k2, lo, hi);
        for j in lo..=hi {
            tmp[j] = phi[j] + half * dt * k2[j];
        }
        deriv(&tmp, &mut k3, lo, hi);
        for j in lo..=hi {
            tmp[j] = phi[j] + dt * k3[j];
        }
        deriv(&tmp, &mut k4, lo, hi);
        let t_prev = dt * c::<T>((step - 1) as f64);
        for j in lo..=hi {
            let old = phi[j];
            let new = old + dt / six * (k1[j] + two * k2[j] + two * k3[j] + k4[j]);
            if crossings[j].is_none() && old < half && new >= half {
                crossings[j] = Some(t_prev + dt * (half - old) / (new - old));
            }
            phi[j] = new;
            tmp[j] = new;
        }
        for j in lo..=hi {
            let upper = phi[j - 1];
            if phi[j] < -slack || phi[j] > upper + slack || phi[j] > T::one() + slack {
                return Err(Error::StepSize {
                    dt: dt.to_f64().unwrap_or(f64::NAN),
                    detail: format!("ordering 0 <= phi_{j} <= phi_{} <= 1 violated", j - 1),
                });
            }
        }
        if step % stride == 0 || step == steps {
            times.push(dt * c::<T>(step as f64));
            snaps.push(phi.clone());
        }
    }
    Ok(MeanFieldState {
        k,
        dt,
        horizon: dt * c::<T>(steps as f64),
        model: opts.model,
        time_scale: TimeScale::Phi,
        times,
        phi: snaps,
        crossings,
    })
}

/// `phi_1(t) = 1 - exp(-t)`.
pub fn phi1_exact(t: f64) -> f64 {
    -(-t).exp_m1()
}

fn simpson_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `phi_2(t) = int_0^t phi_1(s)^2 exp(-int_s^t phi_1(u) du) ds` by adaptive
/// Simpson quadrature, using `int_s^t phi_1 = (t - s) - (e^{-s} - e^{-t})`.
pub fn phi2_quadrature(t: f64, tol: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let integrand = |s: f64| {
        let p = phi1_exact(s);
        let inner = (t - s) - ((-s).exp() - (-t).exp());
        p * p * (-inner).exp()
    };
    simpson_adaptive(&integrand, 0.0, t, tol)
}

/// Front diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct WaveEstimate {
    /// `(k, t_k)` in `phi` time, for the levels of the window that crossed 1/2.
    pub crossing_times: Vec<(usize, f64)>,
    /// `t_{k+1} - t_k` over the window.
    pub spacings: Vec<f64>,
    /// Last spacing, converted: `2 / (t_{k+1} - t_k)`.
    pub speed_psi_last: f64,
    /// `psi` speed from the mean spacing over the last quarter of the window.
    pub speed_psi: f64,
    pub speed_phi: f64,
    /// Largest `|dt_{k+1} - dt_k|` over the last quarter of the window.
    pub spacing_drift: f64,
    /// Reference level of the sampled profile.
    pub profile_level: usize,
    /// `(x, H(x))` with `H(x) = phi_k((k + x) / c_phi)` at the reference level.
    pub profile: Vec<(f64, f64)>,
}

/// Estimate the front speed from the 1/2 crossings of levels in
/// `window = (first, last)`.
pub fn wave_speed<T: Float>(state: &MeanFieldState<T>, window: (usize, usize)) -> Result<WaveEstimate> {
    let (first, last) = window;
    if first < 1 || last > state.k || last < first + 7 {
        return Err(Error::contract(format!(
            "level window {window:?} must lie in 1..={} and span at least 8 levels",
            state.k
        )));
    }
    let crossing_times: Vec<(usize, f64)> = (first..=last)
        .filter_map(|j| state.crossings[j].map(|t| (j, t.to_f64().unwrap())))
        .collect();
    if crossing_times.len() < 8 || crossing_times.last().unwrap().0 != last {
        return Err(Error::InsufficientHorizon(format!(
            "only {} of levels {first}..={last} crossed 1/2 by t={}; increase T",
            crossing_times.len(),
            state.horizon.to_f64().unwrap()
        )));
    }
    let spacings: Vec<f64> = crossing_times.windows(2).map(|w| w[1].1 - w[0].1).collect();
    if spacings.iter().any(|&s| s <= 0.0) {
        return Err(Error::Invariant("crossing times are not increasing".into()));
    }
    let tail_start = spacings.len() - (spacings.len() / 4).max(3);
    let tail = &spacings[tail_start..];
    let spacing_drift = tail.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    // slope of t_k against k over the tail; the spacings settle geometrically,
    // so this averages integrator noise rather than extrapolating
    let tail_points: Vec<(f64, f64)> = crossing_times[tail_start..]
        .iter()
        .map(|&(j, t)| (j as f64, t))
        .collect();
    let limit = linear_fit(&tail_points).map(|f| f.0).unwrap_or(*tail.last().unwrap());
    let speed_phi = 1.0 / limit;
    let speed_psi = 2.0 / limit;

    let profile_level = crossing_times[crossing_times.len() / 2].0;
    let mut profile = Vec::new();
    let horizon = state.horizon.to_f64().unwrap();
    let mut x = -(profile_level as f64);
    while x <= 40.0 {
        let t = (profile_level as f64 + x) / speed_phi;
        if (0.0..=horizon).contains(&t) {
            if let Some(v) = state.at(profile_level, c::<T>(t)) {
                profile.push((x, v.to_f64().unwrap()));
            }
        }
        x += 0.05;
    }
    Ok(WaveEstimate {
        speed_psi_last: 2.0 / spacings.last().unwrap(),
        crossing_times,
        spacings,
        speed_psi,
        speed_phi,
        spacing_drift,
        profile_level,
        profile,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    /// Decades of `H` (or `1 - H`) covered by the fitted points.
    pub decades: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailReport {
    /// `log H(x)` against `x` where `H` is small.
    pub left: Option<TailFit>,
    /// `log(-log(1 - H(x)))` against `x` where `1 - H` is small.
    pub right: Option<TailFit>,
    /// Whether `H` increases along the sampled profile.
    pub monotone: bool,
    pub partial: bool,
}

fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, my - slope * mx, r2))
}

/// Regressions for the two tails of the sampled profile. Exploratory only.
pub fn tail_diagnostics(w: &WaveEstimate) -> TailReport {
    let fit = |pts: Vec<(f64, f64)>, small: Vec<f64>| {
        let (slope, intercept, r_squared) = linear_fit(&pts)?;
        let lo = small.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = small.iter().cloned().fold(0.0, f64::max);
        Some(TailFit {
            slope,
            intercept,
            r_squared,
            points: pts.len(),
            decades: (hi / lo).log10(),
        })
    };
    let left_pts: Vec<(f64, f64)> = w
        .profile
        .iter()
        .filter(|p| p.1 > 1e-13 && p.1 < 1e-3)
        .map(|&(x, h)| (x, h.ln()))
        .collect();
    let left_small: Vec<f64> = w.profile.iter().map(|p| p.1).filter(|&h| h > 1e-13 && h < 1e-3).collect();
    let right_pts: Vec<(f64, f64)> = w
        .profile
        .iter()
        .filter(|p| 1.0 - p.1 > 1e-13 && 1.0 - p.1 < 1e-3)
        .map(|&(x, h)| (x, (-(1.0 - h).ln()).ln()))
        .collect();
    let right_small: Vec<f64> = w
        .profile
        .iter()
        .map(|p| 1.0 - p.1)
        .filter(|&g| g > 1e-13 && g < 1e-3)
        .collect();
    let left = fit(left_pts, left_small);
    let right = fit(right_pts, right_small);
    let monotone = w.profile.windows(2).all(|p| p[1].1 >= p[0].1 - 1e-12);
    let partial = [&left, &right]
        .iter()
        .any(|f| f.as_ref().map_or(true, |f| f.decades < 4.0));
    TailReport {
        left,
        right,
        monotone,
        partial,
    }
}

/// Observed convergence order at `phi_level(horizon)` from runs with `dt`,
/// `dt/2` and `dt/4`.
pub fn observed_order(k: usize, horizon: f64, dt: f64, level: usize) -> Result<f64> {
    let v = |h: f64| -> Result<f64> {
        let s = integrate_with(k, horizon, h, IntegrateOptions { snapshots: 1, ..Default::default() })?;
        Ok(s.final_values()[level])
    };
    let (a, b, cc) = (v(dt)?, v(dt / 2.0)?, v(dt / 4.0)?);
    Ok(((a - b) / (b - cc)).abs().log2())
}
