//! Two-phase revised simplex for
//! `max c.x  s.t.  A x = b, x >= 0`, over any [`Scalar`].
//!
//! The basis inverse is kept explicitly (rows are few, columns many), so each
//! iteration costs one pricing pass over the columns plus an `m x m` update.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const DEGENERATE_LIMIT: usize = 50;
const REFACTOR_EVERY: usize = 100;

/// `max c.x` subject to `A x = b`, `x >= 0`; `columns[j]` is column `j` of `A`.
#[derive(Clone, Debug)]
pub struct StandardForm<S> {
    pub columns: Vec<Vec<S>>,
    pub b: Vec<S>,
    pub c: Vec<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct SimplexResult<S> {
    pub status: Status,
    /// Basic column per row; indices `>= columns.len()` are artificial.
    pub basis: Vec<usize>,
    pub x_basic: Vec<S>,
    /// Row prices `y` with `y.A_j >= c_j` for every column at optimality.
    pub duals: Vec<S>,
    pub objective: S,
    pub iterations: usize,
}

struct Tableau<'a, S> {
    sf: &'a StandardForm<S>,
    m: usize,
    n: usize,
    binv: Vec<Vec<S>>,
    x: Vec<S>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    iterations: usize,
}

impl<'a, S: Scalar + Send + Sync> Tableau<'a, S> {
    /// Entry `i` of column `j`, artificial columns being unit vectors.
    fn entry(&self, i: usize, j: usize) -> S {
        if j < self.n {
            self.sf.columns[j][i].clone()
        } else if j - self.n == i {
            S::one()
        } else {
            S::zero()
        }
    }

    fn ftran(&self, j: usize) -> Vec<S> {
        if j >= self.n {
            let r = j - self.n;
            return (0..self.m).map(|i| self.binv[i][r].clone()).collect();
        }
        let col = &self.sf.columns[j];
        (0..self.m)
            .map(|i| {
                let mut acc = S::zero();
                for (bij, aj) in self.binv[i].iter().zip(col) {
                    if !aj.is_zero() && !bij.is_zero() {
                        acc = acc + bij.clone() * aj.clone();
                    }
                }
                acc
            })
            .collect()
    }

    fn prices(&self, cost: &dyn Fn(usize) -> S) -> Vec<S> {
        let mut y = vec![S::zero(); self.m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = cost(bj);
            if cb.is_zero() {
                continue;
            }
            for (yk, bik) in y.iter_mut().zip(&self.binv[i]) {
                *yk = yk.clone() + cb.clone() * bik.clone();
            }
        }
        y
    }

    fn pivot(&mut self, r: usize, j: usize, u: &[S]) {
        let ur = u[r].clone();
        for v in self.binv[r].iter_mut() {
            *v = v.clone() / ur.clone();
        }
        self.x[r] = self.x[r].clone() / ur;
        let pivot_row = self.binv[r].clone();
        let xr = self.x[r].clone();
        for i in 0..self.m {
            if i == r || u[i].is_zero() {
                continue;
            }
            let f = u[i].clone();
            for (v, p) in self.binv[i].iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v = v.clone() - f.clone() * p.clone();
                }
            }
            self.x[i] = self.x[i].clone() - f * xr.clone();
        }
        self.in_basis[self.basis[r]] = false;
        self.basis[r] = j;
        self.in_basis[j] = true;
        self.iterations += 1;
    }

    fn reduced_cost(&self, y: &[S], cost: &dyn Fn(usize) -> S, j: usize) -> S {
        let mut d = cost(j);
        if j < self.n {
            for (yi, aij) in y.iter().zip(&self.sf.columns[j]) {
                if !aij.is_zero() {
                    d = d - yi.clone() * aij.clone();
                }
            }
        } else {
            d = d - y[j - self.n].clone();
        }
        d
    }

    /// Recompute the basis inverse and basic values from scratch, limiting
    /// drift in floating point.
    fn refactor(&mut self) {
        if let Some(binv) = invert(self, &self.basis) {
            self.x = binv
                .iter()
                .map(|row| row.iter().zip(&self.sf.b).fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone()))
                .collect();
            self.binv = binv;
        }
    }

    /// Simplex iterations for cost vector `cost` over eligible columns.
    ///
    /// The entering column has the largest reduced cost; after a run of
    /// degenerate pivots the rule falls back to Bland's (lowest index) until
    /// the objective moves again, which rules out cycling.
    fn run(&mut self, cost: &(dyn Fn(usize) -> S + Sync), eligible: &(dyn Fn(usize) -> bool + Sync), max_iter: usize) -> Result<Status> {
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= max_iter {
                return Err(Error::NoConvergence {
                    iterations: self.iterations,
                    residual: f64::NAN,
                });
            }
            if !S::is_exact() && self.iterations > 0 && self.iterations % REFACTOR_EVERY == 0 {
                self.refactor();
            }
            let y = self.prices(cost);
            let bland = degenerate_run >= DEGENERATE_LIMIT;
            let candidate = |j: usize| -> Option<(usize, S)> {
                if self.in_basis[j] || !eligible(j) {
                    return None;
                }
                let d = self.reduced_cost(&y, cost, j);
                d.is_pos().then_some((j, d))
            };
            let total = self.n + self.m;
            let entering = if bland {
                (0..total).find_map(candidate).map(|(j, _)| j)
            } else {
                (0..total)
                    .into_par_iter()
                    .filter_map(candidate)
                    .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
                    .map(|(j, _)| j)
            };
            let Some(j) = entering else { return Ok(Status::Optimal) };
            let u = self.ftran(j);
            let mut leave: Option<(usize, S)> = None;
            for i in 0..self.m {
                if !u[i].is_pos() {
                    continue;
                }
                let ratio = self.x[i].clone() / u[i].clone();
                let better = match &leave {
                    None => true,
                    Some((r, best)) => {
                        ratio < *best || (ratio == *best && self.basis[i] < self.basis[*r])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let Some((r, step)) = leave else { return Ok(Status::Unbounded) };
            if step.is_pos() {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
            self.pivot(r, j, &u);
        }
    }
}

/// Invert the basis matrix by Gauss–Jordan elimination.
fn invert<S: Scalar>(t: &Tableau<S>, basis: &[usize]) -> Option<Vec<Vec<S>>> {
    let m = t.m;
    let mut a: Vec<Vec<S>> = (0..m)
        .map(|i| {
            let mut row: Vec<S> = basis.iter().map(|&j| t.entry(i, j)).collect();
            row.extend((0..m).map(|k| if k == i { S::one() } else { S::zero() }));
            row
        })
        .collect();
    for col in 0..m {
        let p = (col..m)
            .filter(|&r| !a[r][col].is_negligible())
            .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap())?;
        a.swap(col, p);
        let pv = a[col][col].clone();
        for v in a[col].iter_mut() {
            *v = v.clone() / pv.clone();
        }
        let prow = a[col].clone();
        for r in 0..m {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for (v, p) in a[r].iter_mut().zip(&prow) {
                *v = v.clone() - f.clone() * p.clone();
            }
        }
    }
    Some(a.into_iter().map(|row| row[m..].to_vec()).collect())
}

/// Basic values `x_B = B^-1 b` and row prices `y = c_B B^-1` for a basis,
/// or `None` if it is singular or names a column out of range.
pub fn basis_solution<S: Scalar + Send + Sync>(sf: &StandardForm<S>, basis: &[usize]) -> Option<(Vec<S>, Vec<S>)> {
    let (m, n) = (sf.b.len(), sf.columns.len());
    if basis.len() != m || basis.iter().any(|&j| j >= n + m) {
        return None;
    }
    let t = Tableau {
        sf,
        m,
        n,
        binv: Vec::new(),
        x: Vec::new(),
        basis: basis.to_vec(),
        in_basis: Vec::new(),
        iterations: 0,
    };
    let binv = invert(&t, basis)?;
    let x = binv
        .iter()
        .map(|row| row.iter().zip(&sf.b).fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone()))
        .collect();
    let cost = |j: usize| if j < n { sf.c[j].clone() } else { S::zero() };
    let t = Tableau { binv, ..t };
    let y = t.prices(&cost);
    Some((x, y))
}

/// Solve `sf`, optionally starting from a basis (e.g. one found in floating
/// point). A warm basis that is singular or infeasible is ignored.
pub fn solve<S: Scalar + Send + Sync>(sf: &StandardForm<S>, warm: Option<&[usize]>, max_iter: usize) -> Result<SimplexResult<S>> {
    let m = sf.b.len();
    let n = sf.columns.len();
    if sf.c.len() != n || sf.columns.iter().any(|c| c.len() != m) {
        return Err(Error::contract("inconsistent LP dimensions"));
    }
    if sf.b.iter().any(|v| v.is_neg()) {
        return Err(Error::contract("right-hand side must be non-negative"));
    }
    let identity: Vec<Vec<S>> = (0..m)
        .map(|i| (0..m).map(|k| if k == i { S::one() } else { S::zero() }).collect())
        .collect();
    let mut t = Tableau {
        sf,
        m,
        n,
        binv: identity,
        x: sf.b.clone(),
        basis: (n..n + m).collect(),
        in_basis: (0..n + m).map(|j| j >= n).collect(),
        iterations: 0,
    };

    let mut phase_one_needed = true;
    if let Some(w) = warm.filter(|w| w.len() == m && w.iter().all(|&j| j < n + m)) {
        if let Some(binv) = invert(&t, w) {
            let x: Vec<S> = binv
                .iter()
                .map(|row| row.iter().zip(&sf.b).fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone()))
                .collect();
            let artificial_ok = w.iter().zip(&x).all(|(&j, v)| j < n || v.is_negligible());
            if x.iter().all(|v| !v.is_neg()) && artificial_ok {
                t.binv = binv;
                t.x = x;
                t.in_basis = vec![false; n + m];
                for &j in w {
                    t.in_basis[j] = true;
                }
                t.basis = w.to_vec();
                phase_one_needed = w.iter().any(|&j| j >= n);
            }
        }
    }

    if phase_one_needed {
        let cost1 = |j: usize| if j >= n { -S::one() } else { S::zero() };
        t.run(&cost1, &|_| true, max_iter)?;
        let infeas = t
            .basis
            .iter()
            .zip(&t.x)
            .filter(|(&j, _)| j >= n)
            .fold(S::zero(), |acc, (_, v)| acc + v.clone());
        if infeas.is_pos() {
            return Ok(SimplexResult {
                status: Status::Infeasible,
                basis: t.basis.clone(),
                x_basic: t.x.clone(),
                duals: vec![S::zero(); m],
                objective: S::zero(),
                iterations: t.iterations,
            });
        }
        // drive basic artificials (all at zero) out where possible
        for r in 0..m {
            if t.basis[r] < n {
                continue;
            }
            let row = t.binv[r].clone();
            let j = (0..n).find(|&j| {
                !t.in_basis[j]
                    && !sf.columns[j]
                        .iter()
                        .zip(&row)
                        .fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
                        .is_negligible()
            });
            if let Some(j) = j {
                let u = t.ftran(j);
                t.pivot(r, j, &u);
            }
        }
    }

    let cost2 = |j: usize| if j < n { sf.c[j].clone() } else { S::zero() };
    let status = t.run(&cost2, &|j| j < n, max_iter)?;
    let duals = t.prices(&cost2);
    let objective = t
        .basis
        .iter()
        .zip(&t.x)
        .fold(S::zero(), |acc, (&j, v)| acc + cost2(j) * v.clone());
    Ok(SimplexResult {
        status,
        basis: t.basis,
        x_basic: t.x,
        duals,
        objective,
        iterations: t.iterations,
    })
}
