//! Method of moving asymptotes for
//!
//! ```text
//! minimize f0(x)  subject to  g_i(x) <= 0,  xmin <= x <= xmax
//! ```
//!
//! Each call builds the separable convex approximation around the current
//! iterate and solves it with a primal-dual interior-point method. Artificial
//! variables keep the subproblem feasible; their weights follow the usual
//! choice `a0 = 1, a = 0, c = 1000, d = 1`.

use faer::Mat;
use faer::linalg::solvers::Solve;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmaSettings {
    /// Fraction of the variable range an iterate may move per update.
    pub move_limit: f64,
    pub asymptote_init: f64,
    pub asymptote_grow: f64,
    pub asymptote_shrink: f64,
    /// Penalty on the artificial constraint-relaxation variables.
    pub relaxation_weight: f64,
}

impl Default for MmaSettings {
    fn default() -> Self {
        Self {
            move_limit: 0.1,
            asymptote_init: 0.5,
            asymptote_grow: 1.2,
            asymptote_shrink: 0.7,
            relaxation_weight: 1000.0,
        }
    }
}

const ALBEFA: f64 = 0.1;
const RAA0: f64 = 1e-5;
const EPSIMIN: f64 = 1e-7;
/// Closest an asymptote may come to the iterate, as a fraction of the range.
const MIN_ASYMPTOTE_GAP: f64 = 1e-5;

/// Optimizer memory carried between iterations.
#[derive(Clone, Debug)]
pub struct Mma {
    n: usize,
    m: usize,
    settings: MmaSettings,
    iteration: usize,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
}

/// Convex separable subproblem data.
struct Subproblem {
    m: usize,
    n: usize,
    low: Vec<f64>,
    upp: Vec<f64>,
    alfa: Vec<f64>,
    beta: Vec<f64>,
    p0: Vec<f64>,
    q0: Vec<f64>,
    /// `m × n`, row-major.
    p: Vec<f64>,
    q: Vec<f64>,
    b: Vec<f64>,
    c: f64,
}

impl Mma {
    pub fn new(n: usize, m: usize, settings: MmaSettings) -> Self {
        Self {
            n,
            m,
            settings,
            iteration: 0,
            xold1: Vec::new(),
            xold2: Vec::new(),
            low: vec![0.0; n],
            upp: vec![0.0; n],
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Asymptotes `(low, upp)` used by the most recent update.
    pub fn asymptotes(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.upp)
    }

    /// One MMA step. `g` holds constraint values (feasible when `<= 0`) and
    /// `dg[i]` the gradient of constraint `i`.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        x: &[f64],
        xmin: &[f64],
        xmax: &[f64],
        df0: &[f64],
        g: &[f64],
        dg: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let (n, m) = (self.n, self.m);
        if x.len() != n || xmin.len() != n || xmax.len() != n || df0.len() != n {
            return Err(Error::Dimension(format!("MMA expects {n} variables")));
        }
        if g.len() != m || dg.len() != m || dg.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("MMA expects {m} constraints over {n} variables")));
        }
        if df0.iter().chain(g).chain(dg.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite objective or constraint data".into()));
        }
        for (i, row) in dg.iter().enumerate() {
            if g[i] > 0.0 && row.iter().all(|&v| v == 0.0) {
                return Err(Error::Infeasible(format!(
                    "constraint {i} is violated ({}) and has zero gradient",
                    g[i]
                )));
            }
        }
        self.iteration += 1;
        let s = self.settings;
        let range: Vec<f64> = (0..n).map(|j| (xmax[j] - xmin[j]).max(1e-5)).collect();

        if self.iteration <= 2 {
            for j in 0..n {
                self.low[j] = x[j] - s.asymptote_init * range[j];
                self.upp[j] = x[j] + s.asymptote_init * range[j];
            }
        } else {
            for j in 0..n {
                let trend = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if trend > 0.0 {
                    s.asymptote_grow
                } else if trend < 0.0 {
                    s.asymptote_shrink
                } else {
                    1.0
                };
                let low = x[j] - factor * (self.xold1[j] - self.low[j]);
                let upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.clamp(x[j] - 10.0 * range[j], x[j] - MIN_ASYMPTOTE_GAP * range[j]);
                self.upp[j] = upp.clamp(x[j] + MIN_ASYMPTOTE_GAP * range[j], x[j] + 10.0 * range[j]);
            }
        }

        let mut alfa = vec![0.0; n];
        let mut beta = vec![0.0; n];
        for j in 0..n {
            alfa[j] = (self.low[j] + ALBEFA * (x[j] - self.low[j]))
                .max(x[j] - s.move_limit * range[j])
                .max(xmin[j]);
            beta[j] = (self.upp[j] - ALBEFA * (self.upp[j] - x[j]))
                .min(x[j] + s.move_limit * range[j])
                .min(xmax[j]);
            if alfa[j] > beta[j] {
                let v = x[j].clamp(xmin[j], xmax[j]);
                alfa[j] = v;
                beta[j] = v;
            }
        }

        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut p = vec![0.0; m * n];
        let mut q = vec![0.0; m * n];
        let mut b = vec![0.0; m];
        for j in 0..n {
            let ux1 = self.upp[j] - x[j];
            let xl1 = x[j] - self.low[j];
            let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
            let reg = RAA0 / range[j];
            let (pp, qq) = (df0[j].max(0.0), (-df0[j]).max(0.0));
            let pq = 0.001 * (pp + qq) + reg;
            p0[j] = (pp + pq) * ux2;
            q0[j] = (qq + pq) * xl2;
            for i in 0..m {
                let d = dg[i][j];
                let (pp, qq) = (d.max(0.0), (-d).max(0.0));
                let pq = 0.001 * (pp + qq) + reg;
                p[i * n + j] = (pp + pq) * ux2;
                q[i * n + j] = (qq + pq) * xl2;
                b[i] += p[i * n + j] / ux1 + q[i * n + j] / xl1;
            }
        }
        for i in 0..m {
            b[i] -= g[i];
        }

        // variables with no room to move are folded into the constraint bounds
        let free: Vec<usize> = (0..n).filter(|&j| beta[j] > alfa[j]).collect();
        let mut next: Vec<f64> = (0..n).map(|j| x[j].clamp(alfa[j], beta[j])).collect();
        if !free.is_empty() {
            for j in (0..n).filter(|&j| beta[j] <= alfa[j]) {
                for i in 0..m {
                    b[i] -= p[i * n + j] / (self.upp[j] - next[j]) + q[i * n + j] / (next[j] - self.low[j]);
                }
            }
            let pick = |v: &[f64]| free.iter().map(|&j| v[j]).collect::<Vec<f64>>();
            let pick_rows = |v: &[f64]| {
                (0..m)
                    .flat_map(|i| free.iter().map(move |&j| v[i * n + j]))
                    .collect::<Vec<f64>>()
            };
            let sub = Subproblem {
                m,
                n: free.len(),
                low: pick(&self.low),
                upp: pick(&self.upp),
                alfa: pick(&alfa),
                beta: pick(&beta),
                p0: pick(&p0),
                q0: pick(&q0),
                p: pick_rows(&p),
                q: pick_rows(&q),
                b,
                c: s.relaxation_weight,
            };
            let xs = sub.solve()?;
            for (k, &j) in free.iter().enumerate() {
                next[j] = xs[k].clamp(alfa[j], beta[j]);
            }
        }
        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        if self.xold2.is_empty() {
            self.xold2 = x.to_vec();
        }
        Ok(next)
    }
}

/// Primal and dual variables of the subproblem.
#[derive(Clone)]
struct PrimalDual {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

impl PrimalDual {
    fn axpy(&self, t: f64, d: &PrimalDual) -> PrimalDual {
        let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u + t * v).collect::<Vec<f64>>();
        PrimalDual {
            x: f(&self.x, &d.x),
            y: f(&self.y, &d.y),
            z: self.z + t * d.z,
            lam: f(&self.lam, &d.lam),
            xsi: f(&self.xsi, &d.xsi),
            eta: f(&self.eta, &d.eta),
            mu: f(&self.mu, &d.mu),
            zet: self.zet + t * d.zet,
            s: f(&self.s, &d.s),
        }
    }
}

impl Subproblem {
    /// `(Σ_i λ_i P_ij, Σ_i λ_i Q_ij)` plus the objective terms.
    fn weighted(&self, lam: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut plam = self.p0.clone();
        let mut qlam = self.q0.clone();
        for i in 0..self.m {
            for j in 0..self.n {
                plam[j] += lam[i] * self.p[i * self.n + j];
                qlam[j] += lam[i] * self.q[i * self.n + j];
            }
        }
        (plam, qlam)
    }

    fn constraint_terms(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                (0..self.n)
                    .map(|j| self.p[i * self.n + j] / (self.upp[j] - x[j]) + self.q[i * self.n + j] / (x[j] - self.low[j]))
                    .sum()
            })
            .collect()
    }

    /// Perturbed KKT residual vector.
    fn residual(&self, v: &PrimalDual, epsi: f64) -> Vec<f64> {
        let (plam, qlam) = self.weighted(&v.lam);
        let gvec = self.constraint_terms(&v.x);
        let mut r = Vec::with_capacity(3 * self.n + 4 * self.m + 2);
        for j in 0..self.n {
            let (ux, xl) = (self.upp[j] - v.x[j], v.x[j] - self.low[j]);
            r.push(plam[j] / (ux * ux) - qlam[j] / (xl * xl) - v.xsi[j] + v.eta[j]);
        }
        for i in 0..self.m {
            r.push(self.c + v.y[i] - v.mu[i] - v.lam[i]);
        }
        r.push(1.0 - v.zet);
        for i in 0..self.m {
            r.push(gvec[i] - v.y[i] + v.s[i] - self.b[i]);
        }
        for j in 0..self.n {
            r.push(v.xsi[j] * (v.x[j] - self.alfa[j]) - epsi);
            r.push(v.eta[j] * (self.beta[j] - v.x[j]) - epsi);
        }
        for i in 0..self.m {
            r.push(v.mu[i] * v.y[i] - epsi);
            r.push(v.lam[i] * v.s[i] - epsi);
        }
        r.push(v.zet * v.z - epsi);
        r
    }

    fn solve(&self) -> Result<Vec<f64>> {
        let (m, n) = (self.m, self.n);
        let mut v = PrimalDual {
            x: (0..n).map(|j| 0.5 * (self.alfa[j] + self.beta[j])).collect(),
            y: vec![1.0; m],
            z: 1.0,
            lam: vec![1.0; m],
            xsi: vec![0.0; n],
            eta: vec![0.0; n],
            mu: vec![(0.5 * self.c).max(1.0); m],
            zet: 1.0,
            s: vec![1.0; m],
        };
        for j in 0..n {
            let gap_lo = v.x[j] - self.alfa[j];
            let gap_hi = self.beta[j] - v.x[j];
            v.xsi[j] = if gap_lo > 0.0 { (1.0 / gap_lo).max(1.0) } else { 1.0 };
            v.eta[j] = if gap_hi > 0.0 { (1.0 / gap_hi).max(1.0) } else { 1.0 };
        }
        let (alfa, beta) = (&self.alfa, &self.beta);
        let sub = self;
        let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let maxabs = |r: &[f64]| r.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let mut epsi = 1.0;
        while epsi > EPSIMIN {
            let mut res = sub.residual(&v, epsi);
            let mut resnorm = norm(&res);
            let mut inner = 0;
            while maxabs(&res) > 0.9 * epsi && inner < 200 {
                inner += 1;
                let d = sub.newton_direction(&v, epsi)?;
                let mut step_inv: f64 = 1.0;
                let ratio = |val: f64, dv: f64| -1.01 * dv / val;
                for i in 0..m {
                    step_inv = step_inv.max(ratio(v.y[i], d.y[i])).max(ratio(v.lam[i], d.lam[i]));
                    step_inv = step_inv.max(ratio(v.mu[i], d.mu[i])).max(ratio(v.s[i], d.s[i]));
                }
                step_inv = step_inv.max(ratio(v.z, d.z)).max(ratio(v.zet, d.zet));
                for j in 0..n {
                    step_inv = step_inv.max(ratio(v.xsi[j], d.xsi[j])).max(ratio(v.eta[j], d.eta[j]));
                    step_inv = step_inv.max(-1.01 * d.x[j] / (v.x[j] - alfa[j]));
                    step_inv = step_inv.max(1.01 * d.x[j] / (beta[j] - v.x[j]));
                }
                let mut step = 1.0 / step_inv;
                let base = v.clone();
                let mut trial = base.axpy(step, &d);
                let mut r = sub.residual(&trial, epsi);
                for _ in 0..50 {
                    if norm(&r) <= resnorm {
                        break;
                    }
                    step *= 0.5;
                    trial = base.axpy(step, &d);
                    r = sub.residual(&trial, epsi);
                }
                v = trial;
                resnorm = norm(&r);
                res = r;
            }
            epsi *= 0.1;
        }
        if v.x.iter().any(|x| !x.is_finite()) {
            return Err(Error::Infeasible("MMA subproblem diverged".into()));
        }
        Ok(v.x)
    }

    /// Newton step on the perturbed KKT system, reduced to `(m + 1)` unknowns.
    fn newton_direction(&self, v: &PrimalDual, epsi: f64) -> Result<PrimalDual> {
        let (m, n) = (self.m, self.n);
        let (plam, qlam) = self.weighted(&v.lam);
        let gvec = self.constraint_terms(&v.x);
        let mut delx = vec![0.0; n];
        let mut diagx = vec![0.0; n];
        let mut gg = vec![0.0; m * n];
        for j in 0..n {
            let (ux, xl) = (self.upp[j] - v.x[j], v.x[j] - self.low[j]);
            let (ux2, xl2) = (ux * ux, xl * xl);
            for i in 0..m {
                gg[i * n + j] = self.p[i * n + j] / ux2 - self.q[i * n + j] / xl2;
            }
            let (ga, gb) = (v.x[j] - self.alfa[j], self.beta[j] - v.x[j]);
            delx[j] = plam[j] / ux2 - qlam[j] / xl2 - epsi / ga + epsi / gb;
            diagx[j] = 2.0 * (plam[j] / (ux2 * ux) + qlam[j] / (xl2 * xl)) + v.xsi[j] / ga + v.eta[j] / gb;
        }
        let dely: Vec<f64> = (0..m).map(|i| self.c + v.y[i] - v.lam[i] - epsi / v.y[i]).collect();
        let delz = 1.0 - epsi / v.z;
        let dellam: Vec<f64> = (0..m).map(|i| gvec[i] - v.y[i] - self.b[i] + epsi / v.lam[i]).collect();
        let diagy: Vec<f64> = (0..m).map(|i| 1.0 + v.mu[i] / v.y[i]).collect();

        let mut aa = Mat::<f64>::zeros(m + 1, m + 1);
        let mut bb = Mat::<f64>::zeros(m + 1, 1);
        for i in 0..m {
            let mut bl = dellam[i] + dely[i] / diagy[i];
            for j in 0..n {
                bl -= gg[i * n + j] * delx[j] / diagx[j];
            }
            bb[(i, 0)] = bl;
            for k in 0..m {
                let mut s = 0.0;
                for j in 0..n {
                    s += gg[i * n + j] * gg[k * n + j] / diagx[j];
                }
                aa[(i, k)] = s;
            }
            aa[(i, i)] += v.s[i] / v.lam[i] + 1.0 / diagy[i];
            // `a_i = 0`: the relaxation variable z does not enter the constraints
            aa[(i, m)] = 0.0;
            aa[(m, i)] = 0.0;
        }
        aa[(m, m)] = -v.zet / v.z;
        bb[(m, 0)] = delz;
        let sol = aa.partial_piv_lu().solve(&bb);
        if (0..=m).any(|i| !sol[(i, 0)].is_finite()) {
            return Err(Error::Infeasible("singular MMA Newton system".into()));
        }
        let dlam: Vec<f64> = (0..m).map(|i| sol[(i, 0)]).collect();
        let dz = sol[(m, 0)];
        let dx: Vec<f64> = (0..n)
            .map(|j| {
                let gl: f64 = (0..m).map(|i| gg[i * n + j] * dlam[i]).sum();
                (-delx[j] - gl) / diagx[j]
            })
            .collect();
        let dy: Vec<f64> = (0..m).map(|i| (-dely[i] + dlam[i]) / diagy[i]).collect();
        let dxsi: Vec<f64> = (0..n)
            .map(|j| {
                let ga = v.x[j] - self.alfa[j];
                -v.xsi[j] + epsi / ga - v.xsi[j] * dx[j] / ga
            })
            .collect();
        let deta: Vec<f64> = (0..n)
            .map(|j| {
                let gb = self.beta[j] - v.x[j];
                -v.eta[j] + epsi / gb + v.eta[j] * dx[j] / gb
            })
            .collect();
        let dmu: Vec<f64> = (0..m).map(|i| -v.mu[i] + epsi / v.y[i] - v.mu[i] * dy[i] / v.y[i]).collect();
        let dzet = -v.zet + epsi / v.z - v.zet * dz / v.z;
        let ds: Vec<f64> = (0..m).map(|i| -v.s[i] + epsi / v.lam[i] - v.s[i] * dlam[i] / v.lam[i]).collect();
        Ok(PrimalDual {
            x: dx,
            y: dy,
            z: dz,
            lam: dlam,
            xsi: dxsi,
            eta: deta,
            mu: dmu,
            zet: dzet,
            s: ds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Run MMA to convergence on a problem given as `(f0, df0, g, dg)` closures.
    fn run<F>(x0: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>, m: usize, iters: usize, eval: F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>),
    {
        let mut opt = Mma::new(x0.len(), m, MmaSettings::default());
        let mut x = x0;
        for _ in 0..iters {
            let (df0, g, dg) = eval(&x);
            let next = opt.update(&x, &lo, &hi, &df0, &g, &dg).unwrap();
            for j in 0..x.len() {
                assert!(next[j] >= lo[j] && next[j] <= hi[j]);
                assert!((next[j] - x[j]).abs() <= 0.1 * (hi[j] - lo[j]) + 1e-12);
            }
            x = next;
        }
        x
    }

    #[test]
    fn unconstrained_quadratic() {
        let x = run(vec![0.9], vec![0.0], vec![1.0], 0, 50, |x| (vec![2.0 * (x[0] - 0.3)], vec![], vec![]));
        assert!((x[0] - 0.3).abs() < 1e-4, "{x:?}");
    }

    #[test]
    fn active_linear_constraint() {
        let x = run(vec![0.1], vec![0.0], vec![1.0], 1, 50, |x| (vec![-1.0], vec![x[0] - 0.5], vec![vec![1.0]]));
        assert!((x[0] - 0.5).abs() < 1e-4, "{x:?}");
    }

    #[test]
    fn two_variable_problem_matches_grid_search() {
        let f = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let g = |x: &[f64]| 1.0 - x[0] - x[1];
        let x = run(vec![0.9, 0.2], vec![0.0; 2], vec![1.0; 2], 1, 80, |x| {
            (vec![2.0 * x[0], 2.0 * x[1]], vec![g(x)], vec![vec![-1.0, -1.0]])
        });
        // brute-force optimum over a 1e-3 grid of feasible points
        let mut best = (f64::INFINITY, [0.0; 2]);
        for i in 0..=1000 {
            for j in 0..=1000 {
                let p = [i as f64 * 1e-3, j as f64 * 1e-3];
                if g(&p) <= 1e-12 && f(&p) < best.0 {
                    best = (f(&p), p);
                }
            }
        }
        assert!((x[0] - best.1[0]).abs() < 1e-3 && (x[1] - best.1[1]).abs() < 1e-3, "{x:?} vs {:?}", best.1);
    }

    #[test]
    fn violated_constraint_without_gradient_is_infeasible() {
        let mut opt = Mma::new(1, 1, MmaSettings::default());
        let r = opt.update(&[0.5], &[0.0], &[1.0], &[1.0], &[0.2], &[vec![0.0]]);
        assert!(matches!(r, Err(Error::Infeasible(_))));
        assert!(opt.update(&[0.5], &[0.0], &[1.0], &[1.0, 2.0], &[0.2], &[vec![0.0]]).is_err());
    }

    #[test]
    fn fixed_variable_stays_put() {
        let x = run(vec![0.4, 0.7], vec![0.4, 0.0], vec![0.4, 1.0], 0, 30, |x| {
            (vec![1.0, 2.0 * (x[1] - 0.2)], vec![], vec![])
        });
        assert_eq!(x[0], 0.4);
        assert!((x[1] - 0.2).abs() < 1e-4);
    }
}
