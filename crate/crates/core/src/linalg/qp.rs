//! Convex quadratic programs
//!
//! ```text
//! minimize ½ xᵀHx + fᵀx   subject to   A_eq x = b_eq,   A_in x ≤ b_in
//! ```
//!
//! solved by a primal active-set method. Inequality rows with a single
//! nonzero coefficient are handled as variable bounds: while active they fix
//! the variable, which keeps the equality-constrained subproblems small and
//! well conditioned (nonnegative least squares lives on this path). When no
//! feasible starting point is at hand, an elastic phase-1 problem finds one.

use super::dense::{dot, norm, norm_inf, DenseMatrix, Lu};
use super::{ConstraintRef, LinalgError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DenseMatrix,
    pub f: Vec<f64>,
    pub a_eq: DenseMatrix,
    pub b_eq: Vec<f64>,
    pub a_in: DenseMatrix,
    pub b_in: Vec<f64>,
}

impl QpProblem {
    /// Unconstrained problem; add constraints with the `with_*` builders.
    pub fn new(h: DenseMatrix, f: Vec<f64>) -> Self {
        let n = f.len();
        Self {
            h,
            f,
            a_eq: DenseMatrix::zeros(0, n),
            b_eq: Vec::new(),
            a_in: DenseMatrix::zeros(0, n),
            b_in: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn with_equalities(mut self, a: DenseMatrix, b: Vec<f64>) -> Self {
        self.a_eq = stack(&self.a_eq, &a);
        self.b_eq.extend(b);
        self
    }

    pub fn with_inequalities(mut self, a: DenseMatrix, b: Vec<f64>) -> Self {
        self.a_in = stack(&self.a_in, &a);
        self.b_in.extend(b);
        self
    }

    /// Appends `x_j ≥ 0` for every listed variable.
    pub fn with_nonnegative(self, vars: impl IntoIterator<Item = usize>) -> Self {
        let n = self.dim();
        let vars: Vec<usize> = vars.into_iter().collect();
        let mut a = DenseMatrix::zeros(vars.len(), n);
        for (r, &j) in vars.iter().enumerate() {
            a[(r, j)] = -1.0;
        }
        let b = vec![0.0; vars.len()];
        self.with_inequalities(a, b)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.h.matvec(x)) + dot(&self.f, x)
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(LinalgError::Dimension("empty problem".into()));
        }
        if self.h.rows() != n || self.h.cols() != n {
            return Err(LinalgError::Dimension(format!("H is {}x{}, n = {n}", self.h.rows(), self.h.cols())));
        }
        for (name, a, b) in [("eq", &self.a_eq, &self.b_eq), ("in", &self.a_in, &self.b_in)] {
            if a.rows() != b.len() || (a.rows() > 0 && a.cols() != n) {
                return Err(LinalgError::Dimension(format!(
                    "A_{name} is {}x{} with {} right-hand entries",
                    a.rows(),
                    a.cols(),
                    b.len()
                )));
            }
            if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
                return Err(LinalgError::NonFinite);
            }
        }
        if !self.h.is_finite() || self.f.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        if !self.h.is_symmetric(1e-10) {
            return Err(LinalgError::NotSymmetric);
        }
        Ok(())
    }
}

fn stack(top: &DenseMatrix, bottom: &DenseMatrix) -> DenseMatrix {
    if top.rows() == 0 {
        return bottom.clone();
    }
    let mut data = top.data().to_vec();
    data.extend_from_slice(bottom.data());
    DenseMatrix::from_row_major(top.rows() + bottom.rows(), top.cols(), data).expect("column counts agree")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Optimality and feasibility tolerance on the equilibrated problem.
    pub tol: f64,
    /// Iteration cap per phase; `None` picks a size-based default.
    pub max_iterations: Option<usize>,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iterations: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Indices of inequality rows active at the solution, ascending.
    pub active_set: Vec<usize>,
    pub eq_multipliers: Vec<f64>,
    /// One multiplier per inequality row, zero for inactive rows.
    pub ineq_multipliers: Vec<f64>,
    pub iterations: usize,
    pub objective: f64,
}

impl QpSolution {
    /// Infinity norm of `Hx + f + A_eqᵀλ + A_inᵀμ`.
    pub fn stationarity_residual(&self, p: &QpProblem) -> f64 {
        let mut r = p.h.matvec(&self.x);
        for (ri, fi) in r.iter_mut().zip(&p.f) {
            *ri += fi;
        }
        if p.a_eq.rows() > 0 {
            for (ri, v) in r.iter_mut().zip(p.a_eq.tr_matvec(&self.eq_multipliers)) {
                *ri += v;
            }
        }
        if p.a_in.rows() > 0 {
            for (ri, v) in r.iter_mut().zip(p.a_in.tr_matvec(&self.ineq_multipliers)) {
                *ri += v;
            }
        }
        norm_inf(&r)
    }

    /// Largest constraint violation.
    pub fn feasibility_violation(&self, p: &QpProblem) -> f64 {
        let eq = (0..p.a_eq.rows()).map(|i| (dot(p.a_eq.row(i), &self.x) - p.b_eq[i]).abs());
        let ineq = (0..p.a_in.rows()).map(|i| (dot(p.a_in.row(i), &self.x) - p.b_in[i]).max(0.0));
        eq.chain(ineq).fold(0.0, f64::max)
    }
}

/// Solves the QP from scratch.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution> {
    solve_with(p, QpOptions::default(), None)
}

/// Solves the QP starting from a known feasible point. Bound rows active at
/// `x0` seed the working set.
pub fn solve_qp_from(p: &QpProblem, x0: &[f64], opts: QpOptions) -> Result<QpSolution> {
    solve_with(p, opts, Some(x0))
}

#[derive(Debug, Clone)]
struct Row {
    coef: Vec<f64>,
    rhs: f64,
    /// Single nonzero `(variable, coefficient)` for bound rows.
    bound: Option<(usize, f64)>,
}

impl Row {
    fn new(coef: &[f64], rhs: f64) -> Option<(Row, f64)> {
        let scale = norm(coef);
        if scale == 0.0 {
            return None;
        }
        let coef: Vec<f64> = coef.iter().map(|c| c / scale).collect();
        let mut nz = coef.iter().enumerate().filter(|(_, c)| **c != 0.0);
        let first = nz.next().map(|(j, c)| (j, *c));
        let bound = if nz.next().is_none() { first } else { None };
        Some((Row { coef, rhs: rhs / scale, bound }, scale))
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self.bound {
            Some((j, c)) => c * x[j],
            None => dot(&self.coef, x),
        }
    }
}

struct Program {
    h: DenseMatrix,
    f: Vec<f64>,
    eq: Vec<Row>,
    ineq: Vec<Row>,
}

struct Outcome {
    x: Vec<f64>,
    working: Vec<bool>,
    lam_eq: Vec<f64>,
    mu: Vec<f64>,
    iterations: usize,
}

impl Program {
    fn n(&self) -> usize {
        self.f.len()
    }

    /// Primal active-set iterations from a feasible `x`.
    fn run(&self, mut x: Vec<f64>, seed: &[usize], tol: f64, max_iter: usize) -> Result<Outcome> {
        let n = self.n();
        let k = self.ineq.len();
        let mut in_w = vec![false; k];
        let mut fixed: Vec<Option<usize>> = vec![None; n];
        let add = |i: usize, in_w: &mut Vec<bool>, fixed: &mut Vec<Option<usize>>, x: &mut Vec<f64>| match self.ineq[i]
            .bound
        {
            Some((j, c)) => {
                if fixed[j].is_none() {
                    fixed[j] = Some(i);
                    in_w[i] = true;
                    x[j] = self.ineq[i].rhs / c;
                }
            }
            None => in_w[i] = true,
        };
        for &i in seed {
            add(i, &mut in_w, &mut fixed, &mut x);
        }

        // Set after a full unblocked step: the iterate then minimizes over the
        // working set by construction, and recomputing the step would only
        // return rounding noise on ill-conditioned problems.
        let mut at_minimizer = false;
        for it in 0..max_iter {
            let mut g = self.h.matvec(&x);
            for (gi, fi) in g.iter_mut().zip(&self.f) {
                *gi += fi;
            }
            let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
            // Working rows as (equality index, inequality index). Rows that are
            // dependent on the free variables stay satisfied by any step and are
            // left out of the KKT system with a zero multiplier.
            let candidates: Vec<(Option<usize>, Option<usize>, &Row)> = (0..self.eq.len())
                .map(|e| (Some(e), None, &self.eq[e]))
                .chain(
                    (0..k).filter(|&i| in_w[i] && self.ineq[i].bound.is_none()).map(|i| (None, Some(i), &self.ineq[i])),
                )
                .collect();
            let kept = independent_rows(candidates.iter().map(|c| c.2), &free);
            let general: Vec<&Row> = kept.iter().map(|&r| candidates[r].2).collect();
            let general_ids: Vec<Option<usize>> = kept.iter().map(|&r| candidates[r].1).collect();
            let general_eq: Vec<Option<usize>> = kept.iter().map(|&r| candidates[r].0).collect();

            let (nf, ng) = (free.len(), general.len());
            let size = nf + ng;
            let mut p = vec![0.0; n];
            let mut lam = vec![0.0; ng];
            if size > 0 {
                let mut kkt = vec![0.0; size * size];
                for (a, &ja) in free.iter().enumerate() {
                    let hrow = self.h.row(ja);
                    for (b, &jb) in free.iter().enumerate() {
                        kkt[a * size + b] = hrow[jb];
                    }
                    for (r, row) in general.iter().enumerate() {
                        kkt[a * size + nf + r] = row.coef[ja];
                        kkt[(nf + r) * size + a] = row.coef[ja];
                    }
                }
                let mut rhs = vec![0.0; size];
                for (a, &ja) in free.iter().enumerate() {
                    rhs[a] = -g[ja];
                }
                let lu = Lu::factor(kkt, size, 1e-13).ok_or(LinalgError::NotConvex)?;
                let sol = lu.solve(&rhs);
                for (a, &ja) in free.iter().enumerate() {
                    p[ja] = sol[a];
                }
                lam.copy_from_slice(&sol[nf..]);
            }

            let step_tol = 1e-11 * (1.0 + norm_inf(&x));
            if at_minimizer || norm_inf(&p) <= step_tol {
                at_minimizer = false;
                // Multipliers of the working set; bound rows from stationarity.
                let mut mu = vec![0.0; k];
                for (r, id) in general_ids.iter().enumerate() {
                    if let Some(i) = id {
                        mu[*i] = lam[r];
                    }
                }
                for j in 0..n {
                    if let Some(i) = fixed[j] {
                        let (_, c) = self.ineq[i].bound.expect("bound row");
                        let mut s = g[j];
                        for (r, row) in general.iter().enumerate() {
                            s += lam[r] * row.coef[j];
                        }
                        mu[i] = -s / c;
                    }
                }
                let mult_tol = tol * (1.0 + norm_inf(&g));
                let mut worst: Option<(usize, f64)> = None;
                for i in 0..k {
                    if in_w[i] && mu[i] < -mult_tol && worst.is_none_or(|(_, m)| mu[i] < m) {
                        worst = Some((i, mu[i]));
                    }
                }
                match worst {
                    None => {
                        let mut lam_eq = vec![0.0; self.eq.len()];
                        for (r, e) in general_eq.iter().enumerate() {
                            if let Some(e) = e {
                                lam_eq[*e] = lam[r];
                            }
                        }
                        return Ok(Outcome { x, working: in_w, lam_eq, mu, iterations: it + 1 });
                    }
                    Some((i, _)) => {
                        in_w[i] = false;
                        if let Some((j, _)) = self.ineq[i].bound {
                            fixed[j] = None;
                        }
                    }
                }
                continue;
            }

            let p_scale = norm_inf(&p);
            let mut alpha = 1.0;
            let mut block = None;
            for i in 0..k {
                if in_w[i] {
                    continue;
                }
                let row = &self.ineq[i];
                let ap = row.eval(&p);
                if ap <= 1e-14 * p_scale {
                    continue;
                }
                let slack = (row.rhs - row.eval(&x)).max(0.0);
                let step = slack / ap;
                if step < alpha {
                    alpha = step;
                    block = Some(i);
                }
            }
            for (xi, pi) in x.iter_mut().zip(&p) {
                *xi += alpha * pi;
            }
            match block {
                Some(i) => add(i, &mut in_w, &mut fixed, &mut x),
                None => at_minimizer = true,
            }
        }
        Err(LinalgError::MaxIterations { iterations: max_iter, x })
    }
}

/// Indices of a maximal independent subset of `rows` restricted to the
/// `free` columns, by modified Gram-Schmidt in the given order.
fn independent_rows<'a>(rows: impl Iterator<Item = &'a Row>, free: &[usize]) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (r, row) in rows.enumerate() {
        let mut v: Vec<f64> = free.iter().map(|&j| row.coef[j]).collect();
        for q in &basis {
            let c = dot(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
        let len = norm(&v);
        if len > 1e-10 {
            basis.push(v.into_iter().map(|x| x / len).collect());
            kept.push(r);
        }
    }
    kept
}

fn solve_with(p: &QpProblem, opts: QpOptions, start: Option<&[f64]>) -> Result<QpSolution> {
    p.validate()?;
    let n = p.dim();
    let sigma = match p.h.max_abs() {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let h = DenseMatrix::from_row_major(n, n, p.h.data().iter().map(|v| v / sigma).collect())?;
    let f: Vec<f64> = p.f.iter().map(|v| v / sigma).collect();
    let feas_tol = opts.tol;

    // Equilibrate constraint rows; drop empty ones after checking them.
    let mut eq = Vec::new();
    let mut eq_map = Vec::new();
    for i in 0..p.a_eq.rows() {
        match Row::new(p.a_eq.row(i), p.b_eq[i]) {
            Some((row, s)) => {
                eq.push(row);
                eq_map.push((i, s));
            }
            None if p.b_eq[i].abs() > feas_tol => {
                return Err(LinalgError::Infeasible {
                    constraint: ConstraintRef::Equality(i),
                    violation: p.b_eq[i].abs(),
                })
            }
            None => {}
        }
    }
    let mut ineq = Vec::new();
    let mut in_map = Vec::new();
    for i in 0..p.a_in.rows() {
        match Row::new(p.a_in.row(i), p.b_in[i]) {
            Some((row, s)) => {
                ineq.push(row);
                in_map.push((i, s));
            }
            None if p.b_in[i] < -feas_tol => {
                return Err(LinalgError::Infeasible { constraint: ConstraintRef::Inequality(i), violation: -p.b_in[i] })
            }
            None => {}
        }
    }
    let program = Program { h, f, eq, ineq };
    let max_iter = opts.max_iterations.unwrap_or(50 * (n + p.a_eq.rows() + p.a_in.rows()) + 100);

    let (x0, seed) = match start {
        Some(x0) => {
            if x0.len() != n {
                return Err(LinalgError::Dimension("starting point length".into()));
            }
            if max_violation(&program, x0) > feas_tol {
                return Err(LinalgError::InfeasibleStart);
            }
            (x0.to_vec(), active_bounds(&program, x0))
        }
        None => {
            let x0 = clamp_into_bounds(&program, n).map_err(|i| LinalgError::Infeasible {
                constraint: ConstraintRef::Inequality(in_map[i].0),
                violation: f64::INFINITY,
            })?;
            if max_violation(&program, &x0) <= feas_tol {
                let seed = active_bounds(&program, &x0);
                (x0, seed)
            } else {
                phase_one(&program, x0, feas_tol, max_iter, &eq_map, &in_map)?
            }
        }
    };

    let out = program.run(x0, &seed, opts.tol, max_iter)?;
    let mut active_set = Vec::new();
    let mut ineq_multipliers = vec![0.0; p.a_in.rows()];
    for (r, &(i, s)) in in_map.iter().enumerate() {
        if out.working[r] {
            active_set.push(i);
            ineq_multipliers[i] = out.mu[r] * sigma / s;
        }
    }
    let mut eq_multipliers = vec![0.0; p.a_eq.rows()];
    for (r, &(i, s)) in eq_map.iter().enumerate() {
        eq_multipliers[i] = out.lam_eq[r] * sigma / s;
    }
    let objective = p.objective(&out.x);
    Ok(QpSolution { x: out.x, active_set, eq_multipliers, ineq_multipliers, iterations: out.iterations, objective })
}

fn max_violation(pr: &Program, x: &[f64]) -> f64 {
    let eq = pr.eq.iter().map(|r| (r.eval(x) - r.rhs).abs());
    let ineq = pr.ineq.iter().map(|r| (r.eval(x) - r.rhs).max(0.0));
    eq.chain(ineq).fold(0.0, f64::max)
}

fn active_bounds(pr: &Program, x: &[f64]) -> Vec<usize> {
    let tol = 1e-12 * (1.0 + norm_inf(x));
    pr.ineq
        .iter()
        .enumerate()
        .filter(|(_, r)| r.bound.is_some() && (r.rhs - r.eval(x)).abs() <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// Zero clamped into the simple bounds; `Err(row)` when bounds cross.
fn clamp_into_bounds(pr: &Program, n: usize) -> std::result::Result<Vec<f64>, usize> {
    let mut lo = vec![(f64::NEG_INFINITY, usize::MAX); n];
    let mut hi = vec![(f64::INFINITY, usize::MAX); n];
    for (i, r) in pr.ineq.iter().enumerate() {
        if let Some((j, c)) = r.bound {
            let v = r.rhs / c;
            if c > 0.0 {
                if v < hi[j].0 {
                    hi[j] = (v, i);
                }
            } else if v > lo[j].0 {
                lo[j] = (v, i);
            }
        }
    }
    (0..n).map(|j| if lo[j].0 > hi[j].0 { Err(hi[j].1) } else { Ok(0.0_f64.clamp(lo[j].0, hi[j].0)) }).collect()
}

/// Elastic feasibility problem: slacks on every equality and one shared
/// slack on the general inequalities, minimized with a tiny proximal term.
fn phase_one(
    pr: &Program,
    x0: Vec<f64>,
    feas_tol: f64,
    max_iter: usize,
    eq_map: &[(usize, f64)],
    in_map: &[(usize, f64)],
) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = pr.n();
    let m = pr.eq.len();
    let general: Vec<usize> = (0..pr.ineq.len()).filter(|&i| pr.ineq[i].bound.is_none()).collect();
    let has_t = !general.is_empty();
    let n1 = n + 2 * m + usize::from(has_t);
    let t_col = n + 2 * m;

    let widen = |coef: &[f64]| {
        let mut c = coef.to_vec();
        c.resize(n1, 0.0);
        c
    };
    let mut eq = Vec::with_capacity(m);
    for (i, r) in pr.eq.iter().enumerate() {
        let mut c = widen(&r.coef);
        c[n + i] = 1.0;
        c[n + m + i] = -1.0;
        eq.push(Row { coef: c, rhs: r.rhs, bound: None });
    }
    let mut ineq = Vec::new();
    for r in &pr.ineq {
        let mut c = widen(&r.coef);
        if r.bound.is_none() {
            c[t_col] = -1.0;
        }
        ineq.push(Row { coef: c, rhs: r.rhs, bound: r.bound });
    }
    let slack_rows = ineq.len();
    for j in n..n1 {
        let mut c = vec![0.0; n1];
        c[j] = -1.0;
        ineq.push(Row { coef: c, rhs: 0.0, bound: Some((j, -1.0)) });
    }

    let mut z = x0.clone();
    z.resize(n1, 0.0);
    for (i, r) in pr.eq.iter().enumerate() {
        let resid = r.rhs - r.eval(&x0);
        z[n + i] = resid.max(0.0);
        z[n + m + i] = (-resid).max(0.0);
    }
    if has_t {
        z[t_col] = general.iter().map(|&i| pr.ineq[i].eval(&x0) - pr.ineq[i].rhs).fold(0.0, f64::max);
    }

    let b_scale = pr.eq.iter().chain(&pr.ineq).map(|r| r.rhs.abs()).fold(1.0, f64::max);
    // Large enough to stay above the KKT pivot tolerance.
    let eps = (1e-8 / b_scale).max(1e-11);
    let mut h = DenseMatrix::identity(n1);
    for j in 0..n1 {
        h[(j, j)] = eps;
    }
    let mut f = vec![0.0; n1];
    for v in f.iter_mut().skip(n) {
        *v = 1.0;
    }

    // Seed with active bounds on x, and on one slack of each equality pair,
    // so every equality row keeps a free column of its own.
    let mut seed: Vec<usize> = active_bounds(pr, &x0);
    for i in 0..m {
        if z[n + i] > 0.0 {
            seed.push(slack_rows + m + i);
        } else if z[n + m + i] > 0.0 {
            seed.push(slack_rows + i);
        } else {
            seed.push(slack_rows + m + i);
        }
    }
    if has_t && z[t_col] == 0.0 {
        seed.push(slack_rows + 2 * m);
    }

    let elastic = Program { h, f, eq, ineq };
    let out = elastic.run(z, &seed, feas_tol, max_iter)?;
    let x: Vec<f64> = out.x[..n].to_vec();

    let worst_eq = (0..m)
        .map(|i| (ConstraintRef::Equality(eq_map[i].0), (pr.eq[i].eval(&x) - pr.eq[i].rhs).abs() * eq_map[i].1))
        .fold(None, pick_worst);
    let worst_in = general
        .iter()
        .map(|&i| {
            (ConstraintRef::Inequality(in_map[i].0), (pr.ineq[i].eval(&x) - pr.ineq[i].rhs).max(0.0) * in_map[i].1)
        })
        .fold(None, pick_worst);
    let worst = pick_worst(worst_eq, worst_in.unwrap_or((ConstraintRef::Equality(0), 0.0)));
    if max_violation(pr, &x) > feas_tol {
        let (constraint, violation) = worst.expect("violated constraint exists");
        return Err(LinalgError::Infeasible { constraint, violation });
    }

    let seed: Vec<usize> = (0..slack_rows).filter(|&i| out.working[i]).collect();
    Ok((x, seed))
}

fn pick_worst(acc: Option<(ConstraintRef, f64)>, next: (ConstraintRef, f64)) -> Option<(ConstraintRef, f64)> {
    match acc {
        Some(a) if a.1 >= next.1 => Some(a),
        _ => Some(next),
    }
}
