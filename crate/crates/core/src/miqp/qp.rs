//! Continuous relaxations solved by a primal–dual interior-point method.
//!
//! Binaries are relaxed to `[0, 1]`; fixed variables (by branching or by
//! equal bounds) are substituted out before the solve. The reduced problem
//!
//! ```text
//!     minimize    ½ xᵀQx + cᵀx        (Q diagonal, ≥ 0)
//!     subject to  E x = f
//!                 G x ≤ h
//!                 l ≤ x ≤ u
//! ```
//!
//! is solved with Mehrotra predictor–corrector steps on the normal
//! equations `(Q + D + GᵀD_sG) Δx + EᵀΔy = r`. Besides the primal point the
//! solver reports a Lagrangian lower bound evaluated at its multipliers,
//! which is valid no matter how accurately the iteration converged.
//! Infeasibility is certified by a strictly positive Lagrangian bound on the
//! elastic phase-1 problem.

use crate::error::{Error, Result};

use super::model::{MiqpModel, Sense, VarId, VarKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Relative tolerance on primal and dual residuals.
    pub kkt_tolerance: f64,
    /// Relative duality gap at which the iteration stops.
    pub gap_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            kkt_tolerance: 1e-7,
            gap_tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

impl QpOptions {
    pub fn with_kkt_tolerance(kkt_tolerance: f64) -> Self {
        QpOptions {
            kkt_tolerance,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxationStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct Relaxation {
    pub status: RelaxationStatus,
    /// Values for every model variable (empty when infeasible).
    pub assignment: Vec<f64>,
    /// Objective at `assignment`.
    pub objective: f64,
    /// Lower bound on the relaxation optimum (`+∞` when infeasible).
    pub bound: f64,
    pub iterations: usize,
    /// Scaled max of primal and dual residuals at termination.
    pub kkt_residual: f64,
    /// Reason when infeasible.
    pub certificate: Option<String>,
}

impl Relaxation {
    fn infeasible(reason: String) -> Self {
        Relaxation {
            status: RelaxationStatus::Infeasible,
            assignment: Vec::new(),
            objective: f64::INFINITY,
            bound: f64::INFINITY,
            iterations: 0,
            kkt_residual: 0.0,
            certificate: Some(reason),
        }
    }
}

type SparseRow = Vec<(usize, f64)>;

/// Problem after substitution of fixed variables and row scaling.
#[derive(Debug, Clone)]
struct Reduced {
    n: usize,
    q: Vec<f64>,
    c: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    g: Vec<SparseRow>,
    h: Vec<f64>,
    e: Vec<SparseRow>,
    f: Vec<f64>,
}

struct Reduction {
    problem: Reduced,
    /// reduced index → model variable
    free: Vec<VarId>,
    /// value per model variable (fixed ones filled in)
    base: Vec<f64>,
    obj_scale: f64,
    obj_constant: f64,
}

const FIX_TOL: f64 = 1e-12;

/// Rows that can only hold with every variable at one of its bounds
/// (e.g. `p + r ≤ 0` once a unit is fixed off) leave no interior, which the
/// barrier handles badly. Fix those variables up front, repeating until
/// nothing changes.
fn fix_forced(model: &MiqpModel, lo: &mut [f64], hi: &mut [f64]) -> std::result::Result<(), String> {
    loop {
        let mut changed = false;
        for row in &model.linear_constraints {
            let (mut min_act, mut max_act) = (0.0, 0.0);
            let mut open = false;
            for &(j, a) in &row.coefficients {
                let (l, u) = (lo[j], hi[j]);
                open |= u - l > FIX_TOL;
                if a > 0.0 {
                    min_act += a * l;
                    max_act += a * u;
                } else {
                    min_act += a * u;
                    max_act += a * l;
                }
            }
            if !open {
                continue;
            }
            let tol = 1e-9 * (1.0 + row.rhs.abs());
            let at_min = matches!(row.sense, Sense::Le | Sense::Eq) && min_act.is_finite() && min_act >= row.rhs - tol;
            let at_max = matches!(row.sense, Sense::Ge | Sense::Eq) && max_act.is_finite() && max_act <= row.rhs + tol;
            if (at_min && min_act > row.rhs + tol) || (at_max && max_act < row.rhs - tol) {
                return Err(format!("row {} cannot hold within the variable bounds", row.name));
            }
            if !(at_min || at_max) {
                continue;
            }
            for &(j, a) in &row.coefficients {
                let v = if (a > 0.0) == at_min { lo[j] } else { hi[j] };
                lo[j] = v;
                hi[j] = v;
            }
            changed = true;
        }
        if !changed {
            return Ok(());
        }
    }
}

fn reduce(model: &MiqpModel, fixings: &[(VarId, bool)]) -> std::result::Result<Reduction, String> {
    let nv = model.n_vars();
    let mut lo: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let mut hi: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    for (j, v) in model.variables.iter().enumerate() {
        if v.kind == VarKind::Binary {
            lo[j] = lo[j].max(0.0);
            hi[j] = hi[j].min(1.0);
        }
    }
    for &(j, val) in fixings {
        let x = if val { 1.0 } else { 0.0 };
        if x < lo[j] - FIX_TOL || x > hi[j] + FIX_TOL {
            return Err(format!("fixing {} = {x} conflicts with its bounds", model.variables[j].name));
        }
        lo[j] = x;
        hi[j] = x;
    }
    fix_forced(model, &mut lo, &mut hi)?;
    let mut index = vec![usize::MAX; nv];
    let mut free = Vec::new();
    let mut base = vec![0.0; nv];
    for j in 0..nv {
        if lo[j] > hi[j] + FIX_TOL {
            return Err(format!(
                "bounds of {} are empty [{}, {}]",
                model.variables[j].name, lo[j], hi[j]
            ));
        }
        if hi[j] - lo[j] <= FIX_TOL {
            base[j] = lo[j];
        } else {
            index[j] = free.len();
            free.push(j);
        }
    }
    let n = free.len();

    let obj = &model.objective;
    let mut q = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut constant = obj.constant;
    for (&j, &cj) in &obj.linear {
        if index[j] == usize::MAX {
            constant += cj * base[j];
        } else {
            c[index[j]] += cj;
        }
    }
    for (&j, &qj) in &obj.quadratic_diagonal {
        if index[j] == usize::MAX {
            constant += qj * base[j] * base[j];
        } else {
            q[index[j]] += 2.0 * qj;
        }
    }
    let obj_scale = 1.0
        / c.iter()
            .chain(q.iter())
            .fold(1.0_f64, |m, v| m.max(v.abs()));
    c.iter_mut().for_each(|v| *v *= obj_scale);
    q.iter_mut().for_each(|v| *v *= obj_scale);

    let mut g = Vec::new();
    let mut h = Vec::new();
    let mut e = Vec::new();
    let mut f = Vec::new();
    for row in &model.linear_constraints {
        let mut rhs = row.rhs;
        let mut terms: SparseRow = Vec::with_capacity(row.coefficients.len());
        for &(j, a) in &row.coefficients {
            if index[j] == usize::MAX {
                rhs -= a * base[j];
            } else {
                terms.push((index[j], a));
            }
        }
        let scale = terms.iter().fold(0.0_f64, |m, (_, a)| m.max(a.abs()));
        if scale == 0.0 {
            let tol = 1e-9 * (1.0 + row.rhs.abs());
            let bad = match row.sense {
                Sense::Le => rhs < -tol,
                Sense::Ge => rhs > tol,
                Sense::Eq => rhs.abs() > tol,
            };
            if bad {
                return Err(format!(
                    "row {} cannot hold once fixed variables are substituted (residual {:e})",
                    row.name,
                    rhs.abs()
                ));
            }
            continue;
        }
        let inv = 1.0 / scale;
        match row.sense {
            Sense::Le => {
                g.push(terms.iter().map(|(k, a)| (*k, a * inv)).collect());
                h.push(rhs * inv);
            }
            Sense::Ge => {
                g.push(terms.iter().map(|(k, a)| (*k, -a * inv)).collect());
                h.push(-rhs * inv);
            }
            Sense::Eq => {
                e.push(terms.iter().map(|(k, a)| (*k, a * inv)).collect());
                f.push(rhs * inv);
            }
        }
    }
    let lo_r = free.iter().map(|&j| lo[j]).collect();
    let hi_r = free.iter().map(|&j| hi[j]).collect();
    Ok(Reduction {
        problem: Reduced {
            n,
            q,
            c,
            lo: lo_r,
            hi: hi_r,
            g,
            h,
            e,
            f,
        },
        free,
        base,
        obj_scale,
        obj_constant: constant,
    })
}

/// Solves the continuous relaxation of `model` with the given binaries fixed.
pub fn solve_relaxation(model: &MiqpModel, fixings: &[(VarId, bool)], opts: &QpOptions) -> Result<Relaxation> {
    model.check()?;
    let red = match reduce(model, fixings) {
        Ok(r) => r,
        Err(reason) => return Ok(Relaxation::infeasible(reason)),
    };
    let p = &red.problem;
    if p.n == 0 {
        return Ok(finish_fixed(model, &red));
    }

    let first = Ipm::new(p, None).run(opts);
    let sol = match first {
        Ok(s) => s,
        Err(_) => {
            // certify infeasibility, otherwise retry from the phase-1 point
            let (cert, start) = phase_one(p, opts)?;
            if let Some(reason) = cert {
                return Ok(Relaxation::infeasible(reason));
            }
            Ipm::new(p, Some(&start)).run(opts).map_err(|e| {
                Error::internal(format!("relaxation failed on a feasible problem: {e}"))
            })?
        }
    };

    let mut x = red.base.clone();
    for (k, &j) in red.free.iter().enumerate() {
        x[j] = sol.x[k];
    }
    let objective = model.evaluate(&x);
    let bound = match sol.bound {
        Some(b) => b / red.obj_scale + red.obj_constant,
        None => objective - sol.gap / red.obj_scale,
    };
    Ok(Relaxation {
        status: RelaxationStatus::Optimal,
        assignment: x,
        objective,
        bound: bound.min(objective),
        iterations: sol.iterations,
        kkt_residual: sol.kkt,
        certificate: None,
    })
}

fn finish_fixed(model: &MiqpModel, red: &Reduction) -> Relaxation {
    let objective = model.evaluate(&red.base);
    Relaxation {
        status: RelaxationStatus::Optimal,
        assignment: red.base.clone(),
        objective,
        bound: objective,
        iterations: 0,
        kkt_residual: 0.0,
        certificate: None,
    }
}

/// Elastic problem `min Σ e` with every row softened. Returns an
/// infeasibility reason when its Lagrangian bound is strictly positive, and
/// the phase-1 primal point either way.
fn phase_one(p: &Reduced, opts: &QpOptions) -> Result<(Option<String>, Vec<f64>)> {
    let n = p.n;
    let mg = p.g.len();
    let me = p.e.len();
    let ne = mg + 2 * me;
    let mut q1 = Reduced {
        n: n + ne,
        q: vec![0.0; n + ne],
        c: [vec![0.0; n], vec![1.0; ne]].concat(),
        lo: [p.lo.clone(), vec![0.0; ne]].concat(),
        hi: [p.hi.clone(), vec![f64::INFINITY; ne]].concat(),
        g: Vec::with_capacity(mg),
        h: p.h.clone(),
        e: Vec::with_capacity(me),
        f: p.f.clone(),
    };
    for (r, row) in p.g.iter().enumerate() {
        let mut row = row.clone();
        row.push((n + r, -1.0));
        q1.g.push(row);
    }
    for (r, row) in p.e.iter().enumerate() {
        let mut row = row.clone();
        row.push((n + mg + 2 * r, 1.0));
        row.push((n + mg + 2 * r + 1, -1.0));
        q1.e.push(row);
    }
    let sol = Ipm::new(&q1, None)
        .run(opts)
        .map_err(|e| Error::internal(format!("phase-1 problem failed: {e}")))?;
    // multipliers restricted to the dual-feasible box keep the bound finite
    let lam: Vec<f64> = sol.lam.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let y: Vec<f64> = sol.y.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let bound = lagrangian_bound(&q1, &y, &lam).unwrap_or(f64::NEG_INFINITY);
    let scale = 1.0 + p.h.iter().chain(&p.f).fold(0.0_f64, |m, v| m.max(v.abs()));
    let threshold = 1e-7 * scale;
    let reason = (bound > threshold).then(|| {
        format!("phase-1 lower bound {bound:e} > {threshold:e} (total scaled row violation cannot vanish)")
    });
    Ok((reason, sol.x[..n].to_vec()))
}

/// `min_{l≤x≤u} L(x, y, λ)` for the reduced problem; `None` if unbounded below.
fn lagrangian_bound(p: &Reduced, y: &[f64], lam: &[f64]) -> Option<f64> {
    let mut r = p.c.clone();
    let mut val = 0.0;
    for (row, (yr, fr)) in p.e.iter().zip(y.iter().zip(&p.f)) {
        for (j, a) in row {
            r[*j] += a * yr;
        }
        val -= yr * fr;
    }
    for (row, (lr, hr)) in p.g.iter().zip(lam.iter().zip(&p.h)) {
        for (j, a) in row {
            r[*j] += a * lr;
        }
        val -= lr * hr;
    }
    let rscale = 1.0 + p.c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for j in 0..p.n {
        let (l, u, q, mut rj) = (p.lo[j], p.hi[j], p.q[j], r[j]);
        // a residual reduced cost on an unbounded side is roundoff; only
        // here is the bound approximate
        if q == 0.0 && !(l.is_finite() && u.is_finite()) && rj.abs() <= 1e-9 * rscale {
            rj = 0.0;
        }
        let xj = if q > 0.0 {
            (-rj / q).clamp(l, u)
        } else if rj > 0.0 {
            l
        } else if rj < 0.0 {
            u
        } else {
            0.0_f64.clamp(l, u)
        };
        if !xj.is_finite() {
            return None;
        }
        val += 0.5 * q * xj * xj + rj * xj;
    }
    Some(val)
}

struct IpmSolution {
    x: Vec<f64>,
    y: Vec<f64>,
    lam: Vec<f64>,
    bound: Option<f64>,
    gap: f64,
    kkt: f64,
    iterations: usize,
}

#[derive(Clone)]
struct Ipm<'a> {
    p: &'a Reduced,
    x: Vec<f64>,
    s: Vec<f64>,
    lam: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
    has_l: Vec<bool>,
    has_u: Vec<bool>,
}

struct Snapshot<'a> {
    merit: f64,
    ipm: Ipm<'a>,
    comp: f64,
    kkt: f64,
    iter: usize,
}

/// Directions for one Newton solve.
struct Step {
    dx: Vec<f64>,
    dy: Vec<f64>,
    ds: Vec<f64>,
    dlam: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
}

fn interior_start(l: f64, u: f64, hint: Option<f64>) -> f64 {
    let (fl, fu) = (l.is_finite(), u.is_finite());
    let mid = match (fl, fu) {
        (true, true) => 0.5 * (l + u),
        (true, false) => l + 1.0,
        (false, true) => u - 1.0,
        (false, false) => 0.0,
    };
    let Some(h) = hint else { return mid };
    // pull the hint strictly inside the box
    match (fl, fu) {
        (true, true) => {
            let m = 0.05 * (u - l);
            h.clamp(l + m, u - m)
        }
        (true, false) => h.max(l + 1e-2 * (1.0 + l.abs())),
        (false, true) => h.min(u - 1e-2 * (1.0 + u.abs())),
        (false, false) => h,
    }
}

impl<'a> Ipm<'a> {
    fn new(p: &'a Reduced, start: Option<&[f64]>) -> Self {
        let n = p.n;
        let has_l: Vec<bool> = p.lo.iter().map(|v| v.is_finite()).collect();
        let has_u: Vec<bool> = p.hi.iter().map(|v| v.is_finite()).collect();
        let x: Vec<f64> = (0..n)
            .map(|j| interior_start(p.lo[j], p.hi[j], start.map(|s| s[j])))
            .collect();
        let s = p
            .g
            .iter()
            .zip(&p.h)
            .map(|(row, h)| (h - dot_sparse(row, &x)).max(1.0))
            .collect();
        Ipm {
            p,
            x,
            s,
            lam: vec![1.0; p.g.len()],
            y: vec![0.0; p.e.len()],
            zl: has_l.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            zu: has_u.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            has_l,
            has_u,
        }
    }

    fn wl(&self, j: usize) -> f64 {
        self.x[j] - self.p.lo[j]
    }

    fn wu(&self, j: usize) -> f64 {
        self.p.hi[j] - self.x[j]
    }

    fn n_comp(&self) -> usize {
        self.s.len() + self.has_l.iter().filter(|b| **b).count() + self.has_u.iter().filter(|b| **b).count()
    }

    fn complementarity(&self) -> f64 {
        let mut acc: f64 = self.s.iter().zip(&self.lam).map(|(a, b)| a * b).sum();
        for j in 0..self.p.n {
            if self.has_l[j] {
                acc += self.wl(j) * self.zl[j];
            }
            if self.has_u[j] {
                acc += self.wu(j) * self.zu[j];
            }
        }
        acc
    }

    /// (rd, re, rg)
    fn residuals(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.p;
        let mut rd: Vec<f64> = (0..p.n)
            .map(|j| p.q[j] * self.x[j] + p.c[j] - self.zl[j] + self.zu[j])
            .collect();
        for (row, yr) in p.e.iter().zip(&self.y) {
            for (j, a) in row {
                rd[*j] += a * yr;
            }
        }
        for (row, lr) in p.g.iter().zip(&self.lam) {
            for (j, a) in row {
                rd[*j] += a * lr;
            }
        }
        let re = p.e.iter().zip(&p.f).map(|(row, f)| dot_sparse(row, &self.x) - f).collect();
        let rg = p
            .g
            .iter()
            .zip(self.s.iter().zip(&p.h))
            .map(|(row, (s, h))| dot_sparse(row, &self.x) + s - h)
            .collect();
        (rd, re, rg)
    }

    fn objective(&self) -> f64 {
        (0..self.p.n)
            .map(|j| 0.5 * self.p.q[j] * self.x[j] * self.x[j] + self.p.c[j] * self.x[j])
            .sum()
    }

    /// Runs to convergence. If the iteration breaks down numerically after
    /// reaching a nearly optimal point, that point is returned instead; its
    /// Lagrangian bound stays valid, only less tight.
    fn run(mut self, opts: &QpOptions) -> std::result::Result<IpmSolution, String> {
        let mut best = None;
        match self.iterate(opts, &mut best) {
            Ok(sol) => Ok(sol),
            Err(e) => match best {
                Some(b) if b.merit <= 1e-6 => Ok(b.ipm.finish(b.comp, b.kkt, b.iter)),
                _ => Err(e),
            },
        }
    }

    fn iterate(&mut self, opts: &QpOptions, best: &mut Option<Snapshot<'a>>) -> std::result::Result<IpmSolution, String> {
        let p = self.p;
        let n = p.n;
        let mg = p.g.len();
        let me = p.e.len();
        let ncomp = self.n_comp().max(1) as f64;
        let pscale = 1.0 + p.h.iter().chain(&p.f).fold(0.0_f64, |m, v| m.max(v.abs()));
        let dscale = 1.0 + p.c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut small_steps = 0;
        let mut kkt_at_exit;

        for iter in 0..opts.max_iterations {
            let (rd, re, rg) = self.residuals();
            let pres = inf_norm(&re).max(inf_norm(&rg)) / pscale;
            let dres = inf_norm(&rd) / dscale;
            let comp = self.complementarity();
            let mu = comp / ncomp;
            let pobj = self.objective();
            kkt_at_exit = pres.max(dres);
            if !(pres.is_finite() && dres.is_finite() && mu.is_finite()) {
                return Err(format!("non-finite iterate at iteration {iter}"));
            }
            if pres <= opts.kkt_tolerance.min(1e-9)
                && dres <= opts.kkt_tolerance
                && comp <= opts.gap_tolerance * (1.0 + pobj.abs())
            {
                return Ok(self.clone().finish(comp, kkt_at_exit, iter));
            }
            if pres <= 1e-9 {
                let merit = dres.max(comp / (1.0 + pobj.abs()));
                if best.as_ref().map_or(true, |b| merit < b.merit) {
                    *best = Some(Snapshot {
                        merit,
                        ipm: self.clone(),
                        comp,
                        kkt: kkt_at_exit,
                        iter,
                    });
                }
            }
            let dual_mag = inf_norm(&self.lam)
                .max(inf_norm(&self.y))
                .max(inf_norm(&self.zl))
                .max(inf_norm(&self.zu));
            if dual_mag > 1e13 {
                return Err(format!("dual iterates diverged at iteration {iter} (likely infeasible)"));
            }

            // diagonal scalings
            let mut hdiag = vec![0.0; n];
            for j in 0..n {
                let mut d = p.q[j];
                if self.has_l[j] {
                    d += self.zl[j] / self.wl(j);
                }
                if self.has_u[j] {
                    d += self.zu[j] / self.wu(j);
                }
                hdiag[j] = d;
            }
            let ds: Vec<f64> = self.lam.iter().zip(&self.s).map(|(l, s)| l / s).collect();
            let mut hmat = vec![0.0; n * n];
            for (row, d) in p.g.iter().zip(&ds) {
                for (a, (ja, va)) in row.iter().enumerate() {
                    for (jb, vb) in &row[..=a] {
                        let (hi, lo) = if ja >= jb { (*ja, *jb) } else { (*jb, *ja) };
                        hmat[hi * n + lo] += d * va * vb;
                    }
                }
            }
            for j in 0..n {
                hmat[j * n + j] += hdiag[j];
            }
            // smallest regularization that factors; refinement against the
            // unregularized matrix removes most of its bias
            let mut reg = 1e-11;
            let hfac = loop {
                let mut trial = hmat.clone();
                for j in 0..n {
                    trial[j * n + j] += reg;
                }
                if let Some(f) = cholesky_in_place(trial, n) {
                    break f;
                }
                reg *= 100.0;
                if reg > 1e-3 {
                    let mut trial = hmat.clone();
                    for j in 0..n {
                        trial[j * n + j] += 1e-11;
                    }
                    reg = 1e-11;
                    break cholesky_ipm(trial, n)
                        .ok_or_else(|| format!("normal matrix not positive definite at iteration {iter}"))?;
                }
            };
            let hsolve = |b: &mut [f64]| {
                let rhs = b.to_vec();
                chol_solve(&hfac, n, b);
                if reg > 1e-10 {
                    for _ in 0..3 {
                        let mut r = sym_lower_matvec(&hmat, n, b);
                        for j in 0..n {
                            r[j] = rhs[j] - r[j];
                        }
                        chol_solve(&hfac, n, &mut r);
                        for j in 0..n {
                            b[j] += r[j];
                        }
                    }
                }
            };
            // Schur complement for equality rows
            let (w_cols, sfac) = if me > 0 {
                let mut w = Vec::with_capacity(me);
                for row in &p.e {
                    let mut col = vec![0.0; n];
                    for (j, a) in row {
                        col[*j] = *a;
                    }
                    hsolve(&mut col);
                    w.push(col);
                }
                let mut smat = vec![0.0; me * me];
                for a in 0..me {
                    for b in 0..=a {
                        smat[a * me + b] = dot_sparse(&p.e[a], &w[b]);
                    }
                    smat[a * me + a] += 1e-12 * (1.0 + smat[a * me + a]);
                }
                let sf = cholesky_in_place(smat, me)
                    .ok_or_else(|| format!("equality Schur complement singular at iteration {iter}"))?;
                (w, sf)
            } else {
                (Vec::new(), Vec::new())
            };

            let solve = |this: &Self, rc_s: &[f64], rc_l: &[f64], rc_u: &[f64]| -> Step {
                let mut r1: Vec<f64> = rd.iter().map(|v| -v).collect();
                for j in 0..n {
                    if this.has_l[j] {
                        r1[j] += rc_l[j] / this.wl(j);
                    }
                    if this.has_u[j] {
                        r1[j] -= rc_u[j] / this.wu(j);
                    }
                }
                let sig_s: Vec<f64> = (0..mg).map(|r| rc_s[r] / this.s[r] + ds[r] * rg[r]).collect();
                for (row, sv) in p.g.iter().zip(&sig_s) {
                    for (j, a) in row {
                        r1[*j] -= a * sv;
                    }
                }
                let mut hr1 = r1.clone();
                hsolve(&mut hr1);
                let mut dy = vec![0.0; me];
                if me > 0 {
                    for a in 0..me {
                        dy[a] = dot_sparse(&p.e[a], &hr1) + re[a];
                    }
                    chol_solve(&sfac, me, &mut dy);
                }
                let mut dx = hr1;
                for (a, col) in w_cols.iter().enumerate() {
                    for j in 0..n {
                        dx[j] -= dy[a] * col[j];
                    }
                }
                let gdx: Vec<f64> = p.g.iter().map(|row| dot_sparse(row, &dx)).collect();
                let dsl: Vec<f64> = (0..mg).map(|r| -rg[r] - gdx[r]).collect();
                let dlam: Vec<f64> = (0..mg).map(|r| sig_s[r] + ds[r] * gdx[r]).collect();
                let mut dzl = vec![0.0; n];
                let mut dzu = vec![0.0; n];
                for j in 0..n {
                    if this.has_l[j] {
                        let w = this.wl(j);
                        dzl[j] = rc_l[j] / w - this.zl[j] / w * dx[j];
                    }
                    if this.has_u[j] {
                        let w = this.wu(j);
                        dzu[j] = rc_u[j] / w + this.zu[j] / w * dx[j];
                    }
                }
                Step {
                    dx,
                    dy,
                    ds: dsl,
                    dlam,
                    dzl,
                    dzu,
                }
            };

            // predictor
            let rc_s: Vec<f64> = (0..mg).map(|r| -self.s[r] * self.lam[r]).collect();
            let rc_l: Vec<f64> = (0..n).map(|j| if self.has_l[j] { -self.wl(j) * self.zl[j] } else { 0.0 }).collect();
            let rc_u: Vec<f64> = (0..n).map(|j| if self.has_u[j] { -self.wu(j) * self.zu[j] } else { 0.0 }).collect();
            let aff = solve(&self, &rc_s, &rc_l, &rc_u);
            let a_aff = self.max_step(&aff, 1.0);
            let mut comp_aff = 0.0;
            for r in 0..mg {
                comp_aff += (self.s[r] + a_aff * aff.ds[r]) * (self.lam[r] + a_aff * aff.dlam[r]);
            }
            for j in 0..n {
                if self.has_l[j] {
                    comp_aff += (self.wl(j) + a_aff * aff.dx[j]) * (self.zl[j] + a_aff * aff.dzl[j]);
                }
                if self.has_u[j] {
                    comp_aff += (self.wu(j) - a_aff * aff.dx[j]) * (self.zu[j] + a_aff * aff.dzu[j]);
                }
            }
            let sigma = (comp_aff / comp.max(f64::MIN_POSITIVE)).clamp(0.0, 1.0).powi(3);
            let target = sigma * mu;

            // corrector
            let rc_s: Vec<f64> = (0..mg)
                .map(|r| target - self.s[r] * self.lam[r] - aff.ds[r] * aff.dlam[r])
                .collect();
            let rc_l: Vec<f64> = (0..n)
                .map(|j| {
                    if self.has_l[j] {
                        target - self.wl(j) * self.zl[j] - aff.dx[j] * aff.dzl[j]
                    } else {
                        0.0
                    }
                })
                .collect();
            let rc_u: Vec<f64> = (0..n)
                .map(|j| {
                    if self.has_u[j] {
                        target - self.wu(j) * self.zu[j] + aff.dx[j] * aff.dzu[j]
                    } else {
                        0.0
                    }
                })
                .collect();
            let step = solve(&self, &rc_s, &rc_l, &rc_u);
            let alpha = self.max_step(&step, 0.995);
            if alpha < 1e-10 {
                small_steps += 1;
                if small_steps >= 5 {
                    return Err(format!("step length collapsed at iteration {iter}"));
                }
            } else {
                small_steps = 0;
            }
            for j in 0..n {
                self.x[j] += alpha * step.dx[j];
                self.zl[j] += alpha * step.dzl[j];
                self.zu[j] += alpha * step.dzu[j];
            }
            for r in 0..mg {
                self.s[r] += alpha * step.ds[r];
                self.lam[r] += alpha * step.dlam[r];
            }
            for r in 0..me {
                self.y[r] += alpha * step.dy[r];
            }
            self.keep_interior();
        }
        Err(format!("no convergence in {} iterations", opts.max_iterations))
    }

    /// Guards against rounding pushing an iterate onto its bound.
    fn keep_interior(&mut self) {
        for j in 0..self.p.n {
            let (l, u) = (self.p.lo[j], self.p.hi[j]);
            let eps = 1e-14 * (1.0 + l.abs().max(u.abs()).min(1e12));
            if self.has_l[j] && self.x[j] - l <= 0.0 {
                self.x[j] = l + eps;
            }
            if self.has_u[j] && u - self.x[j] <= 0.0 {
                self.x[j] = u - eps;
            }
            if self.has_l[j] && self.zl[j] <= 0.0 {
                self.zl[j] = f64::MIN_POSITIVE;
            }
            if self.has_u[j] && self.zu[j] <= 0.0 {
                self.zu[j] = f64::MIN_POSITIVE;
            }
        }
        for r in 0..self.s.len() {
            self.s[r] = self.s[r].max(f64::MIN_POSITIVE);
            self.lam[r] = self.lam[r].max(f64::MIN_POSITIVE);
        }
    }

    fn max_step(&self, st: &Step, frac: f64) -> f64 {
        let mut a = 1.0_f64 / frac;
        let mut limit = |v: f64, dv: f64| {
            if dv < 0.0 {
                a = a.min(-v / dv);
            }
        };
        for j in 0..self.p.n {
            if self.has_l[j] {
                limit(self.wl(j), st.dx[j]);
                limit(self.zl[j], st.dzl[j]);
            }
            if self.has_u[j] {
                limit(self.wu(j), -st.dx[j]);
                limit(self.zu[j], st.dzu[j]);
            }
        }
        for r in 0..self.s.len() {
            limit(self.s[r], st.ds[r]);
            limit(self.lam[r], st.dlam[r]);
        }
        (frac * a).min(1.0)
    }

    fn finish(self, comp: f64, kkt: f64, iter: usize) -> IpmSolution {
        let bound = lagrangian_bound(self.p, &self.y, &self.lam);
        IpmSolution {
            x: self.x,
            y: self.y,
            lam: self.lam,
            bound,
            gap: comp,
            kkt,
            iterations: iter,
        }
    }
}

fn dot_sparse(row: &[(usize, f64)], x: &[f64]) -> f64 {
    row.iter().map(|(j, a)| a * x[*j]).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Lower-triangular Cholesky of a row-major symmetric matrix whose lower
/// triangle is filled.
fn cholesky_in_place(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            let (ri, rj) = (i * n, j * n);
            for k in 0..j {
                s -= a[ri + k] * a[rj + k];
            }
            a[ri + j] = s / d;
        }
    }
    Some(a)
}

/// Cholesky for the barrier normal matrix. Pivots lost to cancellation
/// (below `1e-13` of the original diagonal) are replaced by a huge value,
/// which zeroes the step along that direction instead of failing.
fn cholesky_ipm(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let orig = a[j * n + j];
        let mut d = orig;
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !d.is_finite() {
            return None;
        }
        let d = if d <= 1e-13 * orig.abs() { 1e64 } else { d.sqrt() };
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            let (ri, rj) = (i * n, j * n);
            for k in 0..j {
                s -= a[ri + k] * a[rj + k];
            }
            a[ri + j] = s / d;
        }
    }
    Some(a)
}

/// `A·x` for a symmetric matrix stored in its lower triangle.
fn sym_lower_matvec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let row = &a[i * n..i * n + i];
        let mut acc = a[i * n + i] * x[i];
        for (k, v) in row.iter().enumerate() {
            acc += v * x[k];
            y[k] += v * x[i];
        }
        y[i] += acc;
    }
    y
}

fn chol_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}
