//! Convergence constants of the learning algorithm evaluated as numbers, plus
//! empirical counterparts used to check them.

use std::io::Write;

use crate::dynamics::{optimal_slope, rk4, solve_covariance, solve_p_for_k, solve_riccati_star};
use crate::error::{Error, Result};
use crate::gradients::grad_g_exact;
use crate::graphon::Graphon;
use crate::linalg::{self, power_iteration, Mat};
use crate::model::{validate_model, InitialLaw, ModelCoefficients, PolicyGrid, TimeGrid};
use crate::path::{Stage, StagePath};
use crate::policy::PolicyLayout;

const POWER_ITERS: usize = 20_000;
const POWER_TOL: f64 = 1e-13;
const GRAPHON_RESOLUTION: usize = 400;

/// Sup norms and eigenvalue bounds feeding the closed-form constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SupNorms {
    pub horizon: f64,
    pub a: f64,
    pub a_bar: f64,
    pub b: f64,
    pub d: f64,
    pub h: f64,
    pub q: f64,
    pub q_bar: f64,
    pub h_bar: f64,
    pub k0: f64,
    pub p0: f64,
    pub k_star: f64,
    pub p_star: f64,
    pub w: f64,
    pub theta0_upper: f64,
    pub theta0_lower: f64,
    pub lambda_q_upper: f64,
    pub lambda_qbar_upper: f64,
}

/// L² operator norms of the discretised Volterra operators, maximised over the slopes
/// they were evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorNorms {
    pub gamma_b: f64,
    pub gamma_b_terminal: f64,
    pub gamma_tilde_plus_id: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub c0_k: f64,
    pub m_theta_lower: f64,
    pub m_theta_upper: f64,
    pub m_theta_star: f64,
    pub c1_k: f64,
    pub c2_k: f64,
    pub c3_k: f64,
    pub m1: f64,
    pub m2: f64,
    pub m_res: f64,
    pub m_strong: f64,
    /// Smoothness bound with power-iteration operator norms.
    pub l_smooth: f64,
    /// Smoothness bound with Gronwall estimates of the operator norms.
    pub l_closed: f64,
    /// Largest and smallest eigenvalue of the discretised intercept Hessian.
    pub l_hat: f64,
    pub m_hat: f64,
    pub m_g: f64,
    pub lambda_r_lower: f64,
    pub lambda_r_upper: f64,
    pub assumption2_satisfied: bool,
    pub norms: SupNorms,
    pub operators: OperatorNorms,
}

fn sup_nodes(p: &StagePath) -> f64 {
    (0..=p.n_steps()).fold(0.0_f64, |a, i| a.max(linalg::norm(p.node(i))))
}

/// Largest eigenvalue of any player's covariance along `k`, over grid nodes.
fn covariance_extremes(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, laws: &InitialLaw) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut seen: Vec<&Mat> = Vec::new();
    for cov in &laws.covariances {
        if seen.contains(&cov) {
            continue;
        }
        seen.push(cov);
        let theta = solve_covariance(m, tg, k, cov)?;
        for i in 0..=tg.n_steps {
            let ev = linalg::sym_eigenvalues(theta.node(i));
            lo = lo.min(ev[0]);
            hi = hi.max(*ev.last().unwrap());
        }
    }
    Ok((lo, hi))
}

/// Smallest and largest covariance eigenvalue over nodes and players under slope `k`.
pub fn covariance_eigen_range(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, laws: &InitialLaw) -> Result<(f64, f64)> {
    covariance_extremes(m, tg, k, laws)
}

/// Formula part of the diagnostics: pure arithmetic on the sup norms.
pub fn closed_form_constants(n: &SupNorms, lambda_r_lower: f64, lambda_r_upper: f64, m_theta_star: f64) -> ClosedForm {
    let t = n.horizon;
    let c0_k = n.k0 + n.b / lambda_r_lower * n.p0;
    let growth = n.a + n.b * c0_k;
    let m_theta_upper = t * (n.theta0_upper + n.d * n.d) * (2.0 * t * growth).exp();
    let m_theta_lower = n.theta0_lower * (-2.0 * t * growth).exp();
    let c1_k = m_theta_lower / (2.0 * m_theta_upper * lambda_r_upper);
    let c2_k = lambda_r_lower * m_theta_lower / m_theta_star;
    let c3_k = 1.0 / (lambda_r_lower * m_theta_lower);
    let m_res = (2.0 * t * t * n.b * n.b * c0_k * c0_k * (2.0 * t * growth).exp() + 0.5).exp();
    let m_strong = 2.0 * lambda_r_lower / (m_res * m_res);
    let m1 = t * (n.a + n.b * c0_k + n.a_bar * n.w);
    let gap = 1.0 - t * (n.a + n.b * n.k_star + n.a_bar * n.w);
    let coupling = (n.q_bar * n.h_bar + t * (n.p_star * n.a_bar + n.q * n.h)) * n.w;
    let (m2, m_g) = if gap > 0.0 {
        (t * n.b * n.b * coupling / (lambda_r_lower * gap * gap), 1.0 + t.sqrt() * n.b * coupling / (lambda_r_lower * gap))
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let e = (t * growth).exp();
    let l_closed = 4.0
        * (n.lambda_q_upper * t * t * n.b * n.b * e * e / 2.0
            + n.lambda_qbar_upper * t * n.b * n.b * e * e
            + lambda_r_upper * (1.0 + t * c0_k * n.b * e / 2.0_f64.sqrt()).powi(2));
    ClosedForm { c0_k, m_theta_lower, m_theta_upper, c1_k, c2_k, c3_k, m1, m2, m_res, m_strong, m_g, l_closed }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub c0_k: f64,
    pub m_theta_lower: f64,
    pub m_theta_upper: f64,
    pub c1_k: f64,
    pub c2_k: f64,
    pub c3_k: f64,
    pub m1: f64,
    pub m2: f64,
    pub m_res: f64,
    pub m_strong: f64,
    pub m_g: f64,
    pub l_closed: f64,
}

pub fn smoothness_bound(ops: &OperatorNorms, lambda_q_upper: f64, lambda_qbar_upper: f64, lambda_r_upper: f64) -> f64 {
    4.0 * (lambda_q_upper * ops.gamma_b.powi(2)
        + lambda_qbar_upper * ops.gamma_b_terminal.powi(2)
        + lambda_r_upper * ops.gamma_tilde_plus_id.powi(2))
}

/// Midpoint discretisations of G ↦ Γ[BG], G ↦ Γ[BG](T) and G ↦ (Γ̃ + id)[G] on the
/// simulation steps, as matrices acting on stacked step values.
fn volterra_matrices(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath) -> Result<(Mat, Mat, Mat)> {
    let (d, kd, n, dt) = (m.dim_d, m.dim_k, tg.n_steps, tg.dt);
    let closed = |i: usize, s: Stage| m.a.at(i, s) + m.b.at(i, s) * k.at(i, s);
    let y = rk4::forward(n, dt, Mat::identity(d, d), false, "fundamental matrix", |i, s, y| closed(i, s) * y)?;
    let y_inv = rk4::forward(n, dt, Mat::identity(d, d), false, "inverse fundamental matrix", |i, s, y| -(y * closed(i, s)))?;
    let yb: Vec<Mat> = (0..n).map(|j| y_inv.at(j, Stage::Mid) * m.b.at(j, Stage::Mid) * dt).collect();
    let mut gb = Mat::zeros(n * d, n * kd);
    for i in 0..n {
        let yi = y.at(i, Stage::Mid);
        for (j, ybj) in yb.iter().enumerate().take(i) {
            gb.view_mut((i * d, j * kd), (d, kd)).copy_from(&(yi * ybj));
        }
        gb.view_mut((i * d, i * kd), (d, kd)).copy_from(&(m.b.at(i, Stage::Mid) * (dt / 2.0)));
    }
    let y_t = y.node(n);
    let mut gt = Mat::zeros(d, n * kd);
    for (j, ybj) in yb.iter().enumerate() {
        gt.view_mut((0, j * kd), (d, kd)).copy_from(&(y_t * ybj));
    }
    let mut kblock = Mat::zeros(n * kd, n * d);
    for i in 0..n {
        kblock.view_mut((i * kd, i * d), (kd, d)).copy_from(k.at(i, Stage::Mid));
    }
    let tilde = &kblock * &gb + Mat::identity(n * kd, n * kd);
    Ok((gb, gt, tilde))
}

fn spectral_norm(a: &Mat) -> f64 {
    let at = a.transpose();
    let lambda = power_iteration(a.ncols(), |v| (&at * (a * Mat::from_column_slice(v.len(), 1, v))).iter().copied().collect(), POWER_ITERS, POWER_TOL);
    lambda.max(0.0).sqrt()
}

/// Operator norms at slope `k`: the time-weighted L² norms reduce to matrix spectral norms,
/// except the terminal map whose codomain carries no dt weight.
pub fn operator_norms(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath) -> Result<OperatorNorms> {
    let (gb, gt, tilde) = volterra_matrices(m, tg, k)?;
    Ok(OperatorNorms {
        gamma_b: spectral_norm(&gb),
        gamma_b_terminal: spectral_norm(&gt) / tg.dt.sqrt(),
        gamma_tilde_plus_id: spectral_norm(&tilde),
    })
}

/// Symmetrised Hessian of J₂ in G, restricted to piecewise-constant intercepts on `pg`
/// and taken in the L² metric.
pub fn intercept_hessian(m: &ModelCoefficients, tg: &TimeGrid, pg: &PolicyGrid, k: &StagePath) -> Result<Mat> {
    let layout = PolicyLayout::PiecewiseConstant(pg.clone());
    let dim = pg.n_intervals * m.dim_k;
    let z = StagePath::constant(tg.n_steps, Mat::zeros(m.dim_d, 1));
    let mu0 = Mat::zeros(m.dim_d, 1);
    let mut h = Mat::zeros(dim, dim);
    for col in 0..dim {
        let mut coords = vec![Mat::zeros(m.dim_k, 1); pg.n_intervals];
        coords[col / m.dim_k][(col % m.dim_k, 0)] = 1.0;
        let g = layout.expand(tg, &coords);
        let grad = grad_g_exact(m, tg, &layout, k, &g, &z, &mu0)?;
        for (c, v) in grad.coords.iter().enumerate() {
            for r in 0..m.dim_k {
                h[(c * m.dim_k + r, col)] = v[(r, 0)];
            }
        }
    }
    Ok(linalg::symmetrize(&h))
}

pub fn compute_diagnostics(
    m: &ModelCoefficients,
    laws: &InitialLaw,
    tg: &TimeGrid,
    pg: &PolicyGrid,
    graphon: &Graphon,
    k0: &StagePath,
) -> Result<Diagnostics> {
    let rep = validate_model(m, laws, tg, true)?;
    let p0 = solve_p_for_k(m, tg, k0)?;
    let p_star = solve_riccati_star(m, tg)?;
    let k_star = optimal_slope(m, &p_star);
    let norms = SupNorms {
        horizon: tg.horizon,
        a: m.a.sup_norm(),
        a_bar: m.a_bar.sup_norm(),
        b: m.b.sup_norm(),
        d: m.d.sup_norm(),
        h: m.h.sup_norm(),
        q: m.q.sup_norm(),
        q_bar: linalg::norm(&m.q_bar),
        h_bar: linalg::norm(&m.h_bar),
        k0: sup_nodes(k0),
        p0: sup_nodes(&p0),
        k_star: sup_nodes(&k_star),
        p_star: sup_nodes(&p_star),
        w: graphon.l2_norm(GRAPHON_RESOLUTION).best(),
        theta0_upper: rep.theta0_upper,
        theta0_lower: rep.theta0_lower,
        lambda_q_upper: m.q.eigen_range().1.max(0.0),
        lambda_qbar_upper: linalg::max_eigenvalue(&m.q_bar).max(0.0),
    };
    let (_, m_theta_star) = covariance_extremes(m, tg, &k_star, laws)?;
    let cf = closed_form_constants(&norms, rep.lambda_r_lower, rep.lambda_r_upper, m_theta_star);

    let mut ops = OperatorNorms { gamma_b: 0.0, gamma_b_terminal: 0.0, gamma_tilde_plus_id: 0.0 };
    let mut l_hat = 0.0_f64;
    let mut m_hat = f64::INFINITY;
    for k in [k0, &k_star] {
        let o = operator_norms(m, tg, k)?;
        ops.gamma_b = ops.gamma_b.max(o.gamma_b);
        ops.gamma_b_terminal = ops.gamma_b_terminal.max(o.gamma_b_terminal);
        ops.gamma_tilde_plus_id = ops.gamma_tilde_plus_id.max(o.gamma_tilde_plus_id);
        let ev = linalg::sym_eigenvalues(&intercept_hessian(m, tg, pg, k)?);
        m_hat = m_hat.min(ev[0]);
        l_hat = l_hat.max(*ev.last().unwrap());
    }
    let l_smooth = smoothness_bound(&ops, norms.lambda_q_upper, norms.lambda_qbar_upper, rep.lambda_r_upper);

    let diag = Diagnostics {
        c0_k: cf.c0_k,
        m_theta_lower: cf.m_theta_lower,
        m_theta_upper: cf.m_theta_upper,
        m_theta_star,
        c1_k: cf.c1_k,
        c2_k: cf.c2_k,
        c3_k: cf.c3_k,
        m1: cf.m1,
        m2: cf.m2,
        m_res: cf.m_res,
        m_strong: cf.m_strong,
        l_smooth,
        l_closed: cf.l_closed,
        l_hat,
        m_hat,
        m_g: cf.m_g,
        lambda_r_lower: rep.lambda_r_lower,
        lambda_r_upper: rep.lambda_r_upper,
        assumption2_satisfied: cf.m1 < 1.0 && cf.m2 < 1.0,
        norms,
        operators: ops,
    };
    Ok(diag)
}

impl Diagnostics {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("C0_K", self.c0_k),
            ("M_theta_lower", self.m_theta_lower),
            ("M_theta_upper", self.m_theta_upper),
            ("M_theta_star", self.m_theta_star),
            ("C1_K", self.c1_k),
            ("C2_K", self.c2_k),
            ("C3_K", self.c3_k),
            ("M1", self.m1),
            ("M2", self.m2),
            ("M_res", self.m_res),
            ("m_strong", self.m_strong),
            ("L_smooth", self.l_smooth),
            ("L_closed", self.l_closed),
            ("L_hat", self.l_hat),
            ("m_hat", self.m_hat),
            ("M_G", self.m_g),
            ("lambda_R_lower", self.lambda_r_lower),
            ("lambda_R_upper", self.lambda_r_upper),
            ("assumption2_satisfied", if self.assumption2_satisfied { 1.0 } else { 0.0 }),
        ]
    }

    /// `name = value` lines.
    pub fn write_report<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in self.entries() {
            writeln!(out, "{k} = {v:e}")?;
        }
        Ok(())
    }

    /// Long format: one `constant,value` row per entry.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["constant", "value"])?;
        for (k, v) in self.entries() {
            w.write_record([k.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Wide format: a header of constant names and a single row of values.
    pub fn write_csv_row<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let e = self.entries();
        w.write_record(e.iter().map(|(k, _)| *k))?;
        w.write_record(e.iter().map(|(_, v)| v.to_string()))?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedRates {
    pub rate_k: f64,
    pub rate_g: f64,
    pub eta_k_max: f64,
    pub eta_g_max: f64,
    /// Steps outside the guaranteed ranges; the rates are then only formal.
    pub step_out_of_range: bool,
}

pub fn predicted_rates(diag: &Diagnostics, eta_k: f64, eta_g: f64) -> Result<PredictedRates> {
    if !(eta_k > 0.0) || !(eta_g > 0.0) {
        return Err(Error::Invalid("step sizes must be positive".into()));
    }
    let eta_k_max = diag.c1_k;
    let eta_g_max = 2.0 / diag.l_smooth;
    Ok(PredictedRates {
        rate_k: 1.0 - eta_k * diag.c2_k,
        rate_g: 1.0 - eta_g * diag.m_strong,
        eta_k_max,
        eta_g_max,
        step_out_of_range: eta_k >= eta_k_max || eta_g >= eta_g_max,
    })
}

/// Quantities of the current outer iterate that the inner-iteration counts depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerBoundInputs {
    /// ‖J₁(K⁽ⁿ⁾) − J₁(K*)‖ over players.
    pub j1_gap: f64,
    /// ‖G⁽ⁿ⁾ − G⁽ⁿ⁺¹⁾*‖ over players and time.
    pub g_gap: f64,
    /// Sup norm of the mean-field estimate entering the slope bound.
    pub c_mu: f64,
    pub omega: f64,
}

/// Minimal inner iteration counts (L_K, L_G) for an outer step; `None` when the
/// corresponding rate is not in (0, 1).
pub fn inner_iteration_bounds(diag: &Diagnostics, eta_k: f64, eta_g: f64, x: &InnerBoundInputs) -> (Option<f64>, Option<f64>) {
    let n = &diag.norms;
    let count = |rate: f64, arg: f64| {
        if rate > 0.0 && rate < 1.0 && arg > 0.0 {
            Some((-2.0 / rate.ln() * arg.ln()).max(0.0))
        } else {
            None
        }
    };
    let c_mu_bar = n.horizon.sqrt() * n.b / (1.0 - diag.m1) * x.c_mu;
    let lk = count(1.0 - eta_k * diag.c2_k, 3.0 * x.j1_gap.sqrt() * diag.c3_k.sqrt() * c_mu_bar / x.omega);
    let lg = count(1.0 - eta_g * diag.m_strong, 3.0 * n.horizon * n.b * x.g_gap / ((1.0 - diag.m1) * x.omega));
    (lk, lg)
}

/// Outer iteration count guaranteeing accuracy `eps` from an initial mean-field gap.
pub fn outer_iteration_bound(m2: f64, mu_gap: f64, eps: f64) -> Option<f64> {
    if m2 > 0.0 && m2 < 1.0 && eps > 0.0 {
        Some((-(2.0 * mu_gap / eps).ln() / m2.ln()).max(0.0))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::scalar;
    use crate::model::Coefficient;

    fn benchmark_setup() -> (ModelCoefficients, TimeGrid, PolicyGrid, InitialLaw, StagePath) {
        let tg = TimeGrid::new(1.0, 120).unwrap();
        let (_, pg, _) = crate::model::build_grids(1.0, 120, 30, crate::model::PlayerGrid::uniform(11).alphas).unwrap();
        let k0 = StagePath::constant(120, scalar(-1.0));
        (ModelCoefficients::benchmark(), tg, pg, InitialLaw::benchmark(11), k0)
    }

    #[test]
    fn degenerate_model_has_vanishing_contraction_constants() {
        let z = Coefficient::scalar(0.0);
        let m = ModelCoefficients {
            a: z.clone(),
            a_bar: z.clone(),
            b: z.clone(),
            d: z.clone(),
            h: z.clone(),
            q: z,
            q_bar: scalar(0.0),
            h_bar: scalar(0.0),
            ..ModelCoefficients::benchmark()
        };
        let (_, tg, pg, laws, k0) = benchmark_setup();
        let diag = compute_diagnostics(&m, &laws, &tg, &pg, &Graphon::Zero, &k0).unwrap();
        assert_eq!(diag.m1, 0.0);
        assert_eq!(diag.m2, 0.0);
        assert!(diag.assumption2_satisfied);
    }

    #[test]
    fn benchmark_invariants() {
        let (m, tg, pg, laws, k0) = benchmark_setup();
        let d = compute_diagnostics(&m, &laws, &tg, &pg, &Graphon::UniformAttachment, &k0).unwrap();
        assert!(d.c1_k <= 1.0 / (2.0 * d.lambda_r_upper));
        assert!(d.c1_k <= 1.0 / d.c2_k);
        assert!(d.m_theta_lower <= d.m_theta_upper);
        assert!(d.m_strong > 0.0);
        assert!(d.entries().iter().all(|(_, v)| v.is_finite()));
        assert!(d.m_strong <= d.m_hat && d.m_hat <= d.l_hat);
        assert!(d.l_hat <= d.l_smooth && d.l_smooth <= d.l_closed, "{} {} {}", d.l_hat, d.l_smooth, d.l_closed);
        assert!(d.norms.k_star <= d.c0_k);
        let mut out = Vec::new();
        d.write_report(&mut out).unwrap();
        println!("{}", String::from_utf8(out).unwrap());
    }

    #[test]
    fn operator_norms_converge_under_refinement() {
        let m = ModelCoefficients::benchmark();
        let norms: Vec<OperatorNorms> = [60, 120, 240]
            .iter()
            .map(|&n| {
                let tg = TimeGrid::new(1.0, n).unwrap();
                operator_norms(&m, &tg, &StagePath::constant(n, scalar(-1.0))).unwrap()
            })
            .collect();
        for w in norms.windows(2) {
            assert!((w[0].gamma_b - w[1].gamma_b).abs() < 1e-2 * w[1].gamma_b);
            assert!((w[0].gamma_b_terminal - w[1].gamma_b_terminal).abs() < 1e-3);
            assert!((w[0].gamma_tilde_plus_id - w[1].gamma_tilde_plus_id).abs() < 1e-2);
        }
    }

    #[test]
    fn terminal_norm_matches_its_closed_form() {
        // Γ[B·](T) is a rank-one functional with norm ‖s ↦ e^{a(T−s)} b‖_{L²}.
        let m = ModelCoefficients::benchmark();
        let tg = TimeGrid::new(1.0, 240).unwrap();
        let o = operator_norms(&m, &tg, &StagePath::constant(240, scalar(-1.0))).unwrap();
        let a: f64 = -0.25 - 0.5;
        let exact = 0.25 * ((2.0 * a).exp() - 1.0) / (2.0 * a);
        assert!((o.gamma_b_terminal - exact.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn predicted_rates_at_admissible_steps() {
        let (m, tg, pg, laws, k0) = benchmark_setup();
        let d = compute_diagnostics(&m, &laws, &tg, &pg, &Graphon::Half, &k0).unwrap();
        let r = predicted_rates(&d, d.c1_k / 2.0, 1.0 / d.l_smooth).unwrap();
        assert!(r.rate_k > 0.0 && r.rate_k < 1.0);
        assert!(r.rate_g > 0.0 && r.rate_g < 1.0);
        assert!(!r.step_out_of_range);
        assert!(predicted_rates(&d, 0.1, 0.1).unwrap().step_out_of_range);
    }

    #[test]
    fn iteration_bounds_grow_with_accuracy() {
        let (m, tg, pg, laws, k0) = benchmark_setup();
        let d = compute_diagnostics(&m, &laws, &tg, &pg, &Graphon::Zero, &k0).unwrap();
        assert!(d.m1 < 1.0);
        let x = InnerBoundInputs { j1_gap: 1.0, g_gap: 1.0, c_mu: 1.0, omega: 1e-3 };
        let (lk, lg) = inner_iteration_bounds(&d, d.c1_k / 2.0, 1.0 / d.l_smooth, &x);
        let (lk2, lg2) = inner_iteration_bounds(&d, d.c1_k / 2.0, 1.0 / d.l_smooth, &InnerBoundInputs { omega: 1e-6, ..x });
        assert!(lk2.unwrap() > lk.unwrap() && lg2.unwrap() > lg.unwrap());
        assert!(outer_iteration_bound(0.5, 1.0, 1e-3).unwrap() > outer_iteration_bound(0.5, 1.0, 1e-1).unwrap());
        assert_eq!(outer_iteration_bound(1.5, 1.0, 1e-3), None);
    }

    #[test]
    fn reports_list_every_constant() {
        let (m, tg, pg, laws, k0) = benchmark_setup();
        let d = compute_diagnostics(&m, &laws, &tg, &pg, &Graphon::Threshold, &k0).unwrap();
        let mut text = Vec::new();
        d.write_report(&mut text).unwrap();
        assert_eq!(String::from_utf8(text).unwrap().lines().count(), d.entries().len());
        let mut row = Vec::new();
        d.write_csv_row(&mut row).unwrap();
        assert_eq!(String::from_utf8(row).unwrap().lines().count(), 2);
    }
}
