use lqgmfg::cost::{j1_exact, j2_exact};
use lqgmfg::dynamics::{optimal_slope, solve_adjoint_zeta, solve_covariance, solve_mean_fixed_z, solve_p_for_k, solve_psi, solve_riccati_star};
use lqgmfg::equilibrium::{solve_equilibrium, PicardConfig};
use lqgmfg::gradients::{grad_k_exact, SINGULAR_THRESHOLD};
use lqgmfg::graphon::{apply_operator, Graphon, QuadratureRule};
use lqgmfg::linalg::{invert, min_eigenvalue, scalar, Mat};
use lqgmfg::metrics::{rmse_g, rmse_k};
use lqgmfg::model::{build_grids, validate_model, Coefficient, InitialLaw, ModelCoefficients, PlayerGrid, TimeGrid};
use lqgmfg::path::StagePath;
use lqgmfg::policy::PolicyLayout;
use lqgmfg::solver::best_response_intercept;
use proptest::prelude::*;

fn mat(values: &[f64], r: usize, c: usize) -> Mat {
    Mat::from_row_slice(r, c, &values[..r * c])
}

fn psd(values: &[f64], d: usize) -> Mat {
    let x = mat(values, d, d);
    &x * x.transpose()
}

/// A random model of state dimension `d` and control dimension `k` built from `v`.
fn model(v: &[f64], d: usize, k: usize) -> ModelCoefficients {
    let c = Coefficient::Constant;
    let chunk = |i: usize| &v[9 * i..9 * i + 9];
    ModelCoefficients {
        dim_d: d,
        dim_k: k,
        horizon: 1.0,
        a: c(mat(chunk(0), d, d) * 0.5),
        a_bar: c(mat(chunk(1), d, d) * 0.3),
        b: c(mat(chunk(2), d, k) * 0.7),
        d: c(mat(chunk(3), d, d) * 0.4),
        h: c(mat(chunk(4), d, d)),
        q: c(psd(chunk(5), d) * 0.5),
        r: c(psd(chunk(6), k) * 0.5 + Mat::identity(k, k) * 0.5),
        q_bar: psd(chunk(7), d) * 0.3,
        h_bar: mat(chunk(8), d, d),
    }
}

fn coeffs() -> impl Strategy<Value = (Vec<f64>, usize, usize)> {
    (prop::collection::vec(-1.0..1.0_f64, 120), 1..=3usize, 1..=2usize)
}

fn linear_path(tg: &TimeGrid, a: Mat, b: Mat) -> StagePath {
    StagePath::from_fn(tg.n_steps, |i, s| &a + &b * tg.stage_time(i, s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn grids_are_nested_bitwise(n_policy in 1..=12usize, ratio in 1..=8usize, horizon in 0.25..4.0_f64) {
        let (tg, pg, _) = build_grids(horizon, n_policy * ratio, n_policy, vec![0.0, 1.0]).unwrap();
        let nodes = tg.nodes();
        for i in 0..=pg.n_intervals {
            let tau = pg.node(&tg, i);
            prop_assert!(nodes.iter().any(|t| t.to_bits() == tau.to_bits()));
        }
        prop_assert_eq!(build_grids(horizon, n_policy * ratio, n_policy, vec![0.0, 1.0]).unwrap(), (tg, pg, PlayerGrid::new(vec![0.0, 1.0]).unwrap()));
    }

    #[test]
    fn validation_is_idempotent((v, d, k) in coeffs()) {
        let m = model(&v, d, k);
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let laws = InitialLaw::uniform(2, Mat::zeros(d, 1), Mat::identity(d, d) * 0.1);
        let first = validate_model(&m, &laws, &tg, true).unwrap();
        prop_assert_eq!(first, validate_model(&m, &laws, &tg, true).unwrap());
    }

    #[test]
    fn graphon_operator_is_linear_and_bounded(f in prop::collection::vec(-1.0..1.0_f64, 22), c in -3.0..3.0_f64) {
        let players = PlayerGrid::uniform(11);
        for g in [Graphon::UniformAttachment, Graphon::Half, Graphon::Bipartite, Graphon::Threshold] {
            let w = g.operator_matrix(&players, QuadratureRule::Trapezoid);
            let (x, y) = (Mat::from_row_slice(1, 11, &f[..11]), Mat::from_row_slice(1, 11, &f[11..]));
            let lhs = apply_operator(&w, &(&x * c + &y));
            let rhs = apply_operator(&w, &x) * c + apply_operator(&w, &y);
            prop_assert!((lhs - rhs).amax() <= 8.0 * f64::EPSILON * (1.0 + c.abs()));
            let l2 = |m: &Mat| (m.iter().map(|v| v * v).sum::<f64>() / 11.0).sqrt();
            prop_assert!(l2(&apply_operator(&w, &x)) <= g.l2_norm(400).best() * l2(&x) + 0.1);
        }
    }

    #[test]
    fn backward_solvers_hit_terminal_conditions_and_stay_symmetric((v, d, k) in coeffs()) {
        let m = model(&v, d, k);
        let tg = TimeGrid::new(1.0, 40).unwrap();
        let kp = linear_path(&tg, mat(&v[80..], k, d), mat(&v[90..], k, d) * 0.5);
        let p = solve_p_for_k(&m, &tg, &kp).unwrap();
        let p_star = solve_riccati_star(&m, &tg).unwrap();
        prop_assert_eq!(p.node(40), &m.q_bar);
        prop_assert_eq!(p_star.node(40), &m.q_bar);
        let th = solve_covariance(&m, &tg, &kp, &(psd(&v[100..], d) * 0.2)).unwrap();
        for i in 0..=40 {
            for x in [p.node(i), p_star.node(i), th.node(i)] {
                prop_assert_eq!(x, &x.transpose());
            }
            prop_assert!(min_eigenvalue(p_star.node(i)) >= -1e-10);
            prop_assert!(min_eigenvalue(th.node(i)) >= -1e-10);
        }
        let z = linear_path(&tg, Mat::from_element(d, 2, 0.3), Mat::from_element(d, 2, -0.2));
        let g = StagePath::constant(40, Mat::from_element(k, 2, 0.5));
        let mu = solve_mean_fixed_z(&m, &tg, &kp, &g, &z, &Mat::from_element(d, 2, 0.4)).unwrap();
        prop_assert_eq!(mu.node(0), &Mat::from_element(d, 2, 0.4));
        let zeta = solve_adjoint_zeta(&m, &tg, &kp, &g, &z, &mu).unwrap();
        prop_assert_eq!(zeta.node(40), &((&m.q_bar * (mu.node(40) - &m.h_bar * z.node(40))) * 2.0));
        let psi = solve_psi(&m, &tg, &p_star, &z).unwrap();
        prop_assert_eq!(psi.node(40), &(&m.q_bar * &m.h_bar * z.node(40) * -2.0));
    }

    #[test]
    fn mean_is_affine((v, d, k) in coeffs(), s in -2.0..2.0_f64) {
        let m = model(&v, d, k);
        let tg = TimeGrid::new(1.0, 30).unwrap();
        let kp = StagePath::constant(30, mat(&v[80..], k, d));
        let g1 = linear_path(&tg, mat(&v[90..], k, 2), mat(&v[94..], k, 2));
        let z1 = linear_path(&tg, mat(&v[98..], d, 2), mat(&v[104..], d, 2));
        let m1 = mat(&v[110..], d, 2);
        let zero = |r| StagePath::constant(30, Mat::zeros(r, 2));
        let base = solve_mean_fixed_z(&m, &tg, &kp, &zero(k), &zero(d), &Mat::zeros(d, 2)).unwrap();
        let one = solve_mean_fixed_z(&m, &tg, &kp, &g1, &z1, &m1).unwrap();
        let scaled = solve_mean_fixed_z(&m, &tg, &kp, &g1.map(|_, _, x| x * s), &z1.map(|_, _, x| x * s), &(&m1 * s)).unwrap();
        for i in 0..=30 {
            let want = base.node(i) + (one.node(i) - base.node(i)) * s;
            prop_assert!((scaled.node(i) - want).amax() <= 1e-12 * (1.0 + one.node(i).amax() * s.abs()));
        }
    }

    #[test]
    fn optimal_policies_minimise_their_costs((v, d, k) in coeffs(), eps in 0.05..0.5_f64) {
        let m = model(&v, d, k);
        let tg = TimeGrid::new(1.0, 60).unwrap();
        let theta0 = psd(&v[100..], d) * 0.2 + Mat::identity(d, d) * 0.01;
        let k_star = optimal_slope(&m, &solve_riccati_star(&m, &tg).unwrap());
        let probe = k_star.map(|_, _, x| x + mat(&v[80..], k, d) * eps);
        prop_assert!(j1_exact(&m, &tg, &probe, &theta0).unwrap() >= j1_exact(&m, &tg, &k_star, &theta0).unwrap() - 1e-12);
        let z = linear_path(&tg, mat(&v[90..], d, 1), mat(&v[93..], d, 1));
        let mu0 = mat(&v[96..], d, 1);
        let g_star = best_response_intercept(&m, &tg, &probe, &z, &mu0).unwrap();
        let g_probe = g_star.map(|_, _, x| x + Mat::from_element(k, 1, eps));
        prop_assert!(j2_exact(&m, &tg, &probe, &g_probe, &z, &mu0).unwrap()[0] >= j2_exact(&m, &tg, &probe, &g_star, &z, &mu0).unwrap()[0] - 1e-12);
    }

    #[test]
    fn preconditioned_gradient_is_raw_times_inverse_covariance((v, d, k) in coeffs()) {
        let m = model(&v, d, k);
        let tg = TimeGrid::new(1.0, 40).unwrap();
        let kp = linear_path(&tg, mat(&v[80..], k, d), mat(&v[90..], k, d));
        let theta0 = psd(&v[100..], d) * 0.2 + Mat::identity(d, d) * 0.05;
        let gr = grad_k_exact(&m, &tg, &PolicyLayout::StageResolved, &kp, &theta0).unwrap();
        let th = solve_covariance(&m, &tg, &kp, &theta0).unwrap();
        for i in 0..=40 {
            prop_assume!(min_eigenvalue(th.node(i)) >= SINGULAR_THRESHOLD);
            let step = i.min(39);
            let stage = if i == 40 { lqgmfg::path::Stage::End } else { lqgmfg::path::Stage::Start };
            let back = gr.raw_density.at(step, stage) * invert(th.at(step, stage)).unwrap();
            let pre = gr.preconditioned_density.at(step, stage);
            prop_assert!((back - pre).amax() <= 1e-9 * (1.0 + pre.amax()));
        }
    }

    #[test]
    fn rmse_is_a_metric(a in prop::collection::vec(-2.0..2.0_f64, 31), b in prop::collection::vec(-2.0..2.0_f64, 31)) {
        let tg = TimeGrid::new(1.0, 30).unwrap();
        let pa = StagePath::from_nodes_linear(&a.iter().map(|&x| scalar(x)).collect::<Vec<_>>());
        let pb = StagePath::from_nodes_linear(&b.iter().map(|&x| scalar(x)).collect::<Vec<_>>());
        let ab = rmse_k(&pa, &tg, &pb, &tg).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(rmse_k(&pa, &tg, &pa, &tg).unwrap(), 0.0);
        prop_assert_eq!(ab, rmse_k(&pb, &tg, &pa, &tg).unwrap());
        prop_assert_eq!(ab == 0.0, a == b);
        let players = PlayerGrid::uniform(1);
        let g = rmse_g(&pa, &tg, &players, &pb, &tg, &players).unwrap();
        prop_assert!((g - ab).abs() <= 1e-15);
    }
}

#[test]
fn equilibrium_satisfies_its_characterisation() {
    let m = ModelCoefficients::benchmark();
    let tg = TimeGrid::new(1.0, 120).unwrap();
    let players = PlayerGrid::uniform(11);
    let laws = InitialLaw::benchmark(11);
    let sol = solve_equilibrium(&m, &tg, &players, &Graphon::UniformAttachment, QuadratureRule::SelfExcluding, &laws, &PicardConfig::default()).unwrap();
    for i in 0..=120 {
        let r_inv_b = m.r_inv(i.min(119), lqgmfg::path::Stage::Start) * m.b.at_node(i).transpose();
        assert!((sol.k_star.node(i) + &r_inv_b * sol.p_star.node(i)).amax() <= 1e-12);
        assert!((sol.g_star.node(i) + &r_inv_b * sol.s_star.node(i)).amax() <= 1e-12);
    }
    let br = best_response_intercept(&m, &tg, &sol.k_star, &sol.z_star, &laws.mean_matrix()).unwrap();
    assert!(br.sup_diff(&sol.g_star) <= 1e-7, "{}", br.sup_diff(&sol.g_star));
}
