use lqgmfg::equilibrium::{solve_equilibrium, PicardConfig};
use lqgmfg::gradients::{gd_step_g, gd_step_k, grad_g_exact, grad_k_exact, StepRule};
use lqgmfg::graphon::{Graphon, QuadratureRule};
use lqgmfg::linalg::{scalar, Mat};
use lqgmfg::model::{build_grids, InitialLaw, ModelCoefficients, PlayerGrid};
use lqgmfg::path::StagePath;
use lqgmfg::policy::PolicyLayout;
use lqgmfg::solver::{default_initialisation, run_algorithm1, Game, GradientMode, SolverConfig};
use lqgmfg::theory::{closed_form_constants, compute_diagnostics, intercept_hessian, Diagnostics};

fn benchmark_game(n_players: usize) -> (Game, lqgmfg::model::PolicyGrid) {
    let (tg, pg, players) = build_grids(1.0, 120, 30, PlayerGrid::uniform(n_players).alphas).unwrap();
    let game = Game {
        model: ModelCoefficients::benchmark(),
        tg,
        players,
        graphon: Graphon::UniformAttachment,
        rule: QuadratureRule::SelfExcluding,
        laws: InitialLaw::benchmark(n_players),
    };
    (game, pg)
}

fn diagnostics(game: &Game, pg: &lqgmfg::model::PolicyGrid) -> Diagnostics {
    let (init, _) = default_initialisation(game, PolicyLayout::PiecewiseConstant(pg.clone()));
    compute_diagnostics(&game.model, &game.laws, &game.tg, pg, &game.graphon, &init.slope_path(&game.tg)).unwrap()
}

#[test]
fn diagnostics_are_consistent_and_reproducible() {
    let (game, pg) = benchmark_game(11);
    let d = diagnostics(&game, &pg);
    assert!(d.c1_k <= 1.0 / (2.0 * d.lambda_r_upper));
    assert!(d.m_theta_lower <= d.m_theta_upper);
    assert!(d.m_strong > 0.0);
    for (name, v) in d.entries() {
        assert!(v.is_finite(), "{name}");
    }
    let cf = closed_form_constants(&d.norms, d.lambda_r_lower, d.lambda_r_upper, d.m_theta_star);
    let pairs = [
        (cf.c0_k, d.c0_k),
        (cf.c1_k, d.c1_k),
        (cf.c2_k, d.c2_k),
        (cf.c3_k, d.c3_k),
        (cf.m1, d.m1),
        (cf.m2, d.m2),
        (cf.m_res, d.m_res),
        (cf.m_strong, d.m_strong),
        (cf.m_g, d.m_g),
        (cf.l_closed, d.l_closed),
    ];
    for (a, b) in pairs {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(d, diagnostics(&game, &pg));
}

#[test]
fn slope_iterates_stay_below_the_uniform_bound() {
    let (game, pg) = benchmark_game(11);
    let d = diagnostics(&game, &pg);
    let layout = PolicyLayout::PiecewiseConstant(pg);
    let mut k = vec![scalar(-1.0); 30];
    for _ in 0..300 {
        let path = layout.expand(&game.tg, &k);
        let gr = grad_k_exact(&game.model, &game.tg, &layout, &path, &scalar(0.01)).unwrap();
        k = gd_step_k(&k, &gr.preconditioned, 0.1, StepRule::ContinuousExact).unwrap();
        assert!(k.iter().all(|x| x[(0, 0)].abs() <= d.c0_k));
    }
}

#[test]
fn intercept_descent_contracts_below_the_smoothness_threshold() {
    let (game, pg) = benchmark_game(1);
    let (m, tg) = (&game.model, &game.tg);
    let layout = PolicyLayout::PiecewiseConstant(pg.clone());
    let k = StagePath::constant(120, scalar(-1.0));
    let h = intercept_hessian(m, tg, &pg, &k).unwrap();
    let l_hat = lqgmfg::linalg::max_eigenvalue(&h);
    let z = StagePath::from_fn(120, |i, s| scalar(0.3 + 0.2 * tg.stage_time(i, s)));
    let mu0 = scalar(0.5);
    let grad = |g: &[Mat]| grad_g_exact(m, tg, &layout, &k, &layout.expand(tg, g), &z, &mu0).unwrap().coords;
    let g0 = vec![scalar(1.0); 30];
    let g0_vec = Mat::from_iterator(30, 1, grad(&g0).iter().map(|x| x[(0, 0)]));
    let step = h.clone().lu().solve(&g0_vec).unwrap();
    let g_star: Vec<f64> = (0..30).map(|c| 1.0 - step[c]).collect();
    let dist = |g: &[Mat]| g.iter().zip(&g_star).map(|(a, b)| (a[(0, 0)] - b).powi(2)).sum::<f64>().sqrt();
    let residual = grad(&g_star.iter().map(|&x| scalar(x)).collect::<Vec<_>>());
    assert!(residual.iter().all(|r| r[(0, 0)].abs() < 1e-9));
    let eta = 1.9 / l_hat;
    let start = dist(&g0);
    let mut g = g0;
    let mut last = start;
    for _ in 0..100 {
        g = gd_step_g(&g, &grad(&g), eta, StepRule::ContinuousExact);
        let now = dist(&g);
        assert!(now <= last * (1.0 + 1e-12) + 1e-14, "{now} > {last}");
        last = now;
    }
    assert!(last < 1e-3 * start);
}

#[test]
fn outer_loop_contracts_within_the_m2_envelope() {
    let (game, pg) = benchmark_game(11);
    let d = diagnostics(&game, &pg);
    assert!(d.m2 < 1.0);
    let sol = solve_equilibrium(&game.model, &game.tg, &game.players, &game.graphon, game.rule, &game.laws, &PicardConfig::default()).unwrap();
    let (init, mu0) = default_initialisation(&game, PolicyLayout::StageResolved);
    let errors: Vec<f64> = (1..=4)
        .map(|n| {
            let mut cfg = SolverConfig::uniform(n, 60, 0.5, GradientMode::Exact);
            cfg.omega = vec![1e-10; n];
            run_algorithm1(&game, &init, &mu0, &cfg, None).unwrap().mu.sup_diff(&sol.mu_star)
        })
        .collect();
    for n in 1..errors.len() {
        assert!(errors[n] <= 2.0 * d.m2.powi(n as i32) * errors[0], "{errors:?}");
    }
}
