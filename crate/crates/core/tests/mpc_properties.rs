use proptest::prelude::*;
use sps_ems::mpc::{mpc_step, HorizonSolution, MpcInputs, Scenario, SolveEvent};
use sps_ems::{MpcConfig, MpcController, SystemParams};

fn soc_per_watt(params: &SystemParams, ts: f64) -> f64 {
    ts / (3600.0 * params.pcm.capacity_ahr * params.v_nominal)
}

/// Checks the invariants every optimal horizon solution must meet.
fn check_solution(
    sol: &HorizonSolution,
    inp: &MpcInputs,
    params: &SystemParams,
    ts: f64,
) -> Result<(), String> {
    let (g, b) = (&params.pgm, &params.pcm);
    let k_soc = soc_per_watt(params, ts);
    let mut prev = (inp.prev_pg, inp.prev_pb, inp.soc_now);
    for k in 0..sol.p_g.len() {
        let (pg, pb, q) = (sol.p_g[k], sol.p_b[k], sol.q[k]);
        let fail = |what: &str| Err(format!("step {k}: {what} (pg {pg}, pb {pb}, q {q})"));
        if (pg + pb - inp.p_load).abs() > 1e-3 {
            return fail("power balance");
        }
        if (pg - prev.0).abs() > g.ramp_limit + 1e-3 {
            return fail("generator ramp");
        }
        if (pb - prev.1).abs() > b.ramp_limit + 1e-3 {
            return fail("battery ramp");
        }
        if pg < g.p_min - 1e-3 || pg > g.p_max + 1e-3 {
            return fail("generator box");
        }
        if pb < b.p_min - 1e-3 || pb > b.p_max + 1e-3 {
            return fail("battery box");
        }
        if q < b.soc_min - 1e-9 || q > b.soc_max + 1e-9 {
            return fail("SoC box");
        }
        if (q - (prev.2 - k_soc * pb)).abs() > 1e-9 {
            return fail("SoC recursion");
        }
        prev = (pg, pb, q);
    }
    Ok(())
}

prop_compose! {
    fn inputs()(
        p_load in 5e6f64..35e6,
        prev_pg in 0.2e6f64..28e6,
        prev_pb in -10e6f64..10e6,
        soc_now in 0.7f64..=0.8,
    ) -> MpcInputs {
        MpcInputs { p_load, prev_pg, prev_pb, soc_now }
    }
}

fn weights() -> impl Strategy<Value = (f64, f64, f64)> {
    (
        0.1f64..2.0,
        prop_oneof![Just(0.0), 0.0f64..2000.0],
        prop_oneof![Just(0.0), 0.0f64..2000.0],
    )
}

fn config((beta, gamma_p, gamma_q): (f64, f64, f64)) -> MpcConfig {
    MpcConfig {
        beta,
        gamma_p,
        gamma_q,
        ..MpcConfig::default()
    }
}

fn solve(cfg: &MpcConfig, inp: &MpcInputs) -> sps_ems::mpc::MpcStep {
    mpc_step(
        cfg,
        &SystemParams::default(),
        inp.p_load,
        inp.prev_pg,
        inp.prev_pb,
        inp.soc_now,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn optimal_solutions_are_feasible(inp in inputs(), w in weights()) {
        let cfg = config(w);
        let step = solve(&cfg, &inp);
        if step.event == SolveEvent::Optimal {
            let r = check_solution(&step.solution, &inp, &SystemParams::default(), cfg.ts);
            prop_assert!(r.is_ok(), "{}", r.unwrap_err());
        } else {
            // only a relaxed solve may miss the balance, and it says so
            prop_assert!(step.solution.relaxed);
        }
    }

    #[test]
    fn uniform_weight_scaling_keeps_the_commands(
        inp in inputs(),
        w in weights(),
        alpha in 0.01f64..100.0,
    ) {
        let cfg = config(w);
        let scaled = config((w.0 * alpha, w.1 * alpha, w.2 * alpha));
        let a = solve(&cfg, &inp);
        let b = solve(&scaled, &inp);
        prop_assume!(a.event == SolveEvent::Optimal && b.event == SolveEvent::Optimal);
        prop_assert!((a.cmd_pg - b.cmd_pg).abs() <= 1e-4, "{} vs {}", a.cmd_pg, b.cmd_pg);
        prop_assert!((a.cmd_pb - b.cmd_pb).abs() <= 1e-4, "{} vs {}", a.cmd_pb, b.cmd_pb);
    }

    #[test]
    fn battery_penalty_never_increases_battery_energy(
        inp in inputs(),
        w in weights(),
        extra in 0.0f64..2000.0,
    ) {
        let lo = solve(&config(w), &inp);
        let hi = solve(&config((w.0, w.1 + extra, w.2)), &inp);
        prop_assume!(lo.event == SolveEvent::Optimal && hi.event == SolveEvent::Optimal);
        let norm = |s: &HorizonSolution| s.p_b.iter().map(|p| (p / 1e6).powi(2)).sum::<f64>();
        let (a, b) = (norm(&lo.solution), norm(&hi.solution));
        prop_assert!(b <= a * (1.0 + 1e-9) + 1e-9, "|p_b|² rose from {} to {}", a, b);
    }
}

/// Re-solving from the predicted state reproduces the tail of the plan.
/// Without the SoC term the stage costs decouple apart from the ramps, so
/// every prefix of the optimal plan is itself optimal and horizon
/// truncation cannot change the continuation, unless the shifted horizon
/// newly reaches an SoC limit. The check is therefore made for the
/// scenarios without the SoC weight, on solve pairs clear of those limits.
#[test]
fn receding_horizon_is_consistent() {
    let params = SystemParams::default();
    let mut checked = 0;
    for scenario in [Scenario::NoHeuristic, Scenario::PowerMinimization] {
        for p_load in [12e6, 16e6, 21e6, 26e6] {
            for prev_pg in [8e6, 15e6, 24e6] {
                let cfg = MpcConfig::default().with_preset(scenario.preset());
                let mut ctl = MpcController::new(cfg.clone(), params).unwrap();
                let mut inp = MpcInputs {
                    p_load,
                    prev_pg,
                    prev_pb: p_load - prev_pg,
                    soc_now: 0.75,
                };
                let mut plan = ctl.step(&inp).unwrap();
                if plan.event != SolveEvent::Optimal {
                    continue;
                }
                for _ in 0..4 {
                    let s = &plan.solution;
                    if s.active.iter().any(|a| a.soc_box) {
                        break;
                    }
                    inp = MpcInputs {
                        prev_pg: s.p_g[0],
                        prev_pb: s.p_b[0],
                        soc_now: s.q[0],
                        ..inp
                    };
                    let next = ctl.step(&inp).unwrap();
                    assert_eq!(next.event, SolveEvent::Optimal);
                    // the longer reach of the new horizon met the SoC limit
                    if next.solution.active.iter().any(|a| a.soc_box) {
                        break;
                    }
                    assert!(
                        (next.cmd_pg - s.p_g[1]).abs() <= 1e-3,
                        "{scenario} load {p_load}: {} vs planned {}",
                        next.cmd_pg,
                        s.p_g[1]
                    );
                    assert!((next.cmd_pb - s.p_b[1]).abs() <= 1e-3);
                    checked += 1;
                    plan = next;
                }
            }
        }
    }
    assert!(checked >= 40, "only {checked} re-solves checked");
}

#[test]
fn anchored_equilibrium_is_stationary() {
    // load at the generator reference and SoC at its anchor: nothing to do
    let cfg = MpcConfig::default().with_preset(Scenario::SocMinimization.preset());
    let mut ctl = MpcController::new(cfg, SystemParams::default()).unwrap();
    let inp = MpcInputs {
        p_load: 15e6,
        prev_pg: 15e6,
        prev_pb: 0.0,
        soc_now: 0.75,
    };
    for _ in 0..3 {
        let s = ctl.step(&inp).unwrap();
        assert!((s.cmd_pg - 15e6).abs() <= 1e-3);
        assert!(s.cmd_pb.abs() <= 1e-3);
    }
}

#[test]
fn tracking_only_cost_splits_at_the_reference() {
    let cfg = MpcConfig::default().with_preset(Scenario::NoHeuristic.preset());
    let inp = MpcInputs {
        p_load: 18e6,
        prev_pg: 16e6,
        prev_pb: 2e6,
        soc_now: 0.75,
    };
    let s = solve(&cfg, &inp).solution;
    for k in 0..5 {
        assert!((s.p_g[k] - 15e6).abs() <= 1e-3, "{:?}", s.p_g);
        assert!((s.p_b[k] - 3e6).abs() <= 1e-3, "{:?}", s.p_b);
    }
}

#[test]
fn single_step_closed_form() {
    let cfg = MpcConfig {
        horizon: 1,
        ..MpcConfig::default().with_preset(Scenario::PowerMinimization.preset())
    };
    let step = mpc_step(&cfg, &SystemParams::default(), 20e6, 20e6, 0.0, 0.75).unwrap();
    let expected = 5e6 / 1001.0;
    assert!((step.cmd_pb - expected).abs() <= 1e-2, "{}", step.cmd_pb);
    assert!((step.cmd_pg - (20e6 - expected)).abs() <= 1e-2);
}
