use condtune::genmodel::GeneratorDims;
use condtune::ppo::{apply_action, ppo_tune, render_ppo_trace, reward, Action, Budget, PpoConfig};
use condtune::numcore::RealArray;
use condtune::suite::toy_task;
use condtune::tuner::{LossBreakdown, Pipeline, TuningConfig, TuningProblem};

fn setup() -> (Pipeline, condtune::media::EditTask) {
    let p = Pipeline::new(9, GeneratorDims::tiny(), 12).unwrap();
    let t = toy_task(p.dims(), 9, 0).unwrap();
    (p, t)
}

#[test]
fn reward_is_negative_total() {
    let (p, t) = setup();
    let problem = TuningProblem::new(&p, &t, &TuningConfig::default()).unwrap();
    let zero = Action {
        alpha: RealArray::zeros(problem.initial.alpha.values().shape()),
        residual: RealArray::zeros(problem.initial.residual.shape()),
    };
    let s0 = apply_action(&problem, &zero).unwrap();
    let e0 = problem.evaluate(&s0, false).unwrap();
    assert_eq!(reward(&problem, &s0).unwrap(), -e0.loss.l_vlm);

    let step = Action {
        alpha: RealArray::full(zero.alpha.shape(), 0.2),
        residual: RealArray::full(zero.residual.shape(), -0.1),
    };
    let s1 = apply_action(&problem, &step).unwrap();
    assert_eq!(reward(&problem, &s1).unwrap(), -problem.evaluate(&s1, false).unwrap().loss.total);
}

#[test]
fn reward_arithmetic() {
    let l = LossBreakdown {
        iter: 0,
        l_vlm: 0.693,
        l_latent: 0.001,
        l_lpips: 0.1,
        l_temp: 0.0,
        total: 0.693 + 0.001 + 0.1,
        p_yes: 0.5,
    };
    assert!((-l.total - -0.794).abs() < 1e-12);
}

#[test]
fn budget_accounting_is_exact() {
    let (p, t) = setup();
    let cfg = TuningConfig::default();
    let ppo = PpoConfig::default();
    let one = ppo_tune(&p, &t, Budget::CriticCalls(1), &cfg, &ppo).unwrap();
    assert_eq!((one.critic_calls, one.trace.len()), (1, 1));
    for n in [3, 4, 9] {
        let r = ppo_tune(&p, &t, Budget::CriticCalls(n), &cfg, &ppo).unwrap();
        assert_eq!(r.critic_calls, n);
    }
    assert!(ppo_tune(&p, &t, Budget::CriticCalls(0), &cfg, &ppo).is_err());
    let timed = ppo_tune(&p, &t, Budget::WallSeconds(0.05), &cfg, &ppo).unwrap();
    assert!(timed.critic_calls >= 1);
}

#[test]
fn ppo_is_deterministic_and_traced() {
    let (p, t) = setup();
    let cfg = TuningConfig::default();
    let a = ppo_tune(&p, &t, Budget::CriticCalls(6), &cfg, &PpoConfig::default()).unwrap();
    let b = ppo_tune(&p, &t, Budget::CriticCalls(6), &cfg, &PpoConfig::default()).unwrap();
    assert_eq!(a, b);
    let text = render_ppo_trace(&a.trace);
    assert!(text.lines().next().unwrap().ends_with(",reward"));
    assert_eq!(text.lines().count(), 7);
    let best = a.best_loss.unwrap().total;
    assert!(a.trace.iter().all(|r| best <= r.loss.total));
}
