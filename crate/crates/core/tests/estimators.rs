use dsac::critic::FeatureMap;
use dsac::graph::{build_topology, metropolis_weights, TopologyKind};
use dsac::mdp::{empirical_local_occupancy, rollout};
use dsac::oracle::{exact_policy_gradient, exact_shadow_q, truncated_occupancy};
use dsac::rng::stream;
use dsac::trainer::reference::{single_agent_actor_critic, ReferenceSettings};
use dsac::trainer::{batch_actor_direction, Dsac, Schedule, ScheduleContext, ScheduleSpec};
use dsac::{FactoredMdp, JointPolicy, MixingMatrix, SoftmaxPolicyParams, UtilitySpec};

fn two_state() -> (FactoredMdp, JointPolicy) {
    let rows = vec![
        vec![(0, 0.7), (1, 0.3)],
        vec![(0, 0.2), (1, 0.8)],
        vec![(0, 0.4), (1, 0.6)],
        vec![(0, 0.9), (1, 0.1)],
    ];
    let mdp = FactoredMdp::from_rows(vec![2], vec![2], rows, vec![0.6, 0.4], 0.8).unwrap();
    let params = SoftmaxPolicyParams::from_logits(0, 2, 2, vec![0.4, -0.1, -0.3, 0.2]).unwrap();
    (mdp, JointPolicy::new(vec![params]).unwrap())
}

fn single_agent_dsac(mdp: &FactoredMdp, utility: UtilitySpec, features: FeatureMap, spec: ScheduleSpec) -> Dsac {
    let ctx = ScheduleContext {
        n_agents: 1,
        discount: mdp.discount(),
        feature_bound: features.bound(),
        mu_w: None,
    };
    let schedule = Schedule::new(spec, ctx).unwrap();
    let single = metropolis_weights(&build_topology(TopologyKind::Complete, 1, &mut stream(0, &[])).unwrap()).unwrap();
    Dsac::new(mdp.clone(), vec![utility], features, single, 1, schedule).unwrap()
}

#[test]
fn empirical_occupancy_is_unbiased_for_the_truncated_measure() {
    let (mdp, policy) = two_state();
    let horizon = 6;
    let exact = truncated_occupancy(&mdp, &policy, horizon).unwrap();
    let n = 10_000;
    let mut sum = vec![0.0; 4];
    let mut sum_sq = vec![0.0; 4];
    for seed in 0..n {
        let traj = rollout(&mdp, &policy, horizon, &mut stream(seed, &[7])).unwrap();
        let lambda = empirical_local_occupancy(&mdp, &[traj], 0, mdp.discount()).unwrap();
        for (j, m) in lambda.mass().iter().enumerate() {
            sum[j] += m;
            sum_sq[j] += m * m;
        }
    }
    for j in 0..4 {
        let mean = sum[j] / n as f64;
        let var = sum_sq[j] / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - exact.mass()[j]).abs() <= 4.0 * se,
            "entry {j}: mean {mean}, exact {}, se {se}",
            exact.mass()[j]
        );
    }
}

#[test]
fn actor_direction_error_shrinks_with_the_batch() {
    let (mdp, policy) = two_state();
    let reward = vec![1.0, -0.5, 0.25, 2.0];
    let utility = UtilitySpec::Linear { reward: reward.clone() };
    let exact = exact_policy_gradient(&mdp, &policy, &[utility]).unwrap();
    let critic = exact_shadow_q(&mdp, &policy, &reward).unwrap();
    let features = FeatureMap::one_hot(&mdp);
    let horizon = 60;
    let mse = |batch: u64| -> f64 {
        (0..50u64)
            .map(|seed| {
                let trajectories: Vec<_> = (0..batch)
                    .map(|b| rollout(&mdp, &policy, horizon, &mut stream(seed, &[8, batch, b])).unwrap())
                    .collect();
                let dir = batch_actor_direction(&mdp, &trajectories, policy.agent(0), &critic, &features, mdp.discount()).unwrap();
                dir.iter().zip(&exact).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
            })
            .sum::<f64>()
            / 50.0
    };
    let ratio = mse(4096) / mse(256);
    assert!(ratio <= 0.25, "MSE ratio {ratio}");
    assert!(ratio >= 0.25 / 8.0, "MSE ratio {ratio} falls faster than 1/B");
}

#[test]
fn linear_utilities_reproduce_plain_actor_critic() {
    let mut rng = stream(21, &[]);
    let mdp = FactoredMdp::random(vec![4], vec![3], 0.85, &mut rng).unwrap();
    let reward: Vec<f64> = (0..12).map(|j| ((j * 7) % 5) as f64 / 4.0 - 0.5).collect();
    let settings = ReferenceSettings {
        iterations: 30,
        batch: 8,
        horizon: 15,
        eta_theta: 0.3,
        eta_w: 0.1,
    };
    let spec = ScheduleSpec::Manual {
        iterations: settings.iterations,
        batch: settings.batch,
        horizon: settings.horizon,
        eta_theta: settings.eta_theta,
        eta_w: settings.eta_w,
    };
    for features in [FeatureMap::one_hot(&mdp), FeatureMap::random_projection(&mdp, 5, &mut rng).unwrap()] {
        let dsac = single_agent_dsac(&mdp, UtilitySpec::Linear { reward: reward.clone() }, features.clone(), spec.clone());
        let mut iterates = Vec::new();
        dsac.run(dsac.initial_state(3), &mut dsac::trainer::NoHooks, |s, _| {
            iterates.push((s.policy.flatten(), s.critic(0)));
            Ok(())
        })
        .unwrap();
        let reference = single_agent_actor_critic(&mdp, &reward, &features, settings, 3).unwrap();
        assert_eq!(iterates.len(), reference.len());
        for (k, ((logits, critic), r)) in iterates.iter().zip(&reference).enumerate() {
            for (x, y) in logits.iter().zip(&r.logits).chain(critic.iter().zip(&r.critic)) {
                assert!((x - y).abs() <= 1e-10, "iteration {k}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn post_mix_consensus_obeys_the_contraction_every_iteration() {
    let mut rng = stream(4, &[]);
    let mdp = FactoredMdp::random(vec![2; 5], vec![2; 5], 0.8, &mut rng).unwrap();
    let ring: MixingMatrix = metropolis_weights(&build_topology(TopologyKind::Ring, 5, &mut rng).unwrap()).unwrap();
    let features = FeatureMap::factored(&mdp);
    let ctx = ScheduleContext {
        n_agents: 5,
        discount: 0.8,
        feature_bound: features.bound(),
        mu_w: None,
    };
    for rounds in [1, 2, 3] {
        let spec = ScheduleSpec::Manual {
            iterations: 25,
            batch: 6,
            horizon: 10,
            eta_theta: 0.3,
            eta_w: 0.2,
        };
        let utilities = vec![UtilitySpec::state_entropy(); 5];
        let dsac = Dsac::new(mdp.clone(), utilities, features.clone(), ring.clone(), rounds, Schedule::new(spec, ctx).unwrap()).unwrap();
        let (_, metrics) = dsac.train(9).unwrap();
        let factor = ring.rho().powi(2 * rounds as i32);
        for m in &metrics {
            assert!(m.pre_mix_consensus_error > 0.0);
            assert!(
                m.consensus_error <= factor * m.pre_mix_consensus_error + 1e-12,
                "k={} m={rounds}: {} > {factor} * {}",
                m.k,
                m.consensus_error,
                m.pre_mix_consensus_error
            );
        }
    }
}
