use super::*;
use crate::mixtures::{ConditionedPosterior, InverseMixture};
use crate::models::{
    ou_default_priors, simulate_population, uniform_grid, FixedPrior, IndividualRecord, OuModel,
    PriorSpec, Simulator,
};

fn toy(m: usize, n: usize) -> (OuModel, Vec<IndividualRecord>) {
    let sim = OuModel::new(uniform_grid(0.2, 0.2, n)).unwrap();
    let eta = PopulationParams::new(vec![-0.7, 2.3, -0.9], vec![4.0, 10.0, 4.0]).unwrap();
    let pop = simulate_population(&sim, &eta, &[-1.2], m, 99).unwrap();
    (sim, pop.records)
}

fn small_cfg(n_prior: usize, n_gibbs: usize, rounds: usize) -> RunConfig {
    RunConfig {
        n_prior,
        n_gibbs,
        rounds,
        k_init: 2,
        seed: 5,
        hmc: HmcConfig {
            adapt_iters: n_gibbs,
            ..HmcConfig::default()
        },
        em_max_iter: 50,
        ..RunConfig::default()
    }
}

fn proposals(
    inv: &InverseMixture,
    observed: &[IndividualRecord],
    layout: ThetaLayout,
) -> Vec<ConditionedPosterior> {
    let marg = inv.marginalize(&layout.c_indices()).unwrap();
    observed
        .iter()
        .map(|o| marg.condition(o.flat()).unwrap())
        .collect()
}

#[test]
fn round0_cardinality_and_determinism() {
    let (sim, _) = toy(10, 8);
    let cfg = small_cfg(100, 10, 2);
    let a = round0(&ou_default_priors(), &sim, &cfg).unwrap();
    assert_eq!(a.data.len(), 100);
    assert_eq!(a.data.theta_dim(), 4);
    assert_eq!(a.data.obs_dim(), 8);
    let b = round0(&ou_default_priors(), &sim, &cfg).unwrap();
    assert_eq!(a.data, b.data);
    assert_eq!(a.mixture, b.mixture);
}

#[test]
fn round1_draws_per_individual() {
    let (sim, obs) = toy(4, 8);
    let cfg = small_cfg(400, 10, 2);
    let pr = ou_default_priors();
    let r0 = round0(&pr, &sim, &cfg).unwrap();
    let r1 = round1(&r0.inverse, &obs, &pr, &sim, &cfg, 2).unwrap();
    assert_eq!(r1.data.len(), 400);
    assert_eq!(r1.rejections, vec![0; 4]);
    assert_eq!(r1.init.c_all.len(), 4);
    // the starting point is the last draw of each individual's block of 100
    for i in 0..4 {
        assert_eq!(r1.init.c_all[i], r1.data.theta(100 * i + 99)[..3].to_vec());
    }
    let single = round1(&r0.inverse, &obs[..1], &pr, &sim, &cfg, 2).unwrap();
    assert_eq!(single.data.len(), 400);
}

#[test]
fn bookkeeping_two_individuals_three_sweeps() {
    let (sim, obs) = toy(2, 8);
    let cfg = small_cfg(100, 3, 2);
    let pr = ou_default_priors();
    let r0 = round0(&pr, &sim, &cfg).unwrap();
    let r1 = round1(&r0.inverse, &obs, &pr, &sim, &cfg, 2).unwrap();
    let lik = KalmanLikelihood::new(&obs);
    let props = proposals(&r1.inverse, &obs, sim.layout());
    let ctx = GibbsContext {
        layout: sim.layout(),
        priors: &pr,
        likelihood: &lik,
        proposals: &props,
        simulator: Some(&sim),
        seed: 3,
        round: 2,
    };
    let mut state = r1.init.clone();
    let mut kernels = GibbsKernels::new(sim.layout(), &pr, cfg.hmc).unwrap();
    let out = gibbs_round_three_step(&ctx, &mut state, &mut kernels, 3).unwrap();
    let data = out.data.unwrap();
    assert_eq!(out.states.len(), 3);
    assert_eq!(data.len(), 6);
    for (j, st) in out.states.iter().enumerate() {
        for i in 0..2 {
            assert_eq!(data.theta(2 * j + i), st.theta(i).as_slice());
        }
    }
    assert!(gibbs_round_two_step(&ctx, &mut state, &mut kernels, 1).is_err());
}

#[test]
fn thread_count_does_not_change_chains() {
    let (sim, obs) = toy(6, 8);
    let cfg = small_cfg(120, 20, 2);
    let pr = ou_default_priors();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_semple(&obs, &pr, &sim, &cfg, None).unwrap().samples)
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn pool_growth_and_support() {
    let (sim, obs) = toy(5, 8);
    let cfg = RunConfig {
        refit_final: true,
        ..small_cfg(100, 20, 3)
    };
    let mut pr = ou_default_priors();
    pr.support = vec![Some([-2.5, 0.5])];
    let dir = tempfile::tempdir().unwrap();
    let out = run_semple(&obs, &pr, &sim, &cfg, Some(dir.path())).unwrap();
    assert_eq!(out.rounds.len(), 3);
    for rep in &out.rounds {
        assert_eq!(rep.pool_size, 100 + (rep.round - 1) * 20 * 5);
    }
    assert_eq!(out.mixtures.len(), 4);
    for r in 0..=3 {
        assert!(checkpoint::mixture_path(dir.path(), r).exists());
    }
    assert_eq!(out.samples.len(), 20);
    for st in &out.samples {
        assert!(st.is_finite());
        assert!(pr.fixed_logpdf(&st.shared()).is_finite());
        assert!(pr.logpdf(&st.eta, &st.theta(0)).is_finite());
    }
}

#[test]
fn resume_reproduces_samples() {
    let (sim, obs) = toy(4, 8);
    let cfg = small_cfg(80, 15, 3);
    let pr = ou_default_priors();
    let fresh = run_semple(&obs, &pr, &sim, &cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = run_semple(&obs, &pr, &sim, &cfg, Some(dir.path())).unwrap();
    assert_eq!(first.resumed_after, None);
    let again = run_semple(&obs, &pr, &sim, &cfg, Some(dir.path())).unwrap();
    assert_eq!(again.resumed_after, Some(2));
    assert_eq!(fresh.samples, first.samples);
    assert_eq!(first.samples, again.samples);
    assert_eq!(again.rounds.len(), 3);

    let other = RunConfig { seed: 6, ..cfg };
    assert_eq!(
        run_semple(&obs, &pr, &sim, &other, Some(dir.path()))
            .unwrap()
            .resumed_after,
        None
    );
}

#[test]
fn exact_reference_with_constant_data() {
    let times = uniform_grid(0.2, 0.2, 10);
    let obs: Vec<_> = (0..4)
        .map(|i| IndividualRecord::new(i.to_string(), times.clone(), 1, vec![1.0; 10]).unwrap())
        .collect();
    let mut pr = ou_default_priors();
    pr.fixed[0] = FixedPrior {
        mean: -3.0,
        sd: 0.1,
    };
    let cfg = ExactConfig {
        sweeps: 1500,
        burn_in: 500,
        seed: 1,
        thin: 1,
        hmc: HmcConfig::default(),
    };
    let out = run_exact_reference_ou(&obs, &pr, &cfg).unwrap();
    assert_eq!(out.samples.len(), 1000);
    assert!(out.samples.iter().all(ChainState::is_finite));
    assert!(out.step1_acceptance.iter().all(|a| *a > 0.05));
    assert!(out.samples.windows(2).any(|w| w[0].c_all != w[1].c_all));
}

#[test]
fn exact_reference_errors() {
    let (_, obs) = toy(3, 5);
    let pr: PriorSpec = ou_default_priors();
    let bad = ExactConfig {
        sweeps: 10,
        burn_in: 10,
        seed: 1,
        thin: 1,
        hmc: HmcConfig::default(),
    };
    assert!(run_exact_reference_ou(&obs, &pr, &bad).is_err());
    assert!(run_exact_reference_ou(&[], &pr, &ExactConfig { burn_in: 5, ..bad }).is_err());
}
