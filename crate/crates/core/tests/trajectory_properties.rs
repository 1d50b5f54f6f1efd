use minhold::qubo::{decode, encode, Bits, Encoding, Holdings, QuboProblem};
use minhold::sampler::{pool_top_by, SamplePool, Sampler, SamplerConfig, SimulatedAnnealer};
use minhold::trajectory::{
    build_trajectory, holdings_sharpe, random_baseline, step_params, verify_trajectory, HoldingRule, PostSelection, Rho,
};
use minhold::Result;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

fn snapshots(seed: u64, n_steps: usize, n_assets: usize) -> Vec<minhold::market_data::MarketSnapshot> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_steps).map(|t| common::random_snapshot(&mut rng, t, n_assets)).collect()
}

fn small_annealer(seed: u64) -> SimulatedAnnealer {
    SimulatedAnnealer::new(SamplerConfig {
        n_reads: 24,
        sweeps: 60,
        seed,
        ..SamplerConfig::default()
    })
    .unwrap()
}

/// Emits `first` at stream 0 and afterwards only states that sell part of it.
struct SellOnly {
    enc: Encoding,
    first: Holdings,
}

impl Sampler for SellOnly {
    fn sample(&self, problem: &QuboProblem, stream: u64) -> Result<SamplePool> {
        let states: Vec<Bits> = if stream == 0 {
            vec![encode(&self.first, &self.enc)?]
        } else {
            common::all_bit_vectors(self.enc.n_bits())
                .into_iter()
                .map(|x| Bits::new(x).unwrap())
                .filter(|b| {
                    let h = decode(b, &self.enc).unwrap();
                    h.units().iter().zip(self.first.units()).any(|(a, b)| a < b)
                })
                .collect()
        };
        Ok(SamplePool::from_states(problem, states))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn built_and_baseline_trajectories_are_feasible(seed in any::<u64>(), hold in 1usize..8, n_assets in 1usize..4, steps in 1usize..15) {
        let snaps = snapshots(seed, steps, n_assets);
        let enc = Encoding::new(n_assets, 2, 5).unwrap();
        let rule = HoldingRule::new(hold).unwrap();
        let params = step_params(&snaps, 1.0, Rho::Auto, 5).unwrap();
        let traj = build_trajectory(&snaps, &enc, &params, &small_annealer(seed), &rule, PostSelection::default()).unwrap();
        prop_assert!(verify_trajectory(&traj, &rule));
        for (t, _) in random_baseline(&snaps, &enc, &rule, 8, seed, 252).unwrap() {
            prop_assert!(verify_trajectory(&t, &rule));
        }
    }

    #[test]
    fn fallback_keeps_the_opening_portfolio(seed in any::<u64>(), steps in 2usize..12, first in prop::collection::vec(0u32..4, 3)) {
        prop_assume!(first.iter().any(|&u| u > 0));
        let snaps = snapshots(seed, steps, 3);
        let enc = Encoding::new(3, 2, 5).unwrap();
        let first = Holdings::new(first, 5).unwrap();
        let sampler = SellOnly { enc, first: first.clone() };
        let rule = HoldingRule::new(steps + 1).unwrap();
        let params = step_params(&snaps, 1.0, Rho::Auto, 5).unwrap();
        let traj = build_trajectory(&snaps, &enc, &params, &sampler, &rule, PostSelection::default()).unwrap();
        for step in traj.steps() {
            prop_assert_eq!(&step.holdings, &first);
        }
        prop_assert_eq!(traj.fallback_count(), steps - 1);
    }

    #[test]
    fn unit_hold_takes_the_top_candidate(seed in any::<u64>(), steps in 1usize..10) {
        let snaps = snapshots(seed, steps, 3);
        let enc = Encoding::new(3, 2, 5).unwrap();
        let rule = HoldingRule::new(1).unwrap();
        let sampler = small_annealer(seed);
        let params = step_params(&snaps, 1.0, Rho::Auto, 5).unwrap();
        let traj = build_trajectory(&snaps, &enc, &params, &sampler, &rule, PostSelection::default()).unwrap();
        for (t, step) in traj.steps().iter().enumerate() {
            let qubo = minhold::qubo::build_step_qubo(&params[t], &enc).unwrap();
            let pool = sampler.sample(&qubo, t as u64).unwrap();
            let top = pool_top_by(&pool, &enc, 256, |h| holdings_sharpe(h, &snaps[t])).unwrap();
            prop_assert_eq!(&step.holdings, &top[0].holdings);
        }
        prop_assert_eq!(traj.fallback_count(), 0);
    }

    #[test]
    fn sharpe_order_ignores_return_scale(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut snap = snapshots(seed, 1, 3).remove(0);
        let enc = Encoding::new(3, 2, 5).unwrap();
        let all: Vec<Holdings> = common::all_bit_vectors(6)
            .into_iter()
            .map(|x| decode(&Bits::new(x).unwrap(), &enc).unwrap())
            .collect();
        let order = |s: &minhold::market_data::MarketSnapshot| {
            let mut idx: Vec<usize> = (0..all.len()).collect();
            idx.sort_by(|&a, &b| holdings_sharpe(&all[b], s).cmp(&holdings_sharpe(&all[a], s)).then(a.cmp(&b)));
            idx
        };
        let before = order(&snap);
        for m in snap.mu.iter_mut() {
            *m *= c;
        }
        prop_assert_eq!(order(&snap), before);
    }
}
