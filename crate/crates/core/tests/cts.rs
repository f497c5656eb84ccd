mod common;

use common::{dense_expm, dense_forward_matrices, fd_gradient, matmul, max_rel_err};
use icechron::cts::{
    cts_loglik_gradient, forward_loglik_inhomogeneous, gap_posterior, CtsParams, GapKernel,
    RateVector, BAND_TOL,
};
use icechron::hmm::{
    forward_loglik, Bidiagonal, EmissionMatrix, ObservationParams, StateSpace, StayProbabilities,
};
use icechron::math::rng_stream;
use icechron::simulate::{regular_depths, simulate_hmm, ChainSpec};
use icechron::DepthSeries;
use rand::Rng;

fn random_rates<R: Rng>(rng: &mut R, n_s: usize) -> RateVector {
    RateVector::per_phase((0..n_s).map(|_| rng.random_range(0.2..5.0)).collect()).unwrap()
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn matches_dense_exponential() {
    let mut rng = rng_stream(11, 0);
    for case in 0..30 {
        let n_s = rng.random_range(1..=5);
        let m = rng.random_range(1..=60 / n_s);
        let space = StateSpace::new(n_s, m).unwrap();
        let rates = random_rates(&mut rng, n_s);
        let span = rng.random_range(0.01..50.0);
        let gap = span / rates.max();
        let k = GapKernel::new(&rates, &space, gap, BAND_TOL).unwrap();
        let q: Vec<Vec<f64>> = rates
            .generator(&space)
            .into_iter()
            .map(|r| r.into_iter().map(|v| v * gap).collect())
            .collect();
        let dense = dense_expm(&q);
        let dev = max_abs_diff(&k.to_dense(), &dense);
        assert!(dev <= 1e-8, "case {case}: deviation {dev}");
    }
}

#[test]
fn tiny_gap_is_identity() {
    let space = StateSpace::new(3, 10).unwrap();
    let rates = RateVector::per_phase(vec![0.5, 2.0, 8.0]).unwrap();
    let gap = 1e-10 * (1.0 / 8.0);
    let k = GapKernel::new(&rates, &space, gap, BAND_TOL).unwrap();
    let dense = k.to_dense();
    let eye = common::identity(space.total_states());
    let inf_norm = dense
        .iter()
        .zip(&eye)
        .map(|(r, e)| r.iter().zip(e).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    assert!(inf_norm <= 1e-8);
}

#[test]
fn semigroup_property() {
    let mut rng = rng_stream(12, 0);
    for _ in 0..10 {
        let n_s = rng.random_range(1..=4);
        let space = StateSpace::new(n_s, 40 / n_s).unwrap();
        let rates = random_rates(&mut rng, n_s);
        let d1 = rng.random_range(0.05..4.0) / rates.max();
        let d2 = rng.random_range(0.05..30.0) / rates.max();
        let a = GapKernel::new(&rates, &space, d1, BAND_TOL)
            .unwrap()
            .to_dense();
        let b = GapKernel::new(&rates, &space, d2, BAND_TOL)
            .unwrap()
            .to_dense();
        let ab = GapKernel::new(&rates, &space, d1 + d2, BAND_TOL)
            .unwrap()
            .to_dense();
        assert!(max_abs_diff(&matmul(&a, &b), &ab) <= 1e-8);
    }
}

fn toy_emissions(space: &StateSpace, n: usize, seed: u64) -> (DepthSeries, EmissionMatrix) {
    let mut rng = rng_stream(seed, 0);
    let mut depth = 0.0;
    let mut depths = Vec::new();
    let mut proxy = Vec::new();
    for _ in 0..n {
        depth += rng.random_range(0.05..0.6);
        depths.push(depth);
        proxy.push(rng.random_range(-1.0..1.0));
    }
    let data = DepthSeries::new(depths, proxy).unwrap();
    let obs = ObservationParams::new(0.8, 0.1, 0.5).unwrap();
    let em = EmissionMatrix::build(&data, space, &obs);
    (data, em)
}

#[test]
fn inhomogeneous_forward_matches_dense_oracle() {
    let space = StateSpace::new(1, 5).unwrap();
    let rates = RateVector::per_phase(vec![1.3]).unwrap();
    for seed in 0..5 {
        let (data, em) = toy_emissions(&space, 6, seed);
        let init: Vec<f64> = vec![
            0.0,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ];
        let sparse =
            forward_loglik_inhomogeneous(&em, &rates, &space, data.depths(), &init).unwrap();
        let mut mats = vec![Vec::new()];
        for i in 1..data.len() {
            let gap = data.depths()[i] - data.depths()[i - 1];
            let q: Vec<Vec<f64>> = rates
                .generator(&space)
                .into_iter()
                .map(|r| r.into_iter().map(|v| v * gap).collect())
                .collect();
            mats.push(dense_expm(&q));
        }
        let dense = dense_forward_matrices(&em, &mats, &init);
        assert!((sparse - dense).abs() <= 1e-9, "{sparse} vs {dense}");
    }
}

#[test]
fn inhomogeneous_forward_with_phases_matches_dense_oracle() {
    let space = StateSpace::new(2, 3).unwrap();
    let rates = RateVector::per_phase(vec![0.7, 2.5]).unwrap();
    let (data, em) = toy_emissions(&space, 6, 9);
    let init = space.default_log_init();
    let sparse = forward_loglik_inhomogeneous(&em, &rates, &space, data.depths(), &init).unwrap();
    let mut mats = vec![Vec::new()];
    for i in 1..data.len() {
        let gap = data.depths()[i] - data.depths()[i - 1];
        let q: Vec<Vec<f64>> = rates
            .generator(&space)
            .into_iter()
            .map(|r| r.into_iter().map(|v| v * gap).collect())
            .collect();
        mats.push(dense_expm(&q));
    }
    let dense = dense_forward_matrices(&em, &mats, &init);
    assert!((sparse - dense).abs() <= 1e-9);
}

#[test]
fn single_observation_matches_discrete() {
    let space = StateSpace::new(3, 4).unwrap();
    let data = DepthSeries::new(vec![0.3], vec![0.4]).unwrap();
    let obs = ObservationParams::new(1.0, 0.0, 0.3).unwrap();
    let em = EmissionMatrix::build(&data, &space, &obs);
    let init = space.default_log_init();
    let rates = RateVector::constant(3, 2.0).unwrap();
    let trans = Bidiagonal::tiled(&space, &StayProbabilities::uniform(3, 0.5).unwrap()).unwrap();
    let a = forward_loglik_inhomogeneous(&em, &rates, &space, data.depths(), &init).unwrap();
    let b = forward_loglik(&em, &trans, &init).unwrap();
    assert_eq!(a, b);
}

#[test]
fn small_gap_limit_matches_discrete_chain() {
    let n_s = 3;
    let space = StateSpace::new(n_s, 6).unwrap();
    let rates = RateVector::per_phase(vec![1.0, 2.0, 0.5]).unwrap();
    let spacing = 1e-4;
    let n = 40;
    let mut rng = rng_stream(4, 0);
    let proxy: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let data = DepthSeries::regular(spacing, proxy).unwrap();
    let obs = ObservationParams::new(1.0, 0.0, 0.4).unwrap();
    let em = EmissionMatrix::build(&data, &space, &obs);
    let init = space.default_log_init();
    let cts = forward_loglik_inhomogeneous(&em, &rates, &space, data.depths(), &init).unwrap();
    let p: Vec<f64> = rates
        .as_slice()
        .iter()
        .map(|q| (-q * spacing).exp())
        .collect();
    let trans = Bidiagonal::tiled(&space, &StayProbabilities::new(p).unwrap()).unwrap();
    let disc = forward_loglik(&em, &trans, &init).unwrap();
    assert!((cts - disc).abs() <= 1e-6, "{cts} vs {disc}");
}

#[test]
fn rate_depth_scale_invariance() {
    let space = StateSpace::new(2, 8).unwrap();
    let rates = RateVector::per_phase(vec![1.5, 0.6]).unwrap();
    let (data, em) = toy_emissions(&space, 12, 2);
    let init = space.default_log_init();
    let base = forward_loglik_inhomogeneous(&em, &rates, &space, data.depths(), &init).unwrap();
    for c in [0.25, 3.0] {
        let scaled_depths: Vec<f64> = data.depths().iter().map(|d| d / c).collect();
        let v = forward_loglik_inhomogeneous(
            &em,
            &rates.scaled(c).unwrap(),
            &space,
            &scaled_depths,
            &init,
        )
        .unwrap();
        assert!(
            (v - base).abs() < 1e-10 * base.abs().max(1.0),
            "{v} vs {base}"
        );
    }
}

#[test]
fn log_rate_gradient_matches_finite_differences() {
    for (n_s, constant) in [(3, false), (2, true), (1, false)] {
        let space = StateSpace::new(n_s, 30 / n_s).unwrap();
        let (data, _) = toy_emissions(&space, 25, 7 + n_s as u64);
        let init = space.default_log_init();
        let q0: Vec<f64> = (0..n_s).map(|j| 1.0 + 0.7 * j as f64).collect();
        let obs = ObservationParams::new(0.9, -0.1, 0.45).unwrap();
        let make = |lq: &[f64]| CtsParams {
            obs,
            rates: if constant {
                RateVector::constant(n_s, lq[0].exp()).unwrap()
            } else {
                RateVector::per_phase(lq.iter().map(|v| v.exp()).collect()).unwrap()
            },
        };
        let lq0: Vec<f64> = if constant {
            vec![q0[0].ln()]
        } else {
            q0.iter().map(|v| v.ln()).collect()
        };
        let (_, g) = cts_loglik_gradient(&data, &space, &make(&lq0), &init).unwrap();
        let analytic: Vec<f64> = if constant {
            vec![g.log_q.iter().sum()]
        } else {
            g.log_q.clone()
        };
        let f = |lq: &[f64]| {
            cts_loglik_gradient(&data, &space, &make(lq), &init)
                .unwrap()
                .0
        };
        let fd = fd_gradient(f, &lq0, 1e-5);
        let err = max_rel_err(&analytic, &fd);
        assert!(err <= 1e-4, "n_s={n_s}: {analytic:?} vs {fd:?}");

        // Observation parameters too.
        let fo = |x: &[f64]| {
            let p = CtsParams {
                obs: ObservationParams::new(x[0], x[1], x[2]).unwrap(),
                rates: make(&lq0).rates,
            };
            cts_loglik_gradient(&data, &space, &p, &init).unwrap().0
        };
        let fd = fd_gradient(fo, &[0.9, -0.1, 0.45], 1e-6);
        assert!(max_rel_err(&[g.a, g.b, g.sigma], &fd) <= 1e-4);
    }
}

#[test]
fn zero_width_gap_matches_contiguous_run() {
    let n_s = 4;
    let space = StateSpace::new(n_s, 12).unwrap();
    let rates = RateVector::constant(n_s, 4.0).unwrap();
    let obs = ObservationParams::new(1.0, 0.0, 0.3).unwrap();
    let sim = simulate_hmm(
        &space,
        &ChainSpec::Continuous(rates.clone()),
        &obs,
        &regular_depths(60, 0.05),
        3,
    )
    .unwrap();
    let params = CtsParams { obs, rates };
    let init = space.default_log_init();
    let (chron, gaps) = gap_posterior(&sim.data, &space, &params, &init, &[20], 0, 1).unwrap();
    // A regular step "gap" is just the next transition.
    let total: f64 = gaps[0].elapsed_years.iter().map(|(_, p)| p).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let (chron2, _) = gap_posterior(&sim.data, &space, &params, &init, &[], 0, 1).unwrap();
    assert_eq!(chron.gamma, chron2.gamma);
}

#[test]
fn gap_of_whole_layers_has_mode_at_that_count() {
    let n_s = 4;
    let space = StateSpace::new(n_s, 20).unwrap();
    // Sharp rates: many tiny holding depths make the annual depth nearly fixed.
    let rates = RateVector::constant(n_s, 4.0).unwrap();
    let obs = ObservationParams::new(1.0, 0.0, 0.1).unwrap();
    let depths = regular_depths(220, 0.05);
    let sim = simulate_hmm(
        &space,
        &ChainSpec::Continuous(rates.clone()),
        &obs,
        &depths,
        21,
    )
    .unwrap();
    // Remove exactly 3 m (3 expected layers).
    let data = sim.data.without(80..140);
    let params = CtsParams { obs, rates };
    let init = space.default_log_init();
    let (_, gaps) = gap_posterior(&data, &space, &params, &init, &[79], 0, 0).unwrap();
    let mode = gaps[0]
        .elapsed_years
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    assert_eq!(mode, 3, "{:?}", gaps[0].elapsed_years);
}

#[test]
fn mean_annual_depth_recovered_from_simulation() {
    use icechron::cts::{fit_mle_cts, initial_cts_params, CtsOptions};
    let n_s = 4;
    let rates = RateVector::constant(n_s, 20.0).unwrap();
    let obs = ObservationParams::new(1.0, 0.0, 0.2).unwrap();
    let n = 300;
    let space = StateSpace::for_observations(n, n_s, 10).unwrap();
    let truth = rates.mean_annual_depth();
    // Thirty simulated years carry ~9% sampling spread in their own mean.
    let mut total = 0.0;
    for seed in 0..10 {
        let sim = simulate_hmm(
            &space,
            &ChainSpec::Continuous(rates.clone()),
            &obs,
            &regular_depths(n, 0.02),
            seed,
        )
        .unwrap();
        let years = space.year(*sim.states.last().unwrap()) - space.year(sim.states[0]);
        let realized = 0.02 * (n - 1) as f64 / years as f64;
        let init = initial_cts_params(&sim.data, n_s, true).unwrap();
        let fit = fit_mle_cts(
            &sim.data,
            &space,
            &init,
            &space.default_log_init(),
            &CtsOptions::default(),
        )
        .unwrap();
        let est = fit.params.rates.mean_annual_depth();
        assert!(
            (est / realized - 1.0).abs() <= 0.1,
            "seed {seed}: {est} vs {realized}"
        );
        total += est;
    }
    assert!((total / 10.0 / truth - 1.0).abs() <= 0.1);
}
