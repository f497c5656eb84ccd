//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all with `cargo test -p icechron --test acceptance`, or a subset by
//! number, e.g. `cargo test -p icechron --test acceptance -- 4 8`. Failures
//! are reported but only change the exit status under `--strict`.

mod common;

use std::time::{Duration, Instant};

use common::{brute_loglik, dense_expm, dense_forward, fd_gradient, matmul, max_rel_err};
use icechron::cli::cli_main;
use icechron::cts::{
    cts_loglik_gradient, gap_posterior, CtsParams, GapKernel, RateVector, BAND_TOL,
};
use icechron::hier::{
    HierModel, HierObservationParams, HierPrior, TieMode, TiePoint, YearwiseStayProbabilities,
};
use icechron::hmm::{
    forward_loglik, Bidiagonal, EmissionMatrix, LayerReport, ObservationParams, Posterior,
    StateSpace, StayProbabilities,
};
use icechron::inference::mle::{
    fit_mle, initial_params, loglik_gradient, smoothed_chronology, HmmParams, MleOptions,
};
use icechron::inference::vi::{
    fit_vi, maximize_elbo, vi_chronology, HierTarget, LogDensity, MeanFieldPosterior, ViOptions,
};
use icechron::io::write_dataset;
use icechron::math::rng_stream;
use icechron::simulate::{
    euler_maruyama, regular_depths, simulate_hmm, simulate_sde_dataset, ChainSpec, SdePriorParams,
    SeasonalForm,
};
use icechron::DepthSeries;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let strict = args.iter().any(|a| a == "--strict");
    let selected: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "forward algorithm matches oracles", c1_oracles),
        (2, "sparse forward cost is linear in K", c2_scaling),
        (3, "2.5k-observation fit within 2.5 minutes", c3_throughput),
        (4, "chronology recovery", c4_recovery),
        (5, "tie-point is a hard constraint", c5_tiepoint),
        (6, "variational inference sanity", c6_vi),
        (7, "matrix-exponential kernels", c7_kernels),
        (8, "missing section induces multimodality", c8_multimodal),
        (9, "gradients match finite differences", c9_gradients),
        (10, "SDE simulator", c10_sde),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} ({name}): {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        if strict {
            std::process::exit(1);
        }
    }
}

fn tiled(
    n_s: usize,
    m: usize,
    p: Vec<f64>,
    proxy: Vec<f64>,
    obs: ObservationParams,
) -> (StateSpace, EmissionMatrix, Bidiagonal) {
    let space = StateSpace::new(n_s, m).unwrap();
    let data = DepthSeries::regular(0.05, proxy).unwrap();
    let em = EmissionMatrix::build(&data, &space, &obs);
    let trans = Bidiagonal::tiled(&space, &StayProbabilities::new(p).unwrap()).unwrap();
    (space, em, trans)
}

fn c1_oracles() -> Outcome {
    let mut rng = rng_stream(101, 0);
    let mut worst_small: f64 = 0.0;
    for _ in 0..100 {
        let n_s = rng.random_range(1..=3);
        let m = rng.random_range(1..=(6 / n_s).max(1));
        let n = rng.random_range(1..=8);
        let p = (0..n_s).map(|_| rng.random_range(0.05..0.95)).collect();
        let proxy = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let obs = ObservationParams::new(1.0, 0.1, rng.random_range(0.3..1.5)).unwrap();
        let (space, em, trans) = tiled(n_s, m, p, proxy, obs);
        let w: Vec<f64> = (0..space.total_states())
            .map(|_| rng.random_range(0.05..1.0))
            .collect();
        let tot: f64 = w.iter().sum();
        let init: Vec<f64> = w.iter().map(|x| (x / tot).ln()).collect();
        let ll = forward_loglik(&em, &trans, &init).unwrap();
        worst_small = worst_small.max((ll - brute_loglik(&em, &trans, &init)).abs());
    }
    let mut worst_dense: f64 = 0.0;
    for _ in 0..20 {
        let n_s = rng.random_range(1..=5);
        let p = (0..n_s).map(|_| rng.random_range(0.3..0.95)).collect();
        let proxy = (0..50).map(|_| rng.random_range(-1.5..1.5)).collect();
        let obs = ObservationParams::new(1.0, 0.0, rng.random_range(0.2..1.0)).unwrap();
        let (space, em, trans) = tiled(n_s, 200 / n_s, p, proxy, obs);
        let init = space.default_log_init();
        let ll = forward_loglik(&em, &trans, &init).unwrap();
        worst_dense = worst_dense.max((ll - dense_forward(&em, &trans, &init)).abs());
    }
    outcome(
        worst_small <= 1e-10 && worst_dense <= 1e-9,
        format!("max |diff| {worst_small:.1e} vs enumeration (<= 1e-10), {worst_dense:.1e} vs dense (<= 1e-9)"),
    )
}

/// Best time per call over `rounds` rounds of at least `min` each.
fn time_per_call(rounds: usize, min: Duration, mut f: impl FnMut()) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..rounds {
        let start = Instant::now();
        let mut calls = 0u32;
        while calls == 0 || start.elapsed() < min {
            f();
            calls += 1;
        }
        best = best.min(start.elapsed().as_secs_f64() / calls as f64);
    }
    best
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    lx.iter()
        .zip(&ly)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

fn c2_scaling() -> Outcome {
    let ks = [250.0, 500.0, 1000.0, 2000.0];
    let n = 20;
    let mut rng = rng_stream(102, 0);
    let proxy: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    let (mut sparse, mut dense) = (Vec::new(), Vec::new());
    for &k in &ks {
        let n_s = 10;
        let obs = ObservationParams::new(1.0, 0.0, 0.5).unwrap();
        let (space, em, trans) = tiled(n_s, k as usize / n_s, vec![0.7; n_s], proxy.clone(), obs);
        // Mass on every state so no window shortcut applies.
        let init = vec![-(space.total_states() as f64).ln(); space.total_states()];
        sparse.push(time_per_call(5, Duration::from_millis(100), || {
            std::hint::black_box(forward_loglik(&em, &trans, &init).unwrap());
        }));
        dense.push(time_per_call(2, Duration::from_millis(10), || {
            std::hint::black_box(dense_forward(&em, &trans, &init));
        }));
    }
    let (s, d) = (slope(&ks, &sparse), slope(&ks, &dense));
    outcome(
        s <= 1.3 && d >= 1.8,
        format!("log-log slope sparse {s:.2} (<= 1.3), dense {d:.2} (>= 1.8)"),
    )
}

fn c3_throughput() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let n = 2500;
    let n_s = 10;
    let space = StateSpace::for_observations(n, n_s, 10).unwrap();
    let chain = ChainSpec::Discrete(StayProbabilities::uniform(n_s, 0.5).unwrap());
    let obs = ObservationParams::new(1.0, 0.0, 0.5).unwrap();
    let sim = simulate_hmm(&space, &chain, &obs, &regular_depths(n, 0.01), 103).unwrap();
    let data = dir.path().join("core.csv");
    write_dataset(&data, &sim.data).unwrap();
    let out = dir.path().join("run");
    let start = Instant::now();
    let code = cli_main([
        "icechron",
        "--quiet",
        "--threads",
        "1",
        "fit",
        data.to_str().unwrap(),
        "--n-s",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        code == 0 && secs <= 150.0,
        format!("exit {code}, {secs:.1}s single-threaded (<= 150s)"),
    )
}

fn c4_recovery() -> Outcome {
    let (n_s, n) = (8, 2000);
    let mut count_errs = Vec::new();
    let (mut covered, mut covered_true, mut total) = (0usize, 0usize, 0usize);
    for seed in 0..10 {
        let space = StateSpace::for_observations(n, n_s, 10).unwrap();
        let p = StayProbabilities::uniform(n_s, 0.6).unwrap();
        let chain = ChainSpec::Discrete(p.clone());
        let obs = ObservationParams::new(1.0, 0.0, 0.5).unwrap();
        let sim = simulate_hmm(&space, &chain, &obs, &regular_depths(n, 0.01), 400 + seed).unwrap();
        let init = initial_params(&sim.data, n_s).unwrap();
        let log_init = space.default_log_init();
        let fit = fit_mle(&sim.data, &space, &init, &log_init, &MleOptions::default()).unwrap();
        let chronology = |params: &HmmParams| {
            smoothed_chronology(
                &sim.data,
                &space,
                &params.emissions(&sim.data, &space),
                &params.transitions(&space).unwrap(),
                &log_init,
                200,
                seed,
            )
            .unwrap()
            .0
        };
        let chron = chronology(&fit.params);
        let true_years = (space.year(sim.states[n - 1]) - space.year(sim.states[0])) as i64;
        let mut counts: Vec<i64> = chron
            .paths
            .iter()
            .map(|p| space.year(p[n - 1]) as i64 - space.year(p[0]) as i64)
            .collect();
        counts.sort();
        count_errs.push(counts[counts.len() / 2] - true_years);
        let layers = chron.layer_boundaries();
        // The same intervals under the simulating parameters, for reference.
        let layers_true = chronology(&HmmParams { obs, p }).layer_boundaries();
        let inside = |report: &LayerReport, y: usize, d: f64| {
            report
                .layers
                .iter()
                .any(|l| l.year == y && l.q05_depth <= d && d <= l.q95_depth)
        };
        for i in 1..n {
            let y = space.year(sim.states[i]);
            if y > space.year(sim.states[i - 1]) {
                total += 1;
                let d = sim.data.depths()[i];
                covered += inside(&layers, y, d) as usize;
                covered_true += inside(&layers_true, y, d) as usize;
            }
        }
    }
    let coverage = covered as f64 / total as f64;
    let worst = count_errs.iter().map(|e| e.abs()).max().unwrap();
    outcome(
        worst <= 2 && coverage >= 0.9,
        format!(
            "year-count errors {count_errs:?} (|err| <= 2), boundary coverage of 90% intervals {:.1}% (>= 90%; {:.1}% with the simulating parameters in place of the fit)",
            100.0 * coverage,
            100.0 * covered_true as f64 / total as f64
        ),
    )
}

fn hier_instance(n: usize, seed: u64, tie_at: Option<usize>) -> (HierModel, Vec<usize>) {
    let n_s = 4;
    let space = StateSpace::for_observations(n, n_s, 10).unwrap();
    let chain = ChainSpec::Discrete(StayProbabilities::uniform(n_s, 0.7).unwrap());
    let obs = ObservationParams::new(1.0, 0.0, 0.35).unwrap();
    let sim = simulate_hmm(&space, &chain, &obs, &regular_depths(n, 0.01), seed).unwrap();
    let ties = tie_at
        .map(|i| {
            vec![TiePoint {
                depth_index: i,
                year: space.year(sim.states[i]),
            }]
        })
        .unwrap_or_default();
    let prior = HierPrior::for_data(&sim.data);
    (
        HierModel::new(sim.data, space, ties, TieMode::Replace, prior).unwrap(),
        sim.states,
    )
}

fn c5_tiepoint() -> Outcome {
    let (model, _) = hier_instance(100, 105, Some(80));
    let tie = model.ties[0];
    let space = model.space;
    let opts = ViOptions {
        max_iter: 2000,
        seed: 5,
        ..ViOptions::default()
    };
    let fit = fit_vi(model, &opts).unwrap();
    let chron = vi_chronology(&fit.target, &fit.q, 20, 10, 5).unwrap();
    let i = tie.depth_index;
    let ok_paths = chron
        .paths
        .iter()
        .filter(|p| space.year(p[i]) == tie.year)
        .count();
    let w = &chron.gamma[i];
    let off: f64 = w
        .range()
        .filter(|&k| space.year(k) != tie.year)
        .map(|k| w.vals[k - w.lo])
        .sum();
    outcome(
        chron.paths.len() == 200 && ok_paths == 200 && off == 0.0,
        format!(
            "{ok_paths}/{} paths in the tie year, off-year marginal mass {:.1e}",
            chron.paths.len(),
            off.abs()
        ),
    )
}

fn c6_vi() -> Outcome {
    let toy = common::ConjugateToy::new();
    let (m, s) = toy.posterior();
    let mut worst: f64 = 0.0;
    let mut all_converged = true;
    for seed in 0..5 {
        let q0 = MeanFieldPosterior::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let opts = ViOptions {
            seed,
            max_iter: 100_000,
            ..ViOptions::default()
        };
        let (q, report) = maximize_elbo(&toy, q0, &opts).unwrap();
        all_converged &= report.converged;
        let sd = q.sd();
        for i in 0..2 {
            worst = worst
                .max((q.mu[i] - m[i]).abs() / m[i].abs())
                .max((sd[i] - s[i]).abs() / s[i]);
        }
    }
    let conjugate_ok = all_converged && worst <= 0.02;

    let (mut up, mut pairs) = (0usize, 0usize);
    for seed in 0..10 {
        let (model, _) = hier_instance(100, 600 + seed, None);
        let opts = ViOptions {
            seed,
            ..ViOptions::default()
        };
        let fit = fit_vi(model, &opts).unwrap();
        let means: Vec<f64> = fit
            .report
            .trace
            .chunks_exact(opts.window)
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .collect();
        for w in means.windows(2) {
            pairs += 1;
            if w[1] >= w[0] {
                up += 1;
            }
        }
    }
    let frac = up as f64 / pairs as f64;
    outcome(
        conjugate_ok && frac >= 0.95,
        format!(
            "conjugate toy worst relative error {:.2}% (<= 2%, converged: {all_converged}); hierarchical ELBO window means non-decreasing in {:.1}% of {pairs} windows (>= 95%)",
            100.0 * worst,
            100.0 * frac
        ),
    )
}

fn c7_kernels() -> Outcome {
    let mut rng = rng_stream(107, 0);
    let random_rates = |rng: &mut rand_chacha::ChaCha8Rng, n_s: usize| {
        RateVector::per_phase((0..n_s).map(|_| rng.random_range(0.2..5.0)).collect()).unwrap()
    };
    let (mut dev, mut row_dev, mut semi): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..50 {
        let n_s = rng.random_range(1..=5);
        let space = StateSpace::new(n_s, rng.random_range(1..=60 / n_s)).unwrap();
        let rates = random_rates(&mut rng, n_s);
        let gap = rng.random_range(0.01..50.0) / rates.max();
        let k = GapKernel::new(&rates, &space, gap, BAND_TOL)
            .unwrap()
            .to_dense();
        let q: Vec<Vec<f64>> = rates
            .generator(&space)
            .into_iter()
            .map(|r| r.into_iter().map(|v| v * gap).collect())
            .collect();
        let exact = dense_expm(&q);
        for (r, e) in k.iter().zip(&exact) {
            row_dev = row_dev.max((r.iter().sum::<f64>() - 1.0).abs());
            for (x, y) in r.iter().zip(e) {
                dev = dev.max((x - y).abs());
            }
        }
    }
    for _ in 0..10 {
        let n_s = rng.random_range(1..=4);
        let space = StateSpace::new(n_s, 40 / n_s).unwrap();
        let rates = random_rates(&mut rng, n_s);
        let d1 = rng.random_range(0.05..4.0) / rates.max();
        let d2 = rng.random_range(0.05..30.0) / rates.max();
        let kern = |d: f64| {
            GapKernel::new(&rates, &space, d, BAND_TOL)
                .unwrap()
                .to_dense()
        };
        let ab = matmul(&kern(d1), &kern(d2));
        for (r, e) in ab.iter().zip(&kern(d1 + d2)) {
            for (x, y) in r.iter().zip(e) {
                semi = semi.max((x - y).abs());
            }
        }
    }
    outcome(
        dev <= 1e-8 && semi <= 1e-8 && row_dev <= 1e-10,
        format!("max deviation {dev:.1e}, semigroup {semi:.1e} (<= 1e-8), row sums {row_dev:.1e} (<= 1e-10)"),
    )
}

fn c8_multimodal() -> Outcome {
    let n_s = 4;
    let n = 220;
    let space = StateSpace::new(n_s, 40).unwrap();
    // Annual depth n_s / q = 1 m: twenty 5 cm samples per expected layer.
    let rates = RateVector::constant(n_s, 4.0).unwrap();
    let obs = ObservationParams::new(1.0, 0.0, 0.1).unwrap();
    let sim = simulate_hmm(
        &space,
        &ChainSpec::Continuous(rates.clone()),
        &obs,
        &regular_depths(n, 0.05),
        108,
    )
    .unwrap();
    let params = CtsParams { obs, rates };
    let init = space.default_log_init();
    // Remove 1.5 m: rows 90..120, leaving a gap between rows 89 and 120.
    let gappy = sim.data.without(90..120);
    let (_, gaps) = gap_posterior(&gappy, &space, &params, &init, &[89], 0, 0).unwrap();
    let dist = &gaps[0].elapsed_years;
    let bimodal = dist
        .windows(2)
        .any(|w| w[1].0 == w[0].0 + 1 && w[0].1 >= 0.1 && w[1].1 >= 0.1);

    let em = EmissionMatrix::build(&sim.data, &space, &params.obs);
    let trans = icechron::cts::CtsTransitions::new(&params.rates, &space, sim.data.depths(), false)
        .unwrap();
    let post = Posterior::run(&em, &trans, &init).unwrap();
    let mut control = std::collections::BTreeMap::new();
    for (k, l, p) in post.joint_endpoints(&em, &trans, 89, 120).unwrap() {
        *control
            .entry(space.year(l) as i64 - space.year(k) as i64)
            .or_insert(0.0) += p;
    }
    let peak = control.values().cloned().fold(0.0, f64::max);
    let fmt = |d: &[(i64, f64)]| {
        d.iter()
            .filter(|(_, p)| *p >= 0.005)
            .map(|(y, p)| format!("{y}:{p:.2}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let control_vec: Vec<(i64, f64)> = control.into_iter().collect();
    outcome(
        bimodal && peak >= 0.9,
        format!(
            "gap posterior {{{}}} (two adjacent >= 0.10), contiguous control {{{}}} (peak >= 0.90)",
            fmt(dist),
            fmt(&control_vec)
        ),
    )
}

fn c9_gradients() -> Outcome {
    // Discrete model.
    let n_s = 3;
    let space = StateSpace::for_observations(30, n_s, 5).unwrap();
    let p = StayProbabilities::new(vec![0.55, 0.7, 0.8]).unwrap();
    let obs = ObservationParams::new(0.9, 0.1, 0.45).unwrap();
    let sim = simulate_hmm(
        &space,
        &ChainSpec::Discrete(p.clone()),
        &obs,
        &regular_depths(30, 0.02),
        109,
    )
    .unwrap();
    let init = space.default_log_init();
    let (_, g) = loglik_gradient(&sim.data, &space, &HmmParams { obs, p }, &init).unwrap();
    let f = |x: &[f64]| {
        let hp = HmmParams {
            obs: ObservationParams::new(x[0], x[1], x[2]).unwrap(),
            p: StayProbabilities::new(x[3..].to_vec()).unwrap(),
        };
        forward_loglik(
            &hp.emissions(&sim.data, &space),
            &hp.transitions(&space).unwrap(),
            &init,
        )
        .unwrap()
    };
    let mut analytic = vec![g.a, g.b, g.sigma];
    analytic.extend(&g.p);
    let e_disc = max_rel_err(
        &analytic,
        &fd_gradient(f, &[0.9, 0.1, 0.45, 0.55, 0.7, 0.8], 1e-6),
    );

    // Hierarchical joint density, through the unconstrained target.
    let (model, _) = hier_instance(30, 209, Some(20));
    let hspace = model.space;
    let n = model.n();
    let mut rng = rng_stream(209, 1);
    let hobs = HierObservationParams {
        a: (0..n).map(|_| rng.random_range(0.7..1.3)).collect(),
        b: (0..n).map(|_| rng.random_range(-0.2..0.2)).collect(),
        ..HierObservationParams::constant(n, 1.0, 0.0, 0.4, 0.3, 0.2)
    };
    let yw = YearwiseStayProbabilities::tiled(&hspace, &[0.6, 0.7, 0.65, 0.75], 8.0);
    let target = HierTarget::new(model);
    let theta = target.encode(&hobs, &yw).unwrap();
    let (_, gh) = target.eval(&theta);
    let e_hier = max_rel_err(&gh, &fd_gradient(|x| target.value(x), &theta, 1e-5));

    // Continuous-index rates and observation parameters.
    let cspace = StateSpace::new(3, 10).unwrap();
    let mut rng = rng_stream(309, 0);
    let mut depth = 0.0;
    let (mut depths, mut proxy) = (Vec::new(), Vec::new());
    for _ in 0..25 {
        depth += rng.random_range(0.05..0.6);
        depths.push(depth);
        proxy.push(rng.random_range(-1.0..1.0));
    }
    let data = DepthSeries::new(depths, proxy).unwrap();
    let cinit = cspace.default_log_init();
    let make = |x: &[f64]| CtsParams {
        obs: ObservationParams::new(x[0], x[1], x[2]).unwrap(),
        rates: RateVector::per_phase(x[3..].iter().map(|v| v.exp()).collect()).unwrap(),
    };
    let x0 = [0.9, -0.1, 0.45, 0.0, 0.5, 1.0];
    let (_, gc) = cts_loglik_gradient(&data, &cspace, &make(&x0), &cinit).unwrap();
    let mut analytic = vec![gc.a, gc.b, gc.sigma];
    analytic.extend(&gc.log_q);
    let fd = fd_gradient(
        |x| {
            cts_loglik_gradient(&data, &cspace, &make(x), &cinit)
                .unwrap()
                .0
        },
        &x0,
        1e-6,
    );
    let e_cts = max_rel_err(&analytic, &fd);
    let worst = e_disc.max(e_hier).max(e_cts);
    outcome(
        worst <= 1e-4,
        format!("max relative error discrete {e_disc:.1e}, hierarchical {e_hier:.1e}, continuous-index {e_cts:.1e} (<= 1e-4)"),
    )
}

fn c10_sde() -> Outcome {
    let mono = SdePriorParams {
        lambda: 2.0,
        alpha: 1.0,
        eps: 0.0,
        laplace_scale: 0.05,
    };
    let grid = regular_depths(200, 0.02);
    let monotone = (0..1000u64).all(|seed| {
        euler_maruyama(&mono, &grid, 1, 1, seed).unwrap()[0]
            .t
            .windows(2)
            .all(|w| w[1] >= w[0])
    });

    // Lyapunov oracle for the Matern-3/2 pair: A P + P A^T + e2 e2^T = 0.
    let lambda = 2.0;
    let p = SdePriorParams { lambda, ..mono };
    let (a21, a22) = (-lambda * lambda, -2.0 * lambda);
    // Unknowns p11, p12, p22: 2 p12 = 0; a21 p11 + a22 p12 + p22 = 0; 2 a21 p12 + 2 a22 p22 + 1 = 0.
    let p22 = -1.0 / (2.0 * a22);
    let p11 = -p22 / a21;
    let paths = euler_maruyama(&p, &regular_depths(500, 0.05), 1000, 10, 110).unwrap();
    let vals: Vec<f64> = paths
        .iter()
        .flat_map(|path| (50..=500).step_by(50).map(move |i| path.z_a[i - 1]))
        .collect();
    let var = vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64;
    let var_err = (var / p11 - 1.0).abs();

    let lp = SdePriorParams {
        lambda: 1.0,
        alpha: 5.0,
        eps: 1e-2,
        laplace_scale: 0.05,
    };
    let ds = simulate_sde_dataset(
        &lp,
        &regular_depths(10_000, 0.001),
        1,
        SeasonalForm::SinPi,
        111,
    )
    .unwrap();
    let scale = ds
        .data
        .proxy()
        .iter()
        .zip(&ds.path.t)
        .map(|(s, t)| (s - SeasonalForm::SinPi.value(*t)).abs())
        .sum::<f64>()
        / 10_000.0;
    let scale_err = (scale / 0.05 - 1.0).abs();
    outcome(
        monotone && var_err <= 0.1 && scale_err <= 0.05,
        format!(
            "eps = 0 monotone on 1000 seeds: {monotone}; z_a variance {var:.5} vs {p11:.5} ({:.1}%, <= 10%); Laplace scale {scale:.5} ({:.1}%, <= 5%)",
            100.0 * var_err,
            100.0 * scale_err
        ),
    )
}
