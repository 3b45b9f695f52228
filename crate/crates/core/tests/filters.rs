use nalgebra::DMatrix;
use sdefilter::filters::{Ensemble, MAX_JITTER_TRIES};
use sdefilter::oracle::{kalman_filter, LinearGaussianModel};
use sdefilter::{
    run_filter, simulate_interval, Error, FilterConfig, FilterKind, Interval, ObservationModel, ObservationRecord,
    ParticleFilter, Problem, Purpose, SdeModel, StatePrior, Streams,
};

fn ou_problem(theta: Interval, sigma: f64, obs_sd: f64) -> Problem {
    let model = SdeModel::new(|_: usize, th: f64, x: &[f64]| -th * x[0], vec![sigma], vec![theta]).unwrap();
    let om = ObservationModel::select(1, vec![0], DMatrix::from_element(1, 1, obs_sd)).unwrap();
    Problem::new(model, om, StatePrior::Gaussian { mean: vec![0.0], std: vec![1.0] }).unwrap()
}

fn synthetic(problem: &Problem, theta: f64, count: usize, interval: f64, seed: u64) -> Vec<ObservationRecord> {
    let streams = Streams::new(seed);
    let mut x = vec![0.4];
    (1..=count)
        .map(|k| {
            let (t0, t1) = ((k - 1) as f64 * interval, k as f64 * interval);
            let mut rng = streams.rng(Purpose::Truth, k as u64, 0);
            x = simulate_interval(&problem.model, &x, &[theta], t0, t1, 1e-3, &mut rng).unwrap().last().to_vec();
            let mut rng = streams.rng(Purpose::Observe, k as u64, 0);
            ObservationRecord::new(t1, problem.observation.observe(&x, &mut rng)).unwrap()
        })
        .collect()
}

fn config(kind: FilterKind, n: usize, seed: u64) -> FilterConfig {
    FilterConfig { seed, dt: 0.01, grid: 50, ..FilterConfig::new(kind, n) }
}

#[test]
fn output_has_prior_plus_one_summary_per_observation() {
    let p = ou_problem(Interval::new(0.2, 2.0).unwrap(), 1.0, 0.5);
    let obs = synthetic(&p, 1.0, 6, 0.1, 1);
    for kind in FilterKind::ALL {
        let out = run_filter(&p, &config(kind, 50, 0), &obs).unwrap();
        assert_eq!(out.len(), 7);
        assert_eq!(out[0].t, 0.0);
        for (s, o) in out[1..].iter().zip(&obs) {
            assert_eq!(s.t, o.t);
            assert!(s.state_mean.iter().chain(&s.param_mean).all(|v| v.is_finite()));
        }
    }
}

#[test]
fn no_observations_returns_the_prior_only() {
    let p = ou_problem(Interval::new(0.2, 2.0).unwrap(), 1.0, 0.5);
    for kind in FilterKind::ALL {
        let out = run_filter(&p, &config(kind, 100, 3), &[]).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].state_mean[0]).abs() < 0.5);
    }
}

#[test]
fn same_seed_same_output_and_thread_count_does_not_matter() {
    let p = ou_problem(Interval::new(0.2, 2.0).unwrap(), 1.0, 0.5);
    let obs = synthetic(&p, 1.0, 5, 0.1, 2);
    for kind in FilterKind::ALL {
        let cfg = FilterConfig { inner: Some(4), jitter: 1e-3, ..config(kind, 64, 9) };
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_filter(&p, &cfg, &obs).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(1));
        assert_eq!(a, run(4));
        let other = run_filter(&p, &FilterConfig { seed: 10, ..cfg.clone() }, &obs).unwrap();
        assert_ne!(a, other);
    }
}

#[test]
fn rpf_without_jitter_is_the_bootstrap_filter() {
    let p = ou_problem(Interval::new(0.2, 2.0).unwrap(), 1.0, 0.5);
    let obs = synthetic(&p, 1.0, 8, 0.1, 4);
    let bpf = run_filter(&p, &config(FilterKind::Bpf, 200, 5), &obs).unwrap();
    let rpf = run_filter(&p, &config(FilterKind::Rpf, 200, 5), &obs).unwrap();
    assert_eq!(bpf, rpf);
}

#[test]
fn npf_with_one_inner_particle_is_the_regularized_filter() {
    let p = ou_problem(Interval::new(0.2, 2.0).unwrap(), 1.0, 0.5);
    let obs = synthetic(&p, 1.0, 8, 0.1, 4);
    for c in [0.0, 1e-2] {
        let rpf = run_filter(&p, &FilterConfig { jitter: c, ..config(FilterKind::Rpf, 100, 6) }, &obs).unwrap();
        let npf = FilterConfig { jitter: c, inner: Some(1), ..config(FilterKind::Npf, 100, 6) };
        assert_eq!(rpf, run_filter(&p, &npf, &obs).unwrap());
    }
}

#[test]
fn bootstrap_filter_loses_parameter_diversity() {
    let p = ou_problem(Interval::new(0.2, 2.0).unwrap(), 1.0, 0.3);
    let obs = synthetic(&p, 1.0, 40, 0.1, 7);
    let out = run_filter(&p, &config(FilterKind::Bpf, 300, 1), &obs).unwrap();
    let distinct: Vec<usize> = out[1..].iter().map(|s| s.distinct_theta.unwrap()).collect();
    assert!(distinct.windows(2).all(|w| w[1] <= w[0]), "{distinct:?}");
    assert!(*distinct.last().unwrap() < 30);
}

#[test]
fn single_particle_runs_with_zero_spread() {
    let p = ou_problem(Interval::new(0.2, 2.0).unwrap(), 1.0, 0.5);
    let obs = synthetic(&p, 1.0, 5, 0.1, 8);
    let out = run_filter(&p, &config(FilterKind::Bpf, 1, 0), &obs).unwrap();
    assert!(out.iter().all(|s| s.state_std == vec![0.0] && s.ess == 1.0));
}

#[test]
fn rbpf_keeps_the_prior_for_parameter_free_drift() {
    let support = Interval::new(0.0, 2.0).unwrap();
    let model = SdeModel::new(|_: usize, _: f64, x: &[f64]| -x[0], vec![1.0], vec![support]).unwrap();
    let om = ObservationModel::select(1, vec![0], DMatrix::from_element(1, 1, 0.5)).unwrap();
    let p = Problem::new(model, om, StatePrior::Gaussian { mean: vec![0.0], std: vec![1.0] }).unwrap();
    let obs = synthetic(&p, 1.0, 5, 0.1, 9);
    let out = run_filter(&p, &config(FilterKind::Rbpf, 100, 0), &obs).unwrap();
    let last = out.last().unwrap();
    assert!((last.param_mean[0] - 1.0).abs() < 1e-12);
    let hist = &last.param_hist.as_ref().unwrap()[0];
    let interior = 1.0 / 49.0;
    assert!(hist[1..49].iter().all(|h| (h - interior).abs() < 1e-12));
}

#[test]
fn rbpf_mixture_is_a_distribution_on_the_support() {
    let p = ou_problem(Interval::new(0.2, 3.0).unwrap(), 1.0, 0.5);
    let obs = synthetic(&p, 1.0, 10, 0.2, 10);
    let mut f = ParticleFilter::new(p, config(FilterKind::Rbpf, 200, 2)).unwrap();
    for o in &obs {
        let s = f.assimilate(o).unwrap();
        let hist = &s.param_hist.as_ref().unwrap()[0];
        assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(s.param_mean[0] >= 0.2 && s.param_mean[0] <= 3.0);
    }
    let Ensemble::Rbpf(e) = f.ensemble() else { panic!("wrong ensemble") };
    assert_eq!(e.len(), 200);
    assert!((e.mixture_marginal(0).iter().sum::<f64>() - 1.0).abs() < 1e-10);
}

#[test]
fn all_filters_track_the_kalman_mean_at_moderate_size() {
    let p = ou_problem(Interval::point(0.5), 1.0, 0.5);
    let obs = synthetic(&p, 0.5, 10, 0.1, 11);
    let kf = kalman_filter(&LinearGaussianModel::scalar_ou(0.5, 1.0, 0.5, 0.0, 1.0), &obs).unwrap();
    for kind in FilterKind::ALL {
        let cfg = FilterConfig { inner: Some(20), dt: 1e-3, ..FilterConfig::new(kind, 20_000) };
        let cfg = if kind == FilterKind::Npf { FilterConfig { particles: 1000, ..cfg } } else { cfg };
        let out = run_filter(&p, &cfg, &obs).unwrap();
        for (s, k) in out[1..].iter().zip(&kf) {
            let se = (k.cov[(0, 0)] / s.ess).sqrt();
            assert!((s.state_mean[0] - k.mean[0]).abs() < 5.0 * se, "{kind} at {}", s.t);
            assert!((s.state_std[0] - k.cov[(0, 0)].sqrt()).abs() < 0.05, "{kind} std at {}", s.t);
        }
    }
}

#[test]
fn failures_name_step_and_particle() {
    let support = Interval::new(0.5, 1.0).unwrap();
    let model = SdeModel::new(
        |_: usize, th: f64, x: &[f64]| if x[0] > 50.0 { f64::NAN } else { th * x[0] * x[0] },
        vec![0.1],
        vec![support],
    )
    .unwrap();
    let om = ObservationModel::select(1, vec![0], DMatrix::from_element(1, 1, 1.0)).unwrap();
    let p = Problem::new(model, om, StatePrior::Uniform(vec![Interval::new(2.0, 3.0).unwrap()])).unwrap();
    let obs = [ObservationRecord::new(1.0, vec![1.0]).unwrap(), ObservationRecord::new(2.0, vec![1.0]).unwrap()];
    let err = run_filter(&p, &config(FilterKind::Bpf, 10, 0), &obs).unwrap_err();
    let Error::Step { index: 0, source } = err else { panic!("unexpected {err:?}") };
    assert!(matches!(*source, Error::Particle { .. }), "{source:?}");
}

#[test]
fn configuration_errors() {
    let p = ou_problem(Interval::new(0.2, 2.0).unwrap(), 1.0, 0.5);
    let bad = [
        FilterConfig::new(FilterKind::Bpf, 0),
        FilterConfig { jitter: -1.0, ..FilterConfig::new(FilterKind::Rpf, 10) },
        FilterConfig { dt: 0.0, ..FilterConfig::new(FilterKind::Bpf, 10) },
        FilterConfig { grid: 1, ..FilterConfig::new(FilterKind::Rbpf, 10) },
        FilterConfig { inner: Some(0), ..FilterConfig::new(FilterKind::Npf, 10) },
    ];
    for cfg in bad {
        assert!(matches!(ParticleFilter::new(p.clone(), cfg), Err(Error::Config(_))));
    }
    let zero_sigma = ou_problem(Interval::new(0.2, 2.0).unwrap(), 0.0, 0.5);
    assert!(matches!(ParticleFilter::new(zero_sigma, FilterConfig::new(FilterKind::Rbpf, 10)), Err(Error::Config(_))));

    // a jitter variance far beyond the box width exhausts the retries
    let tiny = ou_problem(Interval::new(1.0, 1.0 + 1e-9).unwrap(), 1.0, 0.5);
    let cfg = FilterConfig { jitter: 1e6, ..config(FilterKind::Rpf, 1, 0) };
    let obs = [ObservationRecord::new(0.1, vec![0.0]).unwrap()];
    let err = run_filter(&tiny, &cfg, &obs).unwrap_err();
    assert!(matches!(err.root_cause(), Error::Config(m) if m.contains(&MAX_JITTER_TRIES.to_string())), "{err:?}");
}

#[test]
fn out_of_order_observations_are_rejected() {
    let p = ou_problem(Interval::new(0.2, 2.0).unwrap(), 1.0, 0.5);
    let mut f = ParticleFilter::new(p, config(FilterKind::Bpf, 10, 0)).unwrap();
    f.assimilate(&ObservationRecord::new(0.5, vec![0.0]).unwrap()).unwrap();
    let err = f.assimilate(&ObservationRecord::new(0.5, vec![0.0]).unwrap()).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
    let err = f.assimilate(&ObservationRecord::new(0.7, vec![0.0, 1.0]).unwrap()).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
}
