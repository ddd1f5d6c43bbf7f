mod common;

use alphasne::divergence::{asne_cost, output_probabilities, sne_gradient, Embedding};
use alphasne::optimizer::{init_embedding, jitter_rng, run_embedding, OptimizerConfig};
use alphasne::{affinities, Dataset, NeighborProbabilities};
use ndarray::Array2;
use rand_distr::{Distribution, Normal};

fn cluster_p(seed: u64) -> (NeighborProbabilities, Vec<usize>) {
    let mut rng = common::rng(seed);
    let (data, labels) = common::clusters(3, 20, 5, 1.0, &mut rng);
    let ds = Dataset::new("clusters", data, Some(labels.clone())).unwrap();
    (affinities(&ds, 10.0).unwrap().0, labels)
}

fn mean_distance(y: &Array2<f64>, a: &[usize], b: &[usize]) -> f64 {
    let mut s = 0.0;
    let mut c = 0;
    for &i in a {
        for &j in b {
            if i != j {
                s += (&y.row(i) - &y.row(j)).mapv(|v| v * v).sum().sqrt();
                c += 1;
            }
        }
    }
    s / c as f64
}

#[test]
fn clusters_stay_apart() {
    let (p, labels) = cluster_p(21);
    let config = OptimizerConfig::default().with_alpha(0.9).with_seed(3);
    let r = run_embedding(&p, &config).unwrap();
    let y = &r.embedding.coords;
    let members: Vec<Vec<usize>> = (0..3).map(|c| (0..60).filter(|&i| labels[i] == c).collect()).collect();
    let centroid = |m: &[usize]| {
        let mut c = [0.0; 2];
        for &i in m {
            c[0] += y[[i, 0]] / m.len() as f64;
            c[1] += y[[i, 1]] / m.len() as f64;
        }
        c
    };
    let cents: Vec<[f64; 2]> = members.iter().map(|m| centroid(m)).collect();
    let mut between = f64::INFINITY;
    for a in 0..3 {
        for b in a + 1..3 {
            between = between.min(((cents[a][0] - cents[b][0]).powi(2) + (cents[a][1] - cents[b][1]).powi(2)).sqrt());
        }
    }
    for m in &members {
        let within = mean_distance(y, m, m);
        assert!(within < between, "within {within} vs between {between}");
    }
}

#[test]
fn plain_descent_tail_is_monotone() {
    let (p, _) = cluster_p(22);
    let config = OptimizerConfig {
        alpha: 0.5,
        learning_rate: 0.01,
        momentum_initial: 0.0,
        momentum_final: 0.0,
        jitter_initial_std: 0.0,
        init_std: 1.0,
        max_iters: 300,
        seed: 4,
        stop_on_convergence: false,
        ..Default::default()
    };
    let r = run_embedding(&p, &config).unwrap();
    assert_eq!(r.cost_trace.len(), 300);
    for w in r.cost_trace[100..].windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
    }
    assert_eq!(r.final_cost, *r.cost_trace.last().unwrap());
}

#[test]
fn alpha_one_follows_a_reference_sne_loop() {
    let (p, _) = cluster_p(23);
    let config = OptimizerConfig {
        max_iters: 300,
        momentum_switch_iter: 100,
        stop_on_convergence: false,
        seed: 5,
        ..Default::default()
    };
    let r = run_embedding(&p, &config).unwrap();

    let mut y = init_embedding(p.n(), &config).unwrap().coords;
    let mut v = Array2::<f64>::zeros(y.dim());
    let mut rng = jitter_rng(config.seed);
    let jitter = Normal::new(0.0, config.jitter_initial_std).unwrap();
    let mut trace = Vec::new();
    for t in 0..config.max_iters {
        let emb = Embedding::new(y.clone()).unwrap();
        let q = output_probabilities(&emb).unwrap();
        trace.push(asne_cost(&p, &q, 1.0).unwrap().total);
        if t + 1 == config.max_iters {
            break;
        }
        let g = sne_gradient(&p, &q, &emb).unwrap();
        let m = if t < config.momentum_switch_iter { config.momentum_initial } else { config.momentum_final };
        let noise = (t < config.jitter_decay_iters).then(|| Array2::from_shape_simple_fn(y.dim(), || jitter.sample(&mut rng)));
        v = &v * m - &(&g * config.learning_rate);
        y = &y + &v;
        if let Some(n) = noise {
            y += &n;
        }
    }
    assert_eq!(trace.len(), r.cost_trace.len());
    for (a, b) in trace.iter().zip(&r.cost_trace) {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn runs_are_deterministic() {
    let (p, _) = cluster_p(24);
    let config = OptimizerConfig {
        max_iters: 200,
        alpha: 0.4,
        seed: 77,
        ..Default::default()
    };
    let a = run_embedding(&p, &config).unwrap();
    let b = run_embedding(&p, &config).unwrap();
    assert_eq!(a, b);
    let c = run_embedding(&p, &config.clone().with_seed(78)).unwrap();
    assert_ne!(a.embedding, c.embedding);
}

#[test]
fn convergence_flag_and_early_stop() {
    let (p, _) = cluster_p(25);
    let config = OptimizerConfig {
        seed: 1,
        max_iters: 3000,
        ..Default::default()
    };
    let r = run_embedding(&p, &config).unwrap();
    assert!(r.converged);
    assert!(r.cost_trace.len() < 3000);
    let n = r.cost_trace.len();
    let (last, earlier) = (r.cost_trace[n - 1], r.cost_trace[n - 51]);
    assert!((earlier - last) / earlier.abs() < 1e-6);
}

#[test]
fn overflowing_steps_give_up_after_halvings() {
    let (p, _) = cluster_p(26);
    let config = OptimizerConfig {
        learning_rate: 1e305,
        jitter_initial_std: 0.0,
        ..Default::default()
    };
    let e = run_embedding(&p, &config).unwrap_err();
    assert!(e.to_string().contains("halvings"), "{e}");
}

#[test]
fn output_probabilities_are_rejected_as_input() {
    let emb = Embedding::new(ndarray::array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]).unwrap();
    let q = output_probabilities(&emb).unwrap();
    assert!(run_embedding(&q, &OptimizerConfig::default()).is_err());
}
