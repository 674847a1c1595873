//! Independent reference implementations shared by the integration tests and
//! the acceptance runner. Each check returns its worst observed error so the
//! caller decides how to report it.
#![allow(dead_code)]

use cfgpilot::diffusion::denoiser::{NoiseBatch, NULL_CLASS};
use cfgpilot::diffusion::{Denoiser, PIXELS};
use cfgpilot::metrics::MetricConfig;
use cfgpilot::nn::DenseNet;
use cfgpilot::policy::Actor;
use cfgpilot::GrayImage;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

// ---- circuit ----

const N: usize = 4;
const DIM: usize = 1 << N;

type Mat = Vec<Vec<Complex64>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn single(axis: char, theta: f64) -> [[Complex64; 2]; 2] {
    let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    match axis {
        'x' => [[c(co, 0.0), c(0.0, -si)], [c(0.0, -si), c(co, 0.0)]],
        'y' => [[c(co, 0.0), c(-si, 0.0)], [c(si, 0.0), c(co, 0.0)]],
        'z' => [[c(co, -si), c(0.0, 0.0)], [c(0.0, 0.0), c(co, si)]],
        _ => unreachable!(),
    }
}

/// Gate on one qubit, identity elsewhere: the element is the product over
/// qubits of the per-qubit factor selected by the bits of row and column.
fn embed(qubit: usize, g: [[Complex64; 2]; 2]) -> Mat {
    let mut m = vec![vec![c(0.0, 0.0); DIM]; DIM];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let mut v = c(1.0, 0.0);
            for q in 0..N {
                let (bi, bj) = ((i >> q) & 1, (j >> q) & 1);
                v *= if q == qubit {
                    g[bi][bj]
                } else if bi == bj {
                    c(1.0, 0.0)
                } else {
                    c(0.0, 0.0)
                };
            }
            *cell = v;
        }
    }
    m
}

fn cnot(control: usize, target: usize) -> Mat {
    let mut m = vec![vec![c(0.0, 0.0); DIM]; DIM];
    for j in 0..DIM {
        let i = if (j >> control) & 1 == 1 { j ^ (1 << target) } else { j };
        m[i][j] = c(1.0, 0.0);
    }
    m
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let mut out = vec![vec![c(0.0, 0.0); DIM]; DIM];
    for i in 0..DIM {
        for k in 0..DIM {
            let aik = a[i][k];
            for j in 0..DIM {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// `⟨Z_q⟩` for every qubit of the 4-qubit circuit, built as an explicit
/// 16×16 unitary product applied to |0000⟩.
pub fn circuit_expectations(angles: &[f64], encoding: &[f64], depth: usize) -> Vec<f64> {
    let idx = |layer: usize, slot: usize, q: usize| (layer * 3 + slot) * N + q;
    let mut gates = Vec::new();
    for q in 0..N {
        gates.push(embed(q, single('y', encoding[2 * q])));
        gates.push(embed(q, single('z', encoding[2 * q + 1])));
    }
    for layer in 0..depth {
        for q in 0..N {
            gates.push(embed(q, single('y', angles[idx(layer, 0, q)])));
            gates.push(embed(q, single('z', angles[idx(layer, 1, q)])));
        }
        for q in 0..N {
            gates.push(cnot(q, (q + 1) % N));
        }
        for q in 0..N {
            gates.push(embed(q, single('x', angles[idx(layer, 2, q)])));
        }
    }
    let mut u: Mat = (0..DIM)
        .map(|i| (0..DIM).map(|j| c(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    for g in &gates {
        u = matmul(g, &u);
    }
    // U|0⟩ is the first column of U
    let psi: Vec<Complex64> = (0..DIM).map(|i| u[i][0]).collect();
    (0..N)
        .map(|q| {
            psi.iter()
                .enumerate()
                .map(|(j, a)| a.norm_sqr() * if (j >> q) & 1 == 1 { -1.0 } else { 1.0 })
                .sum()
        })
        .collect()
}

// ---- finite differences ----

/// |a − b| relative to the larger magnitude, with a floor so that gradients
/// that are zero up to rounding compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Steps tried per entry. Round-off dominates the smallest on large batch
/// losses, and the largest can straddle a ReLU kink. A correct gradient agrees
/// at one of them at least.
pub const FD_STEPS: [f64; 3] = [1e-4, 1e-5, FD_STEP];

/// Worst relative error of `analytic` against central differences of `loss`
/// over the indices in `which`, taking the best-agreeing step per entry.
pub fn worst_fd_error(
    params: &[f64],
    analytic: &[f64],
    which: impl IntoIterator<Item = usize>,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> f64 {
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let mut worst = 0.0f64;
    let mut p = params.to_vec();
    for k in which {
        let orig = p[k];
        let mut best = f64::INFINITY;
        for h in FD_STEPS {
            p[k] = orig + h;
            let up = loss(&p);
            p[k] = orig - h;
            let down = loss(&p);
            best = best.min(rel_err(analytic[k], (up - down) / (2.0 * h)));
            if best < 1e-7 {
                break;
            }
        }
        p[k] = orig;
        worst = worst.max(best);
    }
    worst
}

pub fn sampled_indices(rng: &mut ChaCha8Rng, n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        (0..n).collect()
    } else {
        (0..max).map(|_| rng.random_range(0..n)).collect()
    }
}

/// Parameter and input gradients of `Σ w·out` over a batch of three inputs.
/// At most `max_params` parameters are probed.
pub fn dense_net_grad_error(mut net: DenseNet, seed: u64, max_params: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, width) = (3, net.in_width());
    let x = Array2::from_shape_vec((batch, width), uniform(&mut rng, batch * width)).unwrap();
    let w = Array2::from_shape_vec((batch, net.out_width()), uniform(&mut rng, batch * net.out_width())).unwrap();
    let (_, tape) = net.forward_batch(x.view()).unwrap();
    let grads = net.backward(&tape, w.view()).unwrap();
    let params = net.flat_params();
    let which = sampled_indices(&mut rng, params.len(), max_params);
    let mut worst = worst_fd_error(&params, &grads.flatten(), which, |p| {
        net.set_flat_params(p).unwrap();
        (&net.predict_batch(x.view()).unwrap() * &w).sum()
    });
    net.set_flat_params(&params).unwrap();
    for r in 0..batch {
        for col in 0..width.min(12) {
            let mut xp = x.clone();
            xp[[r, col]] += FD_STEP;
            let mut xm = x.clone();
            xm[[r, col]] -= FD_STEP;
            let fd = ((&net.predict_batch(xp.view()).unwrap() * &w).sum()
                - (&net.predict_batch(xm.view()).unwrap() * &w).sum())
                / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads.input[[r, col]], fd));
        }
    }
    worst
}

/// Noise-prediction loss gradients on a four-sample batch: sampled network
/// parameters plus every class-embedding entry. Returns `(net, embeddings)`.
pub fn denoiser_grad_error(mut den: Denoiser, seed: u64, max_params: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = NoiseBatch::default();
    for (t, class) in [(3, 0), (77, 2), (200, NULL_CLASS), (150, 3)] {
        batch.push(uniform(&mut rng, PIXELS), t, class, uniform(&mut rng, PIXELS));
    }
    let (_, grads) = den.loss_and_grads(&batch).unwrap();
    let params = den.net.flat_params();
    let which = sampled_indices(&mut rng, params.len(), max_params);
    let net = worst_fd_error(&params, &grads.net.flatten(), which, |p| {
        den.net.set_flat_params(p).unwrap();
        den.loss_and_grads(&batch).unwrap().0
    });
    den.net.set_flat_params(&params).unwrap();
    let emb = den.embeddings.clone();
    let flat: Vec<f64> = emb.iter().copied().collect();
    let analytic: Vec<f64> = grads.embeddings.iter().copied().collect();
    let embeddings = worst_fd_error(&flat, &analytic, 0..flat.len(), |p| {
        den.embeddings = Array2::from_shape_vec(emb.raw_dim(), p.to_vec()).unwrap();
        den.loss_and_grads(&batch).unwrap().0
    });
    (net, embeddings)
}

/// End-to-end gradient of `w_μ·μ + w_σ·logσ` over every actor parameter,
/// circuit angles included.
pub fn actor_grad_error(actor: &Actor, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let (wm, ws) = (0.7, -0.3);
    let (_, tape) = actor.forward(&state).unwrap();
    let grads = actor.backward(&tape, wm, ws).unwrap().flatten();
    let params: Vec<f64> = match actor {
        Actor::Hybrid(h) => h.vqc.angles().iter().copied().chain(h.head.flat_params()).collect(),
        Actor::Classical(c) => c.net.flat_params(),
    };
    let mut probe = actor.clone();
    worst_fd_error(&params, &grads, 0..params.len(), |p| {
        match &mut probe {
            Actor::Hybrid(h) => {
                let n = h.vqc.angles().len();
                h.vqc.angles_mut().copy_from_slice(&p[..n]);
                h.head.set_flat_params(&p[n..]).unwrap();
            }
            Actor::Classical(c) => c.net.set_flat_params(p).unwrap(),
        }
        let o = probe.act(&state).unwrap();
        wm * o.mean + ws * o.log_std
    })
}

// ---- GAE ----

/// `Â_t = Σ_k (γλ)^k δ_{t+k}`, summed term by term and stopping after the first done.
pub fn gae_brute_force(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let next_value = |i: usize| if i + 1 < n { values[i + 1] } else { bootstrap };
    let delta = |i: usize| {
        let live = if dones[i] { 0.0 } else { 1.0 };
        rewards[i] + gamma * next_value(i) * live - values[i]
    };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut weight = 1.0;
            for i in t..n {
                sum += weight * delta(i);
                if dones[i] {
                    break;
                }
                weight *= gamma * lambda;
            }
            sum
        })
        .collect()
}

/// Worst |Â − oracle| over `sequences` random episodes of length 1–50.
pub fn gae_worst_error(sequences: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..sequences {
        let n = rng.random_range(1..=50);
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        let bootstrap = rng.random_range(-2.0..2.0);
        let gamma = rng.random_range(0.8..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let (adv, ret) = cfgpilot::rl::gae(&rewards, &values, &dones, bootstrap, gamma, lambda).unwrap();
        let expected = gae_brute_force(&rewards, &values, &dones, bootstrap, gamma, lambda);
        for t in 0..n {
            assert_eq!(ret[t], adv[t] + values[t]);
            worst = worst.max((adv[t] - expected[t]).abs());
        }
    }
    worst
}

// ---- SSIM ----

/// Mean over stride-1 8×8 windows, with two-pass mean and (population)
/// variance in each window.
pub fn ssim_brute_force(x: &GrayImage, y: &GrayImage) -> f64 {
    let cfg = MetricConfig::default();
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    assert_eq!((c1, c2), (cfg.c1(), cfg.c2()));
    let map = |v: f64| (v + 1.0) * 127.5;
    let mut scores = Vec::new();
    for oy in 0..=x.height() - 8 {
        for ox in 0..=x.width() - 8 {
            let mut a = Vec::with_capacity(64);
            let mut b = Vec::with_capacity(64);
            for dy in 0..8 {
                for dx in 0..8 {
                    a.push(map(x.get(ox + dx, oy + dy)));
                    b.push(map(y.get(ox + dx, oy + dy)));
                }
            }
            let ma = a.iter().sum::<f64>() / 64.0;
            let mb = b.iter().sum::<f64>() / 64.0;
            let va = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / 64.0;
            let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / 64.0;
            let cov = a.iter().zip(&b).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / 64.0;
            scores.push(
                ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)),
            );
        }
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

pub fn random_image(rng: &mut ChaCha8Rng) -> GrayImage {
    GrayImage::new(16, 16, (0..256).map(|_| rng.random_range(-1.0..=1.0)).collect()).unwrap()
}
