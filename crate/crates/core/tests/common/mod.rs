//! Oracles and criterion checks shared by the sampler oracle tests and the
//! acceptance suite. Checks panic on failure.
#![allow(dead_code)]

use hrgsdp::cluster::Merge;
use hrgsdp::glcm::{BinSpec, CountMatrix, GlcmOptions, GrayImage, Neighborhood};
use hrgsdp::lattice::{lattice_graph, LatticeGraph, LatticeMode};
use hrgsdp::linalg::{round_latent, CarEigenbasis};
use hrgsdp::sampler::steps::*;
use hrgsdp::sampler::{run_chain_with, subjects_from_counts, AtomStore, Hyperparams, InitStrategy, ModelState, Subject, TraceRecord};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, InverseGamma};
use statrs::function::gamma::ln_gamma;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn random_cohort(t: usize, n: usize, p: usize, rng: &mut ChaCha8Rng) -> Vec<Subject> {
    (0..t)
        .map(|_| {
            let z: Vec<u64> = (0..n).map(|_| rng.random_range(0..8)).collect();
            let total = z.iter().sum();
            Subject::new(z, normal_vec(p, 1.0, rng), rng.random_range(0.5..1.5), total).unwrap()
        })
        .collect()
}

/// A state with latents strictly inside their rounding intervals.
pub fn state_for(cohort: &[Subject], labels: &[usize], thetas: Vec<Vec<f64>>, beta: Vec<f64>, rng: &mut ChaCha8Rng) -> ModelState {
    let mut atoms = AtomStore::default();
    for (j, th) in thetas.into_iter().enumerate() {
        let size = labels.iter().filter(|&&l| l == j).count();
        assert_eq!(atoms.insert(th, size), j);
    }
    let y = cohort
        .iter()
        .map(|s| s.z.iter().map(|&z| z as f64 - rng.random_range(0.01..0.99)).collect())
        .collect();
    ModelState {
        y,
        w: labels.to_vec(),
        atoms,
        beta,
        tau2: 1.3,
        sigma2: 0.7,
        rho: 0.6,
        nu: 1.5,
    }
}

pub fn car_draw(q: &DMatrix<f64>, sigma2: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let l = q.clone().cholesky().unwrap().l();
    let e = DVector::from_vec(normal_vec(q.nrows(), sigma2.sqrt(), rng));
    l.transpose().solve_upper_triangular(&e).unwrap().as_slice().to_vec()
}

pub fn dense_log_normal(x: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = x.len() as f64;
    let chol = cov.clone().cholesky().unwrap();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = (x.transpose() * chol.solve(x))[(0, 0)];
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
}

/// Physicists' Gauss-Hermite rule via the Golub-Welsch eigenproblem.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    let j = DMatrix::from_fn(m, m, |a, b| if a.abs_diff(b) == 1 { (a.max(b) as f64 / 2.0).sqrt() } else { 0.0 });
    let eig = j.symmetric_eigen();
    let w = (0..m).map(|k| std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)).collect();
    (eig.eigenvalues.as_slice().to_vec(), w)
}

/// `log int N(r; gamma theta, tau2 I) N(theta; 0, sigma2 Q^-1) dtheta` by tensor quadrature.
pub fn quadrature_log_marginal(r: &[f64], gamma: f64, tau2: f64, sigma2: f64, q: &DMatrix<f64>, m: usize) -> f64 {
    let d = r.len();
    let (x, w) = gauss_hermite(m);
    let l = (q.clone().try_inverse().unwrap() * sigma2).cholesky().unwrap().l();
    let mut idx = vec![0usize; d];
    let mut terms = Vec::with_capacity(m.pow(d as u32));
    loop {
        let node = DVector::from_iterator(d, idx.iter().map(|&i| std::f64::consts::SQRT_2 * x[i]));
        let theta = &l * node;
        let log_w: f64 = idx.iter().map(|&i| w[i].ln()).sum();
        terms.push(log_w + log_existing_weight(r, gamma, theta.as_slice(), tau2));
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln() - 0.5 * d as f64 * std::f64::consts::PI.ln()
}

pub fn two_site_precision(rho: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, -rho, -rho, 1.0])
}

pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let en = (n as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            2.0 * sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

/// Normalised CDF of an unnormalised log-density by trapezoid quadrature on a grid.
pub fn grid_cdf(log_f: impl Fn(f64) -> f64, lo: f64, hi: f64, m: usize) -> impl Fn(f64) -> f64 {
    let h = (hi - lo) / m as f64;
    let xs: Vec<f64> = (0..=m).map(|i| lo + i as f64 * h).collect();
    let lf: Vec<f64> = xs.iter().map(|&x| log_f(x)).collect();
    let max = lf.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let f: Vec<f64> = lf.iter().map(|v| if v.is_finite() { (v - max).exp() } else { 0.0 }).collect();
    let mut cum = vec![0.0; m + 1];
    for i in 1..=m {
        cum[i] = cum[i - 1] + 0.5 * h * (f[i - 1] + f[i]);
    }
    let total = cum[m];
    move |x: f64| {
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let pos = (x - lo) / h;
        let i = (pos.floor() as usize).min(m - 1);
        let frac = pos - i as f64;
        (cum[i] + frac * (cum[i + 1] - cum[i])) / total
    }
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol * b.abs().max(1.0), "{what}: {a} vs {b}");
}

pub fn dense_atom_conditional(members: &[(f64, Vec<f64>)], tau2: f64, sigma2: f64, q: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = q.nrows();
    let g2: f64 = members.iter().map(|(g, _)| g * g).sum();
    let prec = DMatrix::identity(n, n) * (g2 / tau2) + q / sigma2;
    let mut rhs = DVector::zeros(n);
    for (g, resid) in members {
        rhs += DVector::from_column_slice(resid) * (g / tau2);
    }
    let cov = prec.try_inverse().unwrap();
    (&cov * rhs, cov)
}

pub fn beta_fixture() -> (Vec<Subject>, ModelState, Hyperparams, LatticeGraph) {
    let mut r = rng(13);
    let graph = lattice_graph(3, LatticeMode::FullGrid).unwrap();
    let cohort = random_cohort(6, 9, 2, &mut r);
    let labels = [0, 0, 1, 1, 2, 2];
    let q = graph.car_matrix(0.6);
    let thetas = (0..3).map(|_| car_draw(&q, 0.7, &mut r)).collect();
    let state = state_for(&cohort, &labels, thetas, vec![0.4, -0.3], &mut r);
    let mut hp = Hyperparams::vague(2);
    hp.beta0 = vec![0.5, -1.0];
    hp.sigma_beta = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    hp.a_tau = 2.0;
    hp.b_tau = 1.5;
    hp.a_sigma = 3.0;
    hp.b_sigma = 0.5;
    (cohort, state, hp, graph)
}

pub fn check_inverse_gamma_draws(shape: f64, rate: f64, mut draw: impl FnMut() -> f64) {
    let draws = 100_000;
    let mut xs: Vec<f64> = (0..draws).map(|_| draw()).collect();
    let mean = rate / (shape - 1.0);
    let var = mean * mean / (shape - 2.0);
    let m = xs.iter().sum::<f64>() / draws as f64;
    assert!((m - mean).abs() < 4.0 * (var / draws as f64).sqrt(), "mean {m} vs {mean}");
    let ig = InverseGamma::new(shape, rate).unwrap();
    let d = ks_statistic(&mut xs, |x| ig.cdf(x));
    assert!(ks_p_value(d, draws) > 0.01, "KS D = {d}");
}

pub fn atoms_only_state(thetas: Vec<Vec<f64>>, sigma2: f64, rho: f64, nu: f64) -> ModelState {
    let mut atoms = AtomStore::default();
    let k = thetas.len();
    for th in thetas {
        atoms.insert(th, 1);
    }
    ModelState {
        y: vec![Vec::new(); k],
        w: (0..k).collect(),
        atoms,
        beta: Vec::new(),
        tau2: 1.0,
        sigma2,
        rho,
        nu,
    }
}

pub fn chain_hp(p: usize, n_iter: usize, n_burn: usize, seed: u64) -> Hyperparams {
    let mut hp = Hyperparams::vague(p);
    hp.n_iter = n_iter;
    hp.n_burn = n_burn;
    hp.seed = seed;
    hp
}

pub fn two_group_counts(per_group: usize, k: usize, seed: u64) -> (Vec<Vec<u64>>, Vec<usize>) {
    let mut r = rng(seed);
    let n = k * k;
    let mut counts = Vec::new();
    let mut labels = Vec::new();
    for g in 0..2 {
        for _ in 0..per_group {
            let z = (0..n)
                .map(|i| {
                    let high = if g == 0 { i < n / 2 } else { i >= n / 2 };
                    let rate: f64 = if high { 30.0 } else { 2.0 };
                    (rate + rate.sqrt() * r.sample::<f64, _>(StandardNormal)).round().max(0.0) as u64
                })
                .collect();
            counts.push(z);
            labels.push(g);
        }
    }
    (counts, labels)
}

pub fn co_clustering(records: &[TraceRecord], t: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(t, t);
    for rec in records {
        for a in 0..t {
            for b in 0..t {
                if rec.labels[a] == rec.labels[b] {
                    m[(a, b)] += 1.0;
                }
            }
        }
    }
    m / records.len() as f64
}

/// Every ordered pair of ROI pixels whose displacement is an allowed offset.
pub fn glcm_pair_enumeration(image: &GrayImage, bins: &BinSpec, opts: GlcmOptions) -> CountMatrix {
    let s = opts.offset as isize;
    let mut m = CountMatrix::zeros(bins.levels());
    let cells: Vec<(usize, usize)> = (0..image.rows())
        .flat_map(|r| (0..image.cols()).map(move |c| (r, c)))
        .filter(|&(r, c)| image.is_masked_in(r, c))
        .collect();
    for &(r1, c1) in &cells {
        for &(r2, c2) in &cells {
            let (dr, dc) = (r2 as isize - r1 as isize, c2 as isize - c1 as isize);
            let rook = (dr == 0 && dc.abs() == s) || (dc == 0 && dr.abs() == s);
            let diagonal = dr.abs() == s && dc.abs() == s;
            let keep = match opts.neighborhood {
                Neighborhood::Four => rook,
                Neighborhood::Eight => rook || diagonal,
            };
            if keep {
                let (a, b) = (bins.bin(image.pixel(r1, c1)), bins.bin(image.pixel(r2, c2)));
                m.set(a, b, m.get(a, b) + 1);
            }
        }
    }
    m
}

/// Ward by brute force: every centroid distance recomputed at every step.
pub fn naive_ward(points: &DMatrix<f64>) -> Vec<Merge> {
    let t = points.nrows();
    let mut slots: Vec<Option<(Vec<usize>, usize)>> = (0..t).map(|i| Some((vec![i], i))).collect();
    let mut merges = Vec::new();
    let centroid = |m: &[usize]| -> Vec<f64> {
        (0..points.ncols()).map(|k| m.iter().map(|&r| points[(r, k)]).sum::<f64>() / m.len() as f64).collect()
    };
    for step in 0..t - 1 {
        let mut best = (0, 0, f64::INFINITY);
        for i in 0..t {
            for j in (i + 1)..t {
                if let (Some((a, _)), Some((b, _))) = (&slots[i], &slots[j]) {
                    let sq: f64 = centroid(a).iter().zip(centroid(b)).map(|(x, y)| (x - y) * (x - y)).sum();
                    let (na, nb) = (a.len() as f64, b.len() as f64);
                    let cost = 2.0 * na * nb / (na + nb) * sq;
                    if cost < best.2 {
                        best = (i, j, cost);
                    }
                }
            }
        }
        let (i, j, h) = best;
        let (mj, idj) = slots[j].take().unwrap();
        let (mi, idi) = slots[i].as_mut().unwrap();
        merges.push(Merge { a: (*idi).min(idj), b: (*idi).max(idj), height: h, size: mi.len() + mj.len() });
        mi.extend(mj);
        *idi = t + step;
    }
    merges
}

pub fn new_cluster_weight_matches_gauss_hermite_quadrature() {
    let mut r = rng(5);
    let triangle = lattice_graph(2, LatticeMode::UniqueTriangle).unwrap();
    assert_eq!(triangle.len(), 3);
    for case in 0..20 {
        let n = if case < 10 { 2 } else { 3 };
        let rho = r.random_range(0.0..0.8);
        let q = if n == 2 { two_site_precision(rho) } else { triangle.car_matrix(rho) };
        let gamma = r.random_range(0.5..1.2);
        let tau2: f64 = r.random_range(1.0..3.0);
        let sigma2 = r.random_range(0.3..1.5);
        let nu = r.random_range(0.2..4.0);
        let theta0 = car_draw(&q, sigma2, &mut r);
        let resid: Vec<f64> = theta0.iter().map(|t| gamma * t + tau2.sqrt() * r.sample::<f64, _>(StandardNormal)).collect();

        let basis = CarEigenbasis::from_precision(q.clone());
        let got = log_new_cluster_weight(&resid, gamma, tau2, sigma2, nu, &basis);
        let nodes = if n == 2 { 120 } else { 60 };
        let want = nu.ln() + quadrature_log_marginal(&resid, gamma, tau2, sigma2, &q, nodes);
        let rel = (got - want).exp() - 1.0;
        assert!(rel.abs() < 1e-6, "case {case} (n={n}): relative error {rel:e}");
    }
}

pub fn atom_conditional_matches_dense_solve() {
    let mut r = rng(8);
    for graph in [lattice_graph(4, LatticeMode::FullGrid).unwrap(), lattice_graph(4, LatticeMode::UniqueTriangle).unwrap()] {
        for members in [1usize, 3] {
            let rho = r.random_range(0.0..0.99);
            let (tau2, sigma2) = (r.random_range(0.2..3.0), r.random_range(0.2..3.0));
            let data: Vec<(f64, Vec<f64>)> = (0..members).map(|_| (r.random_range(0.5..2.0), normal_vec(graph.len(), 1.5, &mut r))).collect();
            let basis = CarEigenbasis::new(&graph, rho);
            let cond = AtomConditional::new(data.iter().map(|(g, x)| (*g, x.as_slice())), tau2, sigma2, &basis);
            let (mean, cov) = dense_atom_conditional(&data, tau2, sigma2, &graph.car_matrix(rho));
            for (a, b) in cond.mean(&basis).iter().zip(mean.iter()) {
                assert!((a - b).abs() < 1e-10, "mean {a} vs {b}");
            }
            assert!((cond.covariance(&basis) - cov).abs().max() < 1e-10);
        }
    }
}

pub fn atom_draws_have_conditional_moments() {
    let mut r = rng(12);
    let graph = lattice_graph(2, LatticeMode::FullGrid).unwrap();
    let basis = CarEigenbasis::new(&graph, 0.7);
    let data = vec![(1.2, normal_vec(4, 1.0, &mut r))];
    let cond = AtomConditional::new([(1.2, data[0].1.as_slice())], 0.5, 0.8, &basis);
    let (mean, cov) = dense_atom_conditional(&data, 0.5, 0.8, &graph.car_matrix(0.7));
    let draws = 100_000;
    let mut sum = DVector::zeros(4);
    for _ in 0..draws {
        sum += DVector::from_vec(cond.draw(&basis, &mut r));
    }
    for i in 0..4 {
        let m = sum[i] / draws as f64;
        assert!((m - mean[i]).abs() < 4.0 * (cov[(i, i)] / draws as f64).sqrt());
    }
}

pub fn beta_conditional_matches_stacked_least_squares() {
    let (cohort, state, hp, _) = beta_fixture();
    let prior_prec = hp.sigma_beta.clone().try_inverse().unwrap();
    let mut prec = prior_prec.clone();
    let mut rhs = &prior_prec * DVector::from_column_slice(&hp.beta0);
    for (t, s) in cohort.iter().enumerate() {
        let x = DMatrix::from_fn(s.sites(), 2, |_, k| s.x[k]);
        let target = DVector::from_iterator(s.sites(), state.y[t].iter().zip(state.theta_of(t)).map(|(y, th)| y - s.gamma * th));
        prec += x.transpose() * &x / state.tau2;
        rhs += x.transpose() * target / state.tau2;
    }
    let cov = prec.try_inverse().unwrap();
    let mean = &cov * rhs;
    let (got_mean, got_cov) = beta_conditional(&state, &cohort, &hp).unwrap();
    assert!((got_mean - mean).abs().max() < 1e-10);
    assert!((got_cov - cov).abs().max() < 1e-10);
}

pub fn beta_draws_match_conditional_moments() {
    let (cohort, mut state, hp, _) = beta_fixture();
    let (mean, cov) = beta_conditional(&state, &cohort, &hp).unwrap();
    let mut r = rng(14);
    let draws = 100_000;
    let (mut s1, mut s2) = (DVector::zeros(2), DVector::zeros(2));
    for _ in 0..draws {
        update_beta(&mut state, &cohort, &hp, &mut r).unwrap();
        let b = DVector::from_column_slice(&state.beta);
        s2 += b.component_mul(&b);
        s1 += b;
    }
    let n = draws as f64;
    for k in 0..2 {
        let m = s1[k] / n;
        let v = s2[k] / n - m * m;
        assert!((m - mean[k]).abs() < 4.0 * (cov[(k, k)] / n).sqrt(), "beta_{k} mean {m} vs {}", mean[k]);
        assert!((v - cov[(k, k)]).abs() < 4.0 * cov[(k, k)] * (2.0 / n).sqrt(), "beta_{k} var {v} vs {}", cov[(k, k)]);
    }
}

pub fn variance_conditionals_match_dense_sums() {
    let (cohort, state, hp, graph) = beta_fixture();
    let mut ss = 0.0;
    for (t, s) in cohort.iter().enumerate() {
        let x = DMatrix::from_fn(s.sites(), 2, |_, k| s.x[k]);
        let e = DVector::from_column_slice(&state.y[t]) - x * DVector::from_column_slice(&state.beta) - DVector::from_column_slice(state.theta_of(t)) * s.gamma;
        ss += e.norm_squared();
    }
    let (shape, rate) = tau2_conditional(&state, &cohort, &hp);
    assert_eq!(shape, hp.a_tau + 27.0);
    assert_close(rate, hp.b_tau + ss / 2.0, 1e-10, "tau2 rate");

    let q = graph.car_matrix(state.rho);
    let quad: f64 = state.atoms.iter().map(|(_, a)| {
        let th = DVector::from_column_slice(&a.theta);
        (th.transpose() * &q * &th)[(0, 0)]
    }).sum();
    let (shape, rate) = sigma2_conditional(&state, &graph, &hp);
    assert_eq!(shape, hp.a_sigma + 13.5);
    assert_close(rate, hp.b_sigma + quad / 2.0, 1e-10, "sigma2 rate");
}

pub fn tau2_draws_follow_inverse_gamma() {
    let (cohort, mut state, hp, _) = beta_fixture();
    let (shape, rate) = tau2_conditional(&state, &cohort, &hp);
    let mut r = rng(15);
    check_inverse_gamma_draws(shape, rate, || {
        update_tau2(&mut state, &cohort, &hp, &mut r);
        state.tau2
    });
}

pub fn sigma2_draws_follow_inverse_gamma() {
    let (_, mut state, hp, graph) = beta_fixture();
    let (shape, rate) = sigma2_conditional(&state, &graph, &hp);
    let mut r = rng(16);
    check_inverse_gamma_draws(shape, rate, || {
        update_sigma2(&mut state, &graph, &hp, &mut r);
        state.sigma2
    });
}

pub fn rho_chain_is_stationary_at_its_conditional() {
    let mut r = rng(18);
    let graph = lattice_graph(3, LatticeMode::FullGrid).unwrap();
    let q = graph.car_matrix(0.6);
    let thetas = (0..3).map(|_| car_draw(&q, 1.0, &mut r)).collect();
    let mut state = atoms_only_state(thetas, 1.0, 0.5, 1.0);
    let target = RhoTarget::new(&state, &graph);
    let cdf = grid_cdf(|x| target.log_density(x), 0.0, 1.0, 200_000);

    let (sweeps, thin) = (100_000, 20);
    let mut kept = Vec::with_capacity(sweeps / thin);
    for i in 0..sweeps {
        update_rho(&mut state, &graph, &mut r);
        if i % thin == thin - 1 {
            kept.push(state.rho);
        }
    }
    let n = kept.len();
    let d = ks_statistic(&mut kept, cdf);
    let p = ks_p_value(d, n);
    assert!(p > 0.01, "rho KS p = {p}");
}

pub fn nu_chain_is_stationary_at_its_conditional() {
    let mut hp = Hyperparams::vague(1);
    hp.a_nu = 2.0;
    hp.b_nu = 1.0;
    let (k, subjects) = (4usize, 20usize);
    let mut state = atoms_only_state(vec![vec![0.0]; k], 1.0, 0.5, 1.0);
    let log_post = |nu: f64| {
        if nu <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (hp.a_nu + k as f64 - 1.0) * nu.ln() - hp.b_nu * nu + ln_gamma(nu) - ln_gamma(nu + subjects as f64)
    };
    let cdf = grid_cdf(log_post, 0.0, 80.0, 400_000);

    let mut r = rng(19);
    let (sweeps, thin) = (100_000, 10);
    let mut kept = Vec::with_capacity(sweeps / thin);
    for i in 0..sweeps {
        update_nu(&mut state, subjects, &hp, &mut r);
        if i % thin == thin - 1 {
            kept.push(state.nu);
        }
    }
    let n = kept.len();
    let d = ks_statistic(&mut kept, cdf);
    let p = ks_p_value(d, n);
    assert!(p > 0.01, "nu KS p = {p}");
}

pub fn invariants_hold_every_sweep_from_either_start() {
    let (counts, _) = two_group_counts(6, 3, 20);
    let cohort = subjects_from_counts(&counts, false).unwrap();
    let graph = lattice_graph(3, LatticeMode::FullGrid).unwrap();
    for init in [InitStrategy::Singletons, InitStrategy::OneCluster] {
        let mut hp = chain_hp(1, 500, 250, 3);
        hp.init = init;
        let mut seen = 0;
        run_chain_with(&cohort, &graph, &hp, |_, state| {
            state.check_invariants(&cohort)?;
            for (s, y) in cohort.iter().zip(&state.y) {
                assert!(s.z.iter().zip(y).all(|(&z, &yi)| round_latent(yi) == z));
            }
            let sizes: usize = state.atoms.iter().map(|(_, a)| a.size).sum();
            assert_eq!(sizes, cohort.len());
            for (label, atom) in state.atoms.iter() {
                assert_eq!(state.w.iter().filter(|&&w| w == label).count(), atom.size);
            }
            assert!(state.tau2 > 0.0 && state.sigma2 > 0.0 && state.nu > 0.0);
            assert!(state.rho > 0.0 && state.rho < 1.0);
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 500);
    }
}
