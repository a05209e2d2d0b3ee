use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use vuclust::data::{synthesize_unaligned, MultiViewDataset};
use vuclust::model::SolverConfig;
use vuclust::solver::fit;
use vuclust::Mat;
use std::time::Instant;

fn main() {
    let mut worst: f64 = f64::NEG_INFINITY;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial * 7 + 1);
        let v = 1 + (trial as usize % 3);
        let n = 50 + rng.random_range(0..351);
        let dims: Vec<usize> = (0..v).map(|_| 6 + rng.random_range(0..15)).collect();
        let min_d = *dims.iter().min().unwrap();
        let k = 2 + rng.random_range(0..4usize);
        let m = k + rng.random_range(0..(min_d - k + 1).min(4));
        let d_l = m + rng.random_range(0..(min_d - m + 1));
        let rho = [0.0, 0.3, 0.7, 1.0][trial as usize % 4];
        let views: Vec<Mat> = dims.iter().map(|&d| Mat::from_fn(d, n, |_, _| StandardNormal.sample(&mut rng))).collect();
        let aligned = MultiViewDataset::aligned(views, None).unwrap();
        let ds = synthesize_unaligned(&aligned, rho, trial).unwrap();
        let mut c = SolverConfig::for_clusters(k);
        c.anchors = m;
        c.latent_dim = d_l;
        c.seed = trial;
        c.mu = [1e-3, 1e-2, 1e-1, 1.0][rng.random_range(0..4usize)];
        c.alpha = [1.1, 1.5, 2.0][rng.random_range(0..3usize)];
        let t0 = Instant::now();
        let result = fit(&ds, &c).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let objs = result.trace.objectives();
        let mut w = f64::NEG_INFINITY;
        for pair in objs.windows(2) {
            w = w.max((pair[1] - pair[0]) / pair[0]);
        }
        worst = worst.max(w);
        println!("trial {trial:2}: v={v} n={n:3} k={k} m={m:2} dl={d_l:2} rho={rho} mu={} a={}: iters {:2} {secs:.2}s worst-rel-rise {w:.2e}", c.mu, c.alpha, objs.len());
    }
    println!("WORST: {worst:.3e}");
}
