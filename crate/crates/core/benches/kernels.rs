//! Rayon backend against a single-thread pool on the hot kernels. Build with
//! `--no-default-features` to time the sequential code path itself.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use dualseg::autograd::{ConvSpec, Tape};
use dualseg::metrics::asd;
use dualseg::network::attention::dual_attention;
use dualseg::network::{init_params, Forward, Mode, SegNetConfig};
use dualseg::tensor::Tensor;
use dualseg::training::segment;
use dualseg::volume::synth_phantom;

fn random(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Runs `f` once on the global pool and once inside a one-thread pool.
fn both<F: Fn() + Sync>(c: &mut Criterion, group: &str, f: F) {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    let label = if dualseg::par::is_parallel() { "rayon" } else { "sequential-build" };
    g.bench_function(BenchmarkId::new(label, rayon::current_num_threads()), |b| b.iter(&f));
    g.bench_function(BenchmarkId::new("single-thread-pool", 1), |b| b.iter(|| single.install(&f)));
    g.finish();
}

fn conv(c: &mut Criterion) {
    let x = random(&[2, 16, 32, 32, 32], 1);
    let w = random(&[16, 16, 3, 3, 3], 2);
    let spec = ConvSpec::same(3, 1);
    both(c, "conv3d_forward", || {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let wv = t.constant(w.clone());
        black_box(t.conv3d(xv, wv, None, spec).unwrap());
    });
    both(c, "conv3d_forward_backward", || {
        let mut t = Tape::new();
        let xv = t.param(x.clone());
        let wv = t.param(w.clone());
        let y = t.conv3d(xv, wv, None, spec).unwrap();
        let l = t.sum(y);
        t.backward(l).unwrap();
        black_box(t.grad(wv));
    });
}

fn attention(c: &mut Criterion) {
    let cfg = SegNetConfig::default();
    let params = init_params(&cfg, 0);
    let x = random(&[2, cfg.channels(cfg.depth), 4, 4, 4], 3);
    let prefix = format!("attn{}", cfg.depth);
    both(c, "dual_attention_bottleneck", || {
        let mut f = Forward::inference(&params, Mode::Eval, cfg.bn_eps, cfg.bn_momentum);
        let xv = f.input(x.clone());
        black_box(dual_attention(&mut f, &prefix, xv).unwrap());
    });
}

fn distances(c: &mut Criterion) {
    let (_, a) = synth_phantom(1, [64; 3], 0.08).unwrap();
    let (_, b) = synth_phantom(2, [64; 3], 0.08).unwrap();
    both(c, "asd_64", || {
        black_box(asd(&a, &b, 2).unwrap());
    });
}

fn inference(c: &mut Criterion) {
    let cfg = SegNetConfig::reduced(2, 8);
    let params = init_params(&cfg, 0);
    let (v, _) = synth_phantom(3, [48; 3], 0.08).unwrap();
    both(c, "segment_48_patch32_stride16", || {
        black_box(segment(&v, &params, &cfg, 32, 16).unwrap());
    });
}

criterion_group!(benches, conv, attention, distances, inference);
criterion_main!(benches);
