use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use melab_core::harness::{gen_zipf_parallel_corpus, ZipfCorpusConfig};
use melab_core::models::{ConvNetClassifier, ConvNetConfig, MlpClassifier, MlpConfig, OptimizerConfig, OptimizerState};
use melab_core::novelty::{power_law_stream, stream_mt_novelty, ClassManifest, NoveltyConfig};
use melab_core::{RandomStream, Tape, Tensor};

fn matmul(c: &mut Criterion) {
    let a = Tensor::<f32>::from_fn(&[128, 256], |i| (i % 7) as f32 * 0.1);
    let b = Tensor::<f32>::from_fn(&[256, 128], |i| (i % 5) as f32 * 0.1);
    c.bench_function("matmul 128x256x128 forward+backward", |bench| {
        bench.iter(|| {
            let mut t = Tape::new();
            let (x, y) = (t.leaf(a.clone()), t.leaf(b.clone()));
            let m = t.matmul(x, y).unwrap();
            let s = t.sum(m);
            black_box(t.backward(s).unwrap());
        })
    });
}

fn mlp_epoch(c: &mut Criterion) {
    let ids: Vec<usize> = (0..90).collect();
    let targets: Vec<usize> = (0..90).rev().collect();
    c.bench_function("mlp full-batch step (90 items)", |bench| {
        bench.iter_batched(
            || {
                let m = MlpClassifier::<f32>::new(MlpConfig::default(), &RandomStream::new(0, "bench")).unwrap();
                let opt = OptimizerState::new(OptimizerConfig::adam(1e-3), &m.store);
                (m, opt)
            },
            |(mut m, mut opt)| {
                let mut t = Tape::new();
                let lp = m.forward(&mut t, &ids, true).unwrap();
                let l = t.nll_loss(lp, &targets).unwrap();
                let g = t.backward(l).unwrap();
                m.store.zero_grads();
                g.accumulate_into(&t, &mut m.store);
                opt.step(&mut m.store).unwrap();
            },
            BatchSize::SmallInput,
        )
    });
}

fn convnet_step(c: &mut Criterion) {
    let cfg = ConvNetConfig { classes: 100, ..ConvNetConfig::default() };
    let mut m = ConvNetClassifier::<f32>::new(cfg, &RandomStream::new(0, "bench")).unwrap();
    let mut opt = OptimizerState::new(OptimizerConfig::adam(1e-3), &m.store);
    let pixels: Vec<f32> = (0..16 * 28 * 28).map(|i| (i % 13) as f32 / 13.0).collect();
    let labels: Vec<usize> = (0..16).collect();
    c.bench_function("convnet train step (batch 16)", |bench| {
        bench.iter(|| black_box(m.train_step(&mut opt, &pixels, &labels, None).unwrap()))
    });
}

fn novelty(c: &mut Criterion) {
    let cfg = ZipfCorpusConfig { sentences: 5000, ..ZipfCorpusConfig::default() };
    let corpus = gen_zipf_parallel_corpus(&cfg, 0).unwrap();
    let ncfg = NoveltyConfig { n_shuffles: 4, ..NoveltyConfig::default() };
    c.bench_function("mt novelty, 5000 sentences x 4 shuffles", |bench| {
        bench.iter(|| black_box(stream_mt_novelty(&corpus, &ncfg, &RandomStream::new(0, "bench")).unwrap()))
    });
    let manifest = ClassManifest::uniform(1623, 20);
    c.bench_function("power-law stream, 100k draws", |bench| {
        bench.iter(|| black_box(power_law_stream(&manifest, 1.5, 100_000, &mut RandomStream::new(0, "bench")).unwrap()))
    });
}

criterion_group!(benches, matmul, mlp_epoch, convnet_step, novelty);
criterion_main!(benches);
