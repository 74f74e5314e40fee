use biaseval_core::analysis::{spearman, PermutationOptions};
use biaseval_core::lexmetrics::{mattr_batch, tokenize, MattrConfig};
use biaseval_core::ranking::{ilsr, ComparisonGraph, IlsrOptions};
use biaseval_core::{Execution, Language};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bench_spearman(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<Option<f64>> = (0..195).map(|_| Some(rng.random())).collect();
    let y: Vec<Option<f64>> = x.iter().map(|v| Some(v.unwrap() + rng.random::<f64>())).collect();
    let mut group = c.benchmark_group("spearman_permutation_10k");
    for (name, exec) in MODES {
        let opts = PermutationOptions {
            exec,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| spearman(&x, &y, opts).unwrap())
        });
    }
    group.finish();
}

fn bench_ilsr(c: &mut Criterion) {
    // 780 items, 11 700 comparisons: the size of a default full run.
    let n = 780;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ids: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
    let strength: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut graph = ComparisonGraph::new(ids.iter().cloned());
    graph.set_smoothing(0.01).unwrap();
    for _ in 0..11_700 {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let p = 1.0 / (1.0 + (strength[b] - strength[a]).exp());
        let (w, l) = if rng.random::<f64>() < p { (a, b) } else { (b, a) };
        graph.add_win(&ids[w], &ids[l], 1.0).unwrap();
    }
    let mut group = c.benchmark_group("ilsr_780");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = IlsrOptions {
            exec,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ilsr(&graph, opts).unwrap())
        });
    }
    group.finish();
}

fn bench_mattr(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let words: Vec<String> = (0..400).map(|i| format!("w{i}")).collect();
    let seqs: Vec<_> = (0..2340)
        .map(|_| {
            let body: Vec<&str> = (0..300).map(|_| words[rng.random_range(0..words.len())].as_str()).collect();
            tokenize(&body.join(" "), Language::En)
        })
        .collect();
    let mut group = c.benchmark_group("mattr_batch_2340");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| mattr_batch(&seqs, MattrConfig::default(), exec))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_spearman, bench_ilsr, bench_mattr);
criterion_main!(benches);
