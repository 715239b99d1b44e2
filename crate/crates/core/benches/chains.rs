use criterion::{criterion_group, criterion_main, Criterion};
use diffspeed::sampler::run_chains_sequential;
use diffspeed::simulate::{default_truth, simulate_panel, GeneratorConfig};
use diffspeed::{run_chains, Design, HyperParams, ModelVariant, SamplerConfig};

fn chains(c: &mut Criterion) {
    let generator = GeneratorConfig::default();
    let sim = simulate_panel(&generator, &default_truth(&generator).unwrap(), 1).unwrap();
    let design = Design::compile(&sim.panel, ModelVariant::SinceIntro).unwrap();
    let hyper = HyperParams::default();
    let config = SamplerConfig::new(500, ModelVariant::SinceIntro, 7);

    let mut group = c.benchmark_group("four_chains_500_iterations");
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(|| run_chains(&design, &hyper, &config).unwrap()));
    group.bench_function("sequential", |b| b.iter(|| run_chains_sequential(&design, &hyper, &config).unwrap()));
    group.finish();
}

criterion_group!(benches, chains);
criterion_main!(benches);
