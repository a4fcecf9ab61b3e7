use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use roadcourse::config::PipelineConfig;
use roadcourse::detection::detect;
use roadcourse::image::GrayImage;
use roadcourse::nn::{build_pyramid, ConvVariant, Network, Topology};
use roadcourse::pipeline::{Pipeline, RunOptions};
use roadcourse::sim::{FrameSource, Preset, Scenario, ScenarioConfig};

fn scenario(frames: usize) -> Scenario {
    Scenario::generate(&ScenarioConfig { frames, ..ScenarioConfig::preset(Preset::A, 3) }).unwrap()
}

fn dense_inference(c: &mut Criterion) {
    let t = Topology::new(2, 1, ConvVariant::Triple3, 8).unwrap();
    let net = Network::<f32>::gaussian(&t, 0.1, 1);
    let img = GrayImage::from_fn(96, 64, |r, c| ((r * 7 + c * 13) % 251) as u8);
    let pyr = build_pyramid(&img, &t).unwrap();
    c.bench_function("nn/dense_96x64", |b| b.iter(|| net.forward_dense(black_box(&pyr)).unwrap()));
}

fn detection(c: &mut Criterion) {
    let scn = scenario(1);
    let f = scn.frame(0).unwrap();
    let cfg = PipelineConfig::default();
    c.bench_function("detection/frame", |b| {
        b.iter(|| detect(black_box(&f.labels_noisy), &cfg.camera, &cfg.detection).unwrap())
    });
}

fn pipeline_step(c: &mut Criterion) {
    let scn = scenario(40);
    let cfg = PipelineConfig::default();
    let frames: Vec<_> = (0..40).map(|i| scn.frame(i).unwrap()).collect();
    // warm the grid and filter, then time one more frame
    let warm = || {
        let mut p = Pipeline::new(&cfg, &scn.shape_points, RunOptions::default()).unwrap();
        for f in &frames[..39] {
            p.step(f).unwrap();
        }
        p
    };
    c.bench_function("pipeline/step", |b| {
        b.iter_batched(warm, |mut p| p.step(black_box(&frames[39])).unwrap(), BatchSize::LargeInput)
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = dense_inference, detection, pipeline_step
}
criterion_main!(benches);
