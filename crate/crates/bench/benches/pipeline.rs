use criterion::{black_box, criterion_group, criterion_main, Criterion};

use ncdc_core::align::configure_by_name;
use ncdc_core::codec::{load, save};
use ncdc_core::eval::{eval, init_params};
use ncdc_core::examples;
use ncdc_core::hypergraph::{extract, to_hypergraph};
use ncdc_core::rewrite::{rewrite, Rule};
use ncdc_core::{Datatype, Term, TensorValue};

fn configured_attention() -> Term {
    let t = examples::attention().unwrap();
    let pairs = [
        ("q".to_string(), 16u64),
        ("x".to_string(), 16u64),
        ("h".to_string(), 4u64),
        ("d".to_string(), 32u64),
    ];
    configure_by_name(&t, &pairs).unwrap()
}

fn inputs_for(t: &Term) -> Vec<TensorValue> {
    t.dom()
        .unwrap()
        .iter()
        .map(|o| {
            let sizes = o.shape.sizes().unwrap();
            let n: u64 = sizes.iter().product();
            let data = (0..n).map(|i| (i as f64).sin()).collect();
            TensorValue::from_f64(Datatype::Real, sizes, data).unwrap()
        })
        .collect()
}

fn bench_eval(c: &mut Criterion) {
    let t = configured_attention();
    let params = init_params(0, &t).unwrap();
    let inputs = inputs_for(&t);
    c.bench_function("eval attention 16x16x4x32", |b| {
        b.iter(|| eval(black_box(&t), black_box(&inputs), &params).unwrap())
    });
}

fn bench_rewrite(c: &mut Criterion) {
    let t = configured_attention();
    let g = to_hypergraph(&t).unwrap();
    let rules = [Rule::Fuse, Rule::Cleanup, Rule::Yoneda];
    c.bench_function("rewrite attention", |b| {
        b.iter(|| rewrite(black_box(&g), &rules, 500).steps)
    });
    c.bench_function("extract attention", |b| {
        let normal = rewrite(&g, &rules, 500).graph;
        b.iter(|| extract(black_box(&normal)).unwrap())
    });
}

fn bench_codec(c: &mut Criterion) {
    let t = configured_attention();
    let text = save(&t);
    c.bench_function("save attention", |b| b.iter(|| save(black_box(&t))));
    c.bench_function("load attention", |b| b.iter(|| load(black_box(&text)).unwrap()));
}

criterion_group!(benches, bench_eval, bench_rewrite, bench_codec);
criterion_main!(benches);
