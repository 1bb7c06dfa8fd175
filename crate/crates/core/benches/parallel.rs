//! Rayon pool against a single worker on the data-parallel stages.
//! Built without the `parallel` feature only the sequential path is timed.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use clickstream::actions::{corpus_weights, BehavioralCatalog};
use clickstream::cluster::{kmeans, KMeansConfig};
use clickstream::ingest::{encode_log, parse_event_log, ParsedLog};
use clickstream::sna::qap_correlation;
use clickstream::synth::{generate_cohort, random_graph, CohortSpec};

struct Fixture {
    log: ParsedLog,
    tokens: Vec<Vec<clickstream::ingest::ClickOp>>,
    points: Vec<Vec<f64>>,
}

fn fixture() -> Fixture {
    let cohort = generate_cohort(&CohortSpec::two_archetype(400, 1)).expect("cohort");
    let log = parse_event_log(&cohort.log_text());
    let rows = encode_log(&log, 1.0).expect("encodes");
    let points = rows.iter().map(|v| clickstream::cluster::vwss_metrics(v).to_vec()).collect();
    let tokens = rows.into_iter().map(|v| v.tokens).collect();
    Fixture { log, tokens, points }
}

fn workloads(c: &mut Criterion) {
    let fx = fixture();
    let catalog = BehavioralCatalog::default();
    let (a, b) = (random_graph(60, 0.3, 1, 0), random_graph(60, 0.3, 1, 1));

    #[cfg(feature = "parallel")]
    let pools = vec![
        ("rayon", rayon::ThreadPoolBuilder::new().build().expect("pool")),
        ("single", rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool")),
    ];

    let mut run = |name: &str, f: &(dyn Fn() + Sync)| {
        let mut group = c.benchmark_group(name);
        #[cfg(feature = "parallel")]
        for (label, pool) in &pools {
            group.bench_function(BenchmarkId::from_parameter(label), |bch| bch.iter(|| pool.install(f)));
        }
        #[cfg(not(feature = "parallel"))]
        group.bench_function(BenchmarkId::from_parameter("sequential"), |bch| bch.iter(f));
        group.finish();
    };

    run("qap_1000_perms", &|| {
        black_box(qap_correlation(&a, &b, 1000, 3).expect("qap"));
    });
    run("kmeans_10_restarts", &|| {
        black_box(kmeans(&fx.points, &KMeansConfig::new(4, 7)).expect("kmeans"));
    });
    run("encode_log", &|| {
        black_box(encode_log(&fx.log, 1.0).expect("encodes"));
    });
    run("action_weights", &|| {
        black_box(corpus_weights(&fx.tokens, &catalog).expect("weights"));
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = workloads
}
criterion_main!(benches);
