use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cohortforge_core::ingest::reports_by_patient;
use cohortforge_core::par;
use cohortforge_core::report2vector::{vector_from_analyzed, TextResources};
use cohortforge_core::synthgen::{self, GenConfig};
use cohortforge_core::{FeatureSchema, PatientVector};

fn report_extraction(c: &mut Criterion) {
    let corpus = synthgen::generate(&GenConfig {
        n_patients: 300,
        ..GenConfig::default()
    })
    .unwrap();
    let schema = FeatureSchema::default_schema();
    let resources = TextResources::default_for(&schema);
    let by_patient = reports_by_patient(&corpus.reports);
    let onsets: Vec<_> = corpus
        .truth
        .iter()
        .filter(|t| t.in_cohort())
        .map(|t| (t.patient_id.clone(), t.onset_date))
        .collect();
    let extract = |(pid, onset): &(String, cohortforge_core::Date)| -> PatientVector {
        let analyzed = by_patient
            .get(pid.as_str())
            .into_iter()
            .flatten()
            .filter(|d| d.date <= *onset)
            .map(|d| resources.analyze(d))
            .collect();
        vector_from_analyzed(pid, analyzed, &schema, *onset)
    };

    let mut g = c.benchmark_group("report_extraction");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("sequential", onsets.len()), |b| {
        b.iter(|| black_box(par::map_seq(&onsets, extract)))
    });
    #[cfg(feature = "parallel")]
    g.bench_function(BenchmarkId::new("parallel", onsets.len()), |b| {
        b.iter(|| black_box(par::map_par(&onsets, extract)))
    });
    g.finish();
}

fn generation(c: &mut Criterion) {
    let config = GenConfig {
        n_patients: 300,
        ..GenConfig::default()
    };
    let mut g = c.benchmark_group("generation");
    g.sample_size(10);
    // generate() dispatches through par::map, so the pool size decides
    g.bench_function("one_thread", |b| {
        b.iter(|| black_box(par::with_jobs(Some(1), || synthgen::generate(&config).unwrap())))
    });
    #[cfg(feature = "parallel")]
    g.bench_function("all_threads", |b| {
        b.iter(|| black_box(par::with_jobs(None, || synthgen::generate(&config).unwrap())))
    });
    g.finish();
}

criterion_group!(benches, report_extraction, generation);
criterion_main!(benches);
