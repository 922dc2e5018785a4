use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mbrkit_bench::fixture_sets;
use mbrkit_core::mbr::Tokenization;
use mbrkit_core::{
    mbr_select, mbr_select_pruned, utility_matrix, NormalizerSpec, PruneSchedule, Utility,
};

fn bleu_matrix(c: &mut Criterion) {
    let sets = fixture_sets(10);
    let utility = Utility::bleu(NormalizerSpec::basic(), Tokenization::Word).unwrap();
    c.bench_function("bleu_matrix_10_utts", |b| {
        b.iter(|| {
            for set in &sets {
                black_box(utility_matrix(set, &utility).unwrap());
            }
        })
    });
}

fn exact_vs_pruned(c: &mut Criterion) {
    let sets = fixture_sets(10);
    let utility = Utility::bleu(NormalizerSpec::basic(), Tokenization::Word).unwrap();
    let schedule = PruneSchedule::default();
    let mut group = c.benchmark_group("mbr_10_utts");
    group.bench_function("exact", |b| {
        b.iter(|| {
            for set in &sets {
                let m = utility_matrix(set, &utility).unwrap();
                black_box(mbr_select(&m, &set.weights()).unwrap());
            }
        })
    });
    group.bench_function("pruned", |b| {
        b.iter(|| {
            for set in &sets {
                let texts = set.texts();
                let prepared = utility.prepare(&set.utterance_id, &texts, None).unwrap();
                black_box(mbr_select_pruned(&prepared, &set.weights(), &schedule, 0).unwrap());
            }
        })
    });
    group.finish();
}

criterion_group!(benches, bleu_matrix, exact_vs_pruned);
criterion_main!(benches);
