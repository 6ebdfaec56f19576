use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subjprob_core::{
    convert_table, forecast_outcomes_all, point_forecasts, prequential_replay, reliability_bins, response_pairs,
    score_cases, AssessmentTable, BinScheme, CaseMode, CaseRecord, ElicitationPolicy, Execution, IntervalAssessment,
    QuestionSchema, Schema, ScoringRule,
};

const DISEASES: usize = 30;
const QUESTIONS: usize = 40;
const CASES: usize = 4000;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

struct Workload {
    table: AssessmentTable,
    cases: Vec<CaseRecord>,
}

fn workload() -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let diseases: Vec<String> = (0..DISEASES).map(|d| format!("d{d}")).collect();
    let questions: Vec<QuestionSchema> = (0..QUESTIONS)
        .map(|q| {
            let k = rng.gen_range(2..=5);
            QuestionSchema::new(format!("q{q}"), (0..k).map(|r| format!("r{r}")))
        })
        .collect();
    let schema = Schema::new(diseases.clone(), questions.clone());
    let mut table = AssessmentTable::new(schema);
    for d in &diseases {
        for q in &questions {
            let cell = (0..q.arity())
                .map(|_| {
                    let lo = rng.gen_range(1..=90u32);
                    let hi = lo + rng.gen_range(0..=10u32);
                    IntervalAssessment::new(f64::from(lo), f64::from(hi)).unwrap()
                })
                .collect();
            table.set_cell(d, &q.id, cell).unwrap();
        }
    }
    let cases = (0..CASES)
        .map(|i| {
            let mut case = CaseRecord::new(format!("c{i}"), &diseases[rng.gen_range(0..DISEASES)]);
            for q in &questions {
                if rng.gen_bool(0.8) {
                    case = case.with_answer(&q.id, &q.responses[rng.gen_range(0..q.arity())]);
                }
            }
            case
        })
        .collect();
    Workload { table, cases }
}

fn bench_modes(c: &mut Criterion) {
    let w = workload();
    let policy = ElicitationPolicy::default();
    let forecasts = point_forecasts(&w.table, &policy, Execution::Sequential).unwrap();
    let prior = convert_table(&w.table, &policy, Execution::Sequential).unwrap();
    let outcomes = forecast_outcomes_all(&forecasts, &w.cases, Execution::Sequential).unwrap();
    let pairs = response_pairs(&outcomes);
    let scheme = BinScheme::twelve_groups();

    let mut group = c.benchmark_group("score_cases");
    group.throughput(Throughput::Elements(outcomes.len() as u64));
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| score_cases(&forecasts, &w.cases, ScoringRule::Brier, None, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("convert_table");
    group.throughput(Throughput::Elements((DISEASES * QUESTIONS) as u64));
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| convert_table(&w.table, &policy, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("reliability_bins");
    group.throughput(Throughput::Elements(pairs.len() as u64));
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| reliability_bins(&pairs, &scheme, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("prequential_replay");
    group.sample_size(20);
    group.throughput(Throughput::Elements(outcomes.len() as u64));
    let rules = [ScoringRule::Brier, ScoringRule::Log];
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| prequential_replay(&prior, &w.cases, &rules, None, CaseMode::Lenient, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_modes);
criterion_main!(benches);
