use cmt_balance_bench::strip_scenario;
use cmt_balance_core::{
    execute_migration, pack_element, plan_transfers, unpack_element, ElementFields,
    ElementProcessorMap, GlobalElementIndex, Particle, RankEnsemble, PAYLOAD_LEN,
};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

fn bench_payload(c: &mut Criterion) {
    let mut group = c.benchmark_group("payload");
    let gid = GlobalElementIndex(7);
    let fields = ElementFields::synthetic(gid, 125);
    for &n_particles in &[0usize, 256] {
        let particles: Vec<Particle> = (0..n_particles as u64)
            .map(|id| Particle {
                id,
                position: [id as f64, 0.5, 0.5],
                velocity: [1.0, 0.0, 0.0],
                payload: vec![0.25; PAYLOAD_LEN],
            })
            .collect();
        let buf = pack_element(gid, &fields, &particles);
        group.throughput(Throughput::Bytes(buf.len() as u64));
        group.bench_function(format!("pack_{n_particles}p"), |b| {
            b.iter(|| pack_element(gid, &fields, &particles))
        });
        group.bench_function(format!("unpack_{n_particles}p"), |b| {
            b.iter(|| unpack_element(&buf).unwrap())
        });
    }
    group.finish();
}

fn bench_migration(c: &mut Criterion) {
    let (_cfg, _mesh, old, mut states) = strip_scenario(96, 8, 10_000);
    // Shift every interior boundary three elements right so each rank hands a
    // slice to its neighbor.
    let mut first: Vec<u32> = old.first_elements().to_vec();
    for f in first.iter_mut().skip(1) {
        *f = (*f + 3).min(96);
    }
    let new = ElementProcessorMap::new(first, 96).unwrap();
    let plan = plan_transfers(&old, &new).unwrap();
    let ens = RankEnsemble::new(old.np(), cmt_balance_core::ExecMode::Sequential);

    let mut group = c.benchmark_group("migration");
    group.bench_function("shift3_96el_8rk", |b| {
        b.iter_batched(
            || states.clone(),
            |mut s| execute_migration(&ens, &mut s, &plan, &new).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();

    // Keep the setup honest: the plan must actually move something.
    let report = execute_migration(&ens, &mut states, &plan, &new).unwrap();
    assert!(report.elements_moved > 0);
}

criterion_group!(benches, bench_payload, bench_migration);
criterion_main!(benches);
