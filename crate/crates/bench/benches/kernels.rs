use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gridform_core::analysis::{run_fault, FaultSetup};
use gridform_core::mpc::solve;
use gridform_core::phasor::theta_sat;
use gridform_core::plant::step;
use gridform_core::{
    ApcState, ControlInput, ControllerRef, GridCondition, Mode, MpcConfig, MpcProblem, SystemParams,
};

fn phasor(c: &mut Criterion) {
    let p = SystemParams::default();
    let grid = GridCondition::lossless(1.0, 0.46);
    c.bench_function("theta_sat", |b| {
        b.iter(|| theta_sat(black_box(1.01), black_box(&grid), &p, black_box(1.0)).unwrap())
    });
}

fn plant(c: &mut Criterion) {
    let p = SystemParams::default();
    let grid = GridCondition::lossless(1.0, 0.46);
    let state = ApcState::new(1.2, 1.004, Mode::Saturated);
    c.bench_function("plant_step", |b| {
        b.iter(|| {
            step(
                black_box(&state),
                &ControlInput::ZERO,
                &grid,
                &p,
                5e-4,
                1.01,
            )
            .unwrap()
        })
    });
}

fn mpc(c: &mut Criterion) {
    let params = SystemParams::default();
    let problem = MpcProblem {
        theta0: 1.49,
        omega0: 1.0066,
        delta_theta_c0: 0.0,
        delta_p_ref0: 0.0,
        grid: GridCondition::lossless(1.0, 0.46),
        params,
        v_ref: 1.01,
        config: MpcConfig::for_params(&params),
    };
    c.bench_function("mpc_solve_k10", |b| {
        b.iter(|| solve(black_box(&problem)).unwrap())
    });
}

fn closed_loop(c: &mut Criterion) {
    let p = SystemParams::default();
    let setup = FaultSetup::default();
    let mut group = c.benchmark_group("fault_run_450ms");
    group.sample_size(10);
    for name in ["original", "compensation", "mpc"] {
        let strategy = ControllerRef::from_name(name, &p).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| run_fault(&setup, &strategy, &p, 0.45).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, phasor, plant, mpc, closed_loop);
criterion_main!(benches);
