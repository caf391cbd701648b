use etc_core::config::RunConfig;
use etc_core::plant::{EventSystem, LinearPlant, NonlinearProblem, Plant};
use etc_core::sim::{
    first_execution_time, performance_bound_check, simulate, RunStatus, SimConfig,
};
use etc_core::stats::{circle_initial_conditions, run_cell, BatchSpec, GeneratorSpec};
use etc_core::triggers::{DynamicGenerator, StaticGenerator};

fn plant() -> LinearPlant {
    LinearPlant::benchmark().with_kappa(0.48).unwrap()
}

#[test]
fn static_run_from_reference_state() {
    let gen = StaticGenerator::new(0.001).unwrap().into();
    let traj = simulate(&plant(), &gen, &[10.0, 0.0], &SimConfig::default()).unwrap();
    let gaps = traj.inter_execution_times();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    // same order of magnitude as the reference batch mean of 0.0031 s
    assert!(mean > 0.001 && mean < 0.01, "{mean}");
    assert_eq!(traj.status, RunStatus::Completed);
}

#[test]
fn bound_holds_for_matched_lambda() {
    let p = plant();
    let gen = DynamicGenerator::linear(0.1, 1.0, 0.9 * 0.48).unwrap().into();
    let traj = simulate(&p, &gen, &[10.0, 0.0], &SimConfig::default()).unwrap();
    let rep = performance_bound_check(&traj, 0.1, 0.48);
    assert!(rep.max_relative_violation <= 1e-6);
    assert!(rep.max_v_minus_w <= 0.0);
    let st = StaticGenerator::new(0.1).unwrap().into();
    let traj = simulate(&p, &st, &[10.0, 0.0], &SimConfig::default()).unwrap();
    assert!(performance_bound_check(&traj, 0.1, 0.48).max_relative_violation <= 1e-6);
}

#[test]
fn every_reference_cell_converges() {
    let mut batch = BatchSpec::reference(plant());
    batch.initial_conditions = circle_initial_conditions(10.0, 5, 2).unwrap();
    for spec in batch.generators.clone() {
        let cell = run_cell(&batch, &spec);
        let m = cell.monitors.unwrap();
        assert!(m.max_final_v_ratio <= 0.05, "{}: {}", spec.label(), m.max_final_v_ratio);
        assert!(cell.stats.is_ok());
    }
}

#[test]
fn theta_zero_dynamic_never_fires_before_static() {
    let p = plant();
    let cfg = SimConfig::default();
    for x0 in circle_initial_conditions(7.0, 12, 2).unwrap() {
        for sigma in [0.001, 0.1] {
            let ts = first_execution_time(&p, &StaticGenerator::new(sigma).unwrap().into(), &x0, 0.0, &cfg)
                .unwrap();
            let td = first_execution_time(
                &p,
                &DynamicGenerator::with_matched_lambda(sigma, 0.0, 0.48).unwrap().into(),
                &x0,
                0.0,
                &cfg,
            )
            .unwrap();
            assert!(td.time + 1e-10 >= ts.time);
        }
    }
}

#[test]
fn nonlinear_plants_run_through_the_enum() {
    let cubic: Plant = NonlinearProblem::cubic(1.0).unwrap().into();
    assert_eq!(cubic.kappa(), None);
    let gen = GeneratorSpec {
        beta: Some(etc_core::kinf::KInfFunction::linear(1.0)),
        ..GeneratorSpec::dynamic(0.5, 1.0)
    };
    assert!(GeneratorSpec::dynamic(0.5, 1.0).build(None).is_err());
    let g = gen.build(None).unwrap();
    let traj = simulate(&cubic, &g, &[2.0], &SimConfig { horizon: 5.0, ..SimConfig::default() }).unwrap();
    assert!(traj.final_state().unwrap()[0].abs() < 0.1);
    assert!(traj.etas.iter().all(|e| *e >= 0.0));

    let wrapped: Plant = NonlinearProblem::from_linear(LinearPlant::benchmark()).into();
    assert_eq!(wrapped.dim(), 2);
    let g = GeneratorSpec { lambda: Some(0.4), ..GeneratorSpec::dynamic(0.1, 1.0) }.build(None).unwrap();
    let traj = simulate(&wrapped, &g, &[10.0, 0.0], &SimConfig::default()).unwrap();
    assert!(traj.v_values.last().unwrap() < &(0.05 * traj.v_values[0]));
}

#[test]
fn bundled_configs_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load::<&str>(&path, &[]).unwrap();
        let plant = cfg.plant.build().unwrap();
        cfg.initial.single(plant.dim()).unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        n += 1;
    }
    assert!(n >= 2);
}
