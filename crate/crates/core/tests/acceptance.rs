#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Acceptance criteria, one line each. Exits non-zero if any criterion fails.

use etc_core::checks::{ordering_check, random_samples, theta_order_check, THETA_PAIRS};
use etc_core::export::{table_csv, trajectory_csv};
use etc_core::plant::{decay_rate_kappa, min_eigenvalue, LinearPlant, Plant};
use etc_core::sim::{excess_total_variation, max_single_rise, simulate, SimConfig};
use etc_core::stats::{
    figure_generators, figure_series, run_table, BatchSpec, FilterDecay, CellResult, GeneratorKind, RunStats,
};

const SIGMAS: [f64; 3] = [0.001, 0.01, 0.1];
const THETAS: [f64; 6] = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0];

/// Reference means, rows static then θ = 0, 0.01, 0.1, 1, 10, 100; columns σ.
const REFERENCE_MEAN: [[f64; 3]; 7] = [
    [0.0031, 0.0256, 0.1790],
    [0.1276, 0.4514, 0.5818],
    [0.1450, 0.4706, 0.5804],
    [0.1722, 0.4671, 0.5723],
    [0.1457, 0.4112, 0.5538],
    [0.1142, 0.3247, 0.5113],
    [0.0688, 0.2030, 0.4268],
];

const REFERENCE_CV: [[f64; 3]; 7] = [
    [11.7282, 4.1731, 1.5053],
    [1.9746, 0.6214, 0.2634],
    [1.8003, 0.5543, 0.2541],
    [1.5871, 0.5459, 0.2548],
    [1.7897, 0.7008, 0.3385],
    [2.1486, 0.9738, 0.4919],
    [2.8044, 1.4275, 0.7337],
];

const KAPPA: f64 = 0.48;

struct Table {
    cells: Vec<CellResult>,
}

impl Table {
    /// Row index 0 is static, `1 + j` is `THETAS[j]`.
    fn cell(&self, sigma_idx: usize, row: usize) -> &CellResult {
        &self.cells[sigma_idx * 7 + row]
    }

    fn stats(&self, sigma_idx: usize, row: usize) -> &RunStats {
        self.cell(sigma_idx, row)
            .stats
            .as_ref()
            .expect("cell produced statistics")
    }
}

fn row_name(row: usize) -> String {
    if row == 0 {
        "static".into()
    } else {
        format!("theta={}", THETAS[row - 1])
    }
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: u32, ok: bool, title: &str, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!(
            "{} criterion {id:>2}: {title} | {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
}

fn table(plant: &LinearPlant, dt: f64, monitor: bool) -> Table {
    let mut batch = BatchSpec::reference(plant.clone());
    batch.sim.dt = dt;
    batch.monitor = monitor;
    let cells = run_table(&batch);
    assert_eq!(cells.len(), 21);
    for (i, c) in cells.iter().enumerate() {
        if let Err(e) = &c.stats {
            panic!("{}: {e}", c.spec.label());
        }
        assert_eq!(c.spec.sigma, SIGMAS[i / 7]);
        assert_eq!(c.spec.theta, (i % 7).checked_sub(1).map(|j| THETAS[j]));
    }
    Table { cells }
}

fn main() {
    let plant = LinearPlant::benchmark()
        .with_kappa(KAPPA)
        .expect("rounded decay rate is admissible");
    let mut report = Report { failed: 0 };

    let base = table(&plant, 1e-4, true);
    let half = table(&plant, 5e-5, false);

    // 1: means
    let mut worst = (0.0_f64, String::new());
    let mut misses = Vec::new();
    for s in 0..3 {
        for r in 0..7 {
            let m = base.stats(s, r).mean;
            let rel = (m - REFERENCE_MEAN[r][s]) / REFERENCE_MEAN[r][s];
            if rel.abs() > worst.0.abs() {
                worst = (rel, format!("sigma={} {}", SIGMAS[s], row_name(r)));
            }
            if rel.abs() > 0.10 {
                misses.push(format!(
                    "sigma={} {} {:.4} vs {:.4} ({:+.1}%)",
                    SIGMAS[s],
                    row_name(r),
                    m,
                    REFERENCE_MEAN[r][s],
                    100.0 * rel
                ));
            }
        }
    }
    report.line(
        1,
        misses.is_empty(),
        "means within 10% of the reference table",
        if misses.is_empty() {
            format!("worst {:+.1}% at {}", 100.0 * worst.0, worst.1)
        } else {
            format!("{} of 21 outside: {}", misses.len(), misses.join("; "))
        },
    );

    // 2: CVs and CV ordering
    let mut worst = (0.0_f64, String::new());
    let mut misses = Vec::new();
    let mut order_violations = Vec::new();
    for s in 0..3 {
        for r in 0..7 {
            let cv = base.stats(s, r).cv;
            let rel = (cv - REFERENCE_CV[r][s]) / REFERENCE_CV[r][s];
            if rel.abs() > worst.0.abs() {
                worst = (rel, format!("sigma={} {}", SIGMAS[s], row_name(r)));
            }
            if rel.abs() > 0.15 {
                misses.push(format!("sigma={} {} {:.4} vs {:.4}", SIGMAS[s], row_name(r), cv, REFERENCE_CV[r][s]));
            }
        }
        let cv_static = base.stats(s, 0).cv;
        for (j, &theta) in THETAS.iter().enumerate() {
            if theta <= 1.0 && !(base.stats(s, j + 1).cv < cv_static) {
                order_violations.push(format!("sigma={} theta={theta}", SIGMAS[s]));
            }
        }
    }
    report.line(
        2,
        misses.is_empty() && order_violations.is_empty(),
        "CVs within 15%; dynamic (theta<=1) CV below static",
        format!(
            "worst {:+.1}% at {}; {} outside; ordering violations {:?}; anchors {:.4} / {:.4}",
            100.0 * worst.0,
            worst.1,
            misses.len(),
            order_violations,
            base.stats(0, 0).cv,
            base.stats(1, 3).cv
        ),
    );

    // 3: mean ordering and gain factor at sigma = 0.1
    let mut violations = Vec::new();
    for s in 0..3 {
        let stat = base.stats(s, 0).mean;
        for r in 1..7 {
            if base.stats(s, r).mean < stat {
                violations.push(format!("sigma={} {}", SIGMAS[s], row_name(r)));
            }
        }
    }
    let ratio = base.stats(2, 1).mean / base.stats(2, 0).mean;
    report.line(
        3,
        violations.is_empty() && (2.0..=4.0).contains(&ratio),
        "dynamic mean >= static mean; sigma=0.1 theta=0 gain in [2, 4]",
        format!("violations {violations:?}; gain {ratio:.3}"),
    );

    // 4: argmax theta
    let expected = [0.1, 0.01, 0.0];
    let mut found = Vec::new();
    for s in 0..3 {
        let best = (1..7)
            .max_by(|&a, &b| base.stats(s, a).mean.total_cmp(&base.stats(s, b).mean))
            .unwrap();
        found.push(THETAS[best - 1]);
    }
    report.line(
        4,
        found == expected,
        "best theta is 0.1 / 0.01 / 0 for sigma 0.001 / 0.01 / 0.1",
        format!("found {found:?}"),
    );

    // 5: sign invariants over the full grid
    let mut min_eta = f64::INFINITY;
    let mut min_trigger = f64::INFINITY;
    let mut min_samples = usize::MAX;
    for c in &base.cells {
        let m = c.monitors.as_ref().expect("monitored");
        min_eta = min_eta.min(m.min_eta_scaled);
        min_trigger = min_trigger.min(m.min_trigger);
        min_samples = min_samples.min(m.min_samples);
    }
    report.line(
        5,
        min_eta >= -1e-8 && min_trigger >= -1e-8 && min_samples >= 1000,
        "eta >= 0 and eta + theta*s >= 0 on every recorded sample",
        format!(
            "min eta/(1+max eta) {min_eta:.3e}, min trigger {min_trigger:.3e}, fewest samples {min_samples}"
        ),
    );

    let plant_any: Plant = plant.clone().into();
    let sim = SimConfig::default();

    // 6: static fires first
    let samples = random_samples(20130827, 2, 10.0, 100, 20);
    let out = ordering_check(&plant_any, &SIGMAS, &THETAS, &FilterDecay::default(), &samples, &sim, None);
    report.line(
        6,
        out.passed() && samples.len() == 120,
        "static first execution <= dynamic + 2 event_tol",
        format!("{} cases, {} violations, margin {:.3e} s", out.cases, out.witnesses.len(), out.margin),
    );

    // 7: smaller theta fires later
    let pairs = random_samples(20130828, 2, 10.0, 0, 50);
    let out = theta_order_check(&plant_any, &SIGMAS, &THETA_PAIRS, &FilterDecay::default(), &pairs, &sim, None);
    report.line(
        7,
        out.passed(),
        "smaller theta gives a later first execution",
        format!("{} cases, {} violations, margin {:.3e} s", out.cases, out.witnesses.len(), out.margin),
    );

    // 8: performance bound, V <= W, W non-increasing
    let mut bound = f64::NEG_INFINITY;
    let mut v_minus_w = f64::NEG_INFINITY;
    let mut w_inc = f64::NEG_INFINITY;
    for c in &base.cells {
        let m = c.monitors.as_ref().expect("monitored");
        bound = bound.max(m.max_bound_violation);
        v_minus_w = v_minus_w.max(m.max_v_minus_w);
        w_inc = w_inc.max(m.max_w_increase);
    }
    report.line(
        8,
        bound <= 1e-6 && v_minus_w <= 1e-8 && w_inc <= 1e-6,
        "V(t) <= V(0)exp((sigma-1)kappa t), V <= W, W non-increasing",
        format!("max relative excess {bound:.3e}, max V-W {v_minus_w:.3e}, max W rise {w_inc:.3e} W(0)"),
    );

    // 9: decay rate
    let raw = LinearPlant::benchmark();
    let kappa = decay_rate_kappa(raw.p(), raw.q()).expect("SPD pencil");
    let margin = min_eigenvalue(&(raw.q() - raw.p() * kappa));
    report.line(
        9,
        (0.4830..=0.4840).contains(&kappa) && (-1e-9..=1e-6).contains(&margin),
        "kappa in [0.4830, 0.4840], min eig(Q - kappa P) ~ 0",
        format!("kappa {kappa:.10}, min eig {margin:.3e}"),
    );

    // 10: step-size robustness and determinism
    let mut worst = (0.0_f64, String::new());
    for s in 0..3 {
        for r in 0..7 {
            let a = base.stats(s, r).mean;
            let b = half.stats(s, r).mean;
            let rel = ((b - a) / a).abs();
            if rel > worst.0 {
                worst = (rel, format!("sigma={} {}", SIGMAS[s], row_name(r)));
            }
        }
    }
    let rerun = table(&plant, 1e-4, false);
    let same_table = table_csv(&base.cells) == table_csv(&rerun.cells);
    let gen = etc_core::stats::GeneratorSpec::dynamic(0.001, 1.0)
        .build(Some(KAPPA))
        .unwrap();
    let t1 = trajectory_csv(&simulate(&plant, &gen, &[10.0, 0.0], &sim).unwrap());
    let t2 = trajectory_csv(&simulate(&plant, &gen, &[10.0, 0.0], &sim).unwrap());
    report.line(
        10,
        worst.0 < 0.01 && same_table && t1 == t2,
        "halving dt moves every mean < 1%; reruns are bit-identical",
        format!(
            "worst relative change {:.2e} at {}; table identical {same_table}; trajectory identical {}",
            worst.0,
            worst.1,
            t1 == t2
        ),
    );

    // 11: figure
    let series = figure_series(&plant, Some(KAPPA), &figure_generators(0.001), &[10.0, 0.0], &sim)
        .expect("figure runs");
    let by_theta = |theta: Option<f64>| {
        series
            .iter()
            .find(|s| match theta {
                None => s.spec.kind == GeneratorKind::Static,
                Some(t) => s.spec.kind == GeneratorKind::Dynamic && s.spec.theta == Some(t),
            })
            .expect("series present")
    };
    let st = by_theta(None);
    let w_eq_v = st.w().iter().zip(st.v()).all(|(w, v)| w == v);
    let d0 = by_theta(Some(0.0));
    let rise = max_single_rise(d0.v()) / d0.v()[0];
    let d1 = by_theta(Some(1.0));
    let tv = excess_total_variation(d1.v()) / d1.v()[0];
    report.line(
        11,
        w_eq_v && rise > 0.01 && tv < 0.05,
        "static W = V; theta=0 V rises > 1% V(0); theta=1 excess variation < 5% V(0)",
        format!("W = V {w_eq_v}; rise {:.2}%; excess variation {:.2}%", 100.0 * rise, 100.0 * tv),
    );

    println!("{} of 11 criteria failed", report.failed);
    if report.failed > 0 {
        std::process::exit(1);
    }
}
