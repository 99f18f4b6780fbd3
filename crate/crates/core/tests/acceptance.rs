//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use exitbound::geometry::Region;
use exitbound::pde::{solve_mean_exit, DiffusionSpec, PdeOptions};
use exitbound::pipeline::{convergence, execute, fitted_order, verify, Command, RunOptions, Verification};
use exitbound::scenario::Scenario;

const SHIPPED: [&str; 8] = [
    "identical",
    "example",
    "drift-perturbation",
    "diffusion-scale",
    "box-2d",
    "ball-2d",
    "drift-1d",
    "ball-drift",
];

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.scn"))
}

fn load(name: &str) -> Scenario {
    Scenario::load(scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn ac1() -> Outcome {
    let spec = DiffusionSpec::parse("bm", &["0"], &[vec!["1"]]).unwrap();
    let q = Region::interval(0.0, 1.0).unwrap();
    let clock = Instant::now();
    let field = solve_mean_exit(&q, &spec, 1001, &PdeOptions::default()).unwrap();
    let elapsed = clock.elapsed().as_secs_f64();
    let grid = field.grid();
    let err = (0..grid.n_nodes())
        .map(|k| {
            let y = grid.coord(k)[0];
            (field.values()[k] - y * (1.0 - y)).abs()
        })
        .fold(0.0f64, f64::max);
    let sup = field.sup_grad_norm();
    Outcome {
        id: "AC-1",
        pass: err <= 1e-6 && (sup - 1.0).abs() <= 2e-3 && elapsed < 1.0,
        detail: format!("1D h=1e-3: max nodal error {err:.2e}, sup|v'| {sup:.6}, {elapsed:.3}s"),
    }
}

fn ac2(v: &Verification, elapsed: f64) -> Outcome {
    let r = &v.report;
    let disp_exact = (r.displacement_mean - 0.4).abs() <= 1e-12 && r.displacement_se <= 1e-12;
    let rhs_ok = (r.rhs_mean - 0.4).abs() <= 0.4 * 2e-3;
    Outcome {
        id: "AC-2",
        pass: disp_exact && rhs_ok && r.holds && r.n_replicates == 100_000 && elapsed < 120.0,
        detail: format!(
            "example: lhs {:.5}+-{:.5}, displacement {:.15}, rhs {:.6}, holds {}, {} replicates, {:.1}s",
            r.lhs_mean, r.lhs_se, r.displacement_mean, r.rhs_mean, r.holds, r.n_replicates, elapsed
        ),
    }
}

fn ac3(v: &Verification) -> Outcome {
    let dt = v.config.dt;
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, p) in v.report.dynkin_point_checks.iter().enumerate() {
        let tol = 3.0 * p.mc_se + dt.sqrt();
        let ok = (p.mc_mean - 0.21).abs() <= tol;
        pass &= ok;
        parts.push(format!(
            "E T{} = {:.5}+-{:.5} (tol {:.4})",
            i + 1,
            p.mc_mean,
            p.mc_se,
            tol
        ));
    }
    Outcome {
        id: "AC-3",
        pass,
        detail: format!("vs 0.21: {}", parts.join(", ")),
    }
}

fn ac4(all: &[(String, Verification)]) -> Outcome {
    let mut pass = true;
    let mut worst = 0.0f64;
    for (_, v) in all {
        let d = &v.report.decomposition;
        pass &= d.residual <= d.threshold;
        worst = worst.max(if d.threshold > 0.0 {
            d.residual / d.threshold
        } else {
            0.0
        });
    }
    Outcome {
        id: "AC-4",
        pass,
        detail: format!("decomposition residual, worst ratio to 1e-12 n max T: {worst:.2e}"),
    }
}

fn ac5(all: &[(String, Verification)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, v) in all
        .iter()
        .filter(|(n, _)| n == "example" || n == "drift-perturbation")
    {
        let r = &v.report;
        for d in [&r.dynkin_1, &r.dynkin_2] {
            pass &= d.residual <= 3.0 * d.se + d.allowance;
        }
        parts.push(format!(
            "{name}: {:.2e} / {:.2e} (limits {:.2e} / {:.2e})",
            r.dynkin_1.residual,
            r.dynkin_2.residual,
            3.0 * r.dynkin_1.se + r.dynkin_1.allowance,
            3.0 * r.dynkin_2.se + r.dynkin_2.allowance
        ));
    }
    Outcome {
        id: "AC-5",
        pass: pass && parts.len() == 2,
        detail: parts.join("; "),
    }
}

fn ac6() -> Outcome {
    let disk = load("ball-2d");
    let field = solve_mean_exit(&disk.region, disk.spec(0), 201, &PdeOptions::default()).unwrap();
    let center = field.value_at(&[0.0, 0.0]).unwrap();
    let center_ok = (center - 0.5).abs() <= 0.02 * 0.5;
    let disk_conv = convergence(&disk, 1, None).unwrap();
    let disk_space = &disk_conv.spatial[0];
    let drift = load("ball-drift");
    let drift_space = exitbound::pipeline::spatial_study(&drift, 0).unwrap();
    let drift_order = drift_space.fitted_order.unwrap_or(f64::NAN);
    let disk_ok = disk_space.exact || disk_space.fitted_order.is_some_and(|p| p >= 0.9);
    Outcome {
        id: "AC-6",
        pass: center_ok && disk_ok && drift_order >= 0.9,
        detail: format!(
            "disk 201^2: v(0) = {center:.6}, self-convergence {} (diffs {:.1e}); disk with drift: order {drift_order:.3}",
            if disk_space.exact { "exact".to_string() } else { format!("{:?}", disk_space.fitted_order) },
            disk_space.differences.iter().fold(0.0f64, |a, b| a.max(*b))
        ),
    }
}

fn drift_exact(y: f64) -> f64 {
    let c = 1.0f64;
    (1.0 - (-2.0 * c * y).exp()) / (c * (1.0 - (-2.0 * c).exp())) - y / c
}

fn ac7() -> Outcome {
    // grid order against a closed form that the stencil does not reproduce
    let s = load("drift-1d");
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for r in [251, 501, 1001] {
        let f = solve_mean_exit(&s.region, s.spec(0), r, &PdeOptions::default()).unwrap();
        let e = [0.3, 0.5, 0.7]
            .iter()
            .map(|&y| (f.value_at(&[y]).unwrap() - drift_exact(y)).abs())
            .fold(0.0f64, f64::max);
        hs.push(f.grid().max_spacing());
        errs.push(e);
    }
    let space_order = fitted_order(&hs, &errs).unwrap_or(f64::NAN);
    // the same grids as seen by the `convergence` command
    let self_order = exitbound::pipeline::spatial_study(&s, 0)
        .unwrap()
        .fitted_order
        .unwrap_or(f64::NAN);

    let ex = load("example");
    let conv = convergence(&ex, 1, None).unwrap();
    let example_space = &conv.spatial[0];
    let time_orders: Vec<f64> = conv
        .temporal
        .iter()
        .map(|t| t.fitted_order.unwrap_or(f64::NAN))
        .collect();
    let overshoot = conv.temporal.iter().all(|t| t.bias.iter().all(|b| *b > 0.0));
    let pass = space_order >= 1.9
        && self_order >= 1.9
        && example_space.pass
        && !time_orders.is_empty()
        && time_orders.iter().all(|p| *p >= 0.4)
        && overshoot;
    Outcome {
        id: "AC-7",
        pass,
        detail: format!(
            "drift-1d spatial order {space_order:.3} (errors {:.2e} {:.2e} {:.2e}), self-convergence {self_order:.3}; example grid {}; Euler bias orders {:?}, overshoot {overshoot}",
            errs[0],
            errs[1],
            errs[2],
            if example_space.exact { "exact" } else { "inexact" },
            time_orders.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>()
        ),
    }
}

fn ac8() -> Outcome {
    let s = load("drift-perturbation");
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for workers in [1, 2, 4] {
        let out = dir.path().join(format!("w{workers}"));
        let opts = RunOptions {
            workers,
            out_dir: out.clone(),
            seed: None,
        };
        execute(Command::VerifyBound, &s, &opts).unwrap();
        reports.push(std::fs::read(out.join("bound_report.json")).unwrap());
    }
    let same = reports.windows(2).all(|w| w[0] == w[1]);
    Outcome {
        id: "AC-8",
        pass: same,
        detail: format!("bound_report.json with 1, 2, 4 workers byte-identical: {same}"),
    }
}

fn ac9(all: &[(String, Verification)]) -> Outcome {
    let failing: Vec<&str> = all
        .iter()
        .filter(|(_, v)| !v.report.holds)
        .map(|(n, _)| n.as_str())
        .collect();
    Outcome {
        id: "AC-9",
        pass: failing.is_empty() && all.len() == SHIPPED.len(),
        detail: format!(
            "holds on {} of {} shipped scenarios {:?}",
            all.len() - failing.len(),
            all.len(),
            failing
        ),
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters: behave like an empty harness
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut results = vec![ac1()];

    let mut all = Vec::new();
    let mut example_elapsed = 0.0;
    for name in SHIPPED {
        let s = load(name);
        let clock = Instant::now();
        let v = verify(&s, 1, None).unwrap_or_else(|e| panic!("{name}: {e}"));
        if name == "example" {
            example_elapsed = clock.elapsed().as_secs_f64();
        }
        all.push((name.to_string(), v));
    }
    let example = &all.iter().find(|(n, _)| n == "example").unwrap().1;
    results.push(ac2(example, example_elapsed));
    results.push(ac3(example));
    results.push(ac4(&all));
    results.push(ac5(&all));
    results.push(ac6());
    results.push(ac7());
    results.push(ac8());
    results.push(ac9(&all));

    let mut failed = 0;
    for r in &results {
        println!("[{}] {} {}", if r.pass { "PASS" } else { "FAIL" }, r.id, r.detail);
        failed += (!r.pass) as usize;
    }
    println!("acceptance: {} passed, {} failed", results.len() - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
