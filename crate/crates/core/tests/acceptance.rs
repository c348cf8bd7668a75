//! End-to-end acceptance checks. Runs without the libtest harness so that
//! each criterion prints its own line under `cargo test`.

use std::process::ExitCode;
use std::time::Instant;

use slvlab::criteria::{
    check_h_lower_bound, check_htilde_positivity, check_lemma312, check_lemma36_i, check_lemma36_ii,
    check_lemma36_iii, PartialSubcase, SureSubcase, BUMP_LAMBDA1,
};
use slvlab::error::Error;
use slvlab::experiments::{run_extinction_campaign, run_martingale_check, write_campaign, CampaignSpec, InitialCondition};
use slvlab::generator::{jump_integral, QuadratureConfig};
use slvlab::model::{ModelParams, Verdict};
use slvlab::sde_engine::{couple_many, SimConfig};
use slvlab::stable_measure::{Lemma32Kind, StableMeasure};
use slvlab::test_functions::{Axis, TestFunction};

type Outcome = Result<String, String>;

fn mp(f: impl Fn(&mut ModelParams)) -> ModelParams {
    let mut p = ModelParams::default();
    f(&mut p);
    p
}

fn example2() -> ModelParams {
    mp(|p| {
        p.a2 = 1.0;
        p.b3 = 1.0;
        p.q3 = 1.0;
        p.theta1 = 1.0;
        p.theta2 = 0.5;
    })
}

fn example3() -> ModelParams {
    mp(|p| {
        p.a3 = 1.0;
        p.p3 = 1.0;
        p.b3 = 1.0;
        p.q3 = 2.0;
        p.theta1 = 2.5;
        p.theta2 = 0.0;
    })
}

fn ok_if(pass: bool, detail: String) -> Outcome {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lemma32_closed_forms() -> Outcome {
    let mut cells = 0;
    let mut worst = 0.0f64;
    for i in 1..=9 {
        let alpha = 1.0 + 0.1 * i as f64;
        let m = StableMeasure::new(alpha).map_err(|e| e.to_string())?;
        for kind in Lemma32Kind::ALL {
            for beta in kind.beta_grid(alpha) {
                let c = m.lemma32_integral(kind, beta).map_err(|e| e.to_string())?;
                let q = m.lemma32_quadrature(kind, beta, 1e-13).map_err(|e| e.to_string())?;
                worst = worst.max((c - q).abs() / c.abs());
                cells += 1;
            }
        }
    }
    ok_if(cells >= 100 && worst < 1e-8, format!("{cells} cells, worst relative error {worst:.2e}"))
}

fn power_ratio_closed_vs_quadrature() -> Outcome {
    let q = QuadratureConfig::default();
    let shapes = [((2.0, 0.25, 0.5), (1.5, 1.5)), ((1.0, 0.5, 0.25), (1.3, 1.7)), ((0.5, 1.5, 0.75), (1.8, 1.2))];
    let grid: Vec<f64> = (0..5).map(|i| 0.1 + 1.9 * i as f64 / 4.0).collect();
    let mut worst = 0.0f64;
    let mut cells = 0;
    for ((beta, delta, rho), (a1, a2)) in shapes {
        let g = TestFunction::power_ratio(beta, delta, rho).map_err(|e| e.to_string())?;
        let m1 = StableMeasure::new(a1).map_err(|e| e.to_string())?;
        let m2 = StableMeasure::new(a2).map_err(|e| e.to_string())?;
        for &x in &grid {
            for &y in &grid {
                let (cx, cy) = g
                    .closed_jump_integrals(x, y, &m1, &m2)
                    .map_err(|e| e.to_string())?
                    .ok_or("no closed form")?;
                let qx = jump_integral(&g, x, y, Axis::First, &m1, &q).map_err(|e| e.to_string())?;
                let qy = jump_integral(&g, x, y, Axis::Second, &m2, &q).map_err(|e| e.to_string())?;
                for (c, v) in [(cx, qx), (cy, qy)] {
                    worst = worst.max((c - v).abs() / (1.0 + c.abs()));
                }
                cells += 1;
            }
        }
    }
    ok_if(worst < 1e-8, format!("{cells} points, worst error {worst:.2e} (scaled by 1+|closed|)"))
}

fn martingale() -> Outcome {
    let p = mp(|p| {
        p.a2 = 0.5;
        p.b2 = 0.5;
        p.a3 = 0.1;
        p.b3 = 0.1;
        p.theta1 = 1.2;
        p.theta2 = 1.2;
    });
    let g = TestFunction::power_ratio(2.0, 0.25, 0.5).map_err(|e| e.to_string())?;
    let times = [0.1, 0.5, 1.0];
    let mut reports = Vec::new();
    for dt in [1e-3, 5e-4] {
        let cfg = SimConfig { dt, ..SimConfig::default() };
        let r = run_martingale_check(&p, &g, &times, 10_000, &cfg, &QuadratureConfig::default(), 1)
            .map_err(|e| e.to_string())?;
        reports.push(r);
    }
    let within = reports.iter().all(|r| r.pass);
    let shrinks = reports[0].points.iter().zip(&reports[1].points).all(|(a, b)| b.mean.abs() <= a.mean.abs());
    let ratios: Vec<String> = reports
        .iter()
        .flat_map(|r| r.points.iter().map(move |q| format!("{:.2}", q.mean.abs() / q.std_err)))
        .collect();
    ok_if(
        within && shrinks,
        format!("|mean|/SE at dt=1e-3,5e-4: [{}]; bias shrinks: {shrinks}", ratios.join(", ")),
    )
}

fn coupling() -> Outcome {
    let p = mp(|p| {
        p.a1 = 1.0;
        p.b1 = 1.0;
        p.a2 = 3.0;
        p.b2 = 3.0;
        p.p2 = 2.0;
        p.q2 = 2.0;
        p.a3 = 1.0;
        p.b3 = 1.0;
        p.theta1 = 0.5;
        p.theta2 = 0.5;
    });
    let mut fr = Vec::new();
    for dt in [1e-3, 1e-4] {
        let cfg = SimConfig { dt, horizon: 1.0, master_seed: 7, ..SimConfig::default() }.with_uniform_checkpoints(100);
        let (s, _) = couple_many(&p, &cfg, (1.0, 1.0), (2.0, 0.5), 1000, 1).map_err(|e| e.to_string())?;
        fr.push(s.fraction);
    }
    ok_if(
        fr[0] < 0.01 && fr[1] < fr[0],
        format!("violation fraction {:.5} at dt=1e-3, {:.5} at dt=1e-4", fr[0], fr[1]),
    )
}

fn regimes() -> Outcome {
    let i = mp(|p| {
        p.a1 = 1.0;
        p.p1 = 1.0;
        p.a3 = 1.0;
        p.p3 = 1.0;
        p.b3 = 1.0;
        p.q3 = 1.0;
        p.theta1 = 1.5;
        p.theta2 = 1.0;
        p.kappa2 = 2.0;
    });
    let mut lines = Vec::new();
    let mut pass = true;
    let cases = [
        ("i", i, None, Verdict::NoExtinctionEither),
        ("ii", example2(), Some(InitialCondition::Scaled { eps: 0.3, u0: 0.3, beta: 1.0 }), Verdict::PartialExtinctionY),
        ("iii", example3(), None, Verdict::SureExtinctionY),
    ];
    for (tag, p, init, want) in cases {
        let mut spec = CampaignSpec::new(vec![10.0, 25.0, 50.0]);
        spec.initial.extend(init);
        let c = run_extinction_campaign(&p, &SimConfig::default(), 2000, &spec).map_err(|e| e.to_string())?;
        let s = &c.summary;
        let band = match want {
            Verdict::PartialExtinctionY => (0.05..=0.95).contains(&s.frequency),
            _ => true,
        };
        let ok = s.verdict == want && s.consistent == Some(true) && s.eps_gap < 0.05 && band;
        pass &= ok;
        lines.push(format!(
            "{tag}: {} freq {:.4} CI [{:.4}, {:.4}] gap {:.4}",
            s.verdict.as_str(),
            s.frequency,
            s.ci.0,
            s.ci.1,
            s.eps_gap
        ));
    }
    ok_if(pass, lines.join("; "))
}

fn certificates() -> Outcome {
    let partial = [
        (PartialSubcase::Iia, example2()),
        (PartialSubcase::Iib, mp(|p| {
            p.a2 = 1.0;
            p.b2 = 1.0;
            p.theta1 = 1.0;
            p.theta2 = 0.5;
        })),
        (PartialSubcase::Iic, mp(|p| {
            p.a2 = 1.0;
            p.p2 = 3.0;
            p.b2 = 1.0;
            p.q2 = 3.0;
            p.theta1 = 1.5;
            p.theta2 = 0.5;
        })),
        (PartialSubcase::Iid, mp(|p| {
            p.a1 = 1.0;
            p.p1 = 1.0;
            p.b1 = 0.5;
            p.q1 = 1.0;
            p.theta1 = 1.0;
            p.theta2 = 0.5;
        })),
    ];
    let mut lines = Vec::new();
    let mut pass = true;
    for (sub, p) in partial {
        let ok = match check_htilde_positivity(&p, sub, 200) {
            Ok(c) => c.pass(),
            Err(_) => false,
        };
        pass &= ok;
        lines.push(format!("{}={}", sub.tag(), ok));
    }
    let sure = [
        (SureSubcase::Iiia, example3()),
        (SureSubcase::Iiib, mp(|p| {
            p.a2 = 1.0;
            p.b2 = 3.0;
            p.theta1 = 1.0;
            p.theta2 = 0.5;
        })),
    ];
    for (sub, p) in sure {
        let ok = match check_h_lower_bound(&p, sub, 200) {
            Ok(c) => c.pass(),
            Err(_) => false,
        };
        pass &= ok;
        lines.push(format!("{}={}", sub.tag(), ok));
    }
    let wrong = matches!(
        check_htilde_positivity(&example3(), PartialSubcase::Iia, 200),
        Err(Error::SearchFailed(_))
    );
    pass &= wrong;
    lines.push(format!("wrong-regime search fails={wrong}"));
    ok_if(pass, lines.join(", "))
}

fn bump_and_domination() -> Outcome {
    let q = QuadratureConfig::default();
    let i = check_lemma36_i(1.0, 3.0, 200).map_err(|e| e.to_string())?;
    let ii = check_lemma36_ii(1.0, 2.0, 3.0, 1.5, BUMP_LAMBDA1, 200, &q).map_err(|e| e.to_string())?;
    let iii = check_lemma36_iii(1.0, 3.0, 1.5, 200, &q).map_err(|e| e.to_string())?;
    let d = check_lemma312(100, 1, &q).map_err(|e| e.to_string())?;
    ok_if(
        i.pass && ii.pass() && iii.pass() && d.pass,
        format!(
            "bump (i) {} margin {:.2e}, (ii) {} margin {:.3}, (iii) {} margin {:.3}, domination {} margin {:.3}",
            i.pass,
            i.worst_margin,
            ii.pass(),
            ii.jump.worst_margin.min(ii.second_derivative.worst_margin),
            iii.pass(),
            iii.jump.worst_margin.min(iii.second_derivative.worst_margin),
            d.pass,
            d.worst_margin
        ),
    )
}

fn null_noise() -> Outcome {
    let p = ModelParams { eta1: 0.0, eta2: 0.0, ..example3() };
    let mut spec = CampaignSpec::new(vec![50.0]);
    spec.eps_levels = vec![1e-8];
    let c = run_extinction_campaign(&p, &SimConfig::default(), 1000, &spec).map_err(|e| e.to_string())?;
    let events: u64 = c.summary.cells.iter().map(|cell| cell.extinct_y).sum();
    ok_if(events == 0, format!("{events} extinction events in 1000 paths"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for workers in [1, 8] {
        let mut spec = CampaignSpec::new(vec![2.0, 5.0]);
        spec.workers = workers;
        let c = run_extinction_campaign(&example3(), &SimConfig::default(), 200, &spec).map_err(|e| e.to_string())?;
        let stem = format!("w{workers}");
        write_campaign(dir.path(), &stem, &c).map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        for suffix in ["_paths.csv", "_cells.csv"] {
            bytes.push(std::fs::read(dir.path().join(format!("{stem}{suffix}"))).map_err(|e| e.to_string())?);
        }
        files.push(bytes);
    }
    let same = files[0] == files[1];
    ok_if(same, format!("paths and cells CSV identical for 1 and 8 workers: {same}"))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Outcome); 9] = [
        ("1 closed-form stable integrals", lemma32_closed_forms),
        ("2 power-ratio jump integrals", power_ratio_closed_vs_quadrature),
        ("3 martingale check", martingale),
        ("4 coupling order", coupling),
        ("5 regime concordance", regimes),
        ("6 Lyapunov certificates", certificates),
        ("7 bump and domination inequalities", bump_and_domination),
        ("8 noise-free null test", null_noise),
        ("9 worker-count determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in checks {
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("PASS criterion {name} ({secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.1}s): {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
