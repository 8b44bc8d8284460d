//! Acceptance checks. Each test prints one `criterion N: PASS|FAIL` line to
//! the real stdout (bypassing libtest capture) and then asserts.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hybrid_bootstrap::empirical::{
    block_avg_cdf, block_avg_quantile, block_weights, empirical_cdf, sample_quantile, BlockPlan, QuantileSpec,
};
use hybrid_bootstrap::estimators::g_hat;
use hybrid_bootstrap::harness::experiments::{
    adaptive_study, cdf_mse_grid, log_log_slope, mse_grid, rate_study, reference_value, Experiment, RateSetting,
    StatKind,
};
use hybrid_bootstrap::harness::grid::{Grid, GridResult};
use hybrid_bootstrap::models::ModelSpec;
use hybrid_bootstrap::resample::{exact_distribution, monte_carlo_distribution, ResamplePlan};
use hybrid_bootstrap::seed;
use hybrid_bootstrap::tuning::TuneConfig;
use hybrid_bootstrap::Process;
use rand::Rng;

fn report(criterion: u32, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "criterion {criterion}: {} - {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {criterion} failed: {}", detail.as_ref());
}

fn median() -> QuantileSpec {
    QuantileSpec::median()
}

#[test]
fn criterion_1_monte_carlo_matches_exact_enumeration() {
    let start = Instant::now();
    let mut rng = seed::stream(2024);
    let big_b = 200_000usize;
    let mut instances = 0;
    let mut atoms = 0;
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    while instances < 24 {
        let n = rng.random_range(2..=10usize);
        let ell = rng.random_range(1..=3usize.min(n));
        let b = rng.random_range(1..=3usize.min(n / ell));
        if ((n - ell + 1) as f64).powi(b as i32) > 1e4 {
            continue;
        }
        let p = [0.25, 0.5, 0.75][rng.random_range(0..3)];
        let series: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let plan = BlockPlan { b, ell };
        let q = QuantileSpec::new(p).unwrap();
        let exact = exact_distribution(&series, plan, q).unwrap();
        let mc = monte_carlo_distribution(&series, ResamplePlan::new(plan, big_b, rng.random()).unwrap(), q).unwrap();
        for &v in exact.values() {
            let e = exact.cdf(v);
            let band = 3.0 * (e * (1.0 - e) / big_b as f64).sqrt();
            let dev = (mc.cdf(v) - e).abs();
            let z = if band > 0.0 { dev / band } else if dev == 0.0 { 0.0 } else { f64::INFINITY };
            if z > worst.0 {
                worst = (z, format!("n={n} b={b} ell={ell} p={p} atom={v:.4}"));
            }
            if dev > band {
                failures.push(format!("n={n} b={b} ell={ell} p={p} atom={v:.4} dev={dev:.2e} band={band:.2e}"));
            }
            atoms += 1;
        }
        instances += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        failures.is_empty() && secs < 60.0,
        format!(
            "{instances} instances, {atoms} atoms, B={big_b}; largest deviation {:.2} bands at {}; {} outside; {secs:.1}s",
            worst.0,
            worst.1,
            failures.len()
        ),
    );
}

#[test]
fn criterion_2_reduction_identities() {
    let mut rng = seed::stream(7);
    let mut ok = true;
    for _ in 0..100 {
        let n = rng.random_range(1..=60usize);
        let series: Vec<f64> = (0..n).map(|_| (rng.random_range(-20..20) as f64) / 4.0).collect();
        let p = rng.random_range(0.01..0.99);
        let q = QuantileSpec::new(p).unwrap();
        ok &= block_avg_quantile(&series, 1, q).unwrap() == sample_quantile(&series, q).unwrap();
        for &x in &series {
            ok &= block_avg_cdf(&series, 1, x).unwrap() == empirical_cdf(&series, x).unwrap();
            ok &= block_avg_cdf(&series, 1, x - 0.125).unwrap() == empirical_cdf(&series, x - 0.125).unwrap();
        }
    }
    let mut support_ok = true;
    for r in 0..30u64 {
        let n = 8 + (r as usize % 25);
        let series = ModelSpec::arma11().simulate(n, r).unwrap();
        let ell = 1 + (r as usize % n.min(9));
        let plan = BlockPlan { b: 1, ell };
        let singles = exact_distribution(&series, plan, median()).unwrap();
        let mc = monte_carlo_distribution(&series, ResamplePlan::new(plan, 500, r).unwrap(), median()).unwrap();
        support_ok &= singles.total() == (n - ell + 1) as u64;
        support_ok &= mc.values().iter().all(|v| singles.values().contains(v));
    }
    report(
        2,
        ok && support_ok,
        format!("ell=1 identities exact on 100 series: {ok}; b=1 support within single-block statistics: {support_ok}"),
    );
}

#[test]
fn criterion_3_reference_values() {
    let r_ref = 1_000_000;
    let cases: [(&str, ModelSpec, usize, StatKind, f64); 4] = [
        ("arma11 G_200(1)", ModelSpec::arma11(), 200, StatKind::Quantile { x: 1.0 }, 0.67978),
        ("arma23sq G_200(-1.5)", ModelSpec::arma23_squared(), 200, StatKind::Quantile { x: -1.5 }, 0.09276),
        ("polymix G_200(2)", ModelSpec::poly_mixing_preset(), 200, StatKind::Quantile { x: 2.0 }, 0.95229),
        ("arma11 cdf n=100 x=0 y=0.9", ModelSpec::arma11(), 100, StatKind::Cdf { x: 0.0, y: 0.9 }, 0.89501),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, model, n, kind, target) in cases {
        let r = reference_value(&model, n, kind, median(), r_ref, 31).unwrap();
        let ok = (r.value - target).abs() <= 0.005;
        pass &= ok;
        parts.push(format!("{name}={:.5}±{:.5} (target {target})", r.value, r.stderr));
    }
    report(3, pass, format!("R_ref={r_ref}: {}", parts.join("; ")));
}

fn describe(res: &GridResult, metric: &str) -> (f64, f64, f64, String) {
    let all = res.min(metric).unwrap();
    let mbb = res.mbb_min(metric).unwrap();
    let sub = res.subsampling_min(metric).unwrap();
    let text = format!(
        "min {:.5} at (b={},ell={}); MBB min {:.5} at ({},{}); subsampling min {:.5} at ell={}",
        all.value, all.b, all.ell, mbb.value, mbb.b, mbb.ell, sub.value, sub.ell
    );
    (all.value, mbb.value, sub.value, text)
}

#[test]
fn criterion_4_heatmap_structure() {
    let model = ModelSpec::arma11();
    let reference = reference_value(&model, 200, StatKind::Quantile { x: 1.0 }, median(), 1_000_000, 41)
        .unwrap()
        .value;

    // Reduced smoke variant: ordering only, coarse grid, R = B = 500.
    let coarse_b = [1, 2, 3, 4, 6, 8, 12, 16, 24, 33, 40];
    let coarse_ell = [2, 3, 4, 5, 6, 8, 10, 12, 14, 16, 20];
    let coarse = Grid::from_cells(coarse_ell.iter().flat_map(|&ell| {
        coarse_b
            .iter()
            .filter(move |&&b| b * ell <= 200)
            .map(move |&b| BlockPlan { b, ell })
            .chain(std::iter::once(BlockPlan::mbb(200, ell).unwrap()))
    }))
    .unwrap();
    let smoke = Experiment {
        model: &model,
        n: 200,
        q: median(),
        replications: 500,
        replicates: 500,
        master_seed: 401,
    };
    let res = mse_grid(&smoke, &coarse, 1.0, reference).unwrap();
    let (h, m, s, smoke_text) = describe(&res, "mse");
    let smoke_ok = h < m && m < s;

    let full = Experiment {
        replications: 2000,
        replicates: 2000,
        master_seed: 402,
        ..smoke
    };
    let res = mse_grid(&full, &Grid::default_heatmap(200).unwrap(), 1.0, reference).unwrap();
    let best = res.min("mse").unwrap();
    let (h, m, s, text) = describe(&res, "mse");
    let a = (3..=12).contains(&best.b) && (6..=12).contains(&best.ell);
    let b = h < m && m < s;
    let within = |v: f64, t: f64| (v - t).abs() <= 0.3 * t;
    let c = within(h, 0.00472) && within(m, 0.00637) && within(s, 0.00754);
    let min_of = |keep: &dyn Fn(&hybrid_bootstrap::harness::GridRow) -> bool| {
        let r = res.rows.iter().filter(|r| keep(r)).min_by(|a, b| a.value.total_cmp(&b.value)).unwrap();
        format!("{:.5} at ({},{})", r.value, r.b, r.ell)
    };
    let strict = min_of(&|r| r.b > 1 && !r.plan().is_mbb(200));
    let even_sub = min_of(&|r| r.b == 1 && r.ell % 2 == 0);
    let even_hybrid = min_of(&|r| r.b > 1 && (r.b * r.ell) % 2 == 0);
    report(
        4,
        a && b && c && smoke_ok,
        format!(
            "R=B=2000 default grid: {text}; (a) argmin in 3<=b<=12, 6<=ell<=12: {a}; (b) hybrid<MBB<subsampling: {b}; \
             (c) within 30% of 0.00472/0.00637/0.00754: {c}; smoke R=B=500 coarse grid ordering: {smoke_ok} ({smoke_text}); \
             diagnostics: 1<b<floor(n/ell) min {strict}, even-ell subsampling min {even_sub}, even-b*ell b>1 min {even_hybrid}"
        ),
    );
}

#[test]
fn criterion_5_cdf_level_contrast() {
    let model = ModelSpec::arma11();
    let kind = StatKind::Cdf { x: 0.0, y: 0.9 };
    let reference = reference_value(&model, 100, kind, median(), 1_000_000, 51).unwrap().value;
    let exp = Experiment {
        model: &model,
        n: 100,
        q: median(),
        replications: 2000,
        replicates: 2000,
        master_seed: 501,
    };
    let res = cdf_mse_grid(&exp, &Grid::default_heatmap(100).unwrap(), 0.0, 0.9, reference).unwrap();
    let (h, m, s, text) = describe(&res, "cdf_mse");
    let close = (h - m).abs() <= 0.15 * h.min(m);
    let sub_worse = s >= 2.0 * h;
    report(
        5,
        close && sub_worse,
        format!("n=100 x=0 y=0.9 R=B=2000, reference {reference:.5}: {text}; hybrid~MBB within 15%: {close}; subsampling >= 2x hybrid: {sub_worse}"),
    );
}

#[test]
fn criterion_6_rate_of_the_minimum_mse() {
    let fixed = log_log_slope(&[(200, 0.00472), (500, 0.00250), (1000, 0.00154), (2000, 0.00097)]).unwrap();
    let model = ModelSpec::arma11();
    let settings: Vec<RateSetting> = [200usize, 500, 1000]
        .into_iter()
        .map(|n| RateSetting {
            n,
            grid: Grid::default_heatmap(n).unwrap(),
            reference: reference_value(&model, n, StatKind::Quantile { x: 1.0 }, median(), 400_000, 61)
                .unwrap()
                .value,
        })
        .collect();
    let study = rate_study(&model, &settings, median(), 1.0, 500, 500, 601).unwrap();
    let minima: Vec<String> = study
        .points
        .iter()
        .map(|p| format!("n={}: {:.5} at ({},{})", p.n, p.best.value, p.best.b, p.best.ell))
        .collect();
    let ok = (-0.87..=-0.47).contains(&study.slope) && (fixed - (-0.6885)).abs() < 5e-5;
    report(
        6,
        ok,
        format!(
            "R=B=500 default grids: {}; slope {:.4} (need [-0.87,-0.47]); slope on the published minima {fixed:.4}",
            minima.join(", "),
            study.slope
        ),
    );
}

#[test]
fn criterion_7_adaptive_selection() {
    let model = ModelSpec::arma23_squared();
    let n = 512;
    let reference = reference_value(&model, n, StatKind::Quantile { x: 1.0 }, median(), 1_000_000, 71)
        .unwrap()
        .value;
    let exp = Experiment {
        model: &model,
        n,
        q: median(),
        replications: 500,
        replicates: 2000,
        master_seed: 701,
    };
    let mut cfg = TuneConfig::standard(n, 1.0, exp.replicates, 0);
    cfg.subsample_len = 64;
    cfg.subsample_count = 20;
    let study = adaptive_study(&exp, &cfg, reference).unwrap();
    let best = study.best_fixed();
    let worst = study.worst_fixed();
    let largest = study.cell(2.0, 2.0).unwrap();
    let between = best.mse <= study.adaptive_mse && study.adaptive_mse <= worst.mse;
    let below_largest = study.adaptive_mse < largest.mse;
    report(
        7,
        between && below_largest,
        format!(
            "n=512 R=500 B={} reference {reference:.5}: adaptive MSE {:.5}±{:.5}; best fixed {:.5} at c=({},{}); \
             worst {:.5} at c=({},{}); c=(2,2) {:.5}",
            exp.replicates,
            study.adaptive_mse,
            study.adaptive_stderr,
            best.mse,
            best.c1,
            best.c2,
            worst.mse,
            worst.c1,
            worst.c2,
            largest.mse
        ),
    );
}

fn run_cli(config: &Path, command: &str, workers: usize, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_hbb"))
        .args([command, "--config", config.to_str().unwrap(), "--workers", &workers.to_string(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap()
        .status
        .success()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_8_worker_count_independence() {
    let dir = tempfile::tempdir().unwrap();
    let base = "replications = 24\nbootstrap = 60\nreference_replications = 3000\nmaster_seed = 8\n";
    let configs = [
        ("reference", "n = 80\nx = 1.0\n[model]\nname = \"polymix\"\n"),
        ("mse-grid", "n = 60\nx = 1.0\n[model]\nname = \"arma11\"\n[grid]\nb_max = 10\nell_max = 10\n"),
        ("coverage-grid", "n = 60\nalpha = 0.9\n[model]\nname = \"arma23sq\"\n[grid]\nb_max = 8\nell_max = 8\n"),
        ("cdf-mse-grid", "n = 60\nx = 0.0\ny = 0.9\n[model]\nname = \"arma11\"\n[grid]\nb_max = 8\nell_max = 8\n"),
        ("tune", "n = 128\nx = 1.0\n[model]\nname = \"arma23sq\"\n[tune]\nsubsample_len = 32\nsubsample_count = 5\n"),
        ("rate-study", "n_list = [40, 60, 80]\nx = 1.0\n[model]\nname = \"arma11\"\n[grid]\nb_max = 6\nell_max = 6\n"),
    ];
    let mut identical = Vec::new();
    for (cmd, body) in configs {
        let path = dir.path().join(format!("{cmd}.toml"));
        fs::write(&path, format!("{base}{body}")).unwrap();
        let (one, eight) = (dir.path().join(format!("{cmd}-1")), dir.path().join(format!("{cmd}-8")));
        let ran = run_cli(&path, cmd, 1, &one) && run_cli(&path, cmd, 8, &eight);
        let same = ran && {
            let (a, b) = (csv_files(&one), csv_files(&eight));
            !a.is_empty() && a == b
        };
        identical.push((cmd, same));
    }
    let pass = identical.iter().all(|(_, s)| *s);
    let detail: Vec<String> = identical.iter().map(|(c, s)| format!("{c}={s}")).collect();
    report(8, pass, format!("byte-identical CSVs with 1 vs 8 workers: {}", detail.join(", ")));
}

#[test]
fn criterion_9_invariants_on_randomized_cases() {
    let mut rng = seed::stream(9);
    let cases = 1000;
    let (mut galois, mut weights, mut scaling, mut bounds) = (0, 0, 0, 0);
    for _ in 0..cases {
        let n = rng.random_range(1..=12usize);
        let series: Vec<f64> = (0..n).map(|_| rng.random_range(-16..16) as f64 / 4.0).collect();
        let ell = rng.random_range(1..=n);
        let p = rng.random_range(0.01..0.99);
        let q = QuantileSpec::new(p).unwrap();

        let xi = sample_quantile(&series, q).unwrap();
        let xt = block_avg_quantile(&series, ell, q).unwrap();
        let law = empirical_cdf(&series, xi).unwrap() >= p
            && series.iter().filter(|v| **v < xi).all(|v| empirical_cdf(&series, *v).unwrap() < p)
            && block_avg_cdf(&series, ell, xt).unwrap() >= p
            && series.iter().filter(|v| **v < xt).all(|v| block_avg_cdf(&series, ell, *v).unwrap() < p);
        galois += usize::from(law);

        let w = block_weights(n, ell).unwrap();
        let sym = (0..n).all(|t| w[t] == w[n - 1 - t]);
        weights += usize::from(sym && (w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let b = rng.random_range(1..=(n / ell).clamp(1, 2));
        let plan = BlockPlan { b, ell };
        let base = exact_distribution(&series, plan, q).unwrap();
        let doubled: Vec<f64> = series.iter().map(|v| 2.0 * v).collect();
        let scaled = exact_distribution(&doubled, plan, q).unwrap();
        scaling += usize::from(
            scaled.counts() == base.counts()
                && scaled.values().iter().zip(base.values()).all(|(s, v)| *s == 2.0 * v),
        );

        let mc = monte_carlo_distribution(&series, ResamplePlan::new(plan, 32, rng.random()).unwrap(), q).unwrap();
        let x = rng.random_range(-4.0..4.0);
        let g = g_hat(&mc, x).unwrap();
        bounds += usize::from((0.0..=1.0).contains(&g) && (0.0..=1.0).contains(&block_avg_cdf(&series, ell, x).unwrap()));
    }
    let pass = [galois, weights, scaling, bounds].iter().all(|c| *c == cases);
    report(
        9,
        pass,
        format!(
            "{cases} randomized cases: Galois laws {galois}, weight symmetry/normalization {weights}, \
             scaling equivariance {scaling}, probability bounds {bounds}; full property suite in tests/invariants.rs"
        ),
    );
}
