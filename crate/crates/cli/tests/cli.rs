use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use vswap_cli::{mc, parse_config, price, report_table2, sweep_cmd, Format, RunConfig};
use vswap_core::model::GeneratorConvention;
use vswap_core::pricer::StrikeQuote;
use vswap_core::{Error, McEstimate};

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn bundled(name: &str) -> String {
    fs::read_to_string(config_path(name)).unwrap()
}

fn table1() -> RunConfig {
    parse_config(&bundled("table1.cfg")).unwrap()
}

fn vswap(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vswap"));
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("VSWAP_THREADS", n),
        None => cmd.env_remove("VSWAP_THREADS"),
    };
    cmd.output().unwrap()
}

#[test]
fn table1_values_verbatim() {
    let c = table1();
    let p = &c.params;
    assert_eq!((c.market.s0, c.market.v0, c.market.r0, c.market.x0), (1.0, 0.05, 0.05, 0));
    assert_eq!((p.rho, p.kappa, p.sigma, p.alpha, p.eta), (-0.4, 2.0, 0.1, 1.2, 0.01));
    assert_eq!(p.theta_star.as_slice(), &[0.05, 0.075, 0.04]);
    assert_eq!(p.beta_star.as_slice(), &[0.05, 0.04, 0.075]);
    assert_eq!(c.swap.maturity, 1.0);
    assert_eq!(p.generator.convention, GeneratorConvention::RowSumsZero);
    assert_eq!(p.generator.rates[(0, 2)], 0.9);
    assert_eq!(p.generator.rates[(2, 1)], 0.5);
    assert_eq!(c.regime_name(1), "trough");
}

#[test]
fn missing_model_parameter_rejected() {
    let text: String = bundled("table1.cfg").lines().filter(|l| !l.starts_with("sigma")).collect::<Vec<_>>().join("\n");
    let err = parse_config(&text).unwrap_err();
    assert_eq!(err.code(), "config");
    assert!(err.to_string().contains("sigma"), "{err}");
}

#[test]
fn unknown_key_rejected() {
    let text = format!("{}\nvol_of_vol = 0.2\n", bundled("table1.cfg"));
    let err = parse_config(&text).unwrap_err();
    assert!(err.to_string().contains("vol_of_vol"), "{err}");
}

#[test]
fn wrong_type_reports_line() {
    let text = bundled("table1.cfg").replace("kappa = 2.0", "kappa = \"fast\"");
    let err = parse_config(&text).unwrap_err().to_string();
    assert!(err.contains("line") && err.contains("kappa"), "{err}");
}

#[test]
fn generator_dimension_mismatch() {
    let text = bundled("table1.cfg")
        .replace("  -1.0, 0.1, 0.9,\n   0.9, -1.0, 0.1,\n   0.5, 0.5, -1.0,", "-1.0, 1.0, 1.0, -1.0")
        .replace("regime_names = [\"contraction\", \"trough\", \"expansion\"]\n", "");
    let err = parse_config(&text).unwrap_err();
    assert!(err.to_string().contains("dimension mismatch"), "{err}");
}

#[test]
fn invalid_values_listed() {
    let text = bundled("table1.cfg").replace("rho = -0.4", "rho = -1.5").replace("kappa = 2.0", "kappa = -1.0");
    match parse_config(&text) {
        Err(Error::Invalid(v)) => {
            let codes: Vec<_> = v.iter().map(|x| x.code.as_str()).collect();
            assert!(codes.contains(&"rho_out_of_range") && codes.contains(&"non_positive_kappa"), "{codes:?}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn lognormal_price() {
    let cfg = parse_config(&bundled("lognormal.cfg")).unwrap();
    let (q, _) = price(&cfg, Format::Csv).unwrap();
    let mu: f64 = 0.025 * 0.25;
    let s2 = 0.05 * 0.25;
    let want = 1e4 * 4.0 * ((2.0 * mu + 2.0 * s2).exp() - 2.0 * (mu + 0.5 * s2).exp() + 1.0);
    assert!((q.strike - want).abs() / want < 1e-9);
    assert!((q.strike - 522.2).abs() < 0.05);
}

#[test]
fn price_json_round_trips() {
    let cfg = parse_config(&bundled("lognormal.cfg")).unwrap();
    let (q, text) = price(&cfg, Format::Json).unwrap();
    let back: StrikeQuote = serde_json::from_str(&text).unwrap();
    assert_eq!(back, q);
}

#[test]
fn mc_json_round_trips() {
    let mut cfg = table1();
    cfg.swap.observations = 4;
    cfg.mc.paths = 500;
    cfg.mc.steps_per_interval = 8;
    let (e, text) = mc(&cfg, Format::Json).unwrap();
    let back: McEstimate = serde_json::from_str(&text).unwrap();
    assert_eq!(back, e);
}

#[test]
fn csv_schema_column() {
    let cfg = parse_config(&bundled("lognormal.cfg")).unwrap();
    let (_, text) = price(&cfg, Format::Csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "schema,maturity,observations,initial_regime,strike,steps_per_year,generator_convention,forward_measure_horizon,variance_points"
    );
    assert!(lines.next().unwrap().starts_with("1,1.0,4,0,522.20"));
    assert!(lines.next().is_none());
}

#[test]
fn report_has_twelve_rows() {
    let (rows, text) = report_table2(&table1(), Format::Csv).unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(text.lines().count(), 13);
    let last = rows.iter().find(|r| r.state == "contraction" && r.observations == 52).unwrap();
    assert_eq!(last.published, Some(501.28));
    let line = text.lines().find(|l| l.starts_with("1,contraction,52,")).unwrap();
    assert!(line.contains(",501.28,"), "{line}");
    // rows within each state decrease with frequency
    for chunk in rows.chunks(4) {
        assert!(chunk.windows(2).all(|w| w[1].computed < w[0].computed));
        assert!(chunk.windows(2).all(|w| w[1].no_switching < w[0].no_switching));
    }
}

#[test]
fn sweep_monotone() {
    let freqs: Vec<usize> = (1..=52).collect();
    let (points, text) = sweep_cmd(&table1(), &freqs, false, Format::Csv).unwrap();
    assert_eq!(points.len(), 52);
    assert!(points.windows(2).all(|w| w[1].analytic <= w[0].analytic));
    assert!(text.lines().nth(1).unwrap().ends_with(",,"));
}

#[test]
fn sweep_with_mc_columns() {
    let mut cfg = table1();
    cfg.mc.paths = 400;
    cfg.mc.steps_per_interval = 4;
    let (points, text) = sweep_cmd(&cfg, &[2, 4], true, Format::Csv).unwrap();
    assert!(points.iter().all(|p| p.mc.is_some()));
    assert_eq!(text.lines().next().unwrap(), "schema,observations,analytic,mc,mc_std_error");
}

#[test]
fn binary_price_stdout() {
    let cfg = config_path("lognormal.cfg");
    let out = vswap(&["price", "--config", cfg.to_str().unwrap(), "--format", "json"], None);
    assert!(out.status.success());
    let q: StrikeQuote = serde_json::from_slice(&out.stdout).unwrap();
    assert!((q.strike - 522.2).abs() < 0.05);
}

#[test]
fn binary_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_path("table1.cfg");
    let run = |name: &str, threads: Option<&str>| {
        let path = dir.path().join(name);
        let out = vswap(
            &["mc", "--config", cfg.to_str().unwrap(), "--paths", "3000", "--seed", "17", "--out", path.to_str().unwrap()],
            threads,
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(path).unwrap()
    };
    let a = run("a.csv", None);
    let b = run("b.csv", None);
    let c = run("c.csv", Some("1"));
    let d = run("d.csv", Some("3"));
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a, d);
    let e = run("e.csv", Some("0"));
    assert_eq!(a, e);
}

#[test]
fn binary_seed_changes_output() {
    let cfg = config_path("table1.cfg");
    let out = |seed: &str| {
        vswap(&["mc", "--config", cfg.to_str().unwrap(), "--paths", "500", "--seed", seed], None).stdout
    };
    assert_ne!(out("1"), out("2"));
}

#[test]
fn binary_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "sigma = 0.1\n").unwrap();
    let out = vswap(&["price", "--config", bad.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]:"));

    // Feller violation: the analytic pricer refuses, the simulator runs
    let feller = dir.path().join("feller.cfg");
    fs::write(&feller, bundled("table1.cfg").replace("sigma = 0.1", "sigma = 0.6")).unwrap();
    let out = vswap(&["price", "--config", feller.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[invalid_input]:") && stderr.contains("feller_variance"), "{stderr}");
    let out = vswap(&["mc", "--config", feller.to_str().unwrap(), "--paths", "200"], None);
    assert!(out.status.success());

    let out = vswap(&["price", "--config", "/nonexistent/x.cfg"], None);
    assert_eq!(out.status.code(), Some(3));
    let out = vswap(&["price", "--config", feller.to_str().unwrap()], Some("many"));
    assert_eq!(out.status.code(), Some(3));
    let out = vswap(&["frobnicate"], None);
    assert_eq!(out.status.code(), Some(2));
}
