use super::*;
use crate::lgd_a::calibrate_model_a;
use crate::math::{mean, sample_variance};
use crate::portfolio::Instrument;
use crate::synthetic::{self, SyntheticSpec};
use proptest::prelude::*;

struct Fixture {
    portfolio: Portfolio,
    factor: FactorModel,
    model_a: ModelACalibration,
    model_b: ModelBCalibration,
}

impl Fixture {
    fn inputs(&self) -> ModelInputs<'_> {
        ModelInputs {
            factor: &self.factor,
            model_a: Some(&self.model_a),
            model_b: Some(&self.model_b),
        }
    }
}

fn fixture(instruments: usize, firms: u32) -> Fixture {
    let spec = SyntheticSpec {
        instruments,
        firms,
        industries: 3,
        regions: 2,
        ..Default::default()
    };
    let factor = synthetic::factor_model(&spec).unwrap();
    let history = synthetic::factor_history(&factor, 60, 3).unwrap();
    let lgd = synthetic::lgd_history(&history, 0.45, 1.0, 0.4, 0.5, 40, 4).unwrap();
    Fixture {
        portfolio: synthetic::portfolio(&spec).unwrap(),
        model_a: calibrate_model_a(&lgd, &history).unwrap(),
        model_b: ModelBCalibration::uniform(1.0 / 30.0).unwrap(),
        factor,
    }
}

fn config(mode: LgdMode, scenarios: usize) -> SimulationConfig {
    SimulationConfig {
        scenarios,
        lgd_mode: mode,
        master_seed: 2024,
        batch_size: 250,
        ..Default::default()
    }
}

fn single(pd: f64, lgd: f64, exposure: f64, collateralized: bool) -> Portfolio {
    Portfolio::new(
        vec![Instrument {
            id: "A".into(),
            firm: 1,
            cell: CellIndex::new(1, 1),
            rating: 5,
            pd,
            expected_lgd: lgd,
            collateralized,
            exposure,
        }],
        "CHF",
        40,
    )
    .unwrap()
}

#[test]
fn certain_default_loses_lgd_times_exposure() {
    let fx = fixture(10, 5);
    let p = single(1.0 - 1e-9, 0.6, 100.0, false);
    let losses = run_simulation(&p, fx.inputs(), &config(LgdMode::Deterministic, 500)).unwrap();
    assert!(losses.iter().all(|&l| (l - 60.0).abs() < 1e-12));
    let stats = loss_statistics(&losses, &DEFAULT_LEVELS).unwrap();
    assert!((stats.el - 60.0).abs() < 1e-12);
}

#[test]
fn vanishing_pd_gives_vanishing_el() {
    let fx = fixture(10, 5);
    let p = single(1e-12, 0.6, 100.0, false);
    let losses = run_simulation(&p, fx.inputs(), &config(LgdMode::ModelB, 20_000)).unwrap();
    assert!(mean(&losses) < 0.01);
}

#[test]
fn el_matches_analytic_in_every_mode() {
    let fx = fixture(300, 120);
    let target = analytic_expected_loss(&fx.portfolio, 1);
    for mode in LgdMode::ALL {
        let losses = run_simulation(&fx.portfolio, fx.inputs(), &config(mode, 20_000)).unwrap();
        let s = loss_statistics(&losses, &DEFAULT_LEVELS).unwrap();
        assert!((s.el - target).abs() < 3.0 * s.el_std_error, "{mode}: {} vs {target} (se {})", s.el, s.el_std_error);
    }
}

#[test]
fn results_independent_of_threads_and_batches() {
    let fx = fixture(200, 80);
    for mode in LgdMode::ALL {
        let mut cfg = config(mode, 3_000);
        cfg.threads = Some(1);
        cfg.batch_size = 3_000;
        let reference = run_simulation(&fx.portfolio, fx.inputs(), &cfg).unwrap();
        for (threads, batch) in [(4, 7), (8, 1000), (2, 1)] {
            cfg.threads = Some(threads);
            cfg.batch_size = batch;
            let other = run_simulation(&fx.portfolio, fx.inputs(), &cfg).unwrap();
            assert!(
                reference.iter().zip(&other).all(|(a, b)| a.to_bits() == b.to_bits()),
                "{mode} differs at threads={threads} batch={batch}"
            );
        }
        let sim = Simulator::new(&fx.portfolio, fx.inputs(), &cfg).unwrap();
        assert_eq!(sim.scenario_loss(1234).unwrap().to_bits(), reference[1234].to_bits());
    }
}

#[test]
fn modes_share_default_indicators() {
    let fx = fixture(200, 80);
    let sims: Vec<Simulator> = LgdMode::ALL
        .iter()
        .map(|&m| Simulator::new(&fx.portfolio, fx.inputs(), &config(m, 10)).unwrap())
        .collect();
    let mut any_default = false;
    for s in 0..300 {
        let d0 = sims[0].scenario_defaults(s).unwrap();
        any_default |= d0.iter().any(|&x| x);
        for sim in &sims[1..] {
            assert_eq!(sim.scenario_defaults(s).unwrap(), d0);
        }
    }
    assert!(any_default);
}

#[test]
fn deterministic_loss_depends_only_on_indicators() {
    let fx = fixture(200, 80);
    let sim = Simulator::new(&fx.portfolio, fx.inputs(), &config(LgdMode::Deterministic, 10)).unwrap();
    let firms: Vec<u32> = fx.portfolio.firms().iter().filter(|f| !f.defaulted).map(|f| f.firm).collect();
    for s in 0..200 {
        let d = sim.scenario_defaults(s).unwrap();
        let expected: f64 = fx
            .portfolio
            .instruments()
            .iter()
            .filter(|i| d[firms.binary_search(&i.firm).unwrap()])
            .map(|i| i.exposure * i.expected_lgd)
            .sum();
        assert!((sim.scenario_loss(s).unwrap() - expected).abs() < 1e-9 * expected.max(1.0));
    }
}

#[test]
fn stochastic_lgd_adds_variance() {
    let fx = fixture(10, 5);
    let p = single(0.1, 0.4, 1.0, false);
    let var = |mode| {
        let losses = run_simulation(&p, fx.inputs(), &config(mode, 1_000_000)).unwrap();
        sample_variance(&losses).unwrap()
    };
    let det = var(LgdMode::Deterministic);
    assert!((det - 0.1 * 0.9 * 0.16).abs() < 0.002);
    assert!(var(LgdMode::ModelA) >= det);
    assert!(var(LgdMode::ModelB) >= det);
}

#[test]
fn multi_period_defaults_are_absorbing() {
    let fx = fixture(10, 5);
    let p = single(0.05, 0.5, 1.0, true);
    let mut cfg = config(LgdMode::Deterministic, 200_000);
    cfg.horizon_periods = 3;
    let losses = run_simulation(&p, fx.inputs(), &cfg).unwrap();
    assert!(losses.iter().all(|&l| l == 0.0 || l == 0.5));
    let freq = losses.iter().filter(|&&l| l > 0.0).count() as f64 / losses.len() as f64;
    let target = 1.0 - 0.95f64.powi(3);
    let se = (target * (1.0 - target) / losses.len() as f64).sqrt();
    assert!((freq - target).abs() < 3.0 * se);
    assert!((analytic_expected_loss(&p, 3) - 0.5 * target).abs() < 1e-15);
}

#[test]
fn defaulted_firms_are_excluded() {
    let fx = fixture(10, 5);
    let mut insts = single(0.5, 0.5, 1.0, false).instruments().to_vec();
    insts.push(Instrument {
        id: "B".into(),
        firm: 2,
        rating: 40,
        exposure: 1000.0,
        ..insts[0].clone()
    });
    let p = Portfolio::new(insts, "CHF", 40).unwrap();
    let sim = Simulator::new(&p, fx.inputs(), &config(LgdMode::Deterministic, 100)).unwrap();
    assert_eq!(sim.active_firms(), 1);
    assert_eq!(sim.excluded_instruments(), 1);
    assert!(sim.run().unwrap().iter().all(|&l| l <= 0.5));
}

#[test]
fn missing_calibration_is_an_error() {
    let fx = fixture(10, 5);
    let inputs = ModelInputs { factor: &fx.factor, model_a: None, model_b: None };
    for mode in [LgdMode::ModelA, LgdMode::ModelB] {
        assert!(matches!(
            Simulator::new(&fx.portfolio, inputs, &config(mode, 10)),
            Err(Error::MissingCalibration(_))
        ));
    }
    let incomplete = ModelACalibration::incomplete("no LGD history");
    let inputs = ModelInputs { factor: &fx.factor, model_a: Some(&incomplete), model_b: None };
    assert!(matches!(
        Simulator::new(&fx.portfolio, inputs, &config(LgdMode::ModelA, 10)),
        Err(Error::MissingCalibration(_))
    ));
}

#[test]
fn config_validation() {
    let mut c = SimulationConfig::default();
    assert!(c.validate().is_ok());
    c.quantile_levels = vec![0.99, 0.95];
    assert!(c.validate().is_err());
    c.quantile_levels = vec![0.5, 1.0];
    assert!(c.validate().is_err());
    c = SimulationConfig { scenarios: 0, ..Default::default() };
    assert!(c.validate().is_err());
    assert_eq!("model_b".parse::<LgdMode>().unwrap(), LgdMode::ModelB);
    assert!("model_c".parse::<LgdMode>().is_err());
    assert_eq!(serde_json::to_string(&LgdMode::ModelA).unwrap(), "\"model_a\"");
}

#[test]
fn statistics_conventions() {
    let losses: Vec<f64> = (1..=100).map(f64::from).collect();
    let s = loss_statistics(&losses, &[0.9]).unwrap();
    assert_eq!(s.quantile(0.9), Some(90.0));
    assert_eq!(s.etl(0.9), Some(95.5));
    assert_eq!(s.el, 50.5);
    let s = loss_statistics(&[7.25; 37], &DEFAULT_LEVELS).unwrap();
    assert_eq!(s.el, 7.25);
    for l in DEFAULT_LEVELS {
        assert_eq!(s.quantile(l), Some(7.25));
        assert_eq!(s.etl(l), Some(7.25));
    }
    assert!(loss_statistics(&[], &[0.9]).is_err());
    assert!(loss_statistics(&[1.0, f64::NAN], &[0.9]).is_err());
    let s = loss_statistics(&losses, &DEFAULT_LEVELS).unwrap();
    assert!(s.quantiles.contains_key("0.9995") && s.etls.contains_key("0.9998"));
}

proptest! {
    #[test]
    fn etl_dominates_and_quantiles_monotone(losses in prop::collection::vec(-50.0f64..1e4, 1..400)) {
        let s = loss_statistics(&losses, &DEFAULT_LEVELS).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for l in DEFAULT_LEVELS {
            let q = s.quantile(l).unwrap();
            prop_assert!(s.etl(l).unwrap() >= q);
            prop_assert!(q >= prev);
            prev = q;
        }
        if losses.iter().all(|&x| x >= 0.0) {
            prop_assert!(s.el <= s.etl(0.9).unwrap() + 1e-9);
        }
    }
}

#[test]
fn breakdown_totals_agree() {
    let fx = fixture(300, 120);
    let totals: Vec<f64> = BreakdownDimension::ALL
        .iter()
        .map(|&d| potential_loss_breakdown(&fx.portfolio, d).values().sum())
        .collect();
    assert!((totals[0] - totals[1]).abs() < 1e-9 && (totals[0] - totals[2]).abs() < 1e-9);
    assert!((totals[0] - analytic_expected_loss(&fx.portfolio, 1)).abs() < 1e-9);

    let p = single(0.02, 0.5, 10.0, false);
    let b = potential_loss_breakdown(&p, BreakdownDimension::Rating);
    assert_eq!(b.len(), 1);
    assert!((b[&5] - 0.1).abs() < 1e-15);

    let mut insts = p.instruments().to_vec();
    insts.push(Instrument { id: "B".into(), firm: 2, rating: 9, pd: 0.1, ..insts[0].clone() });
    let p2 = Portfolio::new(insts, "CHF", 40).unwrap();
    let b = potential_loss_breakdown(&p2, BreakdownDimension::Rating);
    assert_eq!(b.len(), 2);
    assert!((b.values().sum::<f64>() - (0.1 + 0.5)).abs() < 1e-12);
}

#[test]
fn loss_dump_round_trip() {
    let losses = vec![0.0, 1.5, -2.25, 1e300];
    let mut buf = Vec::new();
    write_losses(&mut buf, &losses).unwrap();
    assert_eq!(buf.len(), 32);
    assert_eq!(&buf[8..16], &1.5f64.to_le_bytes());
    assert_eq!(read_losses(buf.as_slice()).unwrap(), losses);
    assert!(read_losses(&buf[..7]).is_err());
}

#[test]
fn comparison_table_shape() {
    let fx = fixture(200, 80);
    let cmp = compare_models(&fx.portfolio, fx.inputs(), &config(LgdMode::Deterministic, 2_000)).unwrap();
    assert_eq!(
        cmp.header(),
        [
            "model", "EL", "q_90", "q_95", "q_99", "q_99.95", "q_99.98", "ETL_90", "ETL_95", "ETL_99", "ETL_99.95",
            "ETL_99.98"
        ]
    );
    let mut buf = Vec::new();
    cmp.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let labels: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["Deterministic LGD", "Model A", "Model B"]);
    let els: Vec<f64> = LgdMode::ALL.iter().map(|&m| cmp.get(m).unwrap().el).collect();
    for el in &els[1..] {
        assert!((el / els[0] - 1.0).abs() < 0.05);
    }
}
