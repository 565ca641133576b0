//! Serialization round trip: a scenario written by `to_toml` parses back
//! to the identical value (TOML floats are shortest round-trip, so this
//! holds bitwise), across 100 seeded random scenarios covering all three
//! modes, every report form, and both utility rules.

use forecast_market_cli::scenario::{
    BoundsSection, ClientSection, ExpectedSection, HourlySection, MarketSection, OutcomeSpec,
    PlayerSection, ReportSpec, Scenario, ScenarioMode, ScoresSection, UtilitySection,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_report_spec(rng: &mut ChaCha8Rng) -> ReportSpec {
    match rng.gen_range(0..7u8) {
        0 => ReportSpec::Binary {
            prob: rng.gen_range(0.01..0.99),
        },
        1 => {
            let n = rng.gen_range(2..6);
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            ReportSpec::Categorical {
                probs: raw.iter().map(|p| p / total).collect(),
            }
        }
        2 => ReportSpec::Beta {
            alpha: rng.gen_range(0.5..10.0),
            beta: rng.gen_range(0.5..10.0),
        },
        3 => ReportSpec::Normal {
            mean: rng.gen_range(0.2..0.8),
            std_dev: rng.gen_range(0.02..0.3),
        },
        4 => ReportSpec::CensoredNormal {
            mean: rng.gen_range(0.2..0.8),
            std_dev: rng.gen_range(0.02..0.3),
        },
        5 => ReportSpec::Uniform { lo: 0.0, hi: 1.0 },
        _ => {
            let n = rng.gen_range(3..8usize);
            let taus: Vec<f64> = (0..n).map(|k| (k + 1) as f64 / (n + 1) as f64).collect();
            let mut v = 0.0f64;
            let values: Vec<f64> = (0..n)
                .map(|_| {
                    v += rng.gen_range(0.0..0.2);
                    v.min(1.0)
                })
                .collect();
            ReportSpec::Grid {
                taus,
                values,
                support: if rng.gen_bool(0.5) {
                    Some((0.0, 1.0))
                } else {
                    None
                },
            }
        }
    }
}

fn random_utility(rng: &mut ChaCha8Rng) -> UtilitySection {
    if rng.gen_bool(0.5) {
        UtilitySection::Proportional {
            reward_rate: rng.gen_range(100.0..2000.0),
        }
    } else {
        UtilitySection::Exogenous {
            pool: rng.gen_range(0.0..2000.0),
        }
    }
}

fn random_players(rng: &mut ChaCha8Rng, mode: ScenarioMode) -> Vec<PlayerSection> {
    let n = rng.gen_range(1..5usize);
    (0..n)
        .map(|i| PlayerSection {
            id: format!("player-{}", i + 1),
            wager: rng.gen_range(10.0..500.0),
            score: match mode {
                ScenarioMode::Scores => Some(rng.gen_range(0.0..1.0)),
                _ => None,
            },
            report: match mode {
                ScenarioMode::Single => Some(random_report_spec(rng)),
                _ => None,
            },
        })
        .collect()
}

fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let mode = match rng.gen_range(0..3u8) {
        0 => ScenarioMode::Scores,
        1 => ScenarioMode::Single,
        _ => ScenarioMode::Hourly,
    };
    let players = random_players(rng, mode);
    let utility = match mode {
        // report-driven modes carry a client; keep the rates consistent
        ScenarioMode::Scores => random_utility(rng),
        _ => UtilitySection::Proportional {
            reward_rate: rng.gen_range(100.0..2000.0),
        },
    };
    let client_rate = match utility {
        UtilitySection::Proportional { reward_rate } => reward_rate,
        UtilitySection::Exogenous { .. } => rng.gen_range(100.0..2000.0),
    };
    let expected = rng.gen_bool(0.4).then(|| ExpectedSection {
        tolerance: rng.gen_range(0.001..0.1),
        profits: matches!(mode, ScenarioMode::Scores | ScenarioMode::Single).then(|| {
            (0..players.len())
                .map(|_| rng.gen_range(-100.0..1000.0))
                .collect()
        }),
        total_profits: matches!(mode, ScenarioMode::Hourly).then(|| {
            (0..players.len())
                .map(|_| rng.gen_range(-100.0..1000.0))
                .collect()
        }),
        aggregate_score: rng.gen_bool(0.5).then(|| rng.gen_range(0.0..1.0)),
        score_tolerance: rng.gen_bool(0.5).then_some(1e-4),
    });
    match mode {
        ScenarioMode::Scores => Scenario {
            task: "roundtrip-scores".into(),
            mode,
            market: None,
            utility,
            client: None,
            bounds: None,
            scores: Some(ScoresSection {
                client: rng.gen_range(0.0..1.0),
                aggregate: rng.gen_range(0.0..1.0),
            }),
            players,
            outcome: None,
            hourly: None,
            expected,
        },
        ScenarioMode::Single => Scenario {
            task: "roundtrip-single".into(),
            mode,
            market: Some(MarketSection {
                scoring_rule: forecast_market::ScoringRule::OrientedCrps,
                aggregation: if rng.gen_bool(0.5) {
                    forecast_market::AggregationMethod::Qa
                } else {
                    forecast_market::AggregationMethod::Lop
                },
                grid_size: rng.gen_bool(0.5).then(|| rng.gen_range(9..999)),
            }),
            utility,
            client: Some(ClientSection {
                report: random_report_spec(rng),
                reward_rate: client_rate,
            }),
            bounds: Some(BoundsSection {
                lo: 1.0,
                hi: 1000.0,
            }),
            scores: None,
            players,
            outcome: Some(OutcomeSpec {
                binary: None,
                category: None,
                real: Some(rng.gen_range(0.0..1.0)),
            }),
            hourly: None,
            expected,
        },
        ScenarioMode::Hourly => Scenario {
            task: "roundtrip-hourly".into(),
            mode,
            market: Some(MarketSection {
                scoring_rule: forecast_market::ScoringRule::OrientedCrps,
                aggregation: forecast_market::AggregationMethod::Qa,
                grid_size: Some(rng.gen_range(9..200)),
            }),
            utility,
            client: Some(ClientSection {
                report: random_report_spec(rng),
                reward_rate: client_rate,
            }),
            bounds: Some(BoundsSection {
                lo: 1.0,
                hi: 1000.0,
            }),
            scores: None,
            players,
            outcome: None,
            hourly: Some(HourlySection {
                forecasts: "forecasts.csv".into(),
                observations: "observations.csv".into(),
                client_forecasts: rng.gen_bool(0.3).then(|| "client.csv".into()),
            }),
            expected,
        },
    }
}

#[test]
fn one_hundred_random_scenarios_round_trip_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_7060);
    for case in 0..100 {
        let scenario = random_scenario(&mut rng);
        let text = scenario.to_toml();
        let parsed: Scenario =
            toml::from_str(&text).unwrap_or_else(|e| panic!("case {case}: {e}\n{text}"));
        assert_eq!(
            parsed, scenario,
            "case {case} drifted through TOML:\n{text}"
        );
    }
}

#[test]
fn serialized_scenarios_stay_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    for _ in 0..40 {
        let scenario = random_scenario(&mut rng);
        // wagers were drawn inside the bounds sections we emit, scores in
        // [0,1], ids unique — the generator only produces valid files
        let parsed: Scenario = toml::from_str(&scenario.to_toml()).unwrap();
        parsed.validate().unwrap();
    }
}
