//! CSV ingestion for hourly (day-ahead style) scenarios.
//!
//! Forecasts arrive in long format, one quantile per row:
//! `player_id,hour,tau,value`. Observations arrive as `hour,observation`.
//! Every (player, hour) pair must carry the full tau set of the session
//! grid, hours must be contiguous from zero, and normalized values and
//! observations must lie in `[0, 1]`. All errors name the file and row.

use crate::scenario::Scenario;
use crate::CliError;
use forecast_market::{GridSpec, PredictiveReport, QuantileGrid};
use std::collections::BTreeMap;
use std::path::Path;

/// One hourly run's inputs, fully validated: per-player reports and the
/// observation for each hour, plus hourly client reports when a client
/// forecast file is configured.
#[derive(Debug, Clone)]
pub struct HourlyData {
    /// Hour labels `0..n`, in order.
    pub hours: Vec<u32>,
    pub observations: Vec<f64>,
    /// Indexed `[player][hour]`, players in scenario order.
    pub player_reports: Vec<Vec<PredictiveReport>>,
    pub client_reports: Option<Vec<PredictiveReport>>,
}

struct ForecastRow {
    line: u64,
    player: String,
    hour: u32,
    tau: f64,
    value: f64,
}

/// Load and validate the CSV inputs referenced by an hourly scenario.
/// Paths are resolved relative to the scenario file's directory.
pub fn load(
    scenario: &Scenario,
    scenario_dir: &Path,
    spec: GridSpec,
) -> Result<HourlyData, CliError> {
    let section = scenario
        .hourly
        .as_ref()
        .expect("validated: hourly section present");
    let player_ids: Vec<String> = scenario.players.iter().map(|p| p.id.clone()).collect();

    let forecast_path = scenario_dir.join(&section.forecasts);
    let rows = read_forecast_rows(&forecast_path)?;
    let label = section.forecasts.as_str();
    let (by_player, hours) = assemble_grids(rows, &player_ids, spec, label)?;

    let obs_path = scenario_dir.join(&section.observations);
    let observations = read_observations(&obs_path, &hours, section.observations.as_str())?;

    let client_reports = match &section.client_forecasts {
        None => None,
        Some(rel) => {
            let rows = read_forecast_rows(&scenario_dir.join(rel))?;
            let mut ids: Vec<String> = rows.iter().map(|r| r.player.clone()).collect();
            ids.sort();
            ids.dedup();
            if ids.len() != 1 {
                return Err(CliError::Validation(format!(
                    "{rel}: expected a single forecaster id, found {}",
                    ids.len()
                )));
            }
            let (grids, client_hours) = assemble_grids(rows, &ids, spec, rel)?;
            if client_hours != hours {
                return Err(CliError::Validation(format!(
                    "{rel}: hours do not match {label}"
                )));
            }
            Some(grids.into_values().next().expect("one forecaster"))
        }
    };

    let player_reports = player_ids.iter().map(|id| by_player[id].clone()).collect();
    Ok(HourlyData {
        hours,
        observations,
        player_reports,
        client_reports,
    })
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    let file =
        std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn check_header(
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
    label: &str,
) -> Result<(), CliError> {
    let headers = reader
        .headers()
        .map_err(|e| CliError::Validation(format!("{label}: {e}")))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(CliError::Validation(format!(
            "{label}: header must be `{}`, found `{}`",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn read_forecast_rows(path: &Path) -> Result<Vec<ForecastRow>, CliError> {
    let label = path.display();
    let mut reader = open_csv(path)?;
    check_header(
        &mut reader,
        &["player_id", "hour", "tau", "value"],
        &label.to_string(),
    )?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Validation(format!("{label}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let at = |msg: String| CliError::Validation(format!("{label} row {line}: {msg}"));
        if record.len() != 4 {
            return Err(at(format!("expected 4 fields, found {}", record.len())));
        }
        let player = record[0].to_string();
        let hour: u32 = record[1].parse().map_err(|_| {
            at(format!(
                "hour `{}` is not a nonnegative integer",
                &record[1]
            ))
        })?;
        let tau: f64 = record[2]
            .parse()
            .map_err(|_| at(format!("tau `{}` is not a number", &record[2])))?;
        let value: f64 = record[3]
            .parse()
            .map_err(|_| at(format!("value `{}` is not a number", &record[3])))?;
        if !(tau > 0.0 && tau < 1.0) {
            return Err(at(format!("tau {tau} must lie strictly inside (0, 1)")));
        }
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(at(format!(
                "value {value} must lie in [0, 1] (normalized power)"
            )));
        }
        rows.push(ForecastRow {
            line,
            player,
            hour,
            tau,
            value,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Validation(format!("{label}: no forecast rows")));
    }
    Ok(rows)
}

/// Per-player forecast series, hours ascending.
type PlayerSeries = BTreeMap<String, Vec<PredictiveReport>>;
/// Raw (line, tau, value) triples keyed by (player, hour).
type GroupedRows = BTreeMap<(String, u32), Vec<(u64, f64, f64)>>;

/// Group rows into per-(player, hour) quantile grids on the session grid.
/// Returns the grids (hours ascending per player) and the common hour
/// labels, which must be contiguous from 0 and fully covered by everyone.
fn assemble_grids(
    rows: Vec<ForecastRow>,
    expected_ids: &[String],
    spec: GridSpec,
    label: &str,
) -> Result<(PlayerSeries, Vec<u32>), CliError> {
    let mut grouped: GroupedRows = BTreeMap::new();
    for row in rows {
        if !expected_ids.contains(&row.player) {
            return Err(CliError::Validation(format!(
                "{label} row {}: player `{}` is not in the scenario",
                row.line, row.player
            )));
        }
        grouped
            .entry((row.player, row.hour))
            .or_default()
            .push((row.line, row.tau, row.value));
    }
    let hour_set: std::collections::BTreeSet<u32> = grouped.keys().map(|(_, hour)| *hour).collect();
    let hours: Vec<u32> = (0..hour_set.len() as u32).collect();
    if !hour_set.iter().copied().eq(hours.iter().copied()) {
        let first_gap = hours
            .iter()
            .find(|h| !hour_set.contains(h))
            .copied()
            .unwrap_or(0);
        return Err(CliError::Validation(format!(
            "{label}: hours must be contiguous from 0; hour {first_gap} is missing"
        )));
    }
    for id in expected_ids {
        for h in &hours {
            if !grouped.contains_key(&(id.clone(), *h)) {
                return Err(CliError::Validation(format!(
                    "{label}: no forecast for player `{id}` hour {h}"
                )));
            }
        }
    }

    let reference = spec.taus();
    let mut result: BTreeMap<String, Vec<PredictiveReport>> = BTreeMap::new();
    for ((player, hour), mut entries) in grouped {
        entries.sort_by(|a, b| a.1.total_cmp(&b.1));
        if entries.len() != spec.size {
            return Err(CliError::Validation(format!(
                "{label}: player `{player}` hour {hour} has {} of {} tau levels",
                entries.len(),
                spec.size
            )));
        }
        let mut values = Vec::with_capacity(spec.size);
        for (k, &(line, tau, value)) in entries.iter().enumerate() {
            if (tau - reference[k]).abs() > 1e-9 {
                return Err(CliError::Validation(format!(
                    "{label} row {line}: tau {tau} does not match grid level {} (grid size {})",
                    reference[k], spec.size
                )));
            }
            values.push(value);
        }
        // snap taus onto the session grid so aggregation sees exact levels
        let grid = QuantileGrid::new(reference.clone(), values, Some((0.0, 1.0))).map_err(|e| {
            CliError::Validation(format!("{label}: player `{player}` hour {hour}: {e}"))
        })?;
        result
            .entry(player)
            .or_default()
            .push(PredictiveReport::Continuous(
                forecast_market::ContinuousDist::Grid(grid),
            ));
    }
    Ok((result, hours))
}

fn read_observations(path: &Path, hours: &[u32], label: &str) -> Result<Vec<f64>, CliError> {
    let mut reader = open_csv(path)?;
    check_header(&mut reader, &["hour", "observation"], label)?;
    let mut seen: BTreeMap<u32, f64> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Validation(format!("{label}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let at = |msg: String| CliError::Validation(format!("{label} row {line}: {msg}"));
        let hour: u32 = record[0].parse().map_err(|_| {
            at(format!(
                "hour `{}` is not a nonnegative integer",
                &record[0]
            ))
        })?;
        let obs: f64 = record[1]
            .parse()
            .map_err(|_| at(format!("observation `{}` is not a number", &record[1])))?;
        if !obs.is_finite() || !(0.0..=1.0).contains(&obs) {
            return Err(at(format!("observation {obs} must lie in [0, 1]")));
        }
        if seen.insert(hour, obs).is_some() {
            return Err(at(format!("hour {hour} observed twice")));
        }
    }
    for h in hours {
        if !seen.contains_key(h) {
            return Err(CliError::Validation(format!(
                "{label}: no observation for hour {h}"
            )));
        }
    }
    if seen.len() != hours.len() {
        let extra = seen.keys().find(|h| !hours.contains(h)).unwrap();
        return Err(CliError::Validation(format!(
            "{label}: observation for hour {extra} has no forecasts"
        )));
    }
    Ok(hours.iter().map(|h| seen[h]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        BoundsSection, ClientSection, HourlySection, MarketSection, PlayerSection, ReportSpec,
        ScenarioMode, UtilitySection,
    };
    use forecast_market::{AggregationMethod, ScoringRule};
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, content: &str) {
        let mut f = std::fs::File::create(dir.join(name)).unwrap();
        f.write_all(content.as_bytes()).unwrap();
    }

    fn tiny_scenario() -> Scenario {
        Scenario {
            task: "hourly-test".into(),
            mode: ScenarioMode::Hourly,
            market: Some(MarketSection {
                scoring_rule: ScoringRule::OrientedCrps,
                aggregation: AggregationMethod::Qa,
                grid_size: Some(3),
            }),
            utility: UtilitySection::Exogenous { pool: 100.0 },
            client: Some(ClientSection {
                report: ReportSpec::Uniform { lo: 0.0, hi: 1.0 },
                reward_rate: 100.0,
            }),
            bounds: Some(BoundsSection { lo: 1.0, hi: 500.0 }),
            scores: None,
            players: vec![
                PlayerSection {
                    id: "a".into(),
                    wager: 100.0,
                    score: None,
                    report: None,
                },
                PlayerSection {
                    id: "b".into(),
                    wager: 50.0,
                    score: None,
                    report: None,
                },
            ],
            outcome: None,
            hourly: Some(HourlySection {
                forecasts: "f.csv".into(),
                observations: "o.csv".into(),
                client_forecasts: None,
            }),
            expected: None,
        }
    }

    fn forecasts_csv(rows: &[(&str, u32, f64, f64)]) -> String {
        let mut out = String::from("player_id,hour,tau,value\n");
        for (p, h, t, v) in rows {
            out.push_str(&format!("{p},{h},{t},{v}\n"));
        }
        out
    }

    fn full_rows() -> Vec<(&'static str, u32, f64, f64)> {
        let mut rows = Vec::new();
        for h in 0..2u32 {
            for (p, base) in [("a", 0.3), ("b", 0.5)] {
                for (k, tau) in [(0usize, 0.25), (1, 0.5), (2, 0.75)] {
                    rows.push((p, h, tau, base + 0.1 * k as f64));
                }
            }
        }
        rows
    }

    #[test]
    fn loads_a_complete_two_hour_table() {
        let dir = std::env::temp_dir().join("fm-hourly-ok");
        std::fs::create_dir_all(&dir).unwrap();
        write_file(&dir, "f.csv", &forecasts_csv(&full_rows()));
        write_file(&dir, "o.csv", "hour,observation\n0,0.4\n1,0.6\n");
        let spec = GridSpec::new(3).unwrap();
        let data = load(&tiny_scenario(), &dir, spec).unwrap();
        assert_eq!(data.hours, vec![0, 1]);
        assert_eq!(data.observations, vec![0.4, 0.6]);
        assert_eq!(data.player_reports.len(), 2);
        assert_eq!(data.player_reports[0].len(), 2);
    }

    #[test]
    fn missing_hour_for_one_player_is_row_addressed() {
        let dir = std::env::temp_dir().join("fm-hourly-missing");
        std::fs::create_dir_all(&dir).unwrap();
        let rows: Vec<_> = full_rows()
            .into_iter()
            .filter(|(p, h, _, _)| !(*p == "b" && *h == 1))
            .collect();
        write_file(&dir, "f.csv", &forecasts_csv(&rows));
        write_file(&dir, "o.csv", "hour,observation\n0,0.4\n1,0.6\n");
        let spec = GridSpec::new(3).unwrap();
        let err = load(&tiny_scenario(), &dir, spec).unwrap_err();
        assert!(
            matches!(&err, CliError::Validation(m) if m.contains("`b`")),
            "{err}"
        );
    }

    #[test]
    fn incomplete_tau_set_is_reported() {
        let dir = std::env::temp_dir().join("fm-hourly-taus");
        std::fs::create_dir_all(&dir).unwrap();
        let rows: Vec<_> = full_rows()
            .into_iter()
            .filter(|(p, h, t, _)| !(*p == "a" && *h == 0 && *t == 0.5))
            .collect();
        write_file(&dir, "f.csv", &forecasts_csv(&rows));
        write_file(&dir, "o.csv", "hour,observation\n0,0.4\n1,0.6\n");
        let spec = GridSpec::new(3).unwrap();
        let err = load(&tiny_scenario(), &dir, spec).unwrap_err();
        assert!(
            matches!(&err, CliError::Validation(m) if m.contains("2 of 3 tau levels")),
            "{err}"
        );
    }

    #[test]
    fn out_of_range_value_names_the_row() {
        let dir = std::env::temp_dir().join("fm-hourly-range");
        std::fs::create_dir_all(&dir).unwrap();
        let mut rows = full_rows();
        rows[4].3 = 1.4; // row 6 of the file (header is row 1)
        write_file(&dir, "f.csv", &forecasts_csv(&rows));
        write_file(&dir, "o.csv", "hour,observation\n0,0.4\n1,0.6\n");
        let spec = GridSpec::new(3).unwrap();
        let err = load(&tiny_scenario(), &dir, spec).unwrap_err();
        assert!(
            matches!(&err, CliError::Validation(m) if m.contains("row 6")),
            "{err}"
        );
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = std::env::temp_dir().join("fm-hourly-nofile");
        std::fs::create_dir_all(&dir).unwrap();
        let _ = std::fs::remove_file(dir.join("f.csv"));
        let spec = GridSpec::new(3).unwrap();
        let err = load(&tiny_scenario(), &dir, spec).unwrap_err();
        assert!(matches!(err, CliError::Io(_)), "{err}");
    }
}
