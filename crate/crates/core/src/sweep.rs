//! Monte-Carlo sweeps over a scene parameter, with paired trials across
//! schemes and bit-reproducible aggregation.
//!
//! Each trial `t` owns two fixed RNG streams of the master seed: `2t` for
//! channel generation and `2t + 1` for the random-pricing draw. Every scheme
//! at a given trial therefore sees the identical channel realization, so
//! scheme comparisons are paired. Trials fan out over a thread pool but are
//! aggregated in trial order with fixed-order sums, which keeps the emitted
//! CSV byte-identical across runs and across thread counts.

use crate::game::{
    run_direct_link, run_random_pricing, run_stackelberg, SchemeKind,
};
use crate::scenario::{dbm_to_watts, generate_channels, trial_rng, ScenarioConfig, Utilities};
use crate::{Error, Result};
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;

/// Which scene parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Transmit power budget, in dBm.
    PMaxDbm,
    /// Number of reflection modules.
    NumModules,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::PMaxDbm => "p_max_dbm",
            SweepVariable::NumModules => "num_modules",
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "p_max_dbm" => Ok(SweepVariable::PMaxDbm),
            "num_modules" => Ok(SweepVariable::NumModules),
            other => Err(format!(
                "unknown sweep variable {other:?}; expected p_max_dbm or num_modules"
            )),
        }
    }
}

/// A full sweep request.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    /// Trials per sweep value.
    pub trials: usize,
    pub schemes: Vec<SchemeKind>,
    pub scenario: ScenarioConfig,
    pub master_seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            variable: SweepVariable::PMaxDbm,
            values: vec![-5.0, -2.5, 0.0, 2.5, 5.0],
            trials: 200,
            schemes: SchemeKind::ALL.to_vec(),
            scenario: ScenarioConfig::reference_scene(),
            master_seed: 0,
        }
    }
}

impl SweepSpec {
    /// The base scenario with one sweep value substituted in.
    pub fn scenario_at(&self, value: f64) -> Result<ScenarioConfig> {
        let mut cfg = self.scenario.clone();
        cfg.rng_seed = self.master_seed;
        match self.variable {
            SweepVariable::PMaxDbm => {
                if !value.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "p_max_dbm sweep value must be finite, got {value}"
                    )));
                }
                cfg.max_power = dbm_to_watts(value);
            }
            SweepVariable::NumModules => {
                if !(value.is_finite() && value >= 0.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "num_modules sweep value must be a non-negative integer, got {value}"
                    )));
                }
                cfg.num_modules = value as usize;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep value list is empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        for &value in &self.values {
            self.scenario_at(value)?;
        }
        Ok(())
    }
}

/// One successful scheme run within a sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialOutcome {
    /// Index into the spec's value list.
    pub value_index: usize,
    pub value: f64,
    pub scheme: SchemeKind,
    pub trial: usize,
    pub price: f64,
    pub utilities: Utilities,
    pub inner_converged: bool,
    pub outer_converged: bool,
}

/// One excluded scheme run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialFailure {
    pub value_index: usize,
    pub value: f64,
    pub scheme: SchemeKind,
    pub trial: usize,
    pub message: String,
}

/// Aggregated row, all floats already rounded to 9 significant digits.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResultRow {
    pub sweep_name: String,
    pub sweep_value: f64,
    pub scheme: SchemeKind,
    /// Successful trials included in the means.
    pub trials: usize,
    pub mean_u: f64,
    pub ci95_u: f64,
    pub mean_v: f64,
    pub ci95_v: f64,
    pub mean_sum_rate: f64,
    pub ci95_sum_rate: f64,
    pub mean_triggered: f64,
    pub failure_count: usize,
}

/// Aggregated sweep table, one row per (sweep value, scheme).
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// Everything a sweep produces: the table plus the per-trial records the
/// table was built from (kept for paired significance tests).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub table: ResultTable,
    pub outcomes: Vec<TrialOutcome>,
    pub failures: Vec<TrialFailure>,
}

/// Sample mean and 95% confidence half-width (`1.96·s/√n`; zero for `n ≤ 1`).
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Round to 9 significant digits through the decimal representation, so the
/// stored value round-trips exactly through the CSV.
pub fn round_sig9(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.8e}").parse().expect("formatted float parses")
    } else {
        x
    }
}

fn format_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Run the sweep on a dedicated pool of `threads` workers (0 = one per core).
pub fn run_sweep(spec: &SweepSpec, threads: usize) -> Result<SweepOutput> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("could not build thread pool: {e}")))?;

    let mut tasks = Vec::with_capacity(spec.values.len() * spec.trials);
    for (value_index, _) in spec.values.iter().enumerate() {
        for trial in 0..spec.trials {
            tasks.push((value_index, trial));
        }
    }

    let per_task: Vec<Result<Vec<std::result::Result<TrialOutcome, TrialFailure>>>> = pool
        .install(|| {
            tasks
                .par_iter()
                .map(|&(value_index, trial)| run_trial(spec, value_index, trial))
                .collect()
        });

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for task in per_task {
        for result in task? {
            match result {
                Ok(outcome) => outcomes.push(outcome),
                Err(failure) => failures.push(failure),
            }
        }
    }
    let table = aggregate(spec, &outcomes, &failures)?;
    Ok(SweepOutput {
        table,
        outcomes,
        failures,
    })
}

fn run_trial(
    spec: &SweepSpec,
    value_index: usize,
    trial: usize,
) -> Result<Vec<std::result::Result<TrialOutcome, TrialFailure>>> {
    let value = spec.values[value_index];
    let cfg = spec.scenario_at(value)?;
    let mut channel_rng = trial_rng(spec.master_seed, 2 * trial as u64);
    let ch = generate_channels(&cfg, &mut channel_rng)?;

    let mut results = Vec::with_capacity(spec.schemes.len());
    for &scheme in &spec.schemes {
        let run = match scheme {
            SchemeKind::Stackelberg => run_stackelberg(&ch, &cfg),
            SchemeKind::RandomPricing => {
                let mut price_rng = trial_rng(spec.master_seed, 2 * trial as u64 + 1);
                run_random_pricing(&ch, &cfg, &mut price_rng)
            }
            SchemeKind::DirectLink => run_direct_link(&ch, &cfg),
        };
        results.push(match run {
            Ok(outcome) => Ok(TrialOutcome {
                value_index,
                value,
                scheme,
                trial,
                price: outcome.price,
                utilities: outcome.utilities,
                inner_converged: outcome.inner_converged,
                outer_converged: outcome.outer_converged,
            }),
            Err(err) => Err(TrialFailure {
                value_index,
                value,
                scheme,
                trial,
                message: err.to_string(),
            }),
        });
    }
    Ok(results)
}

fn aggregate(
    spec: &SweepSpec,
    outcomes: &[TrialOutcome],
    failures: &[TrialFailure],
) -> Result<ResultTable> {
    let mut rows = Vec::new();
    for (value_index, &value) in spec.values.iter().enumerate() {
        for &scheme in &spec.schemes {
            // Trials arrive ordered, so filtering preserves trial order and
            // the fixed-order sums below are reproducible.
            let picked: Vec<&TrialOutcome> = outcomes
                .iter()
                .filter(|o| o.scheme == scheme && o.value_index == value_index)
                .collect();
            let failed = failures
                .iter()
                .filter(|f| f.scheme == scheme && f.value_index == value_index)
                .count();
            if failed as f64 > 0.05 * spec.trials as f64 {
                return Err(Error::TooManyFailures {
                    failed,
                    trials: spec.trials,
                    context: format!("{}={} scheme={}", spec.variable, value, scheme),
                });
            }
            let u: Vec<f64> = picked.iter().map(|o| o.utilities.follower).collect();
            let v: Vec<f64> = picked.iter().map(|o| o.utilities.leader).collect();
            let rate: Vec<f64> = picked.iter().map(|o| o.utilities.sum_rate).collect();
            let trig: Vec<f64> = picked.iter().map(|o| o.utilities.triggered as f64).collect();
            let (mean_u, ci95_u) = mean_ci(&u);
            let (mean_v, ci95_v) = mean_ci(&v);
            let (mean_sum_rate, ci95_sum_rate) = mean_ci(&rate);
            let (mean_triggered, _) = mean_ci(&trig);
            rows.push(ResultRow {
                sweep_name: spec.variable.name().to_string(),
                sweep_value: round_sig9(value),
                scheme,
                trials: picked.len(),
                mean_u: round_sig9(mean_u),
                ci95_u: round_sig9(ci95_u),
                mean_v: round_sig9(mean_v),
                ci95_v: round_sig9(ci95_v),
                mean_sum_rate: round_sig9(mean_sum_rate),
                ci95_sum_rate: round_sig9(ci95_sum_rate),
                mean_triggered: round_sig9(mean_triggered),
                failure_count: failed,
            });
        }
    }
    Ok(ResultTable { rows })
}

pub const CSV_HEADER: &str = "sweep_name,sweep_value,scheme,trials,mean_U,ci95_U,mean_V,ci95_V,mean_sum_rate,ci95_sum_rate,mean_triggered,failure_count";

/// Serialize a table in the fixed column order with 9-significant-digit
/// floats; output is a pure function of the table.
pub fn to_csv_string(table: &ResultTable) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.sweep_name,
            format_sig9(row.sweep_value),
            row.scheme,
            row.trials,
            format_sig9(row.mean_u),
            format_sig9(row.ci95_u),
            format_sig9(row.mean_v),
            format_sig9(row.ci95_v),
            format_sig9(row.mean_sum_rate),
            format_sig9(row.ci95_sum_rate),
            format_sig9(row.mean_triggered),
            row.failure_count,
        ));
    }
    out
}

/// Parse a table emitted by [`to_csv_string`]; exact inverse for tables whose
/// floats are 9-significant-digit rounded (which [`run_sweep`] guarantees).
pub fn from_csv_str(text: &str) -> Result<ResultTable> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        other => {
            return Err(Error::InvalidConfig(format!(
                "unexpected CSV header: {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (index, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::InvalidConfig(format!(
                "CSV row {} has {} fields, expected 12",
                index + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                Error::InvalidConfig(format!("CSV row {}: bad {what} {s:?}", index + 2))
            })
        };
        let parse_n = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| {
                Error::InvalidConfig(format!("CSV row {}: bad {what} {s:?}", index + 2))
            })
        };
        rows.push(ResultRow {
            sweep_name: fields[0].to_string(),
            sweep_value: parse_f(fields[1], "sweep_value")?,
            scheme: fields[2]
                .parse()
                .map_err(|e| Error::InvalidConfig(format!("CSV row {}: {e}", index + 2)))?,
            trials: parse_n(fields[3], "trials")?,
            mean_u: parse_f(fields[4], "mean_U")?,
            ci95_u: parse_f(fields[5], "ci95_U")?,
            mean_v: parse_f(fields[6], "mean_V")?,
            ci95_v: parse_f(fields[7], "ci95_V")?,
            mean_sum_rate: parse_f(fields[8], "mean_sum_rate")?,
            ci95_sum_rate: parse_f(fields[9], "ci95_sum_rate")?,
            mean_triggered: parse_f(fields[10], "mean_triggered")?,
            failure_count: parse_n(fields[11], "failure_count")?,
        });
    }
    Ok(ResultTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_spec() -> SweepSpec {
        SweepSpec {
            variable: SweepVariable::NumModules,
            values: vec![1.0, 2.0],
            trials: 3,
            schemes: SchemeKind::ALL.to_vec(),
            scenario: ScenarioConfig::uniform_gain(2, 2, 1, 2),
            master_seed: 42,
        }
    }

    #[test]
    fn direct_only_table_has_zero_revenue() {
        let spec = SweepSpec {
            variable: SweepVariable::NumModules,
            values: vec![0.0],
            trials: 1,
            schemes: vec![SchemeKind::DirectLink],
            scenario: ScenarioConfig::uniform_gain(2, 2, 0, 2),
            master_seed: 1,
        };
        let out = run_sweep(&spec, 1).unwrap();
        assert_eq!(out.table.rows.len(), 1);
        let row = &out.table.rows[0];
        assert_eq!(row.mean_v, 0.0);
        assert_eq!(row.ci95_v, 0.0);
        assert_eq!(row.mean_triggered, 0.0);
        assert_eq!(row.trials, 1);
        assert_eq!(row.failure_count, 0);
    }

    #[test]
    fn identical_runs_yield_identical_csv() {
        let spec = tiny_spec();
        let a = to_csv_string(&run_sweep(&spec, 1).unwrap().table);
        let b = to_csv_string(&run_sweep(&spec, 1).unwrap().table);
        assert_eq!(a, b);
    }

    #[test]
    fn thread_count_does_not_change_the_csv() {
        let spec = tiny_spec();
        let single = to_csv_string(&run_sweep(&spec, 1).unwrap().table);
        let multi = to_csv_string(&run_sweep(&spec, 4).unwrap().table);
        assert_eq!(single, multi);
    }

    #[test]
    fn schemes_share_channels_across_runs() {
        // Running a scheme alone must reproduce its rows from a joint run:
        // per-trial channels depend only on (master seed, trial).
        let joint = run_sweep(&tiny_spec(), 2).unwrap();
        for &scheme in &[SchemeKind::Stackelberg, SchemeKind::RandomPricing] {
            let solo = run_sweep(
                &SweepSpec {
                    schemes: vec![scheme],
                    ..tiny_spec()
                },
                2,
            )
            .unwrap();
            let joint_rows: Vec<_> = joint
                .outcomes
                .iter()
                .filter(|o| o.scheme == scheme)
                .collect();
            let solo_rows: Vec<_> = solo.outcomes.iter().collect();
            assert_eq!(joint_rows.len(), solo_rows.len());
            for (a, b) in joint_rows.iter().zip(solo_rows) {
                assert_eq!(**a, *b);
            }
        }
    }

    #[test]
    fn csv_round_trips_exactly() {
        let table = run_sweep(&tiny_spec(), 1).unwrap().table;
        let parsed = from_csv_str(&to_csv_string(&table)).unwrap();
        assert_eq!(table, parsed);
    }

    #[test]
    fn empty_scheme_list_gives_header_only_csv() {
        let spec = SweepSpec {
            schemes: vec![],
            ..tiny_spec()
        };
        let out = run_sweep(&spec, 1).unwrap();
        assert_eq!(to_csv_string(&out.table), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn too_many_failures_abort() {
        let spec = SweepSpec {
            trials: 10,
            ..tiny_spec()
        };
        let failures: Vec<TrialFailure> = (0..1)
            .map(|trial| TrialFailure {
                value_index: 0,
                value: spec.values[0],
                scheme: SchemeKind::Stackelberg,
                trial,
                message: "synthetic".into(),
            })
            .collect();
        let err = aggregate(&spec, &[], &failures).unwrap_err();
        assert!(matches!(err, Error::TooManyFailures { failed: 1, .. }));
    }

    #[test]
    fn five_percent_failures_are_tolerated() {
        let spec = SweepSpec {
            trials: 20,
            ..tiny_spec()
        };
        let failures = vec![TrialFailure {
            value_index: 0,
            value: spec.values[0],
            scheme: SchemeKind::Stackelberg,
            trial: 0,
            message: "synthetic".into(),
        }];
        let table = aggregate(&spec, &[], &failures).unwrap();
        let row = table
            .rows
            .iter()
            .find(|r| r.scheme == SchemeKind::Stackelberg && r.sweep_value == 1.0)
            .unwrap();
        assert_eq!(row.failure_count, 1);
    }

    #[test]
    fn mean_ci_matches_hand_computation() {
        let (mean, ci) = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(mean, 2.5);
        // sample sd = sqrt(5/3); half-width = 1.96·sd/2
        assert_relative_eq!(ci, 1.96 * (5.0f64 / 3.0).sqrt() / 2.0, max_relative = 1e-12);
        assert_eq!(mean_ci(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn round_sig9_round_trips_through_text() {
        for &x in &[1.0 / 3.0, -2.718281828459045e-7, 12345.6789, 0.0] {
            let rounded = round_sig9(x);
            let text = format_sig9(rounded);
            assert_eq!(text.parse::<f64>().unwrap(), rounded);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = tiny_spec();
        spec.values.clear();
        assert!(run_sweep(&spec, 1).is_err());
        let mut spec = tiny_spec();
        spec.trials = 0;
        assert!(run_sweep(&spec, 1).is_err());
        let mut spec = tiny_spec();
        spec.values = vec![1.5];
        assert!(matches!(spec.validate(), Err(Error::InvalidConfig(_))));
    }
}
