//! Built-in mode-equivalence matrix: every parallel run must reproduce the
//! serial `t0` and `t` bit for bit, or fail with the same error.

use crate::dataset::Dataset;
use crate::engine::{BootResult, Engine, ExecutionMode, RunRequest};
use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::statistic::StatisticSpec;

pub const SIZES: [usize; 4] = [1, 5, 49, 200];
pub const RESAMPLES: [usize; 3] = [1, 7, 999];
pub const SEEDS: [u64; 2] = [0, 42];
pub const PARALLEL_MODES: [ExecutionMode; 5] = [
    ExecutionMode::Threaded(2),
    ExecutionMode::Threaded(3),
    ExecutionMode::Threaded(8),
    ExecutionMode::MultiProcess(2),
    ExecutionMode::MultiProcess(4),
];

pub fn statistics() -> Vec<StatisticSpec> {
    vec![
        StatisticSpec::mean(),
        StatisticSpec::median(),
        StatisticSpec::sd(),
        StatisticSpec::ratio("x", "u"),
    ]
}

/// Two columns: `x` in [1, 100) and strictly positive `u` in [1, 50).
pub fn case_dataset(n: usize) -> Result<Dataset> {
    let mut rng = CounterRng::new(0x5eed ^ n as u64);
    let mut unit = || (rng.next_word() >> 11) as f64 / (1u64 << 53) as f64;
    let x: Vec<f64> = (0..n).map(|_| 1.0 + 99.0 * unit()).collect();
    let u: Vec<f64> = (0..n).map(|_| 1.0 + 49.0 * unit()).collect();
    Dataset::new([("x", x), ("u", u)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub n: usize,
    pub statistic: StatisticSpec,
    pub resamples: usize,
    pub seed: u64,
    pub mode: ExecutionMode,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for VerifyOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} n={} stat={} R={} seed={} mode={}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.n,
            self.statistic,
            self.resamples,
            self.seed,
            self.mode,
            self.detail
        )
    }
}

/// Error identity across modes; the failing rank depends on the partition.
pub fn error_key(err: &Error) -> String {
    match err {
        Error::Resample { resample, source, .. } => format!("resample {resample}: {source}"),
        other => other.to_string(),
    }
}

/// Compares one parallel outcome against the serial one.
pub fn compare(serial: &Result<BootResult>, other: &Result<BootResult>) -> (bool, String) {
    match (serial, other) {
        (Ok(a), Ok(b)) => {
            if !crate::engine::bits_equal(&a.t0, &b.t0) {
                (false, "t0 differs".into())
            } else if let Some(row) = a.t.first_difference(&b.t) {
                (false, format!("t differs from row {row}"))
            } else {
                (true, format!("{} replicates identical", b.t.rows()))
            }
        }
        (Err(a), Err(b)) if error_key(a) == error_key(b) => (true, format!("same error: {}", error_key(a))),
        (Err(a), Err(b)) => (false, format!("serial error {a} but {b}")),
        (Ok(_), Err(b)) => (false, format!("serial succeeded but {b}")),
        (Err(a), Ok(_)) => (false, format!("serial failed ({a}) but run succeeded")),
    }
}

/// Runs the full matrix, reporting each outcome as it completes.
pub fn run_matrix(engine: &mut Engine, mut report: impl FnMut(&VerifyOutcome)) -> Result<Vec<VerifyOutcome>> {
    let mut outcomes = Vec::new();
    for n in SIZES {
        let data = case_dataset(n)?;
        for statistic in statistics() {
            let stype = statistic.default_stype();
            for resamples in RESAMPLES {
                for seed in SEEDS {
                    let mut run = |mode| engine.run(&data, &statistic, &RunRequest::new(resamples, stype, seed, mode));
                    let serial = run(ExecutionMode::Serial);
                    for mode in PARALLEL_MODES {
                        let (passed, detail) = compare(&serial, &run(mode));
                        let outcome = VerifyOutcome {
                            n,
                            statistic: statistic.clone(),
                            resamples,
                            seed,
                            mode,
                            passed,
                            detail,
                        };
                        report(&outcome);
                        outcomes.push(outcome);
                    }
                }
            }
        }
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Launcher;
    use crate::plan::Stype;

    #[test]
    fn case_data_is_positive_and_deterministic() {
        let a = case_dataset(49).unwrap();
        assert_eq!(a, case_dataset(49).unwrap());
        assert!(a.column("u").unwrap().iter().all(|&v| v >= 1.0));
        assert_eq!(a.n(), 49);
    }

    #[test]
    fn error_key_ignores_rank() {
        let e = |rank| Error::Resample {
            rank,
            resample: 4,
            source: Box::new(Error::ZeroTotal),
        };
        assert_eq!(error_key(&e(0)), error_key(&e(3)));
    }

    #[test]
    fn small_case_matches_in_process() {
        let mut engine = Engine::default().with_launcher(Launcher::InProcess);
        let data = case_dataset(5).unwrap();
        let spec = StatisticSpec::sd();
        let serial = engine.run(&data, &spec, &RunRequest::new(7, Stype::Indices, 42, ExecutionMode::Serial));
        let mp = engine.run(&data, &spec, &RunRequest::new(7, Stype::Indices, 42, ExecutionMode::MultiProcess(4)));
        assert!(compare(&serial, &mp).0);
        let one = case_dataset(1).unwrap();
        let serial = engine.run(&one, &spec, &RunRequest::new(7, Stype::Indices, 0, ExecutionMode::Serial));
        let threaded = engine.run(&one, &spec, &RunRequest::new(7, Stype::Indices, 0, ExecutionMode::Threaded(3)));
        assert!(serial.is_err());
        assert!(compare(&serial, &threaded).0);
    }
}
