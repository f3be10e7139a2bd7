//! Batch experiments: generate instances, solve the binary model exactly and
//! its relaxation, run every rounding scheme, then summarize per group.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{relative_error, round_with_relaxation, solve_bidm, Family, RoundingScheme, RoundingStatus, SearchMode};
use crate::generator::{generate, GenSpec, InterdepMode};
use crate::simplex::{solve, SolveOptions, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub family: Family,
    #[serde(default)]
    pub epsilon: f64,
}

impl SchemeSpec {
    pub fn label(&self) -> String {
        RoundingScheme {
            family: self.family,
            epsilon: self.epsilon,
            max_attempts: 0,
            seed: 0,
        }
        .label()
    }
}

/// Child and Parent at 0, 0.01, 0.05, then Fair.
pub fn standard_schemes() -> Vec<SchemeSpec> {
    let mut out = Vec::new();
    for family in [Family::Child, Family::Parent] {
        for epsilon in [0.0, 0.01, 0.05] {
            out.push(SchemeSpec { family, epsilon });
        }
    }
    out.push(SchemeSpec {
        family: Family::Fair,
        epsilon: 0.0,
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    /// The seed field is ignored; per-trial seeds come from the master seed.
    pub spec: GenSpec,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub groups: Vec<GroupConfig>,
    pub master_seed: u64,
    pub max_attempts: usize,
    pub schemes: Vec<SchemeSpec>,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            groups: Vec::new(),
            master_seed: 1,
            max_attempts: 1000,
            schemes: standard_schemes(),
            threads: 0,
        }
    }
}

impl TrialConfig {
    /// 64 nodes, 4 arcs per node, unstructured pairs at each density.
    pub fn desk(densities: &[f64], trials: usize, master_seed: u64) -> Self {
        let groups = densities
            .iter()
            .map(|&d| GroupConfig {
                spec: GenSpec {
                    nodes: 64,
                    arcs_per_node: 4,
                    interdep_mode: InterdepMode::UnstructuredArcFrac(d),
                    ..Default::default()
                },
                trials,
            })
            .collect();
        Self {
            groups,
            master_seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: String,
    pub status: RoundingStatus,
    pub attempts: usize,
    pub objective: Option<f64>,
    pub relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub group: usize,
    pub trial: usize,
    pub seed: u64,
    pub nodes: usize,
    pub arcs: usize,
    pub interdeps: usize,
    pub network_draws: usize,
    pub interdep_draws: usize,
    pub milp_objective: Option<f64>,
    pub lp_objective: Option<f64>,
    pub lp_relative_error: Option<f64>,
    pub schemes: Vec<SchemeResult>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.milp_objective.is_some()
    }

    /// LP <= MILP <= every feasible rounding, within `tol` relative.
    pub fn sandwich_holds(&self, tol: f64) -> bool {
        let (Some(lp), Some(milp)) = (self.lp_objective, self.milp_objective) else {
            return true;
        };
        let slack = |v: f64| tol * v.abs().max(1.0);
        lp <= milp + slack(milp)
            && self
                .schemes
                .iter()
                .filter_map(|s| s.objective)
                .all(|o| o >= milp - slack(milp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stddev: f64,
    pub count: usize,
}

impl Stat {
    /// Sample standard deviation; zero below two values. Empty gives NaN mean.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stddev: f64::NAN,
                count: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stddev = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, stddev, count: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupKey {
    pub nodes: usize,
    pub arcs_per_node: usize,
    pub density: f64,
    pub mode: String,
}

impl GroupKey {
    fn of(spec: &GenSpec) -> Self {
        let (mode, density) = match spec.interdep_mode {
            InterdepMode::None => ("none", 0.0),
            InterdepMode::StructuredSinkFrac(f) => ("structured", f),
            InterdepMode::UnstructuredArcFrac(f) => ("unstructured", f),
        };
        Self {
            nodes: spec.nodes,
            arcs_per_node: spec.arcs_per_node,
            density,
            mode: mode.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: String,
    /// Over trials where the scheme found a feasible point.
    pub error: Stat,
    pub failure_rate: f64,
    pub mean_attempts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSetSummary {
    pub group: usize,
    pub key: GroupKey,
    /// Trials attempted.
    pub n: usize,
    /// Trials with exact and relaxed optima.
    pub solved: usize,
    pub lp_error: Stat,
    pub schemes: Vec<SchemeSummary>,
}

fn trial_seeds(master: u64, group: usize, trials: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(group as u64);
    (0..trials).map(|_| rng.next_u64()).collect()
}

/// One trial: exact optimum, relaxation, then every scheme from the same
/// relaxation with a shared rounding seed.
pub fn run_trial(config: &TrialConfig, group: usize, trial: usize, seed: u64) -> TrialRecord {
    let spec = GenSpec {
        seed,
        ..config.groups[group].spec.clone()
    };
    let mut record = TrialRecord {
        group,
        trial,
        seed,
        nodes: spec.nodes,
        arcs: 0,
        interdeps: 0,
        network_draws: 0,
        interdep_draws: 0,
        milp_objective: None,
        lp_objective: None,
        lp_relative_error: None,
        schemes: Vec::new(),
        error: None,
    };
    let result = (|| -> Result<(), String> {
        let g = generate(&spec).map_err(|e| e.to_string())?;
        let inst = g.instance;
        record.arcs = inst.arc_count();
        record.interdeps = inst.interdep_count();
        record.network_draws = g.provenance.network_draws;
        record.interdep_draws = g.provenance.interdep_draws;
        let exact = solve_bidm(&inst, SearchMode::Exact).map_err(|e| e.to_string())?;
        if exact.result.status != SolveStatus::Optimal {
            return Err("binary model infeasible".into());
        }
        let milp = exact.result.objective;
        let lp = solve(&inst.lidm_relaxation(), &SolveOptions::default()).map_err(|e| e.to_string())?;
        if lp.status != SolveStatus::Optimal {
            return Err(format!("relaxation {:?}", lp.status));
        }
        record.milp_objective = Some(milp);
        record.lp_objective = Some(lp.objective);
        record.lp_relative_error = relative_error(lp.objective, milp).ok();
        let rounding_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
        for s in &config.schemes {
            let scheme = RoundingScheme {
                family: s.family,
                epsilon: s.epsilon,
                max_attempts: config.max_attempts,
                seed: rounding_seed,
            };
            let out = round_with_relaxation(&inst, &scheme, &lp.flows, None).map_err(|e| e.to_string())?;
            record.schemes.push(SchemeResult {
                scheme: s.label(),
                status: out.status,
                attempts: out.attempts,
                objective: out.objective,
                relative_error: out.objective.and_then(|o| relative_error(o, milp).ok()),
            });
        }
        Ok(())
    })();
    if let Err(e) = result {
        record.error = Some(e);
    }
    record
}

/// Runs every trial of every group, concurrently; records come back sorted by
/// group then trial.
pub fn run_trials(config: &TrialConfig) -> (Vec<TrialRecord>, Vec<TrialSetSummary>) {
    let jobs: Vec<(usize, usize, u64)> = config
        .groups
        .iter()
        .enumerate()
        .flat_map(|(g, gc)| {
            trial_seeds(config.master_seed, g, gc.trials)
                .into_iter()
                .enumerate()
                .map(move |(t, s)| (g, t, s))
        })
        .collect();
    let threads = match config.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        k => k,
    }
    .min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let out = Mutex::new(Vec::with_capacity(jobs.len()));
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(g, t, s)) = jobs.get(k) else { break };
                let rec = run_trial(config, g, t, s);
                out.lock().expect("result lock").push(rec);
            });
        }
    });
    let mut records = out.into_inner().expect("result lock");
    records.sort_by_key(|r| (r.group, r.trial));
    let summaries = summarize(config, &records);
    (records, summaries)
}

/// Group statistics, a pure function of the records.
pub fn summarize(config: &TrialConfig, records: &[TrialRecord]) -> Vec<TrialSetSummary> {
    config
        .groups
        .iter()
        .enumerate()
        .map(|(g, gc)| {
            let group: Vec<&TrialRecord> = records.iter().filter(|r| r.group == g).collect();
            let solved: Vec<&&TrialRecord> = group.iter().filter(|r| r.ok()).collect();
            let lp: Vec<f64> = solved.iter().filter_map(|r| r.lp_relative_error).collect();
            let schemes = config
                .schemes
                .iter()
                .map(|s| {
                    let label = s.label();
                    let results: Vec<&SchemeResult> = solved
                        .iter()
                        .filter_map(|r| r.schemes.iter().find(|x| x.scheme == label))
                        .collect();
                    let errors: Vec<f64> = results.iter().filter_map(|x| x.relative_error).collect();
                    let failed = results.iter().filter(|x| x.status == RoundingStatus::Failed).count();
                    let n = results.len().max(1) as f64;
                    SchemeSummary {
                        scheme: label,
                        error: Stat::of(&errors),
                        failure_rate: failed as f64 / n,
                        mean_attempts: results.iter().map(|x| x.attempts as f64).sum::<f64>() / n,
                    }
                })
                .collect();
            TrialSetSummary {
                group: g,
                key: GroupKey::of(&gc.spec),
                n: group.len(),
                solved: solved.len(),
                lp_error: Stat::of(&lp),
                schemes,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// One row per trial; scheme columns repeat as `label:status|attempts|objective|error`.
pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut s = String::from(
        "group,trial,seed,nodes,arcs,interdeps,network_draws,interdep_draws,milp_objective,lp_objective,lp_relative_error,error",
    );
    if let Some(r) = records.iter().find(|r| !r.schemes.is_empty()) {
        for x in &r.schemes {
            let _ = write!(s, ",{0}:status,{0}:attempts,{0}:objective,{0}:relative_error", x.scheme);
        }
    }
    s.push('\n');
    for r in records {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.group,
            r.trial,
            r.seed,
            r.nodes,
            r.arcs,
            r.interdeps,
            r.network_draws,
            r.interdep_draws,
            opt(r.milp_objective),
            opt(r.lp_objective),
            opt(r.lp_relative_error),
            r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        );
        for x in &r.schemes {
            let status = match x.status {
                RoundingStatus::Feasible => "feasible",
                RoundingStatus::Failed => "failed",
            };
            let _ = write!(s, ",{status},{},{},{}", x.attempts, opt(x.objective), opt(x.relative_error));
        }
        s.push('\n');
    }
    s
}

/// Inverse of [`records_to_csv`].
pub fn records_from_csv(text: &str) -> Result<Vec<TrialRecord>, String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty csv")?.split(',').collect();
    let labels: Vec<String> = header[12..]
        .chunks(4)
        .map(|c| c[0].trim_end_matches(":status").to_string())
        .collect();
    let num = |s: &str| -> Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| format!("{s}: {e}"))
        }
    };
    let int = |s: &str| s.parse::<u64>().map_err(|e| format!("{s}: {e}"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 12 {
                return Err(format!("short row: {line}"));
            }
            let mut schemes = Vec::new();
            for (label, c) in labels.iter().zip(f[12..].chunks(4)) {
                if c.len() < 4 {
                    break;
                }
                schemes.push(SchemeResult {
                    scheme: label.clone(),
                    status: match c[0] {
                        "feasible" => RoundingStatus::Feasible,
                        "failed" => RoundingStatus::Failed,
                        other => return Err(format!("bad status {other}")),
                    },
                    attempts: int(c[1])? as usize,
                    objective: num(c[2])?,
                    relative_error: num(c[3])?,
                });
            }
            Ok(TrialRecord {
                group: int(f[0])? as usize,
                trial: int(f[1])? as usize,
                seed: int(f[2])?,
                nodes: int(f[3])? as usize,
                arcs: int(f[4])? as usize,
                interdeps: int(f[5])? as usize,
                network_draws: int(f[6])? as usize,
                interdep_draws: int(f[7])? as usize,
                milp_objective: num(f[8])?,
                lp_objective: num(f[9])?,
                lp_relative_error: num(f[10])?,
                error: (!f[11].is_empty()).then(|| f[11].to_string()),
                schemes,
            })
        })
        .collect()
}

fn file_label(label: &str) -> String {
    label.replace(['(', ')'], "_").trim_end_matches('_').to_string()
}

/// Writes `group_<k>.csv`, `summary.json` and the two-column TSVs
/// `error_vs_density_<scheme>.tsv` / `failure_vs_density_<scheme>.tsv`.
pub fn write_outputs(dir: &Path, records: &[TrialRecord], summaries: &[TrialSetSummary]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for s in summaries {
        let group: Vec<TrialRecord> = records.iter().filter(|r| r.group == s.group).cloned().collect();
        fs::write(dir.join(format!("group_{}.csv", s.group)), records_to_csv(&group))?;
    }
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summaries)?)?;
    let mut lp = String::from("density\tlp_mean_error\n");
    for s in summaries {
        let _ = writeln!(lp, "{}\t{}", s.key.density, s.lp_error.mean);
    }
    fs::write(dir.join("error_vs_density_lp.tsv"), lp)?;
    if let Some(first) = summaries.first() {
        for (k, scheme) in first.schemes.iter().enumerate() {
            let mut err = format!("density\t{}_mean_error\n", scheme.scheme);
            let mut fail = format!("density\t{}_failure_rate\n", scheme.scheme);
            for s in summaries {
                let _ = writeln!(err, "{}\t{}", s.key.density, s.schemes[k].error.mean);
                let _ = writeln!(fail, "{}\t{}", s.key.density, s.schemes[k].failure_rate);
            }
            let name = file_label(&scheme.scheme);
            fs::write(dir.join(format!("error_vs_density_{name}.tsv")), err)?;
            fs::write(dir.join(format!("failure_vs_density_{name}.tsv")), fail)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(density: f64, trials: usize) -> TrialConfig {
        let mut c = TrialConfig::desk(&[density], trials, 11);
        c.groups[0].spec.nodes = 16;
        c
    }

    #[test]
    fn seven_standard_schemes() {
        let labels: Vec<String> = standard_schemes().iter().map(|s| s.label()).collect();
        assert_eq!(
            labels,
            ["child(0.00)", "child(0.01)", "child(0.05)", "parent(0.00)", "parent(0.01)", "parent(0.05)", "fair"]
        );
    }

    #[test]
    fn csv_round_trip_recomputes_summary() {
        let config = small(0.05, 4);
        let (records, summaries) = run_trials(&config);
        assert_eq!(records.len(), 4);
        let back = records_from_csv(&records_to_csv(&records)).unwrap();
        assert_eq!(back, records);
        assert_eq!(summarize(&config, &back), summaries);
        assert!(records.iter().all(|r| r.sandwich_holds(1e-6)));
    }

    #[test]
    fn no_interdependencies_round_trivially() {
        let mut config = small(0.05, 3);
        config.groups[0].spec.interdep_mode = InterdepMode::None;
        let (records, _) = run_trials(&config);
        for r in &records {
            assert!(r.ok(), "{:?}", r.error);
            for s in &r.schemes {
                assert_eq!(s.status, RoundingStatus::Feasible);
                assert_eq!(s.attempts, 1);
                assert!(s.relative_error.unwrap().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fair_matches_child_half() {
        let mut config = small(0.1, 3);
        config.schemes = vec![
            SchemeSpec {
                family: Family::Fair,
                epsilon: 0.0,
            },
            SchemeSpec {
                family: Family::Child,
                epsilon: 0.5,
            },
        ];
        let (records, _) = run_trials(&config);
        for r in &records {
            let (a, b) = (&r.schemes[0], &r.schemes[1]);
            assert_eq!((a.status, a.attempts, a.objective), (b.status, b.attempts, b.objective));
        }
    }

    #[test]
    fn outputs_written() {
        let config = small(0.05, 2);
        let (records, summaries) = run_trials(&config);
        let dir = tempfile::tempdir().unwrap();
        write_outputs(dir.path(), &records, &summaries).unwrap();
        for f in ["group_0.csv", "summary.json", "error_vs_density_lp.tsv", "failure_vs_density_child_0.01.tsv", "error_vs_density_fair.tsv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn stat_basics() {
        let s = Stat::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.count), (2.0, 2));
        assert!((s.stddev - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(Stat::of(&[4.0]).stddev, 0.0);
    }
}
