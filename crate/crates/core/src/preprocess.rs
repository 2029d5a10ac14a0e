//! From spike times to population vectors: per-unit spike-count window
//! selection, trial averaging and column z-scoring.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::csv::{fmt_float, write_file, CsvBuf, Table};
use crate::dataio::{Matrix, ResponseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const STIMULUS_DURATION_MS: f64 = 150.0;
pub const ANALYSIS_HORIZON_MS: f64 = 400.0;
pub const LATENCY_START_MS: f64 = 10.0;
pub const CANDIDATE_WIDTHS_MS: [f64; 9] = [50.0, 75.0, 100.0, 125.0, 150.0, 175.0, 200.0, 225.0, 250.0];
pub const REFERENCE_WINDOW: CountWindow = CountWindow {
    start_ms: 10.0,
    width_ms: 150.0,
};
pub const BEST_STIMULI: usize = 10;

/// Spike times (ms from stimulus onset) per (stimulus, unit, repetition).
/// Repetition counts may differ between stimuli.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrainSet {
    pub stimulus_ids: Vec<String>,
    pub unit_ids: Vec<String>,
    pub stimulus_duration_ms: f64,
    reps: Vec<usize>,
    stim_base: Vec<usize>,
    offsets: Vec<usize>,
    times: Vec<f64>,
}

impl SpikeTrainSet {
    /// Builds a set from trials ordered `(stimulus, unit, repetition)`, each
    /// stimulus having `repetitions` trials per unit.
    pub fn from_uniform_trials(
        stimulus_ids: Vec<String>,
        unit_ids: Vec<String>,
        repetitions: usize,
        trials: Vec<Vec<f64>>,
        stimulus_duration_ms: f64,
    ) -> Result<Self> {
        let reps = vec![repetitions; stimulus_ids.len()];
        Self::from_trials(stimulus_ids, unit_ids, reps, trials, stimulus_duration_ms)
    }

    pub fn from_trials(
        stimulus_ids: Vec<String>,
        unit_ids: Vec<String>,
        reps: Vec<usize>,
        trials: Vec<Vec<f64>>,
        stimulus_duration_ms: f64,
    ) -> Result<Self> {
        if reps.len() != stimulus_ids.len() {
            return Err(Error::Shape("one repetition count per stimulus required".into()));
        }
        if let Some(s) = reps.iter().position(|&r| r == 0) {
            return Err(Error::ZeroRepetitions {
                stimulus: stimulus_ids[s].clone(),
            });
        }
        let n_units = unit_ids.len();
        let mut stim_base = Vec::with_capacity(reps.len());
        let mut total = 0;
        for &r in &reps {
            stim_base.push(total);
            total += r * n_units;
        }
        if trials.len() != total {
            return Err(Error::Shape(format!("expected {total} trials, got {}", trials.len())));
        }
        let mut offsets = Vec::with_capacity(total + 1);
        let mut times = Vec::with_capacity(trials.iter().map(Vec::len).sum());
        offsets.push(0);
        for mut t in trials {
            if t.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter(
                    "spike times must be finite and nonnegative".into(),
                ));
            }
            t.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            times.extend(t);
            offsets.push(times.len());
        }
        Ok(Self {
            stimulus_ids,
            unit_ids,
            stimulus_duration_ms,
            reps,
            stim_base,
            offsets,
            times,
        })
    }

    pub fn n_stimuli(&self) -> usize {
        self.stimulus_ids.len()
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn repetitions(&self, s: usize) -> usize {
        self.reps[s]
    }

    pub fn total_spikes(&self) -> usize {
        self.times.len()
    }

    fn trial_index(&self, s: usize, u: usize, r: usize) -> usize {
        debug_assert!(r < self.reps[s]);
        self.stim_base[s] + u * self.reps[s] + r
    }

    /// Sorted spike times of one trial.
    pub fn trial(&self, s: usize, u: usize, r: usize) -> &[f64] {
        let k = self.trial_index(s, u, r);
        &self.times[self.offsets[k]..self.offsets[k + 1]]
    }

    /// Spikes of one trial falling in the half-open window.
    pub fn count(&self, s: usize, u: usize, r: usize, w: CountWindow) -> usize {
        let t = self.trial(s, u, r);
        let lo = t.partition_point(|&x| x < w.start_ms);
        let hi = t.partition_point(|&x| x < w.end_ms());
        hi - lo
    }

    /// Trial-averaged count for one (stimulus, unit).
    pub fn mean_count(&self, s: usize, u: usize, w: CountWindow) -> f64 {
        let n = self.reps[s];
        (0..n).map(|r| self.count(s, u, r, w)).sum::<usize>() as f64 / n as f64
    }
}

/// Half-open interval `[start_ms, start_ms + width_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountWindow {
    pub start_ms: f64,
    pub width_ms: f64,
}

impl CountWindow {
    pub fn new(start_ms: f64, width_ms: f64) -> Result<Self> {
        if !(start_ms >= 0.0) || !(width_ms > 0.0) || start_ms + width_ms > ANALYSIS_HORIZON_MS {
            return Err(Error::InvalidParameter(format!(
                "window [{start_ms}, {start_ms}+{width_ms}) must be nonnegative, non-empty and end by {ANALYSIS_HORIZON_MS} ms"
            )));
        }
        Ok(Self { start_ms, width_ms })
    }

    pub fn end_ms(&self) -> f64 {
        self.start_ms + self.width_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub window: CountWindow,
    /// Set when the unit never fired; the reference window is returned.
    pub silent: bool,
}

/// Picks the count window maximizing the unit's mean firing rate over its
/// ten best stimuli (ranked by response in the reference window).
///
/// Candidates start at 10 ms with widths 50..=250 ms in 25 ms steps; equal
/// rates resolve to the smaller width.
pub fn estimate_count_window(trains: &SpikeTrainSet, unit: usize) -> Result<WindowEstimate> {
    if trains.n_stimuli() < BEST_STIMULI {
        return Err(Error::InvalidParameter(format!(
            "window estimation needs at least {BEST_STIMULI} stimuli, got {}",
            trains.n_stimuli()
        )));
    }
    if unit >= trains.n_units() {
        return Err(Error::InvalidParameter(format!("unit index {unit} out of range")));
    }
    let silent =
        (0..trains.n_stimuli()).all(|s| (0..trains.repetitions(s)).all(|r| trains.trial(s, unit, r).is_empty()));
    if silent {
        log::warn!("unit '{}' is silent; using the reference window", trains.unit_ids[unit]);
        return Ok(WindowEstimate {
            window: REFERENCE_WINDOW,
            silent: true,
        });
    }
    let mut ranked: Vec<(usize, f64)> = (0..trains.n_stimuli())
        .map(|s| (s, trains.mean_count(s, unit, REFERENCE_WINDOW)))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
    let best: Vec<usize> = ranked[..BEST_STIMULI].iter().map(|&(s, _)| s).collect();

    let mut winner = None::<(CountWindow, f64)>;
    for &width in &CANDIDATE_WIDTHS_MS {
        let w = CountWindow::new(LATENCY_START_MS, width)?;
        let mean = best.iter().map(|&s| trains.mean_count(s, unit, w)).sum::<f64>() / BEST_STIMULI as f64;
        let rate = mean * 1000.0 / width;
        match winner {
            Some((_, r)) if rate <= r * (1.0 + 1e-12) => {}
            _ => winner = Some((w, rate)),
        }
    }
    Ok(WindowEstimate {
        window: winner.expect("non-empty candidate grid").0,
        silent: false,
    })
}

pub fn estimate_count_windows(trains: &SpikeTrainSet) -> Result<Vec<WindowEstimate>> {
    (0..trains.n_units())
        .into_par_iter()
        .map(|u| estimate_count_window(trains, u))
        .collect()
}

/// Trial-averaged counts, stimuli × units, before normalisation.
pub fn mean_counts<F: Scalar>(trains: &SpikeTrainSet, windows: &[CountWindow]) -> Result<Matrix<F>> {
    if windows.len() != trains.n_units() {
        return Err(Error::Shape(format!(
            "{} windows for {} units",
            windows.len(),
            trains.n_units()
        )));
    }
    let rows: Vec<Vec<F>> = (0..trains.n_stimuli())
        .into_par_iter()
        .map(|s| {
            windows
                .iter()
                .enumerate()
                .map(|(u, &w)| F::of(trains.mean_count(s, u, w)))
                .collect()
        })
        .collect();
    Matrix::from_rows(&rows)
}

/// Trial-averaged counts in each unit's window, z-scored per unit.
pub fn build_population_vectors<F: Scalar>(
    trains: &SpikeTrainSet,
    windows: &[CountWindow],
) -> Result<ResponseMatrix<F>> {
    let counts = mean_counts(trains, windows)?;
    ResponseMatrix::from_counts(&counts, trains.stimulus_ids.clone(), trains.unit_ids.clone())
}

pub const SPIKES_HEADER: [&str; 4] = ["stimulus_id", "unit_id", "repetition", "spike_time_ms"];

pub fn write_spike_times(path: &Path, trains: &SpikeTrainSet, comment: Option<&str>) -> Result<()> {
    let mut out = CsvBuf::new(comment, &SPIKES_HEADER).as_str().to_string();
    out.reserve(trains.total_spikes() * 20);
    for s in 0..trains.n_stimuli() {
        for u in 0..trains.n_units() {
            for r in 0..trains.repetitions(s) {
                for &t in trains.trial(s, u, r) {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        trains.stimulus_ids[s],
                        trains.unit_ids[u],
                        r,
                        fmt_float(t)
                    );
                }
            }
        }
    }
    write_file(path, out.as_bytes())
}

/// Reads a spike-time file.
///
/// Stimulus and unit ids default to order of first appearance. Without an
/// explicit `repetitions`, each stimulus gets `max(repetition) + 1` trials,
/// so a stimulus absent from the file has zero repetitions and is rejected.
pub fn read_spike_times(
    path: &Path,
    stimulus_ids: Option<Vec<String>>,
    unit_ids: Option<Vec<String>>,
    repetitions: Option<usize>,
) -> Result<SpikeTrainSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let fixed_stim = stimulus_ids.is_some();
    let fixed_unit = unit_ids.is_some();
    let mut sids = stimulus_ids.unwrap_or_default();
    let mut uids = unit_ids.unwrap_or_default();
    let mut smap: HashMap<String, usize> = sids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let mut umap: HashMap<String, usize> = uids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();

    let mut records: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            let h: Vec<&str> = line.split(',').map(str::trim).collect();
            if h != SPIKES_HEADER {
                return Err(perr(
                    line_no,
                    1,
                    format!("expected header '{}'", SPIKES_HEADER.join(",")),
                ));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(perr(
                line_no,
                f.len().min(4) + 1,
                format!("expected 4 fields, found {}", f.len()),
            ));
        }
        let s = match smap.get(f[0]) {
            Some(&s) => s,
            None if !fixed_stim => {
                sids.push(f[0].to_string());
                smap.insert(f[0].to_string(), sids.len() - 1);
                sids.len() - 1
            }
            None => return Err(perr(line_no, 1, format!("unknown stimulus id '{}'", f[0]))),
        };
        let u = match umap.get(f[1]) {
            Some(&u) => u,
            None if !fixed_unit => {
                uids.push(f[1].to_string());
                umap.insert(f[1].to_string(), uids.len() - 1);
                uids.len() - 1
            }
            None => return Err(perr(line_no, 2, format!("unknown unit id '{}'", f[1]))),
        };
        let r: usize = f[2]
            .parse()
            .map_err(|_| perr(line_no, 3, format!("cannot parse repetition '{}'", f[2])))?;
        if repetitions.is_some_and(|n| r >= n) {
            return Err(perr(line_no, 3, format!("repetition {r} out of range")));
        }
        let t: f64 = f[3]
            .parse()
            .map_err(|_| perr(line_no, 4, format!("cannot parse spike time '{}'", f[3])))?;
        if !t.is_finite() || t < 0.0 {
            return Err(perr(
                line_no,
                4,
                format!("spike time {t} must be finite and nonnegative"),
            ));
        }
        records.push((s, u, r, t));
    }
    if !header_seen {
        return Err(perr(1, 1, "missing header row".into()));
    }
    let reps: Vec<usize> = match repetitions {
        Some(n) => vec![n; sids.len()],
        None => {
            let mut reps = vec![0; sids.len()];
            for &(s, _, r, _) in &records {
                reps[s] = reps[s].max(r + 1);
            }
            reps
        }
    };
    let n_units = uids.len();
    let mut base = Vec::with_capacity(reps.len());
    let mut total = 0;
    for &r in &reps {
        base.push(total);
        total += r * n_units;
    }
    let mut trials = vec![Vec::new(); total];
    for (s, u, r, t) in records {
        trials[base[s] + u * reps[s] + r].push(t);
    }
    SpikeTrainSet::from_trials(sids, uids, reps, trials, STIMULUS_DURATION_MS)
}

pub const WINDOWS_HEADER: [&str; 3] = ["unit_id", "start_ms", "width_ms"];

pub fn write_windows(path: &Path, unit_ids: &[String], windows: &[CountWindow], comment: Option<&str>) -> Result<()> {
    let mut out = CsvBuf::new(comment, &WINDOWS_HEADER);
    for (id, w) in unit_ids.iter().zip(windows) {
        out.row([id.clone(), fmt_float(w.start_ms), fmt_float(w.width_ms)]);
    }
    out.write(path)
}

pub fn read_windows(path: &Path) -> Result<(Vec<String>, Vec<CountWindow>)> {
    let t = Table::read(path)?;
    t.expect_header(&WINDOWS_HEADER)?;
    let mut ids = Vec::new();
    let mut ws = Vec::new();
    for r in 0..t.rows.len() {
        ids.push(t.text(r, 0).to_string());
        ws.push(
            CountWindow::new(t.finite(r, 1)?, t.finite(r, 2)?).map_err(|e| t.err_at(t.rows[r].0, 1, e.to_string()))?,
        );
    }
    Ok((ids, ws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    /// One unit, `n_stim` stimuli, `reps` repetitions, spikes from `f(s, r)`.
    fn single_unit(n_stim: usize, reps: usize, f: impl Fn(usize, usize) -> Vec<f64>) -> SpikeTrainSet {
        let mut trials = Vec::new();
        for s in 0..n_stim {
            for r in 0..reps {
                trials.push(f(s, r));
            }
        }
        SpikeTrainSet::from_uniform_trials(ids("s", n_stim), ids("u", 1), reps, trials, 150.0).unwrap()
    }

    #[test]
    fn tight_burst_selects_narrowest_window() {
        let trains = single_unit(12, 3, |s, _| {
            (0..5 + s).map(|k| 10.0 + 49.0 * k as f64 / (5 + s) as f64).collect()
        });
        let w = estimate_count_window(&trains, 0).unwrap();
        assert!(!w.silent);
        assert_eq!(w.window, CountWindow::new(10.0, 50.0).unwrap());
    }

    #[test]
    fn late_response_selects_wider_window() {
        let trains = single_unit(12, 2, |_, _| (0..20).map(|k| 150.0 + k as f64 * 2.0).collect());
        let w = estimate_count_window(&trains, 0).unwrap();
        assert_eq!(w.window.width_ms, 175.0);
    }

    #[test]
    fn constant_rate_ties_resolve_to_smallest_width() {
        let trains = single_unit(10, 2, |_, _| (0..80).map(|k| k as f64 * 5.0).collect());
        assert_eq!(estimate_count_window(&trains, 0).unwrap().window.width_ms, 50.0);
    }

    #[test]
    fn silent_unit_gets_reference_window() {
        let trains = single_unit(10, 2, |_, _| Vec::new());
        let w = estimate_count_window(&trains, 0).unwrap();
        assert!(w.silent);
        assert_eq!(w.window, REFERENCE_WINDOW);
        let few = single_unit(9, 2, |_, _| vec![20.0]);
        assert!(estimate_count_window(&few, 0).is_err());
    }

    #[test]
    fn trial_average_and_constant_units() {
        let trains = single_unit(2, 2, |s, r| if s == 0 { vec![20.0; 2 + 2 * r] } else { vec![] });
        let w = [CountWindow::new(10.0, 100.0).unwrap()];
        let m: Matrix<f64> = mean_counts(&trains, &w).unwrap();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 0.0);

        let flat = single_unit(4, 2, |_, _| vec![30.0, 40.0]);
        let z: ResponseMatrix<f64> = build_population_vectors(&flat, &w).unwrap();
        assert!(z.values.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_repetitions_rejected() {
        let err = SpikeTrainSet::from_trials(ids("s", 2), ids("u", 1), vec![1, 0], vec![vec![]], 150.0);
        assert!(matches!(err, Err(Error::ZeroRepetitions { .. })));
    }

    #[test]
    fn population_vectors_match_naive_recount() {
        let mut rng = seeded(21);
        let (ns, nu, nr) = (15, 4, 3);
        let mut trials = Vec::new();
        for _ in 0..ns * nu * nr {
            let n = rng.random_range(0..8);
            trials.push(
                (0..n)
                    .map(|_| (rng.random_range(0..4000) as f64) / 10.0)
                    .collect::<Vec<_>>(),
            );
        }
        let set = SpikeTrainSet::from_uniform_trials(ids("s", ns), ids("u", nu), nr, trials.clone(), 150.0).unwrap();
        let windows: Vec<CountWindow> = (0..nu)
            .map(|u| CountWindow::new(10.0, 50.0 + 25.0 * u as f64).unwrap())
            .collect();
        let m: Matrix<f64> = mean_counts(&set, &windows).unwrap();
        for s in 0..ns {
            for u in 0..nu {
                let w = windows[u];
                let mut total = 0usize;
                for r in 0..nr {
                    for &t in &trials[(s * nu + u) * nr + r] {
                        if t >= w.start_ms && t < w.start_ms + w.width_ms {
                            total += 1;
                        }
                    }
                }
                assert_eq!(m.get(s, u), total as f64 / nr as f64);
            }
        }
        let z: ResponseMatrix<f64> = build_population_vectors(&set, &windows).unwrap();
        assert_eq!(z.values, crate::dataio::zscore_columns(&m).unwrap());
    }

    #[test]
    fn spike_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("popvec-spikes-{}", std::process::id()));
        let path = dir.join("spikes.csv");
        let set = SpikeTrainSet::from_uniform_trials(
            ids("s", 2),
            ids("u", 2),
            2,
            vec![
                vec![1.5],
                vec![],
                vec![3.0, 20.25],
                vec![0.1],
                vec![],
                vec![],
                vec![7.0],
                vec![399.9],
            ],
            150.0,
        )
        .unwrap();
        write_spike_times(&path, &set, Some("hash")).unwrap();
        let back = read_spike_times(&path, Some(ids("s", 2)), Some(ids("u", 2)), Some(2)).unwrap();
        assert_eq!(back, set);
        let inferred = read_spike_times(&path, None, None, None).unwrap();
        assert_eq!(inferred, set);
        fs::remove_dir_all(dir).ok();
    }

    proptest! {
        #[test]
        fn counting_is_additive(times in proptest::collection::vec(0.0f64..400.0, 0..40), a in 0.0f64..100.0, b in 0.0f64..100.0, c in 0.0f64..100.0) {
            let mut cuts = [a, a + b + 0.1, a + b + c + 0.2];
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let set = SpikeTrainSet::from_uniform_trials(ids("s", 1), ids("u", 1), 1, vec![times], 150.0).unwrap();
            let w = |lo: f64, hi: f64| CountWindow { start_ms: lo, width_ms: hi - lo };
            prop_assert_eq!(
                set.count(0, 0, 0, w(cuts[0], cuts[2])),
                set.count(0, 0, 0, w(cuts[0], cuts[1])) + set.count(0, 0, 0, w(cuts[1], cuts[2]))
            );
        }

        #[test]
        fn repetition_order_irrelevant(counts in proptest::collection::vec(0usize..6, 12), shift in 1usize..4) {
            // 3 stimuli x 1 unit x 4 reps, then rotate repetitions within each stimulus
            let build = |rot: usize| {
                let mut trials = Vec::new();
                for s in 0..3 {
                    for r in 0..4 {
                        let n = counts[s * 4 + (r + rot) % 4];
                        trials.push(vec![20.0; n]);
                    }
                }
                SpikeTrainSet::from_uniform_trials(ids("s", 3), ids("u", 1), 4, trials, 150.0).unwrap()
            };
            let w = [REFERENCE_WINDOW];
            let a: Matrix<f64> = mean_counts(&build(0), &w).unwrap();
            let b: Matrix<f64> = mean_counts(&build(shift), &w).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
