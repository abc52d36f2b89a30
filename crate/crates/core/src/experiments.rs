//! Seeded experiment harness: test signal families, single trials, and
//! success-frequency grids over (measurement count, noise level).

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::error::{domain, Result};
use crate::fourier::{coherence, measure, MeasurementModel, NoiseKind, NoiseSpec, SparseSignal};
use crate::pencil::{pencil_recover, PencilConfig};
use crate::pruning::{superset_method, RecoveryResult, SupersetConfig};

/// A trial succeeds when `‖x̂ − x₀‖₂ / ‖x₀‖₂` is below this.
pub const SUCCESS_TOLERANCE: f64 = 1e-3;

/// Test signals used by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalFamily {
    /// `spikes` random-sign spikes of magnitude `1/√spikes`, pairwise (and
    /// cyclically) at least `⌈separation·n/m⌉` apart.
    WellSeparated { spikes: usize, separation: f64 },
    /// Evenly spaced clusters; each inner vector lists the signs of
    /// neighbouring spikes in one cluster. Magnitudes are equal, unit norm.
    Clusters { signs: Vec<Vec<i8>> },
    /// `k` neighbouring spikes starting at `base`, alternating signs, magnitude `1/√k`.
    AdjacentAlternating { k: usize, base: i64 },
}

impl SignalFamily {
    pub fn well_separated() -> Self {
        Self::WellSeparated {
            spikes: 29,
            separation: 4.0,
        }
    }

    /// Two isolated spikes and three neighbouring pairs (`++`, `+−`, `−+`).
    pub fn five_clusters() -> Self {
        Self::Clusters {
            signs: vec![vec![1], vec![-1], vec![1, 1], vec![1, -1], vec![-1, 1]],
        }
    }

    pub fn adjacent(k: usize) -> Self {
        Self::AdjacentAlternating { k, base: 100 }
    }

    /// Selection constant `c` used for this family unless overridden:
    /// 1 for well-separated and 2-sparse signals, 5 for denser clusters.
    pub fn default_threshold_constant(&self) -> f64 {
        match self {
            Self::WellSeparated { .. } => 1.0,
            Self::AdjacentAlternating { k, .. } if *k <= 2 => 1.0,
            _ => 5.0,
        }
    }

    /// Short name used on the command line and in output files.
    pub fn label(&self) -> String {
        match self {
            Self::WellSeparated { .. } => "well-separated".into(),
            Self::Clusters { .. } => "five-cluster".into(),
            Self::AdjacentAlternating { k, .. } => format!("k{k}"),
        }
    }
}

impl std::str::FromStr for SignalFamily {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "well-separated" | "well_separated" => Ok(Self::well_separated()),
            "five-cluster" | "five_cluster" | "clusters" => Ok(Self::five_clusters()),
            "k2" => Ok(Self::adjacent(2)),
            "k3" => Ok(Self::adjacent(3)),
            "k4" => Ok(Self::adjacent(4)),
            other => Err(domain(format!(
                "unknown signal family {other:?} (expected well-separated, five-cluster, k2, k3 or k4)"
            ))),
        }
    }
}

/// Minimum spacing `⌈separation·n/m⌉` used by the well-separated family.
pub fn minimum_gap(n: usize, m: usize, separation: f64) -> usize {
    (separation * n as f64 / m as f64).ceil() as usize
}

/// Draws a signal from `family`; deterministic in `seed`.
pub fn make_signal(family: &SignalFamily, n: usize, m: usize, seed: u64) -> Result<SparseSignal> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(domain(format!("ambient dimension must be positive and even, got {n}")));
    }
    let half = (n / 2) as i64;
    match family {
        SignalFamily::WellSeparated { spikes, separation } => {
            if *spikes == 0 || m == 0 {
                return Err(domain("well-separated family needs at least one spike and m > 0"));
            }
            let gap = minimum_gap(n, m, *separation);
            if spikes * gap > n {
                return Err(domain(format!(
                    "{spikes} spikes with separation {gap} do not fit in n = {n}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Sorted offsets in [0, slack] spread the leftover room; adding
            // i·gap keeps every (cyclic) spacing at least `gap`.
            let slack = n - spikes * gap;
            let mut offsets: Vec<usize> = (0..*spikes).map(|_| rng.random_range(0..=slack)).collect();
            offsets.sort_unstable();
            let shift = rng.random_range(0..n as i64);
            let mag = 1.0 / (*spikes as f64).sqrt();
            let support: Vec<i64> = offsets
                .iter()
                .enumerate()
                .map(|(i, &u)| ((u + i * gap) as i64 + shift).rem_euclid(n as i64) - half)
                .collect();
            let amplitudes = (0..*spikes)
                .map(|_| Complex64::new(if rng.random_bool(0.5) { mag } else { -mag }, 0.0))
                .collect();
            SparseSignal::new(n, support, amplitudes)
        }
        SignalFamily::Clusters { signs } => {
            let count = signs.len();
            let total: usize = signs.iter().map(Vec::len).sum();
            if count == 0 || total == 0 || signs.iter().any(|c| c.iter().any(|&s| s != 1 && s != -1)) {
                return Err(domain("clusters need at least one spike and signs of ±1"));
            }
            let spacing = n / count;
            if signs.iter().any(|c| c.len() >= spacing) {
                return Err(domain(format!("clusters do not fit in n = {n}")));
            }
            let mag = 1.0 / (total as f64).sqrt();
            let mut support = Vec::with_capacity(total);
            let mut amplitudes = Vec::with_capacity(total);
            for (i, cluster) in signs.iter().enumerate() {
                let base = -half + (i * spacing + spacing / 2) as i64;
                for (j, &s) in cluster.iter().enumerate() {
                    support.push(base + j as i64);
                    amplitudes.push(Complex64::new(s as f64 * mag, 0.0));
                }
            }
            SparseSignal::new(n, support, amplitudes)
        }
        SignalFamily::AdjacentAlternating { k, base } => {
            if *k == 0 {
                return Err(domain("adjacent family needs k >= 1"));
            }
            let mag = 1.0 / (*k as f64).sqrt();
            let support: Vec<i64> = (0..*k as i64).map(|j| base + j).collect();
            let amplitudes = (0..*k)
                .map(|j| Complex64::new(if j % 2 == 0 { mag } else { -mag }, 0.0))
                .collect();
            SparseSignal::new(n, support, amplitudes)
        }
    }
}

/// Recovery method under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Superset,
    Pencil,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Self::Superset => "superset",
            Self::Pencil => "pencil",
        }
    }
}

/// Solver settings shared by every trial of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverConfig {
    pub superset: SupersetConfig,
    pub pencil: PencilConfig,
    #[serde(default)]
    pub noise: NoiseKind,
}

/// Runs one method on a measurement.
pub fn recover(
    y: &crate::fourier::Measurement,
    sigma: f64,
    method: Method,
    config: &SolverConfig,
) -> Result<RecoveryResult> {
    match method {
        Method::Superset => superset_method(y, sigma, &config.superset),
        Method::Pencil => pencil_recover(y, sigma, &config.pencil),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub success: bool,
    pub relative_error: Option<f64>,
    /// Solver error message when the method failed outright.
    pub failure: Option<String>,
    pub result: Option<RecoveryResult>,
}

/// Measures `signal` with fresh noise drawn from `seed`, recovers it, and
/// scores the estimate. Solver errors count as failures.
pub fn run_trial(
    signal: &SparseSignal,
    model: &MeasurementModel,
    sigma: f64,
    method: Method,
    seed: u64,
    config: &SolverConfig,
) -> TrialOutcome {
    let attempt = || -> Result<(f64, RecoveryResult)> {
        let noise = NoiseSpec::new(sigma, seed)?.with_kind(config.noise);
        let y = measure(signal, model, &noise)?;
        let result = recover(&y, sigma, method, config)?;
        let err = result.relative_error(signal)?;
        Ok((err, result))
    };
    match attempt() {
        Ok((err, result)) => TrialOutcome {
            success: err < SUCCESS_TOLERANCE,
            relative_error: Some(err),
            failure: None,
            result: Some(result),
        },
        Err(e) => TrialOutcome {
            success: false,
            relative_error: None,
            failure: Some(e.to_string()),
            result: None,
        },
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream seed for a labelled sub-task of a seeded run.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

const STREAM_SIGNAL: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Grid definition and settings of a phase-diagram run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagramSpec {
    pub family: SignalFamily,
    pub n: usize,
    pub m_grid: Vec<usize>,
    /// `log₁₀ σ` values; `-inf` stands for noiseless data.
    #[serde(with = "log_grid")]
    pub log_sigma_grid: Vec<f64>,
    pub trials: usize,
    pub method: Method,
    pub base_seed: u64,
    pub solver: SolverConfig,
}

impl PhaseDiagramSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty() || self.log_sigma_grid.is_empty() {
            return Err(domain("grids must be nonempty"));
        }
        if self.trials == 0 {
            return Err(domain("trials must be at least 1"));
        }
        if let Some(&m) = self.m_grid.iter().find(|&&m| m > self.n || m == 0) {
            return Err(domain(format!("m = {m} outside [1, n = {}]", self.n)));
        }
        if self.log_sigma_grid.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(domain("noise grid values must be finite or -inf"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.m_grid.len() * self.log_sigma_grid.len()
    }

    fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.log_sigma_grid.len(), cell % self.log_sigma_grid.len())
    }
}

/// JSON has no infinities, so `-inf` grid entries travel as the string `"-inf"`.
mod log_grid {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|&x| if x.is_finite() { Entry::Num(x) } else { Entry::Text(format!("{x}")) })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Entry>::deserialize(d)?
            .into_iter()
            .map(|e| match e {
                Entry::Num(x) => Ok(x),
                Entry::Text(t) => t.parse().map_err(serde::de::Error::custom),
            })
            .collect()
    }
}

pub fn sigma_from_log(v: f64) -> f64 {
    if v == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(v)
    }
}

/// Success count for one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: usize,
    pub successes: usize,
    pub trials: usize,
}

fn run_cell(spec: &PhaseDiagramSpec, cell: usize) -> CellResult {
    let (mi, si) = spec.cell_coords(cell);
    let m = spec.m_grid[mi];
    let sigma = sigma_from_log(spec.log_sigma_grid[si]);
    let model = MeasurementModel::with_default_l(spec.n, m);
    let successes = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let Ok(model) = model else { return false };
            let signal_seed = derive_seed(spec.base_seed, &[cell as u64, t as u64, STREAM_SIGNAL]);
            let noise_seed = derive_seed(spec.base_seed, &[cell as u64, t as u64, STREAM_NOISE]);
            let Ok(signal) = make_signal(&spec.family, spec.n, m, signal_seed) else {
                return false;
            };
            run_trial(&signal, &model, sigma, spec.method, noise_seed, &spec.solver).success
        })
        .filter(|&ok| ok)
        .count();
    CellResult {
        cell,
        successes,
        trials: spec.trials,
    }
}

/// Empirical success frequencies over the `m × σ` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub spec: PhaseDiagramSpec,
    /// `log₁₀(1 − μ(m))` per row.
    pub coherence_axis: Vec<f64>,
    /// `successes[i][j]` for `m_grid[i]`, `log_sigma_grid[j]`.
    pub successes: Vec<Vec<usize>>,
}

impl PhaseDiagram {
    pub fn success(&self, mi: usize, si: usize) -> f64 {
        self.successes[mi][si] as f64 / self.spec.trials as f64
    }

    pub fn success_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.successes.len())
            .map(|i| (0..self.successes[i].len()).map(|j| self.success(i, j)).collect())
            .collect()
    }

    /// Mean success frequency over all cells.
    pub fn aggregate_success(&self) -> f64 {
        let total: usize = self.successes.iter().flatten().sum();
        total as f64 / (self.spec.cells() * self.spec.trials) as f64
    }

    /// Largest increase in success count from a lower to a higher noise level
    /// within one row (zero for a perfectly monotone diagram).
    pub fn max_rise_in_sigma(&self) -> usize {
        let mut worst = 0;
        for row in &self.successes {
            for j in 0..row.len() {
                for jj in (j + 1)..row.len() {
                    worst = worst.max(row[jj].saturating_sub(row[j]));
                }
            }
        }
        worst
    }

    /// CSV: a header of `log₁₀σ` values, then one row per `m` with the
    /// coherence axis and the success frequencies.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "m,log10(1-mu)")?;
        for v in &self.spec.log_sigma_grid {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
        for (i, m) in self.spec.m_grid.iter().enumerate() {
            write!(w, "{m},{}", self.coherence_axis[i])?;
            for j in 0..self.spec.log_sigma_grid.len() {
                write!(w, ",{}", self.success(i, j))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// JSON sidecar with the resolved configuration, seeds and raw counts.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// ASCII graymap, one pixel per cell, white = every trial succeeded.
    /// Rows run from the largest `m` (top) to the smallest.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let rows = self.spec.m_grid.len();
        let cols = self.spec.log_sigma_grid.len();
        writeln!(w, "P2\n{cols} {rows}\n255")?;
        for i in (0..rows).rev() {
            let line: Vec<String> = (0..cols)
                .map(|j| format!("{}", (self.success(i, j) * 255.0).round() as u8))
                .collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Fills the grid with seeded trials. Cells already in `done` are reused;
/// `on_cell` sees every newly finished cell (possibly from several threads).
pub fn phase_diagram_resumable(
    spec: &PhaseDiagramSpec,
    done: &[CellResult],
    on_cell: &(dyn Fn(&CellResult) + Sync),
) -> Result<PhaseDiagram> {
    spec.validate()?;
    let mut results: Vec<Option<CellResult>> = vec![None; spec.cells()];
    for c in done {
        if c.cell < results.len() && c.trials == spec.trials {
            results[c.cell] = Some(*c);
        }
    }
    let pending: Vec<usize> = (0..spec.cells()).filter(|&c| results[c].is_none()).collect();
    let fresh: Vec<CellResult> = pending
        .into_par_iter()
        .map(|cell| {
            let r = run_cell(spec, cell);
            on_cell(&r);
            r
        })
        .collect();
    for r in fresh {
        results[r.cell] = Some(r);
    }
    let cols = spec.log_sigma_grid.len();
    let mut successes = vec![vec![0; cols]; spec.m_grid.len()];
    for r in results.into_iter().flatten() {
        let (i, j) = spec.cell_coords(r.cell);
        successes[i][j] = r.successes;
    }
    let coherence_axis = spec
        .m_grid
        .iter()
        .map(|&m| (1.0 - coherence(spec.n, m)).log10())
        .collect();
    Ok(PhaseDiagram {
        spec: spec.clone(),
        coherence_axis,
        successes,
    })
}

pub fn phase_diagram(spec: &PhaseDiagramSpec) -> Result<PhaseDiagram> {
    phase_diagram_resumable(spec, &[], &|_| {})
}

/// Candidate denoising constants for the pencil baseline.
pub const PENCIL_CONSTANTS: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 3.0];

/// Runs the pencil diagram once per candidate constant and returns the
/// constant with the highest aggregate success (earliest on ties), along
/// with every candidate's score.
pub fn calibrate_pencil_constant(spec: &PhaseDiagramSpec, candidates: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    if candidates.is_empty() {
        return Err(domain("no candidate constants"));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for &c in candidates {
        let mut s = spec.clone();
        s.method = Method::Pencil;
        s.solver.pencil.denoise_constant = c;
        scores.push((c, phase_diagram(&s)?.aggregate_success()));
    }
    let best = scores
        .iter()
        .fold(scores[0], |best, &cur| if cur.1 > best.1 { cur } else { best });
    Ok((best.0, scores))
}

/// Parses `start:stop:step` (inclusive of `stop` up to round-off) or a
/// comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts.as_slice() else {
            return Err(domain(format!("range {s:?} must be start:stop:step")));
        };
        let parse = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| domain(format!("bad number {x:?} in {s:?}: {e}")))
        };
        let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
        if !(step > 0.0) || b < a {
            return Err(domain(format!("range {s:?} needs step > 0 and stop >= start")));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        // Rounded to 12 decimals so that -3.5 + 3·0.1 prints as -3.2.
        Ok((0..count)
            .map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12)
            .collect())
    } else {
        s.split(',')
            .map(|x| {
                let x = x.trim();
                if x == "-inf" {
                    return Ok(f64::NEG_INFINITY);
                }
                x.parse::<f64>()
                    .map_err(|e| domain(format!("bad number {x:?}: {e}")))
            })
            .collect()
    }
}

/// Uniformly random support of size `k` on the grid of `model`.
pub fn random_support<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<i64> {
    let half = (n / 2) as i64;
    let mut all: Vec<i64> = (-half..half).collect();
    all.shuffle(rng);
    let mut s: Vec<i64> = all.into_iter().take(k).collect();
    s.sort_unstable();
    s
}

/// Random complex amplitudes with moduli in `[0.5, 1.5]`.
pub fn random_amplitudes<R: Rng>(rng: &mut R, k: usize) -> Vec<Complex64> {
    (0..k)
        .map(|_| {
            let r = rng.random_range(0.5..1.5);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            Complex64::from_polar(r, phase)
        })
        .collect()
}
