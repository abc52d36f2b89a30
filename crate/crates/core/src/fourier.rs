//! Partial Fourier measurement model: atoms, sparse signals, noisy
//! measurements and mutual coherence.
//!
//! Frequencies live on the grid `k ∈ [−n/2, n/2)` and the sensing matrix has
//! entries `A[j, k] = exp(2πi·j·k/n)` for the first `m` rows `j = 0..m`.
//! Atoms are kept unnormalized: every entry has unit modulus and `‖a_k‖ = √m`.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::CVector;

/// Unit-modulus exponential `exp(2πi·p/n)` with the phase reduced modulo `n`
/// first, so that large products `j·k` do not lose precision.
pub fn root_of_unity(p: i64, n: usize) -> Complex64 {
    let n = n as i64;
    let r = p.rem_euclid(n);
    Complex64::from_polar(1.0, TAU * r as f64 / n as f64)
}

/// Ground-truth sparse vector on the frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSignal {
    n: usize,
    support: Vec<i64>,
    amplitudes: Vec<Complex64>,
}

impl SparseSignal {
    /// Builds a signal, sorting the support. Indices must be distinct, inside
    /// `[−n/2, n/2)`, and every amplitude nonzero.
    pub fn new(n: usize, support: Vec<i64>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(domain(format!("ambient dimension must be positive and even, got {n}")));
        }
        if support.len() != amplitudes.len() {
            return Err(domain(format!(
                "{} support indices but {} amplitudes",
                support.len(),
                amplitudes.len()
            )));
        }
        let half = (n / 2) as i64;
        let mut pairs: Vec<(i64, Complex64)> = support.into_iter().zip(amplitudes).collect();
        pairs.sort_by_key(|&(k, _)| k);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(domain(format!("duplicate support index {}", w[0].0)));
            }
        }
        for &(k, a) in &pairs {
            if k < -half || k >= half {
                return Err(domain(format!("index {k} outside [-{half}, {half})")));
            }
            if a == Complex64::new(0.0, 0.0) {
                return Err(domain(format!("zero amplitude at index {k}")));
            }
        }
        let (support, amplitudes) = pairs.into_iter().unzip();
        Ok(Self {
            n,
            support,
            amplitudes,
        })
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, Vec::new(), Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support(&self) -> &[i64] {
        &self.support
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Multiplies every amplitude by `alpha` (which must be nonzero).
    pub fn scaled(&self, alpha: Complex64) -> Result<Self> {
        Self::new(
            self.n,
            self.support.clone(),
            self.amplitudes.iter().map(|a| a * alpha).collect(),
        )
    }

    /// Dense length-`n` vector, position `k + n/2` holding the amplitude at `k`.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut dense = vec![Complex64::new(0.0, 0.0); self.n];
        let half = (self.n / 2) as i64;
        for (&k, &a) in self.support.iter().zip(&self.amplitudes) {
            dense[(k + half) as usize] = a;
        }
        dense
    }

    /// Writes the text record: an `n <value>` line followed by one
    /// `index re im` line per spike, components in 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n {}", self.n)?;
        writeln!(w, "# index re im")?;
        for (&k, a) in self.support.iter().zip(&self.amplitudes) {
            writeln!(w, "{} {:.16e} {:.16e}", k, a.re, a.im)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut n = None;
        let mut support = Vec::new();
        let mut amplitudes = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["n", value] => n = Some(parse_field::<usize>(value, lineno)?),
                [k, re, im] => {
                    support.push(parse_field::<i64>(k, lineno)?);
                    amplitudes.push(Complex64::new(
                        parse_field(re, lineno)?,
                        parse_field(im, lineno)?,
                    ));
                }
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected `n <value>` or `index re im`, got {line:?}"),
                    })
                }
            }
        }
        let n = n.ok_or(Error::Parse {
            line: 0,
            msg: "missing `n` record".into(),
        })?;
        Self::new(n, support, amplitudes)
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| Error::Parse {
        line,
        msg: format!("{s:?}: {e}"),
    })
}

/// Sizes of the partial Fourier system: `n` grid points, `m` contiguous
/// rows, and `l` rows in the Hankel matrix of observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementModel {
    n: usize,
    m: usize,
    l: usize,
}

impl MeasurementModel {
    pub fn new(n: usize, m: usize, l: usize) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(domain(format!("ambient dimension must be positive and even, got {n}")));
        }
        if m > n {
            return Err(domain(format!("m = {m} exceeds n = {n}")));
        }
        if !(1 < l && l < m) {
            return Err(domain(format!("Hankel row count must satisfy 1 < L < m, got L = {l}, m = {m}")));
        }
        Ok(Self { n, m, l })
    }

    /// Uses the default Hankel row count `⌊m/3⌋`.
    pub fn with_default_l(n: usize, m: usize) -> Result<Self> {
        Self::new(n, m, default_hankel_rows(m))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn with_l(&self, l: usize) -> Result<Self> {
        Self::new(self.n, self.m, l)
    }

    pub fn half(&self) -> i64 {
        (self.n / 2) as i64
    }

    /// All grid frequencies in ascending order.
    pub fn frequencies(&self) -> std::ops::Range<i64> {
        -self.half()..self.half()
    }

    pub fn check_index(&self, k: i64) -> Result<()> {
        if k < -self.half() || k >= self.half() {
            Err(domain(format!("index {k} outside [-{h}, {h})", h = self.half())))
        } else {
            Ok(())
        }
    }

    pub fn coherence(&self) -> f64 {
        coherence(self.n, self.m)
    }
}

pub fn default_hankel_rows(m: usize) -> usize {
    m / 3
}

/// Column `k` of the partial Fourier matrix (length `m`).
pub fn atom(model: &MeasurementModel, k: i64) -> Result<CVector> {
    model.check_index(k)?;
    Ok(atom_window(model.n(), k, 0, model.m()))
}

/// First `len` entries of the atom at `k`, i.e. `a_k` restricted to `len` rows.
pub fn atom_restricted(model: &MeasurementModel, k: i64, len: usize) -> Result<CVector> {
    model.check_index(k)?;
    if len > model.m() {
        return Err(domain(format!("restriction length {len} exceeds m = {}", model.m())));
    }
    Ok(atom_window(model.n(), k, 0, len))
}

/// Entries `offset..offset + len` of the (unbounded) exponential at `k`.
pub fn atom_window(n: usize, k: i64, offset: usize, len: usize) -> CVector {
    CVector::from_iterator(
        len,
        (offset..offset + len).map(|j| root_of_unity(j as i64 * k, n)),
    )
}

/// Columns of `A` indexed by `support`, in the given order.
pub fn atom_matrix(model: &MeasurementModel, support: &[i64]) -> Result<crate::linalg::CMatrix> {
    for &k in support {
        model.check_index(k)?;
    }
    Ok(crate::linalg::CMatrix::from_fn(model.m(), support.len(), |j, c| {
        root_of_unity(j as i64 * support[c], model.n())
    }))
}

/// How the additive noise vector is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Circularly-symmetric complex Gaussian, real and imaginary parts each
    /// `N(0, σ²/2)`, so `E|e_j|² = σ²`.
    #[default]
    CircularComplex,
    /// Real Gaussian `N(0, σ²)` added to the real part only.
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub kind: NoiseKind,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(domain(format!("noise level must be finite and non-negative, got {sigma}")));
        }
        Ok(Self {
            sigma,
            seed,
            kind: NoiseKind::default(),
        })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma: 0.0,
            seed: 0,
            kind: NoiseKind::default(),
        }
    }

    pub fn with_kind(mut self, kind: NoiseKind) -> Self {
        self.kind = kind;
        self
    }

    /// Draws a length-`len` noise vector; deterministic in the seed.
    pub fn sample(&self, len: usize) -> CVector {
        if self.sigma == 0.0 {
            return CVector::zeros(len);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.kind {
            NoiseKind::CircularComplex => {
                let s = self.sigma / std::f64::consts::SQRT_2;
                CVector::from_iterator(
                    len,
                    (0..len).map(|_| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex64::new(s * re, s * im)
                    }),
                )
            }
            NoiseKind::Real => CVector::from_iterator(
                len,
                (0..len).map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(self.sigma * re, 0.0)
                }),
            ),
        }
    }
}

/// Observed data `y` together with the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    values: CVector,
    model: MeasurementModel,
}

impl Measurement {
    pub fn new(values: CVector, model: MeasurementModel) -> Result<Self> {
        if values.len() != model.m() {
            return Err(domain(format!(
                "measurement has {} samples, model expects m = {}",
                values.len(),
                model.m()
            )));
        }
        Ok(Self { values, model })
    }

    pub fn values(&self) -> &CVector {
        &self.values
    }

    pub fn model(&self) -> &MeasurementModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.values)
    }

    /// Same samples, different Hankel row count.
    pub fn with_l(&self, l: usize) -> Result<Self> {
        Ok(Self {
            values: self.values.clone(),
            model: self.model.with_l(l)?,
        })
    }

    /// CSV with columns `j,re,im`, preceded by a `# n=.. m=.. L=..` comment
    /// line (and `sigma=..` when known).
    pub fn write_csv<W: Write>(&self, mut w: W, sigma: Option<f64>) -> Result<()> {
        write!(w, "# n={} m={} L={}", self.model.n(), self.model.m(), self.model.l())?;
        if let Some(s) = sigma {
            write!(w, " sigma={s:.16e}")?;
        }
        writeln!(w)?;
        writeln!(w, "j,re,im")?;
        for (j, z) in self.values.iter().enumerate() {
            writeln!(w, "{},{:.16e},{:.16e}", j, z.re, z.im)?;
        }
        Ok(())
    }

    /// Parses the CSV written by [`Measurement::write_csv`]. Returns the noise
    /// level recorded in the header, if any.
    pub fn read_csv<R: BufRead>(r: R) -> Result<(Self, Option<f64>)> {
        let mut n = None;
        let mut l = None;
        let mut sigma = None;
        let mut values = Vec::new();
        let mut saw_header = false;
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    if let Some((key, value)) = kv.split_once('=') {
                        match key {
                            "n" => n = Some(parse_field::<usize>(value, lineno)?),
                            "L" => l = Some(parse_field::<usize>(value, lineno)?),
                            "sigma" => sigma = Some(parse_field::<f64>(value, lineno)?),
                            _ => {}
                        }
                    }
                }
                continue;
            }
            if !saw_header {
                if line.replace(' ', "") != "j,re,im" {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected header `j,re,im`, got {line:?}"),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [j, re, im] = fields.as_slice() else {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 3 columns, got {}", fields.len()),
                });
            };
            let j: usize = parse_field(j, lineno)?;
            if j != values.len() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("row index {j} out of sequence (expected {})", values.len()),
                });
            }
            values.push(Complex64::new(parse_field(re, lineno)?, parse_field(im, lineno)?));
        }
        let n = n.ok_or(Error::Parse {
            line: 0,
            msg: "missing `# n=` header".into(),
        })?;
        let m = values.len();
        let model = MeasurementModel::new(n, m, l.unwrap_or_else(|| default_hankel_rows(m)))?;
        Ok((Self::new(CVector::from_vec(values), model)?, sigma))
    }
}

/// `y = Σ_k x_k a_k + e`.
pub fn measure(signal: &SparseSignal, model: &MeasurementModel, noise: &NoiseSpec) -> Result<Measurement> {
    if signal.n() != model.n() {
        return Err(domain(format!(
            "signal dimension {} does not match model dimension {}",
            signal.n(),
            model.n()
        )));
    }
    let mut y = noise.sample(model.m());
    for (&k, &amp) in signal.support().iter().zip(signal.amplitudes()) {
        for (j, yj) in y.iter_mut().enumerate() {
            *yj += amp * root_of_unity(j as i64 * k, model.n());
        }
    }
    Measurement::new(y, *model)
}

/// `|Σ_{j<m} exp(2πi·j·d/n)| / m`, the normalized inner product of two atoms
/// whose frequencies differ by `d`.
pub fn lag_correlation(n: usize, m: usize, d: i64) -> f64 {
    let d = d.rem_euclid(n as i64);
    if d == 0 {
        return 1.0;
    }
    let x = std::f64::consts::PI * d as f64 / n as f64;
    let num = (m as f64 * x).sin();
    let den = m as f64 * x.sin();
    (num / den).abs()
}

/// Mutual coherence of the normalized columns of the `m × n` partial Fourier
/// matrix. The Gram matrix is circulant in the column index, so the maximum
/// over column pairs reduces to a maximum over lags.
pub fn coherence(n: usize, m: usize) -> f64 {
    if n < 2 || m == 0 {
        return 0.0;
    }
    (1..n as i64)
        .map(|d| lag_correlation(n, m, d))
        .fold(0.0, f64::max)
}
