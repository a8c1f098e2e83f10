//! Structural-equation simulators: linear additive-noise models and
//! nonlinear models with Gaussian-process draws, including two-group
//! heterogeneous noise and pure-noise row corruption.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{is_acyclic, Dag};
use crate::linalg::cholesky;
use crate::rng::{derive_seed, rng_from_seed};

pub const DEFAULT_COEF_LOW: f64 = 0.5;
pub const DEFAULT_COEF_HIGH: f64 = 2.0;
/// Largest `n` accepted by the GP simulator by default; the Gram
/// factorization is O(n^3).
pub const DEFAULT_GP_SAMPLE_CAP: usize = 4000;

const GP_JITTER_INIT: f64 = 1e-6;
const GP_JITTER_MAX: f64 = 1e-2;

/// Real d×d coefficient matrix `B`; entry `(j, i)` is the coefficient of
/// `X_j` in the structural equation for `X_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAdjacency {
    d: usize,
    matrix: Array2<f64>,
}

impl WeightedAdjacency {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d {
            return Err(Error::dims(format!(
                "coefficient matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficient matrix has non-finite entries"));
        }
        for i in 0..d {
            if matrix[[i, i]] != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at node {i}")));
            }
        }
        Ok(WeightedAdjacency { d, matrix })
    }

    pub fn zeros(d: usize) -> Self {
        WeightedAdjacency {
            d,
            matrix: Array2::zeros((d, d)),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// 0/1 support pattern of the nonzero entries.
    pub fn support(&self) -> Array2<u8> {
        self.matrix.mapv(|v| u8::from(v != 0.0))
    }

    pub fn support_is_acyclic(&self) -> bool {
        is_acyclic(&self.support()).expect("support matrix is square")
    }
}

/// Noise description for a d-variable SEM: per-variable Gaussian scales,
/// optional group structure, optional pure-noise corruption fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    sigma: Vec<f64>,
    groups: Option<Vec<(f64, Vec<f64>)>>,
    corrupt_fraction: f64,
}

impl NoiseSpec {
    pub fn homogeneous(sigma: Vec<f64>) -> Result<Self> {
        NoiseSpec::new(sigma, None, 0.0)
    }

    pub fn new(
        sigma: Vec<f64>,
        groups: Option<Vec<(f64, Vec<f64>)>>,
        corrupt_fraction: f64,
    ) -> Result<Self> {
        if sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("noise scales must be strictly positive"));
        }
        if let Some(gs) = &groups {
            if gs.is_empty() {
                return Err(Error::invalid("group list must be nonempty when present"));
            }
            let total: f64 = gs.iter().map(|(f, _)| f).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("group fractions sum to {total}, not 1")));
            }
            for (f, sig) in gs {
                if !(*f > 0.0) {
                    return Err(Error::invalid("group fractions must be positive"));
                }
                if sig.len() != sigma.len() {
                    return Err(Error::dims("group sigma vector length differs from d"));
                }
                if sig.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::invalid("group noise scales must be positive"));
                }
            }
        }
        if !(0.0..1.0).contains(&corrupt_fraction) {
            return Err(Error::invalid(format!(
                "corrupt_fraction must lie in [0,1), got {corrupt_fraction}"
            )));
        }
        Ok(NoiseSpec {
            sigma,
            groups,
            corrupt_fraction,
        })
    }

    pub fn d(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn groups(&self) -> Option<&[(f64, Vec<f64>)]> {
        self.groups.as_deref()
    }

    pub fn corrupt_fraction(&self) -> f64 {
        self.corrupt_fraction
    }

    /// Exact per-group row counts for a sample of size `n` (largest-remainder
    /// rounding, so the counts sum to `n`).
    pub fn group_counts(&self, n: usize) -> Option<Vec<usize>> {
        let groups = self.groups.as_ref()?;
        let mut counts: Vec<usize> = groups
            .iter()
            .map(|(f, _)| (f * n as f64).floor() as usize)
            .collect();
        let mut short = n - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = groups[a].0 * n as f64 - (groups[a].0 * n as f64).floor();
            let fb = groups[b].0 * n as f64 - (groups[b].0 * n as f64).floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        let mut i = 0;
        while short > 0 {
            counts[order[i % order.len()]] += 1;
            short -= 1;
            i += 1;
        }
        Some(counts)
    }
}

/// Built-in noise configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Homogeneous,
    Heterogeneous,
    Corrupted,
}

/// Builds the standard noise specifications used by the experiments.
///
/// `homogeneous`: unit scale everywhere. `heterogeneous`: a 10% disadvantaged
/// group whose first ⌈d/2⌉ variables have scale 1 and the rest 0.1, and a 90%
/// dominant group with the two halves swapped. `corrupted`: homogeneous plus
/// a pure-noise corruption fraction `p`.
pub fn make_noise_spec(kind: NoiseKind, d: usize, p: Option<f64>) -> Result<NoiseSpec> {
    if d < 2 {
        return Err(Error::invalid(format!("make_noise_spec requires d >= 2, got {d}")));
    }
    let ones = vec![1.0; d];
    match kind {
        NoiseKind::Homogeneous => NoiseSpec::homogeneous(ones),
        NoiseKind::Heterogeneous => {
            let half = d.div_ceil(2);
            let mut disadvantaged = vec![1.0; d];
            let mut dominant = vec![0.1; d];
            for i in half..d {
                disadvantaged[i] = 0.1;
                dominant[i] = 1.0;
            }
            NoiseSpec::new(
                ones,
                Some(vec![(0.1, disadvantaged), (0.9, dominant)]),
                0.0,
            )
        }
        NoiseKind::Corrupted => {
            let p = p.ok_or_else(|| Error::invalid("corrupted noise spec requires p"))?;
            if p >= 1.0 {
                return Err(Error::invalid(format!("corrupt fraction must be < 1, got {p}")));
            }
            NoiseSpec::new(ones, None, p)
        }
    }
}

/// An n×d observation matrix with optional per-row group labels and
/// corruption flags.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    groups: Option<Vec<usize>>,
    corrupt: Option<Vec<bool>>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        DataMatrix::with_labels(values, None, None)
    }

    pub fn with_labels(
        values: Array2<f64>,
        groups: Option<Vec<usize>>,
        corrupt: Option<Vec<bool>>,
    ) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::invalid("data matrix requires n >= 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("data matrix has non-finite entries"));
        }
        if let Some(g) = &groups {
            if g.len() != values.nrows() {
                return Err(Error::dims("group label length differs from row count"));
            }
        }
        if let Some(c) = &corrupt {
            if c.len() != values.nrows() {
                return Err(Error::dims("corruption flag length differs from row count"));
            }
        }
        Ok(DataMatrix {
            values,
            groups,
            corrupt,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn groups(&self) -> Option<&[usize]> {
        self.groups.as_deref()
    }

    pub fn corrupt_flags(&self) -> Option<&[bool]> {
        self.corrupt.as_deref()
    }

    /// Per-column standardization to zero mean and unit variance. Off by
    /// default everywhere; constant columns are left centered only.
    pub fn standardized(&self) -> DataMatrix {
        let mut values = self.values.clone();
        let n = values.nrows() as f64;
        for mut col in values.columns_mut() {
            let mean = col.sum() / n;
            col.mapv_inplace(|v| v - mean);
            let var = col.iter().map(|v| v * v).sum::<f64>() / n;
            if var > 0.0 {
                let s = var.sqrt();
                col.mapv_inplace(|v| v / s);
            }
        }
        DataMatrix {
            values,
            groups: self.groups.clone(),
            corrupt: self.corrupt.clone(),
        }
    }

    /// Writes plain comma-separated rows; `header` adds a `x1..xd` line.
    pub fn write_csv(&self, path: &Path, header: bool) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        if header {
            let names: Vec<String> = (1..=self.d()).map(|j| format!("x{j}")).collect();
            writeln!(w, "{}", names.join(","))?;
        }
        for row in self.values.rows() {
            let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Sidecar label file: one `group,corrupt` pair per data row.
    pub fn write_labels(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.n() {
            let g = self.groups.as_ref().map_or(0, |g| g[i]);
            let c = self.corrupt.as_ref().map_or(0, |c| u8::from(c[i]));
            writeln!(w, "{g},{c}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a numeric CSV, skipping a leading header line if one is present.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                trimmed.split(',').map(|f| f.trim().parse::<f64>()).collect();
            match parsed {
                Ok(vals) => {
                    if *width.get_or_insert(vals.len()) != vals.len() {
                        return Err(Error::Parse(format!(
                            "row {} has {} fields, expected {}",
                            lineno + 1,
                            vals.len(),
                            width.unwrap()
                        )));
                    }
                    rows.push(vals);
                }
                Err(_) if lineno == 0 => continue, // header line
                Err(e) => {
                    return Err(Error::Parse(format!("row {}: {}", lineno + 1, e)));
                }
            }
        }
        let n = rows.len();
        let d = width.ok_or_else(|| Error::Parse("empty data file".into()))?;
        let mut values = Array2::zeros((n, d));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                values[[i, j]] = v;
            }
        }
        DataMatrix::new(values)
    }
}

/// Assigns each edge of `dag` a coefficient drawn uniformly from
/// `(-high,-low) ∪ (low,high)`; non-edges stay exactly zero.
pub fn assign_linear_weights(dag: &Dag, low: f64, high: f64, seed: u64) -> Result<WeightedAdjacency> {
    if !(low > 0.0) || !(high > low) {
        return Err(Error::invalid(format!(
            "weight range requires 0 < low < high, got ({low}, {high})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let d = dag.d();
    let mut matrix = Array2::zeros((d, d));
    for (s, t) in dag.edges() {
        let magnitude = rng.random_range(low..high);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        matrix[[s, t]] = sign * magnitude;
    }
    WeightedAdjacency::new(matrix)
}

/// `assign_linear_weights` with the standard `(0.5, 2.0)` range.
pub fn assign_linear_weights_default(dag: &Dag, seed: u64) -> Result<WeightedAdjacency> {
    assign_linear_weights(dag, DEFAULT_COEF_LOW, DEFAULT_COEF_HIGH, seed)
}

/// per-row group index resolved against the noise description (only
/// present when group structure exists).
fn assign_groups(noise: &NoiseSpec, n: usize) -> Option<Vec<usize>> {
    let counts = noise.group_counts(n)?;
    let mut labels = Vec::with_capacity(n);
    for (g, &c) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat(g).take(c));
    }
    Some(labels)
}

fn row_sigma<'a>(noise: &'a NoiseSpec, groups: Option<&[usize]>, row: usize) -> &'a [f64] {
    match (noise.groups(), groups) {
        (Some(gs), Some(labels)) => &gs[labels[row]].1,
        _ => noise.sigma(),
    }
}

/// Selects `count` distinct row indices to corrupt (partial Fisher-Yates).
fn pick_corrupt_rows(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut flags = vec![false; n];
    for &i in &idx[..count] {
        flags[i] = true;
    }
    flags
}

/// Infers the expected-edges multiplier of a support pattern, used to draw a
/// replacement SCM of comparable density for corrupted rows.
fn infer_k(edges: usize, d: usize) -> usize {
    ((edges as f64 / d as f64).round() as usize).max(1)
}

/// Ancestral sampling from the linear SEM `X = X B + N` in topological order.
///
/// Heterogeneous specs draw each row's noise scale vector by its group;
/// a corrupt fraction `p` replaces exactly `⌊p·n⌋` rows with draws from an
/// independently sampled linear SCM of the same dimension.
pub fn simulate_linear_sem(
    w: &WeightedAdjacency,
    n: usize,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<DataMatrix> {
    if n < 1 {
        return Err(Error::invalid("simulate_linear_sem requires n >= 1"));
    }
    if noise.d() != w.d() {
        return Err(Error::dims(format!(
            "noise spec is for d={}, coefficients for d={}",
            noise.d(),
            w.d()
        )));
    }
    if !w.support_is_acyclic() {
        return Err(Error::invalid("coefficient support contains a directed cycle"));
    }
    let dag = Dag::from_adjacency(w.support()).expect("acyclic support");
    let groups = assign_groups(noise, n);
    let values = linear_ancestral_sample(w, &dag, n, noise, groups.as_deref(), derive_seed(seed, &[0]));

    let mut data = DataMatrix::with_labels(values, groups, None)?;
    let n_corrupt = (noise.corrupt_fraction() * n as f64).floor() as usize;
    if n_corrupt > 0 {
        let mut sel_rng = rng_from_seed(derive_seed(seed, &[1]));
        let flags = pick_corrupt_rows(n, n_corrupt, &mut sel_rng);
        let replacement = corrupt_rows_linear(w.d(), dag.edge_count(), n_corrupt, derive_seed(seed, &[2]))?;
        let mut values = data.values().clone();
        let mut r = 0;
        for i in 0..n {
            if flags[i] {
                values.row_mut(i).assign(&replacement.row(r));
                r += 1;
            }
        }
        data = DataMatrix::with_labels(values, data.groups.clone(), Some(flags))?;
    }
    Ok(data)
}

fn linear_ancestral_sample(
    w: &WeightedAdjacency,
    dag: &Dag,
    n: usize,
    noise: &NoiseSpec,
    groups: Option<&[usize]>,
    seed: u64,
) -> Array2<f64> {
    let d = w.d();
    let mut rng = rng_from_seed(seed);
    let mut values = Array2::zeros((n, d));
    for &var in &dag.topological_order() {
        let parents = dag.parents(var);
        for row in 0..n {
            let mut acc = 0.0;
            for &p in &parents {
                acc += w.matrix()[[p, var]] * values[[row, p]];
            }
            let sigma = row_sigma(noise, groups, row)[var];
            let z: f64 = StandardNormal.sample(&mut rng);
            values[[row, var]] = acc + sigma * z;
        }
    }
    values
}

fn corrupt_rows_linear(d: usize, edges: usize, rows: usize, seed: u64) -> Result<Array2<f64>> {
    use crate::graph::{sample_dag, GraphKind, GraphModel};
    let model = GraphModel::new(GraphKind::Er, infer_k(edges, d))?;
    let dag = sample_dag(model, d, derive_seed(seed, &[0]))?;
    let coef = assign_linear_weights_default(&dag, derive_seed(seed, &[1]))?;
    let homo = NoiseSpec::homogeneous(vec![1.0; d])?;
    Ok(linear_ancestral_sample(&coef, &dag, rows, &homo, None, derive_seed(seed, &[2])))
}

/// One GP function draw over a fixed set of parent-value rows.
///
/// The Gram matrix uses the unit-length-scale RBF kernel
/// `k(u,v) = exp(-||u-v||^2 / 2)`; the factorization adds jitter starting at
/// 1e-6 and escalating tenfold up to 1e-2 before giving up.
pub struct GpColumnSampler {
    chol: Array2<f64>,
    jitter: f64,
}

impl GpColumnSampler {
    pub fn new(parent_rows: &Array2<f64>) -> Result<Self> {
        let n = parent_rows.nrows();
        let mut gram = Array2::zeros((n, n));
        for r in 0..n {
            gram[[r, r]] = 1.0;
            for s in (r + 1)..n {
                let mut sq = 0.0;
                for c in 0..parent_rows.ncols() {
                    let diff = parent_rows[[r, c]] - parent_rows[[s, c]];
                    sq += diff * diff;
                }
                let k = (-0.5 * sq).exp();
                gram[[r, s]] = k;
                gram[[s, r]] = k;
            }
        }
        let mut jitter = GP_JITTER_INIT;
        loop {
            let mut shifted = gram.clone();
            for i in 0..n {
                shifted[[i, i]] += jitter;
            }
            match cholesky(&shifted) {
                Ok(chol) => return Ok(GpColumnSampler { chol, jitter }),
                Err(_) if jitter < GP_JITTER_MAX => jitter *= 10.0,
                Err(e) => {
                    return Err(Error::numeric(format!(
                        "GP Gram factorization failed at max jitter {GP_JITTER_MAX}: {e}"
                    )))
                }
            }
        }
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Array1<f64> {
        let n = self.chol.nrows();
        let z: Array1<f64> = Array1::from_iter((0..n).map(|_| StandardNormal.sample(rng)));
        self.chol.dot(&z)
    }
}

/// Samples from a nonlinear additive-noise SEM whose structural functions are
/// GP draws (independent per equation). Root variables are pure noise.
pub fn simulate_gp_sem(dag: &Dag, n: usize, noise: &NoiseSpec, seed: u64) -> Result<DataMatrix> {
    simulate_gp_sem_with_cap(dag, n, noise, seed, DEFAULT_GP_SAMPLE_CAP)
}

pub fn simulate_gp_sem_with_cap(
    dag: &Dag,
    n: usize,
    noise: &NoiseSpec,
    seed: u64,
    cap: usize,
) -> Result<DataMatrix> {
    if n < 1 {
        return Err(Error::invalid("simulate_gp_sem requires n >= 1"));
    }
    if n > cap {
        return Err(Error::ResourceLimit(format!(
            "GP simulation of n={n} exceeds the cap of {cap} rows"
        )));
    }
    if noise.d() != dag.d() {
        return Err(Error::dims(format!(
            "noise spec is for d={}, graph for d={}",
            noise.d(),
            dag.d()
        )));
    }
    let groups = assign_groups(noise, n);
    let values = gp_ancestral_sample(dag, n, noise, groups.as_deref(), derive_seed(seed, &[0]))?;

    let mut data = DataMatrix::with_labels(values, groups, None)?;
    let n_corrupt = (noise.corrupt_fraction() * n as f64).floor() as usize;
    if n_corrupt > 0 {
        let mut sel_rng = rng_from_seed(derive_seed(seed, &[1]));
        let flags = pick_corrupt_rows(n, n_corrupt, &mut sel_rng);
        let replacement = corrupt_rows_gp(dag.d(), dag.edge_count(), n_corrupt, derive_seed(seed, &[2]))?;
        let mut values = data.values().clone();
        let mut r = 0;
        for i in 0..n {
            if flags[i] {
                values.row_mut(i).assign(&replacement.row(r));
                r += 1;
            }
        }
        data = DataMatrix::with_labels(values, data.groups.clone(), Some(flags))?;
    }
    Ok(data)
}

fn gp_ancestral_sample(
    dag: &Dag,
    n: usize,
    noise: &NoiseSpec,
    groups: Option<&[usize]>,
    seed: u64,
) -> Result<Array2<f64>> {
    let d = dag.d();
    let mut values = Array2::zeros((n, d));
    for &var in &dag.topological_order() {
        // Independent stream per equation.
        let mut rng = rng_from_seed(derive_seed(seed, &[var as u64]));
        let parents = dag.parents(var);
        let mut col = Array1::zeros(n);
        if !parents.is_empty() {
            let mut parent_rows = Array2::zeros((n, parents.len()));
            for (c, &p) in parents.iter().enumerate() {
                parent_rows.column_mut(c).assign(&values.column(p));
            }
            col = GpColumnSampler::new(&parent_rows)?.draw(&mut rng);
        }
        for row in 0..n {
            let sigma = row_sigma(noise, groups, row)[var];
            let z: f64 = StandardNormal.sample(&mut rng);
            values[[row, var]] = col[row] + sigma * z;
        }
    }
    Ok(values)
}

fn corrupt_rows_gp(d: usize, edges: usize, rows: usize, seed: u64) -> Result<Array2<f64>> {
    use crate::graph::{sample_dag, GraphKind, GraphModel};
    let model = GraphModel::new(GraphKind::Er, infer_k(edges, d))?;
    let dag = sample_dag(model, d, derive_seed(seed, &[0]))?;
    let homo = NoiseSpec::homogeneous(vec![1.0; d])?;
    gp_ancestral_sample(&dag, rows, &homo, None, derive_seed(seed, &[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sample_dag, GraphKind, GraphModel};
    use crate::linalg::lu_factor;

    fn chain2(weight: f64) -> WeightedAdjacency {
        let mut m = Array2::zeros((2, 2));
        m[[0, 1]] = weight;
        WeightedAdjacency::new(m).unwrap()
    }

    #[test]
    fn edgeless_dag_gets_zero_matrix() {
        let dag = Dag::empty(4);
        let w = assign_linear_weights_default(&dag, 1).unwrap();
        assert!(w.matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coefficients_stay_in_range() {
        let dag = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 10, 3).unwrap();
        for seed in 0..10 {
            let w = assign_linear_weights_default(&dag, seed).unwrap();
            for &(s, t) in &dag.edges() {
                let b = w.matrix()[[s, t]].abs();
                assert!((0.5..=2.0).contains(&b), "|b| = {b}");
            }
        }
    }

    #[test]
    fn coefficient_magnitude_mean_matches_mixture_moment() {
        // |b| ~ U(0.5, 2): mean 1.25, var 1.5^2/12.
        let dag = Dag::from_edges(2, &[(0, 1)]).unwrap();
        let mut total = 0.0;
        let draws = 10_000;
        for seed in 0..draws {
            let w = assign_linear_weights_default(&dag, seed).unwrap();
            total += w.matrix()[[0, 1]].abs();
        }
        let mean = total / draws as f64;
        let se = (1.5f64.powi(2) / 12.0 / draws as f64).sqrt();
        assert!(
            (mean - 1.25).abs() < 3.0 * se,
            "mean {mean} vs 1.25 +- {}",
            3.0 * se
        );
    }

    #[test]
    fn invalid_weight_range_rejected() {
        let dag = Dag::empty(2);
        assert!(assign_linear_weights(&dag, 0.0, 1.0, 0).is_err());
        assert!(assign_linear_weights(&dag, 1.0, 1.0, 0).is_err());
        assert!(assign_linear_weights(&dag, -1.0, 0.5, 0).is_err());
    }

    #[test]
    fn single_edge_variance_matches_analytic() {
        let w = chain2(2.0);
        let noise = NoiseSpec::homogeneous(vec![1.0, 1.0]).unwrap();
        let data = simulate_linear_sem(&w, 10_000, &noise, 11).unwrap();
        let col = data.values().column(1);
        let mean = col.sum() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
        assert!((4.5..=5.5).contains(&var), "Var(X2) = {var}");
    }

    #[test]
    fn zero_matrix_gives_uncorrelated_standard_normals() {
        let w = WeightedAdjacency::zeros(4);
        let noise = NoiseSpec::homogeneous(vec![1.0; 4]).unwrap();
        let data = simulate_linear_sem(&w, 10_000, &noise, 21).unwrap();
        let x = data.values();
        let n = x.nrows() as f64;
        for a in 0..4 {
            for b in (a + 1)..4 {
                let ca = x.column(a);
                let cb = x.column(b);
                let ma = ca.sum() / n;
                let mb = cb.sum() / n;
                let mut cov = 0.0;
                let mut va = 0.0;
                let mut vb = 0.0;
                for i in 0..x.nrows() {
                    cov += (ca[i] - ma) * (cb[i] - mb);
                    va += (ca[i] - ma).powi(2);
                    vb += (cb[i] - mb).powi(2);
                }
                let rho = cov / (va.sqrt() * vb.sqrt());
                assert!(rho.abs() < 0.05, "rho({a},{b}) = {rho}");
            }
        }
    }

    #[test]
    fn heterogeneous_group_counts_are_exact() {
        let noise = make_noise_spec(NoiseKind::Heterogeneous, 20, None).unwrap();
        let dag = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 20, 5).unwrap();
        let w = assign_linear_weights_default(&dag, 6).unwrap();
        let data = simulate_linear_sem(&w, 1000, &noise, 7).unwrap();
        let groups = data.groups().unwrap();
        let disadvantaged = groups.iter().filter(|&&g| g == 0).count();
        assert_eq!(disadvantaged, 100);
        assert_eq!(groups.len(), 1000);
    }

    #[test]
    fn heterogeneous_spec_flips_halves() {
        let noise = make_noise_spec(NoiseKind::Heterogeneous, 20, None).unwrap();
        let gs = noise.groups().unwrap();
        assert_eq!(gs.len(), 2);
        assert!((gs[0].0 - 0.1).abs() < 1e-12);
        assert!((gs[1].0 - 0.9).abs() < 1e-12);
        assert_eq!(&gs[0].1[..10], &[1.0; 10]);
        assert_eq!(&gs[0].1[10..], &[0.1; 10]);
        assert_eq!(&gs[1].1[..10], &[0.1; 10]);
        assert_eq!(&gs[1].1[10..], &[1.0; 10]);
    }

    #[test]
    fn homogeneous_spec_is_all_ones() {
        let noise = make_noise_spec(NoiseKind::Homogeneous, 10, None).unwrap();
        assert_eq!(noise.sigma(), &[1.0; 10]);
        assert!(noise.groups().is_none());
        assert_eq!(noise.corrupt_fraction(), 0.0);
    }

    #[test]
    fn corrupted_spec_stores_fraction() {
        let noise = make_noise_spec(NoiseKind::Corrupted, 10, Some(0.05)).unwrap();
        assert!((noise.corrupt_fraction() - 0.05).abs() < 1e-15);
        assert!(make_noise_spec(NoiseKind::Corrupted, 10, Some(1.0)).is_err());
        assert!(make_noise_spec(NoiseKind::Corrupted, 10, None).is_err());
    }

    #[test]
    fn corruption_flags_exactly_floor_pn() {
        let dag = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 6, 9).unwrap();
        let w = assign_linear_weights_default(&dag, 10).unwrap();
        for (n, p) in [(1000, 0.05), (333, 0.1), (100, 0.011)] {
            let noise = make_noise_spec(NoiseKind::Corrupted, 6, Some(p)).unwrap();
            let data = simulate_linear_sem(&w, n, &noise, 13).unwrap();
            let flagged = data.corrupt_flags().unwrap().iter().filter(|&&f| f).count();
            assert_eq!(flagged, (p * n as f64).floor() as usize);
        }
    }

    #[test]
    fn generators_deterministic_under_seed() {
        let dag = sample_dag(GraphModel::new(GraphKind::Er, 2).unwrap(), 5, 2).unwrap();
        let w = assign_linear_weights_default(&dag, 3).unwrap();
        let noise = make_noise_spec(NoiseKind::Corrupted, 5, Some(0.1)).unwrap();
        let a = simulate_linear_sem(&w, 200, &noise, 42).unwrap();
        let b = simulate_linear_sem(&w, 200, &noise, 42).unwrap();
        assert_eq!(a, b);
        let hnoise = make_noise_spec(NoiseKind::Homogeneous, 5, None).unwrap();
        let g1 = simulate_gp_sem(&dag, 50, &hnoise, 42).unwrap();
        let g2 = simulate_gp_sem(&dag, 50, &hnoise, 42).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn cyclic_support_rejected() {
        let mut m = Array2::zeros((2, 2));
        m[[0, 1]] = 1.0;
        m[[1, 0]] = 1.0;
        let w = WeightedAdjacency::new(m).unwrap();
        let noise = NoiseSpec::homogeneous(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            simulate_linear_sem(&w, 10, &noise, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn linear_covariance_matches_analytic_form() {
        // Cov(X) = (I-B)^-T Sigma (I-B)^-1 entrywise within 5% relative error.
        for seed in [1u64, 2, 3] {
            let dag = sample_dag(GraphModel::new(GraphKind::Er, 1).unwrap(), 5, seed).unwrap();
            let w = assign_linear_weights_default(&dag, seed + 100).unwrap();
            let noise = NoiseSpec::homogeneous(vec![1.0; 5]).unwrap();
            let data = simulate_linear_sem(&w, 10_000, &noise, seed + 200).unwrap();
            let x = data.values();
            let n = x.nrows() as f64;
            let means: Vec<f64> = (0..5).map(|j| x.column(j).sum() / n).collect();
            let mut emp = Array2::zeros((5, 5));
            for a in 0..5 {
                for b in 0..5 {
                    let mut acc = 0.0;
                    for i in 0..x.nrows() {
                        acc += (x[[i, a]] - means[a]) * (x[[i, b]] - means[b]);
                    }
                    emp[[a, b]] = acc / n;
                }
            }
            let eye = Array2::eye(5);
            let inv = lu_factor(&(&eye - w.matrix())).unwrap().inverse();
            let analytic = inv.t().dot(&inv); // Sigma = I
            for a in 0..5 {
                for b in 0..5 {
                    let want = analytic[[a, b]];
                    let got = emp[[a, b]];
                    // near-zero entries are judged against the entry's
                    // natural scale sqrt(V_aa V_bb) instead of |want|
                    let scale = want
                        .abs()
                        .max((analytic[[a, a]] * analytic[[b, b]]).sqrt());
                    assert!(
                        (got - want).abs() <= 0.05 * scale,
                        "cov[{a},{b}] got {got}, want {want} (seed {seed})"
                    );
                }
            }
        }
    }

    #[test]
    fn gp_root_column_is_pure_noise() {
        let dag = Dag::from_edges(2, &[(0, 1)]).unwrap();
        let noise = NoiseSpec::homogeneous(vec![1.0, 1.0]).unwrap();
        let data = simulate_gp_sem(&dag, 2000, &noise, 31).unwrap();
        let col = data.values().column(0);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let se_mean = (1.0 / n).sqrt();
        let se_var = (2.0 / n).sqrt();
        assert!(mean.abs() < 3.0 * se_mean, "root mean {mean}");
        assert!((var - 1.0).abs() < 3.0 * se_var, "root variance {var}");
    }

    #[test]
    fn gp_identical_parent_rows_get_equal_draws() {
        let mut parents = Array2::zeros((6, 1));
        for (i, v) in [0.3, 0.3, -1.2, 0.7, 2.4, -0.5].iter().enumerate() {
            parents[[i, 0]] = *v;
        }
        let sampler = GpColumnSampler::new(&parents).unwrap();
        let mut rng = rng_from_seed(77);
        for _ in 0..20 {
            let f = sampler.draw(&mut rng);
            let tol = 10.0 * sampler.jitter().sqrt();
            assert!(
                (f[0] - f[1]).abs() <= tol,
                "duplicate-input draws differ by {} > {tol}",
                (f[0] - f[1]).abs()
            );
        }
    }

    #[test]
    fn gp_marginal_variance_matches_kernel_diagonal() {
        // Factor once, draw repeatedly: E[f_r^2] = K_rr = 1.
        let mut rng = rng_from_seed(5);
        let mut parents = Array2::zeros((2000, 1));
        for i in 0..2000 {
            parents[[i, 0]] = StandardNormal.sample(&mut rng);
        }
        let sampler = GpColumnSampler::new(&parents).unwrap();
        let draws = 200;
        let mut acc = 0.0;
        for _ in 0..draws {
            let f = sampler.draw(&mut rng);
            acc += f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64;
        }
        let mean_square = acc / draws as f64;
        assert!(
            (0.8..=1.2).contains(&mean_square),
            "mean square {mean_square}"
        );
    }

    #[test]
    fn gp_cap_enforced() {
        let dag = Dag::from_edges(2, &[(0, 1)]).unwrap();
        let noise = NoiseSpec::homogeneous(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            simulate_gp_sem_with_cap(&dag, 100, &noise, 0, 50),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn csv_roundtrip_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let dag = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let w = assign_linear_weights_default(&dag, 1).unwrap();
        let noise = NoiseSpec::homogeneous(vec![1.0; 3]).unwrap();
        let data = simulate_linear_sem(&w, 25, &noise, 2).unwrap();

        let bare = dir.path().join("data.csv");
        data.write_csv(&bare, false).unwrap();
        let back = DataMatrix::read_csv(&bare).unwrap();
        assert_eq!(data.values(), back.values());

        let headed = dir.path().join("data_h.csv");
        data.write_csv(&headed, true).unwrap();
        let back2 = DataMatrix::read_csv(&headed).unwrap();
        assert_eq!(data.values(), back2.values());
    }

    #[test]
    fn standardized_columns_have_unit_variance() {
        let dag = Dag::from_edges(3, &[(0, 1), (0, 2)]).unwrap();
        let w = assign_linear_weights_default(&dag, 8).unwrap();
        let noise = NoiseSpec::homogeneous(vec![1.0; 3]).unwrap();
        let data = simulate_linear_sem(&w, 500, &noise, 9).unwrap().standardized();
        for col in data.values().columns() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }
}
