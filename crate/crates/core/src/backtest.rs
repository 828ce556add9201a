//! Return panels from CSV and the rolling-window index-tracking backtest.

use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::empirical_moments;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::metric::{GelbrichBall, MomentPair};
use crate::portfolio::{minimize_tracking, FeasibleSet, OptimizeOptions};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GELBRICH_THREADS";

/// Periodic simple returns, one row per date.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    pub returns: DMatrix<f64>,
}

/// Dates compare numerically when both parse as numbers, lexicographically otherwise (ISO dates).
fn date_before(a: &str, b: &str) -> bool {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) => x < y,
        _ => a < b,
    }
}

impl ReturnPanel {
    pub fn new(dates: Vec<String>, assets: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        let p = ReturnPanel { dates, assets, returns };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, n) = self.returns.shape();
        if t != self.dates.len() || n != self.assets.len() {
            return Err(Error::InvalidInput("panel shape disagrees with its labels".into()));
        }
        if t < 2 || n < 2 {
            return Err(Error::InvalidInput(format!("panel needs at least 2 dates and 2 assets, got {t}x{n}")));
        }
        if self.returns.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        for (i, w) in self.dates.windows(2).enumerate() {
            if !date_before(&w[0], &w[1]) {
                return Err(Error::NonMonotoneDates { row: i + 3 });
            }
        }
        Ok(())
    }

    pub fn periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn num_assets(&self) -> usize {
        self.returns.ncols()
    }

    /// Panel with the named column moved to the last position.
    pub fn with_index_last(&self, index: &str) -> Result<Self> {
        let k = self
            .assets
            .iter()
            .position(|a| a == index)
            .ok_or_else(|| Error::InvalidInput(format!("unknown index column {index:?}")))?;
        let order: Vec<usize> = (0..self.num_assets()).filter(|&j| j != k).chain([k]).collect();
        Ok(ReturnPanel {
            dates: self.dates.clone(),
            assets: order.iter().map(|&j| self.assets[j].clone()).collect(),
            returns: DMatrix::from_fn(self.periods(), order.len(), |i, j| self.returns[(i, order[j])]),
        })
    }
}

/// Reads a panel whose header is `date,<asset>,...`. Rows are reported as file line numbers
/// (the header is line 1).
pub fn read_returns_csv(reader: impl Read) -> Result<ReturnPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(|h| h.eq_ignore_ascii_case("date")) != Some(true) {
        return Err(Error::Parse { row: 1, column: headers.get(0).unwrap_or("").into(), message: "first column must be `date`".into() });
    }
    let assets: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record.position().map_or(i + 2, |p| p.line() as usize);
        dates.push(record.get(0).unwrap_or("").to_string());
        for (j, asset) in assets.iter().enumerate() {
            let cell = record.get(j + 1).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(Error::MissingValue { row, column: asset.clone() });
            }
            let v: f64 = cell.parse().map_err(|e: std::num::ParseFloatError| Error::Parse { row, column: asset.clone(), message: e.to_string() })?;
            values.push(v);
        }
    }
    let t = dates.len();
    ReturnPanel::new(dates, assets.clone(), DMatrix::from_row_slice(t, assets.len(), &values))
}

pub fn load_returns_csv(path: impl AsRef<Path>) -> Result<ReturnPanel> {
    read_returns_csv(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    /// Estimation window length in periods.
    pub window: usize,
    /// Rebalancing block length in periods.
    pub block: usize,
    pub rho_grid: Vec<f64>,
    pub p: u32,
    /// Index column; the last column when absent.
    pub index: Option<String>,
    pub optimizer: OptimizeOptions,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig { window: 52, block: 12, rho_grid: vec![0.0], p: 2, index: None, optimizer: OptimizeOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub rho_grid: Vec<f64>,
    /// Mean out-of-sample error per radius.
    pub average_errors: Vec<f64>,
    /// First evaluation date of every block.
    pub block_starts: Vec<String>,
    /// Optimal weights, indexed `[block][rho]`, in the panel's column order with the index last.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub evaluation_dates: Vec<String>,
    /// Realized `|wᵀξ̂|^p`, indexed `[rho][week]`.
    pub weekly_errors: Vec<Vec<f64>>,
}

/// Runs `f` on a pool capped by [`THREADS_ENV`] when it is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0) {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Estimation-window moments; singular estimates (window shorter than the asset count) get a ridge
/// of `1e-8 · Tr(Σ̂)/n`.
fn window_moments(samples: &DMatrix<f64>) -> Result<MomentPair> {
    let p = empirical_moments(samples)?;
    let n = p.dim();
    if samples.nrows() <= n {
        let ridge = 1e-8 * p.cov.trace() / n as f64;
        warn!("estimation window of {} periods for {n} assets; adding ridge {ridge:e}", samples.nrows());
        return MomentPair::new(p.mean, p.cov.add(&SymMatrix::identity(n).scale(ridge)));
    }
    Ok(p)
}

/// For every block of `block` periods after the first `window`, estimate the moments on the preceding
/// window, solve the robust tracking problem for every radius, and record the realized errors.
/// Trailing partial blocks are dropped.
pub fn rolling_backtest(panel: &ReturnPanel, cfg: &BacktestConfig) -> Result<BacktestResult> {
    panel.validate()?;
    if cfg.block == 0 || cfg.window < 2 {
        return Err(Error::InvalidInput("window must be at least 2 and block at least 1".into()));
    }
    if cfg.rho_grid.is_empty() || cfg.rho_grid.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::InvalidInput("rho grid must be nonempty, finite and nonnegative".into()));
    }
    if cfg.p != 1 && cfg.p != 2 {
        return Err(Error::BadP(cfg.p));
    }
    let panel = match &cfg.index {
        Some(name) => panel.with_index_last(name)?,
        None => panel.clone(),
    };
    let (t, n) = panel.returns.shape();
    let needed = cfg.window + cfg.block;
    if t < needed {
        return Err(Error::TooShortPanel { needed, got: t });
    }
    if cfg.window < n {
        warn!("estimation window {} is shorter than the asset count {n}", cfg.window);
    }
    let blocks = (t - cfg.window) / cfg.block;
    let starts: Vec<usize> = (0..blocks).map(|b| cfg.window + b * cfg.block).collect();
    let set = FeasibleSet::FixedIndexSimplex { dim: n };
    let tasks: Vec<(usize, usize)> = (0..blocks).flat_map(|b| (0..cfg.rho_grid.len()).map(move |r| (b, r))).collect();

    let solved: Vec<Result<DVector<f64>>> = with_thread_cap(|| {
        tasks
            .par_iter()
            .map(|&(b, r)| {
                let s = starts[b];
                let center = window_moments(&panel.returns.rows(s - cfg.window, cfg.window).into_owned())?;
                let ball = GelbrichBall::new(center, cfg.rho_grid[r])?;
                Ok(minimize_tracking(&ball, cfg.p, &set, &cfg.optimizer)?.w_star)
            })
            .collect()
    })?;
    let solved: Vec<DVector<f64>> = solved.into_iter().collect::<Result<_>>()?;

    let mut weights = vec![Vec::with_capacity(cfg.rho_grid.len()); blocks];
    let mut weekly_errors = vec![Vec::with_capacity(blocks * cfg.block); cfg.rho_grid.len()];
    for (&(b, r), w) in tasks.iter().zip(&solved) {
        weights[b].push(w.iter().copied().collect());
        for week in starts[b]..starts[b] + cfg.block {
            let e = panel.returns.row(week).dot(&w.transpose()).abs();
            weekly_errors[r].push(if cfg.p == 1 { e } else { e * e });
        }
    }
    let average_errors = weekly_errors.iter().map(|e| e.iter().sum::<f64>() / e.len() as f64).collect();
    let evaluation_dates = starts.iter().flat_map(|&s| panel.dates[s..s + cfg.block].iter().cloned()).collect();
    Ok(BacktestResult {
        rho_grid: cfg.rho_grid.clone(),
        average_errors,
        block_starts: starts.iter().map(|&s| panel.dates[s].clone()).collect(),
        weights,
        evaluation_dates,
        weekly_errors,
    })
}

fn full_precision(x: f64) -> String {
    format!("{x:.16e}")
}

/// `rho,avg_error` rows with 17 significant digits.
pub fn write_error_curve(result: &BacktestResult, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rho", "avg_error"])?;
    for (rho, e) in result.rho_grid.iter().zip(&result.average_errors) {
        w.write_record([full_precision(*rho), full_precision(*e)])?;
    }
    w.flush()?;
    Ok(())
}

/// `date,rho,error` rows, one per evaluated period and radius.
pub fn write_weekly_errors(result: &BacktestResult, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "rho", "error"])?;
    for (rho, errors) in result.rho_grid.iter().zip(&result.weekly_errors) {
        for (date, e) in result.evaluation_dates.iter().zip(errors) {
            w.write_record([date.clone(), full_precision(*rho), full_precision(*e)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a panel in the format accepted by [`read_returns_csv`].
pub fn write_returns_csv(panel: &ReturnPanel, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("date").chain(panel.assets.iter().map(String::as_str)))?;
    for (i, date) in panel.dates.iter().enumerate() {
        w.write_record(std::iter::once(date.clone()).chain(panel.returns.row(i).iter().map(|x| full_precision(*x))))?;
    }
    w.flush()?;
    Ok(())
}

/// Seeded synthetic panels for tests, demos and the acceptance suite.
pub mod synthetic {
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::ReturnPanel;

    fn labels(t: usize, assets: usize) -> (Vec<String>, Vec<String>) {
        let dates = (1..=t).map(|i| format!("{i:05}")).collect();
        let mut names: Vec<String> = (1..=assets).map(|i| format!("A{i}")).collect();
        names.push("INDEX".into());
        (dates, names)
    }

    /// Assets driven by one factor plus noise; the index is exactly `weights`ᵀ(assets).
    pub fn exact_replication(t: usize, weights: &[f64], seed: u64) -> ReturnPanel {
        let k = weights.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let betas: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..1.5)).collect();
        let mut r = DMatrix::zeros(t, k + 1);
        for i in 0..t {
            let f: f64 = 0.02 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            for j in 0..k {
                let e: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
                r[(i, j)] = 0.001 + betas[j] * f + 0.01 * e;
            }
            r[(i, k)] = (0..k).map(|j| weights[j] * r[(i, j)]).sum();
        }
        let (dates, names) = labels(t, k);
        ReturnPanel::new(dates, names, r).expect("valid synthetic panel")
    }

    /// One-factor assets whose idiosyncratic volatilities and index composition switch between two
    /// regimes every `regime` periods; the index also carries untrackable noise.
    pub fn regime_shift(t: usize, assets: usize, regime: usize, seed: u64) -> ReturnPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let betas: Vec<f64> = (0..assets).map(|_| rng.gen_range(0.6..1.4)).collect();
        let vols: [Vec<f64>; 2] = [
            (0..assets).map(|_| rng.gen_range(0.005..0.02)).collect(),
            (0..assets).map(|_| rng.gen_range(0.02..0.06)).collect(),
        ];
        let compositions: [DVector<f64>; 2] = [0, 1].map(|_| {
            let raw = DVector::from_fn(assets, |_, _| rng.gen_range(0.5..1.5));
            &raw / raw.sum()
        });
        let mut r = DMatrix::zeros(t, assets + 1);
        for i in 0..t {
            let s = (i / regime.max(1)) % 2;
            let f: f64 = 0.02 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            for j in 0..assets {
                let e: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
                r[(i, j)] = 0.001 + betas[j] * f + vols[s][j] * e;
            }
            let noise: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
            r[(i, assets)] = (0..assets).map(|j| compositions[s][j] * r[(i, j)]).sum::<f64>() + 0.01 * noise;
        }
        let (dates, names) = labels(t, assets);
        ReturnPanel::new(dates, names, r).expect("valid synthetic panel")
    }
}
