//! Monte Carlo verification of the saddle-point, self-generation and
//! dual-submartingale properties.
//!
//! Every verdict is a function of an estimate and its standard error with a
//! fixed multiplier of three; there are no absolute tolerances.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::criteria::CriterionField;
use crate::error::{Error, Result};
use crate::measures::{doleans, log_stochastic_exponential, GeneratorPaths, PenaltySpec, PenaltyValue};
use crate::numeric::{covariance, mix64, SampleStats};
use crate::paths::{log_step, log_wealth_increment, CoefficientPaths, PathBundle, PathGenerator};
use crate::strategies::{kelly_fractions, worst_case_generator, Strategy};

/// Standard-error multiplier used by every verdict.
pub const SIGMA_MULTIPLIER: f64 = 3.0;

/// Absolute floor added to confidence bands of quantities whose sampling
/// error vanishes identically (common random numbers make some differences
/// deterministic), so that floating-point rounding is not read as a finding.
pub const ROUNDING_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    MartingaleConsistent,
    SubmartingaleConsistent,
    Violation,
}

impl Verdict {
    pub fn classify(estimate: f64, stderr: f64) -> Verdict {
        let band = SIGMA_MULTIPLIER * stderr;
        if estimate.abs() <= band {
            Verdict::MartingaleConsistent
        } else if estimate >= -band {
            Verdict::SubmartingaleConsistent
        } else {
            Verdict::Violation
        }
    }

    /// Martingale-consistent results are also submartingale-consistent.
    pub fn is_submartingale_consistent(self) -> bool {
        self != Verdict::Violation
    }
}

/// Simulation controls shared by the tests in this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McParams {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

impl McParams {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        McParams {
            n_paths,
            seed,
            antithetic: false,
        }
    }

    pub fn with_antithetic(mut self, antithetic: bool) -> Self {
        self.antithetic = antithetic;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::invalid("need at least two paths"));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(Error::invalid("antithetic sampling needs an even number of paths"));
        }
        Ok(())
    }
}

/// Statistics of per-path samples; antithetic pairs are averaged first so
/// the standard error reflects the pairing.
fn sample_stats(samples: &[f64], antithetic: bool) -> SampleStats {
    if antithetic {
        let pairs: Vec<f64> = samples.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        let st = SampleStats::from_slice(&pairs);
        SampleStats { n: samples.len(), ..st }
    } else {
        SampleStats::from_slice(samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub t: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub antithetic: bool,
    pub verdict: Verdict,
}

impl DriftReport {
    fn new(t: f64, horizon: f64, stats: SampleStats, antithetic: bool) -> Self {
        DriftReport {
            t,
            horizon,
            estimate: stats.mean,
            stderr: stats.stderr,
            n_paths: stats.n,
            antithetic,
            verdict: Verdict::classify(stats.mean, stats.stderr),
        }
    }

    /// Consistent with a non-positive drift.
    pub fn is_supermartingale_consistent(&self) -> bool {
        self.estimate <= SIGMA_MULTIPLIER * self.stderr
    }

    /// Whether `value` lies inside the three-standard-error band.
    pub fn is_consistent_with(&self, value: f64) -> bool {
        (self.estimate - value).abs() <= SIGMA_MULTIPLIER * self.stderr
    }
}

fn step_range(field: &CriterionField, t: f64, horizon: f64) -> Result<(usize, usize)> {
    let from = field.grid.index_of(t)?;
    let to = field.grid.index_of(horizon)?;
    if from >= to {
        return Err(Error::invalid(format!("need t < T, got t={t}, T={horizon}")));
    }
    Ok((from, to))
}

fn require_density_penalty(spec: &PenaltySpec) -> Result<()> {
    match spec {
        PenaltySpec::Quadratic { .. } | PenaltySpec::Entropic { .. } => Ok(()),
        _ => Err(Error::Unsupported(
            "drift tests need a quadratic or entropic penalty; degenerate families have no generator family to perturb"
                .into(),
        )),
    }
}

fn finite_penalty(v: PenaltyValue) -> Result<f64> {
    v.finite().ok_or(Error::InfinitePenalty)
}

/// `N_T - N_t = ln X_T - ln X_t + A_T - A_t + gamma_{t,T}` along one scenario.
fn criterion_increment(
    field: &CriterionField,
    strategy: &Strategy,
    generator: &GeneratorPaths,
    penalty: &PenaltySpec,
    bundle: &PathBundle,
    from: usize,
    to: usize,
) -> Result<f64> {
    let log_x = log_wealth_increment(bundle, strategy, from, to)?;
    let mc = doleans(generator, bundle)?;
    let g = finite_penalty(penalty.on_path(&mc, bundle, from, to)?)?;
    Ok(log_x + field.a[to] - field.a[from] + g)
}

fn collect(values: Vec<Result<f64>>) -> Result<Vec<f64>> {
    values.into_iter().collect()
}

/// Estimates `E^{Q^eta}[N_T - N_t]` for the criterion process of `strategy`
/// by simulating under `Q^eta` (drift shift).
#[allow(clippy::too_many_arguments)]
pub fn drift_test(
    field: &CriterionField,
    coeffs: Arc<CoefficientPaths>,
    strategy: &Strategy,
    generator: &GeneratorPaths,
    penalty: &PenaltySpec,
    t: f64,
    horizon: f64,
    mc: McParams,
) -> Result<DriftReport> {
    require_density_penalty(penalty)?;
    mc.validate()?;
    let (from, to) = step_range(field, t, horizon)?;
    let gen = generator
        .path_generator(field.grid, coeffs, 1.0, mc.seed)?
        .with_antithetic(mc.antithetic);
    let samples = collect(gen.map_paths(mc.n_paths, |b| {
        criterion_increment(field, strategy, generator, penalty, b, from, to)
    }))?;
    Ok(DriftReport::new(t, horizon, sample_stats(&samples, mc.antithetic), mc.antithetic))
}

/// Exact reference-measure drift `E^P[N_T - N_t]` of the criterion process
/// for the fractional Kelly strategy (generator zero, so no penalty):
/// `sum_k (v_k lambda_hat_k - v_k^2 / 2) dt + A_T - A_t` with loading
/// `v_k = pi_bar_k sigma_k`.
pub fn reference_drift(field: &CriterionField, coeffs: &CoefficientPaths, t: f64, horizon: f64) -> Result<f64> {
    let (from, to) = step_range(field, t, horizon)?;
    let pi = kelly_fractions(coeffs)?;
    let dt = field.grid.dt();
    let growth: f64 = (from..to)
        .map(|k| {
            let v = pi[k] * coeffs.sigma[k];
            (v * coeffs.lambda_hat[k] - 0.5 * v * v) * dt
        })
        .sum();
    Ok(growth + field.a[to] - field.a[from])
}

/// Exact mean of the dual inequality gap estimated by
/// [`dual_submartingale_test`] for the log family with quadratic penalty:
/// `sum_k dt [lambda eta1 + nu eta2 + (lambda^2 + nu^2)/2
/// + (1 + delta)|eta|^2 / 2 - w lambda^2 / 2]`, `w = delta / (1 + delta)`.
/// Zero exactly at `nu = 0`, `eta = eta_bar`, and non-negative elsewhere.
pub fn dual_gap_closed(
    field: &CriterionField,
    coeffs: &CoefficientPaths,
    nu: &[f64],
    generator: &GeneratorPaths,
    t: f64,
    horizon: f64,
) -> Result<f64> {
    let (from, to) = step_range(field, t, horizon)?;
    let dt = field.grid.dt();
    Ok((from..to)
        .map(|k| {
            let (l, d, n) = (coeffs.lambda_hat[k], coeffs.delta[k], nu[k]);
            let (e1, e2) = (generator.eta1[k], generator.eta2[k]);
            let w = d / (1.0 + d);
            (l * e1 + n * e2 + 0.5 * (l * l + n * n) + 0.5 * (1.0 + d) * (e1 * e1 + e2 * e2) - 0.5 * w * l * l) * dt
        })
        .sum())
}

/// Same estimator as [`drift_test`], but by reweighting reference-measure
/// scenarios with the density `D_T / D_t` instead of shifting the drift.
/// Kept as a cross-check; its variance is larger.
#[allow(clippy::too_many_arguments)]
pub fn drift_test_reweighted(
    field: &CriterionField,
    coeffs: Arc<CoefficientPaths>,
    strategy: &Strategy,
    generator: &GeneratorPaths,
    penalty: &PenaltySpec,
    t: f64,
    horizon: f64,
    mc: McParams,
) -> Result<DriftReport> {
    require_density_penalty(penalty)?;
    mc.validate()?;
    let (from, to) = step_range(field, t, horizon)?;
    let gen = PathGenerator::new(field.grid, coeffs, 1.0, mc.seed)?.with_antithetic(mc.antithetic);
    let samples = collect(gen.map_paths(mc.n_paths, |b| {
        let inc = criterion_increment(field, strategy, generator, penalty, b, from, to)?;
        let w = log_stochastic_exponential(&generator.eta1, &generator.eta2, b, from, to).exp();
        Ok(w * inc)
    }))?;
    Ok(DriftReport::new(t, horizon, sample_stats(&samples, mc.antithetic), mc.antithetic))
}

/// Drift test conditional on frozen states at an interior anchor `t`.
///
/// `n_states` outer scenarios are simulated up to `t`; from each frozen
/// state, `mc.n_paths` inner scenarios are resimulated on `[t, T]` with an
/// independent seed. One report per frozen state.
#[allow(clippy::too_many_arguments)]
pub fn conditional_drift_test(
    field: &CriterionField,
    coeffs: Arc<CoefficientPaths>,
    strategy: &Strategy,
    generator: &GeneratorPaths,
    penalty: &PenaltySpec,
    t: f64,
    horizon: f64,
    n_states: usize,
    mc: McParams,
) -> Result<Vec<DriftReport>> {
    require_density_penalty(penalty)?;
    mc.validate()?;
    let (from, to) = step_range(field, t, horizon)?;
    let outer = generator.path_generator(field.grid, Arc::clone(&coeffs), 1.0, mc.seed)?;
    let mut reports = Vec::with_capacity(n_states);
    for state in 0..n_states as u64 {
        let frozen = outer.bundle(state);
        let inner_seed = mix64(mc.seed ^ mix64(state.wrapping_add(1)));
        let inner = generator
            .path_generator(field.grid, Arc::clone(&coeffs), 1.0, inner_seed)?
            .with_antithetic(mc.antithetic);
        let samples = collect(inner.map_paths(mc.n_paths, |b| {
            // Paste the frozen history before t onto the fresh continuation.
            let mut pasted = b.clone();
            pasted.dw1[..from].copy_from_slice(&frozen.dw1[..from]);
            pasted.dw2[..from].copy_from_slice(&frozen.dw2[..from]);
            criterion_increment(field, strategy, generator, penalty, &pasted, from, to)
        }))?;
        reports.push(DriftReport::new(t, horizon, sample_stats(&samples, mc.antithetic), mc.antithetic));
    }
    Ok(reports)
}

/// Least-squares quadratic vertex of `y(x)` with a delta-method standard
/// error computed from per-path fitted coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VertexFit {
    pub vertex: f64,
    pub stderr: f64,
    pub curvature: f64,
}

impl VertexFit {
    pub fn is_within_ci_of(&self, target: f64) -> bool {
        (self.vertex - target).abs() <= SIGMA_MULTIPLIER * self.stderr + ROUNDING_FLOOR
    }
}

/// Per-row linear/quadratic coefficients of a least-squares parabola fit on
/// the fixed abscissae `xs`.
fn quadratic_coefficients(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    // Normal equations in centred coordinates for conditioning.
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let u: Vec<f64> = xs.iter().map(|x| x - xm).collect();
    let s2: f64 = u.iter().map(|v| v * v).sum();
    let s3: f64 = u.iter().map(|v| v * v * v).sum();
    let s4: f64 = u.iter().map(|v| v.powi(4)).sum();
    let ym = ys.iter().sum::<f64>() / n;
    let t1: f64 = u.iter().zip(ys).map(|(v, y)| v * (y - ym)).sum();
    let t2: f64 = u.iter().zip(ys).map(|(v, y)| (v * v - s2 / n) * (y - ym)).sum();
    // Solve [[s2, s3], [s3, s4 - s2^2/n]] [b, c] = [t1, t2].
    let m22 = s4 - s2 * s2 / n;
    let det = s2 * m22 - s3 * s3;
    let b_c = (t1 * m22 - s3 * t2) / det;
    let c = (s2 * t2 - s3 * t1) / det;
    // Back to uncentred coordinates: y = ... + (b_c - 2 c xm) x + c x^2.
    (b_c - 2.0 * c * xm, c)
}

fn fit_vertex(xs: &[f64], rows: &[Vec<f64>]) -> Option<VertexFit> {
    if xs.len() < 3 {
        return None;
    }
    let coeffs: Vec<(f64, f64)> = rows.iter().map(|ys| quadratic_coefficients(xs, ys)).collect();
    let bs: Vec<f64> = coeffs.iter().map(|c| c.0).collect();
    let cs: Vec<f64> = coeffs.iter().map(|c| c.1).collect();
    let n = rows.len() as f64;
    let b = bs.iter().sum::<f64>() / n;
    let c = cs.iter().sum::<f64>() / n;
    let vertex = -b / (2.0 * c);
    let (gb, gc) = (-1.0 / (2.0 * c), b / (2.0 * c * c));
    let var = gb * gb * covariance(&bs, &bs) + 2.0 * gb * gc * covariance(&bs, &cs) + gc * gc * covariance(&cs, &cs);
    Some(VertexFit {
        vertex,
        stderr: (var.max(0.0) / n).sqrt(),
        curvature: c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleChecks {
    /// Value at `(1, 1)` equals `U(x, t)` within the band.
    pub value_at_saddle: bool,
    /// `value(1, c) >= value(1, 1)` within the band for every `c`.
    pub min_in_c: bool,
    /// `value(rho, 1) <= value(1, 1)` within the band for every `rho`.
    pub max_in_rho: bool,
    pub rho_vertex: Option<VertexFit>,
    pub c_vertex: Option<VertexFit>,
    pub rho_vertex_ok: bool,
    pub c_vertex_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleReport {
    pub x: f64,
    pub t: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub target: f64,
    pub rho_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    /// `values[i][j]` is the estimate at `(rho_grid[i], c_grid[j])`.
    pub values: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub ci_half_width: Vec<Vec<f64>>,
    pub n_paths: usize,
    pub checks: SaddleChecks,
    pub saddle: bool,
}

impl SaddleReport {
    /// Surface rows `(rho, c, estimate, stderr)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rho", "c", "estimate", "stderr"])?;
        for (i, rho) in self.rho_grid.iter().enumerate() {
            for (j, c) in self.c_grid.iter().enumerate() {
                w.write_record([
                    rho.to_string(),
                    c.to_string(),
                    self.values[i][j].to_string(),
                    self.stderr[i][j].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn position_of_one(grid: &[f64], name: &str) -> Result<usize> {
    if grid.is_empty() {
        return Err(Error::invalid(format!("{name} is empty")));
    }
    if let Some(v) = grid.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} contains non-finite value {v}")));
    }
    grid.iter()
        .position(|v| *v == 1.0)
        .ok_or_else(|| Error::invalid(format!("{name} must contain 1.0")))
}

/// Scans `E^{Q^{c eta_bar}}[U(X_T^{rho pi_bar}, T)] + gamma_{t,T}(Q^{c eta_bar})`
/// over a grid of perturbations, with common random numbers across cells.
#[allow(clippy::too_many_arguments)]
pub fn self_generation_scan(
    field: &CriterionField,
    coeffs: Arc<CoefficientPaths>,
    x: f64,
    t: f64,
    horizon: f64,
    rho_grid: &[f64],
    c_grid: &[f64],
    mc: McParams,
) -> Result<SaddleReport> {
    mc.validate()?;
    let (from, to) = step_range(field, t, horizon)?;
    let i1 = position_of_one(rho_grid, "rho_grid")?;
    let j1 = position_of_one(c_grid, "c_grid")?;
    let target = field.primal(x, from)?;
    let pi_bar = kelly_fractions(&coeffs)?;
    let eta_bar = worst_case_generator(&coeffs);
    let dt = field.grid.dt();
    // Deterministic penalty of each scaled generator.
    let penalties: Vec<f64> = c_grid
        .iter()
        .map(|c| eta_bar.scaled(*c).quadratic_cost(&field.delta, dt, from, to))
        .collect();
    let base = PathGenerator::new(field.grid, Arc::clone(&coeffs), 1.0, mc.seed)?.with_antithetic(mc.antithetic);
    let (nr, nc) = (rho_grid.len(), c_grid.len());
    let offset = target + field.a[to] - field.a[from];
    // Per path: a flattened nr x nc table of cell values.
    let per_path: Vec<Vec<f64>> = base.map_paths(mc.n_paths, |b| {
        let mut cells = vec![offset; nr * nc];
        for (j, c) in c_grid.iter().enumerate() {
            for k in from..to {
                let dw = b.dw1[k] + c * eta_bar.eta1[k] * dt;
                let (s, l) = (coeffs.sigma[k], coeffs.lambda_hat[k]);
                for (i, rho) in rho_grid.iter().enumerate() {
                    cells[i * nc + j] += log_step(rho * pi_bar[k] * s, l, dt, dw);
                }
            }
            for i in 0..nr {
                cells[i * nc + j] += penalties[j];
            }
        }
        cells
    });

    let column = |cell: usize| -> Vec<f64> { per_path.iter().map(|p| p[cell]).collect() };
    let mut values = vec![vec![0.0; nc]; nr];
    let mut stderr = vec![vec![0.0; nc]; nr];
    for i in 0..nr {
        for j in 0..nc {
            let st = sample_stats(&column(i * nc + j), mc.antithetic);
            values[i][j] = st.mean;
            stderr[i][j] = st.stderr;
        }
    }
    let ci_half_width = stderr
        .iter()
        .map(|r| r.iter().map(|s| SIGMA_MULTIPLIER * s).collect())
        .collect();

    let saddle_col = column(i1 * nc + j1);
    let diff_stats = |cell: usize| -> SampleStats {
        let d: Vec<f64> = column(cell).iter().zip(&saddle_col).map(|(a, b)| a - b).collect();
        sample_stats(&d, mc.antithetic)
    };
    let band = |s: &SampleStats| SIGMA_MULTIPLIER * s.stderr + ROUNDING_FLOOR;
    let value_at_saddle = (values[i1][j1] - target).abs() <= SIGMA_MULTIPLIER * stderr[i1][j1] + ROUNDING_FLOOR;
    let min_in_c = (0..nc).filter(|j| *j != j1).all(|j| {
        let d = diff_stats(i1 * nc + j);
        d.mean >= -band(&d)
    });
    let max_in_rho = (0..nr).filter(|i| *i != i1).all(|i| {
        let d = diff_stats(i * nc + j1);
        d.mean <= band(&d)
    });

    // Vertex fits use the per-path rows (antithetic pairs are averaged).
    let rows_for = |cells: Vec<usize>| -> Vec<Vec<f64>> {
        let rows: Vec<Vec<f64>> = per_path.iter().map(|p| cells.iter().map(|c| p[*c]).collect()).collect();
        if mc.antithetic {
            rows.chunks_exact(2)
                .map(|pair| pair[0].iter().zip(&pair[1]).map(|(a, b)| 0.5 * (a + b)).collect())
                .collect()
        } else {
            rows
        }
    };
    let rho_vertex = fit_vertex(rho_grid, &rows_for((0..nr).map(|i| i * nc + j1).collect()));
    let c_vertex = fit_vertex(c_grid, &rows_for((0..nc).map(|j| i1 * nc + j).collect()));
    let rho_vertex_ok = rho_vertex.map_or(true, |v| v.curvature < 0.0 && v.is_within_ci_of(1.0));
    let c_vertex_ok = c_vertex.map_or(true, |v| v.curvature > 0.0 && v.is_within_ci_of(1.0));
    let checks = SaddleChecks {
        value_at_saddle,
        min_in_c,
        max_in_rho,
        rho_vertex,
        c_vertex,
        rho_vertex_ok,
        c_vertex_ok,
    };
    let saddle = value_at_saddle && min_in_c && max_in_rho && rho_vertex_ok && c_vertex_ok;
    Ok(SaddleReport {
        x,
        t,
        horizon,
        target,
        rho_grid: rho_grid.to_vec(),
        c_grid: c_grid.to_vec(),
        values,
        stderr,
        ci_half_width,
        n_paths: mc.n_paths,
        checks,
        saddle,
    })
}

/// Dual inequality test: estimates
/// `E^Q[V(y Z_T / Z^Q_T, T)] + gamma_{t,T}(Q) - V(y, t)` with densities
/// normalised to one at `t`, simulating under `Q = Q^eta`. The gap is
/// invariant in `y` for the log family.
#[allow(clippy::too_many_arguments)]
pub fn dual_submartingale_test(
    field: &CriterionField,
    coeffs: Arc<CoefficientPaths>,
    nu: &[f64],
    generator: &GeneratorPaths,
    penalty: &PenaltySpec,
    y: f64,
    t: f64,
    horizon: f64,
    mc: McParams,
) -> Result<DriftReport> {
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::invalid(format!("y must be positive, got {y}")));
    }
    require_density_penalty(penalty)?;
    mc.validate()?;
    let (from, to) = step_range(field, t, horizon)?;
    if nu.len() != field.grid.n_steps {
        return Err(Error::GridMismatch {
            expected: field.grid.n_steps,
            found: nu.len(),
        });
    }
    if let Some(k) = nu.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "nu", index: k });
    }
    let minus_lambda: Vec<f64> = coeffs.lambda_hat.iter().map(|l| -l).collect();
    let minus_nu: Vec<f64> = nu.iter().map(|v| -v).collect();
    let v_t = field.dual(y, from)?;
    let gen = generator
        .path_generator(field.grid, Arc::clone(&coeffs), 1.0, mc.seed)?
        .with_antithetic(mc.antithetic);
    let samples = collect(gen.map_paths(mc.n_paths, |b| {
        let log_z = log_stochastic_exponential(&minus_lambda, &minus_nu, b, from, to);
        let log_zq = log_stochastic_exponential(&generator.eta1, &generator.eta2, b, from, to);
        let mc_path = doleans(generator, b)?;
        let g = finite_penalty(penalty.on_path(&mc_path, b, from, to)?)?;
        // V(y e^s, T) = -ln y - s - 1 + A_T, kept in log form for stability.
        let v_end = -y.ln() - (log_z - log_zq) - 1.0 + field.a[to];
        Ok(v_end + g - v_t)
    }))?;
    Ok(DriftReport::new(t, horizon, sample_stats(&samples, mc.antithetic), mc.antithetic))
}
