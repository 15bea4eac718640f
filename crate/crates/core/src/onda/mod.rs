//! Joint online domain adaptation and classification.
//!
//! A [`DaState`] owns the labeled source samples, the growing target stream, the
//! classifier coefficients `u = (beta0; eta)` and the mapping matrix `W` of the
//! empirical kernel `K W W^T K`. [`DaState::fit_epoch`] alternates extrapolated
//! proximal steps on the two blocks; [`DaState::advance_time`] appends a batch of
//! target samples and warm-starts the next refresh.

mod checkpoint;
pub mod loss;
pub mod updates;

use nalgebra::{DMatrix, DVector};

use crate::error::{data, param, Error, Result};
use crate::kernel::{JointKernel, KernelConfig, KernelSpectrum, LowRankFactor, MmdCoeff};
use crate::linalg::ensure_finite;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{psi, psi_prime};
pub use updates::{
    grad_f, loss_f, smoothness, u_model_gradient, u_update, w_model_gradient, w_update,
    MappingProblem,
};

/// Binary class label: `+1` viable, `-1` unviable.
pub type Label = i8;

/// Starting value of the mapping matrix at the first refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingInit {
    /// First `m` columns of the identity, scaled by `1/sqrt(m)`.
    ScaledIdentity,
    /// `W = F_m diag(lambda_m)^(-1/2)` from the top `m` eigenpairs of `K_SS`, so that
    /// `K W W^T K` is the best rank-`m` approximation of `K_SS`.
    KernelWhitening,
}

impl MappingInit {
    pub fn name(&self) -> &'static str {
        match self {
            MappingInit::ScaledIdentity => "identity",
            MappingInit::KernelWhitening => "whitening",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(MappingInit::ScaledIdentity),
            "whitening" => Ok(MappingInit::KernelWhitening),
            other => Err(param(format!(
                "unknown mapping init {other:?} (expected identity or whitening)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// SVM ridge weight.
    pub lambda: f64,
    /// MMD weight.
    pub lambda1: f64,
    /// Temporal smoothness weight.
    pub lambda2: f64,
    /// Huber smoothing width.
    pub delta: f64,
    /// Rank of the source kernel factor.
    pub rank: usize,
    /// Columns of the mapping matrix.
    pub latent_dim: usize,
    pub lipschitz_u: f64,
    pub lipschitz_w: f64,
    pub extrapolation_u: f64,
    pub extrapolation_w: f64,
    pub iters: usize,
    /// Relative objective change that ends a refresh early.
    pub tol: f64,
    pub mapping_init: MappingInit,
    /// Kernel bandwidth; `None` uses the median heuristic on the source features.
    pub gamma: Option<f64>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lambda1: 20.0,
            lambda2: 0.01,
            delta: 1.0,
            rank: 50,
            latent_dim: 10,
            lipschitz_u: 1000.0,
            lipschitz_w: 1000.0,
            extrapolation_u: 0.01,
            extrapolation_w: 0.01,
            iters: 50,
            tol: 1e-6,
            mapping_init: MappingInit::ScaledIdentity,
            gamma: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("delta", self.delta),
            ("lipschitz_u", self.lipschitz_u),
            ("lipschitz_w", self.lipschitz_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(param(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("extrapolation_u", self.extrapolation_u),
            ("extrapolation_w", self.extrapolation_w),
            ("tol", self.tol),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(param(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.rank == 0 {
            return Err(param("rank must be at least 1"));
        }
        if self.latent_dim == 0 {
            return Err(param("latent_dim must be at least 1"));
        }
        if let Some(g) = self.gamma {
            KernelConfig::new(g)?;
        }
        Ok(())
    }
}

/// Classifier coefficients `u = (beta0; eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierCoeffs {
    pub u: DVector<f64>,
}

impl ClassifierCoeffs {
    pub fn zeros(rank: usize) -> Self {
        Self {
            u: DVector::zeros(rank + 1),
        }
    }

    pub fn beta0(&self) -> f64 {
        self.u[0]
    }

    pub fn eta(&self) -> DVector<f64> {
        self.u.rows(1, self.u.len() - 1).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub margin: f64,
}

impl Prediction {
    /// Ties go to `+1`.
    pub fn from_margin(margin: f64) -> Self {
        Self {
            label: if margin >= 0.0 { 1 } else { -1 },
            margin,
        }
    }
}

/// Which blocks [`DaState::fit_epoch_with`] updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Joint,
    /// Keep `W` fixed and only run the classifier block.
    ClassifierOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub iterations: usize,
    pub converged: bool,
    /// Objective before the first iteration and after each iteration.
    pub objective_trace: Vec<f64>,
}

impl FitSummary {
    pub fn initial_objective(&self) -> f64 {
        self.objective_trace[0]
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }
}

/// Online adaptation state for one source/target pair.
#[derive(Debug, Clone)]
pub struct DaState {
    hp: Hyperparams,
    kernel: JointKernel,
    labels: DVector<f64>,
    spectrum: KernelSpectrum,
    factor: LowRankFactor,
    x_tilde: DMatrix<f64>,
    coeffs: ClassifierCoeffs,
    w: DMatrix<f64>,
    /// Mapping matrix of the previous refresh, zero-padded to the current row count.
    w_anchor: DMatrix<f64>,
    time_index: usize,
    /// Target rows received by [`continue_stream`] since the last refresh and not yet absorbed.
    pending: DMatrix<f64>,
}

impl DaState {
    /// Builds the initial (`t = 0`, no target) state from labeled source features.
    pub fn new(
        source: &DMatrix<f64>,
        labels: &[Label],
        hp: Hyperparams,
        kernel_cfg: KernelConfig,
    ) -> Result<Self> {
        hp.validate()?;
        let ns = source.nrows();
        if ns < 2 {
            return Err(data(format!("need at least 2 source samples, got {ns}")));
        }
        if labels.len() != ns {
            return Err(data(format!(
                "{} labels for {ns} source samples",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(data(format!("source labels must be +1 or -1, got {bad}")));
        }
        ensure_finite(source.as_slice(), "source features")?;
        let kernel = JointKernel::new(source, &DMatrix::zeros(0, source.ncols()), kernel_cfg)?;
        let spectrum = KernelSpectrum::new(&kernel.source_block())?;
        let rank = hp.rank.min(ns);
        let factor = spectrum.factor(rank)?;
        let m = hp.latent_dim.min(ns);
        let w = match hp.mapping_init {
            MappingInit::ScaledIdentity => {
                DMatrix::from_fn(ns, m, |i, j| if i == j { 1.0 / (m as f64).sqrt() } else { 0.0 })
            }
            MappingInit::KernelWhitening => {
                let mut w = spectrum.eigenvectors().columns(0, m).into_owned();
                let top = spectrum.eigenvalues()[0];
                for (j, mut col) in w.column_iter_mut().enumerate() {
                    let lam = spectrum.eigenvalues()[j];
                    col *= if lam > 1e-12 * top { lam.powf(-0.5) } else { 0.0 };
                }
                w
            }
        };
        let labels = DVector::from_iterator(ns, labels.iter().map(|&y| f64::from(y)));
        let x_tilde = assemble_x_tilde(&labels, &factor);
        Ok(Self {
            coeffs: ClassifierCoeffs::zeros(factor.rank()),
            hp,
            kernel,
            labels,
            spectrum,
            factor,
            x_tilde,
            w_anchor: w.clone(),
            w,
            time_index: 0,
            pending: DMatrix::zeros(0, source.ncols()),
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn kernel(&self) -> &JointKernel {
        &self.kernel
    }

    pub fn factor(&self) -> &LowRankFactor {
        &self.factor
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn coeffs(&self) -> &ClassifierCoeffs {
        &self.coeffs
    }

    pub fn mapping(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn anchor(&self) -> &DMatrix<f64> {
        &self.w_anchor
    }

    pub fn x_tilde(&self) -> &DMatrix<f64> {
        &self.x_tilde
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    /// Received target rows awaiting the next refresh.
    pub fn pending(&self) -> &DMatrix<f64> {
        &self.pending
    }

    pub fn n_source(&self) -> usize {
        self.kernel.n_source()
    }

    pub fn n_target(&self) -> usize {
        self.kernel.n_target()
    }

    /// Replaces the source kernel factor (for example with a column-padded one).
    /// Resets the classifier coefficients to zero.
    pub fn set_factor(&mut self, factor: LowRankFactor) -> Result<()> {
        if factor.v.nrows() != self.n_source() || factor.rank() == 0 {
            return Err(data(format!(
                "factor has {} rows, expected {}",
                factor.v.nrows(),
                self.n_source()
            )));
        }
        self.x_tilde = assemble_x_tilde(&self.labels, &factor);
        self.coeffs = ClassifierCoeffs::zeros(factor.rank());
        self.factor = factor;
        Ok(())
    }

    /// Overrides the mapping matrix; the anchor is set to the same value.
    pub fn set_mapping(&mut self, w: DMatrix<f64>) -> Result<()> {
        if w.nrows() != self.kernel.len() || w.ncols() == 0 {
            return Err(data(format!(
                "mapping has {} rows, expected {}",
                w.nrows(),
                self.kernel.len()
            )));
        }
        ensure_finite(w.as_slice(), "mapping matrix")?;
        self.w_anchor = w.clone();
        self.w = w;
        Ok(())
    }

    pub fn set_coeffs(&mut self, coeffs: ClassifierCoeffs) -> Result<()> {
        if coeffs.u.len() != self.factor.rank() + 1 {
            return Err(data("coefficient vector does not match the factor rank"));
        }
        self.coeffs = coeffs;
        Ok(())
    }

    /// Kernel-expansion weights `y = Z_S alpha` over the source samples, recovered
    /// from `eta` by solving `K_SS y = V eta`.
    pub fn expansion_weights(&self, u: &DVector<f64>) -> DVector<f64> {
        let eta = u.rows(1, u.len() - 1);
        self.spectrum.solve(&(&self.factor.v * eta))
    }

    /// `alpha` itself (`alpha_i = Y_i y_i`).
    pub fn alpha(&self) -> DVector<f64> {
        self.expansion_weights(&self.coeffs.u).component_mul(&self.labels)
    }

    fn mapping_problem(&self, u: &DVector<f64>) -> MappingProblem<'_> {
        let y = self.expansion_weights(u);
        MappingProblem::new(
            self.kernel.matrix(),
            &self.labels,
            &y,
            u[0],
            self.hp.lambda,
            self.hp.lambda1,
            self.hp.delta,
            self.n_target(),
        )
    }

    /// Full objective: huberized loss and ridge under the empirical kernel, MMD and
    /// temporal smoothness.
    pub fn objective(&self, w: &DMatrix<f64>, u: &DVector<f64>) -> Result<f64> {
        if w.nrows() != self.kernel.len() || u.len() != self.factor.rank() + 1 {
            return Err(data("objective arguments do not match the state dimensions"));
        }
        let problem = self.mapping_problem(u);
        Ok(problem.value(w) + smoothness(w, &self.w_anchor, self.n_source(), self.hp.lambda2))
    }

    /// Individual objective terms `(loss, ridge, mmd, smoothness)` at the current iterate.
    pub fn objective_terms(&self) -> (f64, f64, f64, f64) {
        let p = self.mapping_problem(&self.coeffs.u);
        (
            p.loss_term(&self.w),
            p.ridge_term(&self.w),
            p.mmd_term(&self.w),
            smoothness(&self.w, &self.w_anchor, self.n_source(), self.hp.lambda2),
        )
    }

    pub fn fit_epoch(&mut self) -> Result<FitSummary> {
        self.fit_epoch_with(FitMode::Joint)
    }

    /// Runs up to `iters` alternating block updates from the current (warm) iterate.
    pub fn fit_epoch_with(&mut self, mode: FitMode) -> Result<FitSummary> {
        let hp = self.hp.clone();
        let mut u = self.coeffs.u.clone();
        let mut u_prev = u.clone();
        let mut w = self.w.clone();
        let mut w_prev = w.clone();
        let mut trace = vec![self.objective(&w, &u)?];
        let mut converged = false;
        let mut iterations = 0;

        for k in 1..=hp.iters {
            let u_hat = &u + (&u - &u_prev) * hp.extrapolation_u;
            let u_new = u_update(&self.x_tilde, &u_hat, hp.lipschitz_u, hp.lambda, hp.delta);
            if u_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    iteration: k,
                    reason: "classifier coefficients became non-finite".into(),
                });
            }
            u_prev = std::mem::replace(&mut u, u_new);

            if mode == FitMode::Joint {
                let problem = self.mapping_problem(&u);
                let w_hat = &w + (&w - &w_prev) * hp.extrapolation_w;
                let w_new = w_update(&problem, &w_hat, &self.w_anchor, hp.lipschitz_w, hp.lambda2);
                if w_new.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged {
                        iteration: k,
                        reason: "mapping matrix became non-finite".into(),
                    });
                }
                w_prev = std::mem::replace(&mut w, w_new);
            }

            let obj = self.objective(&w, &u)?;
            if !obj.is_finite() {
                return Err(Error::Diverged {
                    iteration: k,
                    reason: "objective became non-finite".into(),
                });
            }
            let prev = *trace.last().unwrap();
            trace.push(obj);
            iterations = k;
            if (prev - obj).abs() <= hp.tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        self.coeffs.u = u;
        self.w = w;
        Ok(FitSummary {
            iterations,
            converged,
            objective_trace: trace,
        })
    }

    /// Appends a batch of target samples (rows) and moves to the next time step.
    ///
    /// The current mapping becomes the smoothness anchor; both it and the warm
    /// start gain zero rows for the new samples.
    pub fn advance_time(&mut self, batch: &DMatrix<f64>) -> Result<()> {
        if batch.nrows() == 0 {
            return Err(data("advance_time needs a non-empty batch"));
        }
        self.kernel.push_target(batch)?;
        let n = self.kernel.len();
        let padded = self.w.clone().resize_vertically(n, 0.0);
        self.w_anchor = padded.clone();
        self.w = padded;
        self.time_index += 1;
        Ok(())
    }

    /// Decision rule `sign(q^T W W^T K_x + beta0)`; a zero margin maps to `+1`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        Ok(self.predict_batch(&DMatrix::from_row_slice(1, x.len(), x))?[0])
    }

    pub fn predict_batch(&self, xs: &DMatrix<f64>) -> Result<Vec<Prediction>> {
        let y = self.expansion_weights(&self.coeffs.u);
        let q = self.kernel.matrix().columns(0, self.n_source()) * y;
        let readout = self.w.tr_mul(&q);
        let beta0 = self.coeffs.beta0();
        (0..xs.nrows())
            .map(|i| {
                let row: Vec<f64> = xs.row(i).iter().copied().collect();
                let kx = self.kernel.column(&row)?;
                let z = self.w.tr_mul(&kx);
                Ok(Prediction::from_margin(readout.dot(&z) + beta0))
            })
            .collect()
    }

    pub fn mmd_coeff(&self) -> Result<MmdCoeff> {
        MmdCoeff::new(self.n_source(), self.n_target())
    }
}

fn assemble_x_tilde(labels: &DVector<f64>, factor: &LowRankFactor) -> DMatrix<f64> {
    let ns = labels.len();
    let r = factor.rank();
    DMatrix::from_fn(ns, r + 1, |i, j| {
        if j == 0 {
            labels[i]
        } else {
            labels[i] * factor.v[(i, j - 1)]
        }
    })
}

/// Outcome of [`run_stream`].
#[derive(Debug, Clone)]
pub struct StreamRun {
    /// One prediction per target row.
    pub predictions: Vec<Prediction>,
    /// Wall time of each refresh in seconds, starting with the source-only fit.
    pub refresh_seconds: Vec<f64>,
    pub fits: Vec<FitSummary>,
    /// The state after the last refresh.
    pub state: DaState,
}

/// Source-only fit, then a refresh on the arrival of target rows `0, k, 2k, ...`
/// (`k = refresh_every`): the state absorbs every row received so far, including
/// the arriving one, and is refitted. Rows between refreshes are predicted by the
/// frozen state.
pub fn run_stream(
    source: &DMatrix<f64>,
    labels: &[Label],
    target: &DMatrix<f64>,
    hp: &Hyperparams,
    refresh_every: usize,
) -> Result<StreamRun> {
    let cfg = match hp.gamma {
        Some(g) => KernelConfig::new(g)?,
        None => KernelConfig::median_heuristic(source)?,
    };
    run_stream_with_kernel(source, labels, target, hp, refresh_every, cfg)
}

pub fn run_stream_with_kernel(
    source: &DMatrix<f64>,
    labels: &[Label],
    target: &DMatrix<f64>,
    hp: &Hyperparams,
    refresh_every: usize,
    cfg: KernelConfig,
) -> Result<StreamRun> {
    if refresh_every == 0 {
        return Err(param("refresh interval must be at least 1"));
    }
    let mut state = DaState::new(source, labels, hp.clone(), cfg)?;
    let clock = std::time::Instant::now();
    let first = state.fit_epoch()?;
    let elapsed = clock.elapsed().as_secs_f64();
    let mut run = continue_stream(state, target, refresh_every)?;
    run.fits.insert(0, first);
    run.refresh_seconds.insert(0, elapsed);
    Ok(run)
}

/// Runs the refresh schedule of [`run_stream`] from an already fitted state, for
/// example one restored from a checkpoint. Rows still pending in the state count
/// toward the next refresh, so splitting a stream and resuming gives the same
/// predictions as one uninterrupted run.
pub fn continue_stream(
    mut state: DaState,
    target: &DMatrix<f64>,
    refresh_every: usize,
) -> Result<StreamRun> {
    if refresh_every == 0 {
        return Err(param("refresh interval must be at least 1"));
    }
    if target.ncols() != state.kernel.feature_dim() {
        return Err(data(format!(
            "target has {} features but the model expects {}",
            target.ncols(),
            state.kernel.feature_dim()
        )));
    }
    let mut refresh_seconds = Vec::new();
    let mut fits = Vec::new();
    let n = target.nrows();
    let mut predictions = Vec::with_capacity(n);
    for t in 0..n {
        let arrived = state.pending.nrows() + 1;
        // A state that has never seen the target refreshes on its first row.
        let due = (state.n_target() == 0 && state.pending.nrows() == 0) || arrived >= refresh_every;
        if due {
            let clock = std::time::Instant::now();
            let mut batch = DMatrix::zeros(arrived, target.ncols());
            batch.rows_mut(0, arrived - 1).copy_from(&state.pending);
            batch.row_mut(arrived - 1).copy_from(&target.row(t));
            state.pending = DMatrix::zeros(0, target.ncols());
            state.advance_time(&batch)?;
            fits.push(state.fit_epoch()?);
            refresh_seconds.push(clock.elapsed().as_secs_f64());
        } else {
            let held = std::mem::replace(&mut state.pending, DMatrix::zeros(0, 0));
            let last = held.nrows();
            state.pending = held.insert_row(last, 0.0);
            state.pending.row_mut(last).copy_from(&target.row(t));
        }
        let row: Vec<f64> = target.row(t).iter().copied().collect();
        predictions.push(state.predict(&row)?);
    }
    Ok(StreamRun {
        predictions,
        refresh_seconds,
        fits,
        state,
    })
}
