//! The five subcommands. Each returns `(violations, one-line summary)`.

pub mod constants;
pub mod oracle;
pub mod pullback;
pub mod simulate;
pub mod verify;

use hrlab::estimates::{compute_constants, MeasuredConstants, TheoryConstants};
use hrlab::model::{slow_manifold_point, translation_bound, Forcing, DEFAULT_WINDOW_STARTS};
use hrlab::sampling::{child_seed, on_sphere, rng};
use hrlab::solver::{Process, ProcessConfig};
use hrlab::{Grid, StateField};

use crate::config::{ExperimentConfig, InitialData};
use crate::CliError;

/// Independent random streams derived from the experiment seed.
pub(crate) mod stream {
    pub const INITIAL: u64 = 0;
    pub const RUNS: u64 = 1;
    pub const PAIRS: u64 = 2;
    pub const ABSORBING: u64 = 3;
    pub const SMOOTHING: u64 = 4;
    pub const PULLBACK: u64 = 5;
    pub const PROFILE: u64 = 6;
    pub const EMBEDDING: u64 = 7;
}

pub(crate) fn seed(cfg: &ExperimentConfig, stream: u64) -> u64 {
    child_seed(cfg.experiment.seed, stream)
}

pub(crate) struct Setup {
    pub grid: Grid<f64>,
    pub forcing: Forcing<f64>,
    pub process: Process<f64>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        Self::with_solver(cfg, cfg.solver)
    }

    pub fn with_solver(cfg: &ExperimentConfig, solver: ProcessConfig<f64>) -> Result<Self, CliError> {
        let grid = Grid::new(&cfg.lengths, &cfg.cells)?;
        cfg.forcing.validate()?;
        let forcing = Forcing::new(cfg.forcing, &grid)?;
        let process = Process::new(&grid, &cfg.params, &forcing, &solver)?;
        Ok(Self { grid, forcing, process })
    }

    /// Same setup, every step recorded.
    pub fn monitored(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        Self::with_solver(
            cfg,
            ProcessConfig {
                stride: 1,
                snapshot_stride: None,
                ..cfg.solver
            },
        )
    }
}

pub(crate) fn initial_state(cfg: &ExperimentConfig, grid: &Grid<f64>) -> Result<StateField<f64>, CliError> {
    Ok(match cfg.experiment.initial {
        InitialData::Zero => StateField::zeros(grid),
        InitialData::Uniform(g) => StateField::uniform(grid, g),
        InitialData::Random { norm_sq } => {
            if !(norm_sq >= 0.0) {
                return Err(CliError::Invalid(format!(
                    "initial_norm_sq = {norm_sq} must be nonnegative"
                )));
            }
            on_sphere(grid, norm_sq, &mut rng(seed(cfg, stream::INITIAL)))
        }
        InitialData::SlowManifold { w } => StateField::uniform(
            grid,
            slow_manifold_point(&cfg.params, w)
                .ok_or_else(|| CliError::Invalid(format!("no slow-manifold point at w = {w}")))?,
        ),
    })
}

/// Formula constants with the measured stand-ins for this grid.
pub(crate) fn theory(cfg: &ExperimentConfig, setup: &Setup) -> Result<TheoryConstants<f64>, CliError> {
    let p_bound = translation_bound(&setup.forcing, DEFAULT_WINDOW_STARTS)?;
    let t = cfg.experiment.t_mstar;
    let measured = MeasuredConstants::measure(&setup.grid, &cfg.params, t, seed(cfg, stream::EMBEDDING))?;
    Ok(compute_constants(
        &cfg.params,
        setup.grid.measure(),
        p_bound,
        t,
        &measured,
    )?)
}
