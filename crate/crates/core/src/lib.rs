//! Exact-diagonalization simulator for simultaneous multi-user quantum state
//! transfer across a shared XX spin-chain data bus.

pub mod disorder;
pub mod dynamics;
pub mod error;
pub mod fidelity;
pub mod hamiltonian;
pub mod lattice;

pub use disorder::{apply_disorder, DisorderAxis, DisorderSpec};
pub use dynamics::{lindblad_evolve, spectral_decompose, DensityBlockState, DyadPropagator, SpectralCache};
pub use error::{Error, Result};
pub use fidelity::{
    aggregate, average_fidelity, gamma_elements, haar_mc_average, pointwise_fidelity, FidelityMatrix, FidelitySeries,
    GammaElements, InputState, TransferModel,
};
pub use hamiltonian::{build_full_hamiltonian, build_sector_hamiltonian, SectorHamiltonian, SystemSpec};
pub use lattice::{enumerate_sector, SectorBasis, SiteLayout, SiteRole};
pub mod io;
pub mod localization;
pub mod optimizer;
pub mod robustness;

pub use localization::{ipr_one_excitation, ipr_two_excitation, IprReport};
pub use optimizer::{
    evaluate_at, optimize_strategy, scan_time, OptimizationResult, ScanResult, ScanSettings, Strategy, StrategySpec,
    TimeWindow,
};

pub use robustness::{
    dephasing_sweep, disorder_ensemble, state_scan, thermal_average_fidelity, thermal_sweep, SweepResult, ThermalSpec,
};

/// Version string embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
