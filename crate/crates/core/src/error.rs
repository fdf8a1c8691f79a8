//! Error type shared by all cascade-core modules.

use thiserror::Error;

/// Errors produced by configuration validation, spectral evaluation,
/// synthesis, and simulation.
#[derive(Debug, Error)]
pub enum CascadeError {
    /// Plant configuration violates one of its invariants.
    #[error("invalid plant configuration: {0}")]
    InvalidConfig(String),

    /// The requested operation only supports specific coupling profiles.
    #[error("unsupported coupling profile: {0}")]
    UnsupportedProfile(String),

    /// The supplied quadrature cannot resolve the requested mode.
    #[error("quadrature too coarse: {0}")]
    QuadratureResolution(String),

    /// A biorthogonal pairing came out numerically zero.
    #[error("degenerate eigenvector pairing: |<phi, psi>| = {magnitude:.3e} for {mode}")]
    DegeneratePairing { mode: String, magnitude: f64 },

    /// The rank test and the coefficient criterion disagree on a Kalman check.
    #[error("kalman verdict mismatch: rank test says {rank_verdict}, coefficient test says {coeff_verdict} ({detail})")]
    KalmanMismatch {
        rank_verdict: bool,
        coeff_verdict: bool,
        detail: String,
    },

    /// Pole placement is impossible for the supplied pair.
    #[error("pole assignment impossible: {0}")]
    AssignmentImpossible(String),

    /// A reduced-model hypothesis does not hold.
    #[error("reduced-model hypothesis violated: {0}")]
    HypothesisViolated(String),

    /// The closed-loop matrix has spectral abscissa above the target.
    #[error("infeasible gains: closed-loop spectral abscissa {abscissa:.6} >= -delta = {bound:.6}")]
    InfeasibleGains { abscissa: f64, bound: f64 },

    /// The shifted closed-loop matrix is not Hurwitz, so no Lyapunov solution exists.
    #[error("no Lyapunov solution: shifted spectral abscissa {0:.6} >= 0")]
    NoLyapunovSolution(f64),

    /// An internal numerical consistency check failed during certificate evaluation.
    #[error("certificate numerics inconsistent: {0}")]
    CertificateNumerics(String),

    /// A tail-sum term sequence does not decay.
    #[error("diverging tail: {0}")]
    DivergingTail(String),

    /// The certificate search exhausted its bounds without finding a feasible pair.
    #[error("certificate search exhausted: best candidate (N={n}, M={m}) with margins gamma1={gamma1:.4e}, gamma2={gamma2:.4e}, theta={theta:.4e}")]
    SearchExhausted {
        n: usize,
        m: usize,
        gamma1: f64,
        gamma2: f64,
        theta: f64,
    },

    /// The time integration produced a non-finite state.
    #[error("simulation diverged at t = {0:.6}")]
    Divergence(f64),

    /// Reconstructed fields carry a non-negligible imaginary part.
    #[error("conjugate symmetry violated: imaginary residue {residue:.3e} exceeds {bound:.3e}")]
    ConjugateSymmetry { residue: f64, bound: f64 },

    /// Not enough samples for the requested fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Generic dimension mismatch between supplied arrays or matrices.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, CascadeError>;
