"""Approximate message passing for low-rank density-matrix recovery.

The iteration alternates a residual update with an Onsager correction, a
pseudo-data step through the adjoint of the rescaled sensing map, and a
low-rank denoiser:

    r_t   = y~ - A~(rho_t) + c_t * r_{t-1}
    v_t   = rho_t + A~^dagger(r_t)
    rho_{t+1} = lam * denoise(v_t; tau_t) + (1 - lam) * rho_t

with threshold tau_t = alpha * sigma_t * sqrt(d), sigma_t = ||r_t||_2 / sqrt(M),
starting from rho_0 = I/d and r_{-1} = 0. The Onsager coefficient c_t is the
normalized divergence of the denoiser at the previous pseudo-data, estimated
by a Monte Carlo difference quotient. ``A~`` is the sensing map rescaled by
sqrt(d/M) so that its Gram operator is an identity on average; without that
rescaling the iteration blows up, which run_amp reports as a DivergenceError.

Denoisers: ``svt`` soft-shrinks the eigenvalue magnitudes (singular value
thresholding specialized to Hermitian matrices), and ``psvt`` composes it
with the projection onto the density-matrix set, so every damped iterate is
a valid state.

Each run owns its mutable state; the shared SensingMap is read-only, so
independent runs (trials, seeds) parallelize freely.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .pauli import SensingMap, apply_adjoint, apply_sensing, build_sensing_map
from .states import as_rng, nmse, project_to_density, state_fidelity

__all__ = [
    "AmpConfig",
    "AmpState",
    "AmpTrace",
    "svt",
    "psvt",
    "get_denoiser",
    "estimate_onsager",
    "hermitian_probe",
    "amp_step",
    "run_amp",
]

_SIGMA_BLOWUP = 1e6   # sigma_t above this multiple of sigma_0 counts as divergence


def svt(H: np.ndarray, tau: float) -> np.ndarray:
    """Singular value thresholding of a Hermitian matrix.

    The singular values of a Hermitian H are |lambda_k| with singular vector
    pairs sign(lambda_k) |psi_k><psi_k|, so one eigendecomposition gives
    sum_k sign(lambda_k) (|lambda_k| - tau)_+ |psi_k><psi_k| exactly.
    """
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    H = np.asarray(H, dtype=np.complex128)
    vals, vecs = np.linalg.eigh(H)
    shrunk = np.sign(vals) * np.clip(np.abs(vals) - tau, 0.0, None)
    keep = shrunk != 0.0
    if not keep.any():
        return np.zeros_like(H)
    V = vecs[:, keep]
    out = (V * shrunk[keep]) @ V.conj().T
    return 0.5 * (out + out.conj().T)


def psvt(H: np.ndarray, tau: float) -> np.ndarray:
    """Projected SVT: threshold, then project onto the density-matrix set."""
    return project_to_density(svt(H, tau))


def get_denoiser(name: str):
    try:
        return {"svt": svt, "psvt": psvt}[name.lower()]
    except KeyError:
        raise ValueError(f"unknown denoiser {name!r} (expected 'svt' or 'psvt')")


@dataclass
class AmpConfig:
    """Solver hyperparameters.

    ``damping`` is the convex blending weight lam; ``damping_enabled=False``
    runs the undamped update (lam = 1). ``mc_epsilon`` is the relative probe
    scale of the Monte Carlo divergence estimate: the finite-difference step
    used at iteration t is ``mc_epsilon * max(||v||_F / d, 1e-12)``.
    ``normalize=True`` rescales map and data by sqrt(d/M) before iterating;
    disabling it runs the raw (divergent) baseline.
    """

    alpha: float = 2.0
    damping: float = 0.01
    damping_enabled: bool = True
    max_iter: int = 2000
    mc_epsilon: float = 1e-4
    mc_samples: int = 1
    denoiser: str = "psvt"
    normalize: bool = True
    early_stop: bool = False
    early_stop_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be at least 1")
        if self.mc_epsilon <= 0:
            raise ValueError("mc_epsilon must be positive")
        get_denoiser(self.denoiser)


@dataclass
class AmpState:
    """One solver state: iterate rho_t plus the residual bookkeeping.

    ``residual`` is r_{t-1} as seen from the next step (the residual computed
    while producing ``rho``); ``pseudo_data``, ``tau`` and ``denoised`` cache
    v_{t-1}, tau_{t-1} and the denoiser output needed by the next Onsager
    estimate.
    """

    rho: np.ndarray
    residual: np.ndarray
    prev_residual: np.ndarray
    onsager: float
    sigma: float
    tau: float
    t: int
    pseudo_data: np.ndarray | None = None
    denoised: np.ndarray | None = None


@dataclass
class AmpTrace:
    """Per-iteration diagnostics, exportable as CSV."""

    sigma: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    onsager: list = field(default_factory=list)
    residual_norm: list = field(default_factory=list)
    nmse: list | None = None
    fidelity: list | None = None
    diverged: bool = False

    def __len__(self):
        return len(self.sigma)

    def to_csv(self, path) -> None:
        cols = ["t", "sigma", "tau", "onsager", "residual_norm"]
        if self.nmse is not None:
            cols += ["nmse", "fidelity"]
        with open(path, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for t in range(len(self)):
                row = [t, f"{self.sigma[t]:.17g}", f"{self.tau[t]:.17g}",
                       f"{self.onsager[t]:.17g}", f"{self.residual_norm[t]:.17g}"]
                if self.nmse is not None:
                    row += [f"{self.nmse[t]:.17g}", f"{self.fidelity[t]:.17g}"]
                writer.writerow(row)


def hermitian_probe(rng: np.random.Generator, d: int) -> np.ndarray:
    """Hermitian random probe with unit second moment in every entry.

    Off-diagonal entries are CN(0,1) (conjugate-paired), diagonal entries
    real N(0,1), so E||h||_F^2 = d^2 exactly as for an unconstrained CN(0,1)
    matrix. Keeping the probe Hermitian keeps the perturbed pseudo-data in
    the denoiser's domain.
    """
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (z + z.conj().T) / 2.0


def estimate_onsager(denoiser, v_prev: np.ndarray, tau_prev: float, M: int,
                     epsilon: float, k: int, seed, f_v: np.ndarray | None = None) -> float:
    """Monte Carlo estimate of the normalized denoiser divergence.

    Averages ``Re <h, f(v + eps h) - f(v)>_F / eps`` over ``k`` Hermitian
    probes ``h`` and divides by ``M``. ``f_v`` may pass in a precomputed
    ``denoiser(v_prev, tau_prev)`` to save one evaluation.
    """
    if epsilon <= 0:
        raise ValueError("probe scale must be positive")
    if k < 1:
        raise ValueError("need at least one probe sample")
    rng = as_rng(seed)
    d = v_prev.shape[0]
    if f_v is None:
        f_v = denoiser(v_prev, tau_prev)
    total = 0.0
    for _ in range(k):
        h = hermitian_probe(rng, d)
        diff = denoiser(v_prev + epsilon * h, tau_prev) - f_v
        total += float(np.sum((h.conj() * diff).real)) / epsilon
    return total / (M * k)


def _check_finite(*arrays) -> bool:
    return all(np.isfinite(a).all() for a in arrays)


def amp_step(state: AmpState, smap: SensingMap, y: np.ndarray,
             config: AmpConfig, rng: np.random.Generator) -> AmpState:
    """Advance the AMP iteration by one step.

    ``smap`` and ``y`` must already be in matching units (run_amp handles the
    sqrt(d/M) rescaling). Raises DivergenceError on non-finite values.
    """
    d, M = smap.d, smap.M
    denoiser = get_denoiser(config.denoiser)
    lam = config.damping if config.damping_enabled else 1.0

    if state.t == 0 or state.pseudo_data is None:
        c_hat = 0.0
    else:
        eps = config.mc_epsilon * max(np.linalg.norm(state.pseudo_data) / d, 1e-12)
        # The probe measures the divergence over the d^2-dimensional Hermitian
        # subspace; the residual recursion needs it over the full complex
        # matrix space (2 d^2 real coordinates), which for a spectral denoiser
        # is twice that. Without the factor the damped and undamped dynamics
        # collapse onto each other and the damping step loses its effect.
        c_hat = 2.0 * estimate_onsager(denoiser, state.pseudo_data, state.tau,
                                       M, eps, config.mc_samples, rng,
                                       f_v=state.denoised)

    r = y - apply_sensing(smap, state.rho) + c_hat * state.residual
    sigma = float(np.linalg.norm(r) / np.sqrt(M))
    tau = config.alpha * sigma * np.sqrt(d)
    v = state.rho + apply_adjoint(smap, r)
    v = 0.5 * (v + v.conj().T)
    if not _check_finite(r, v):
        raise DivergenceError(f"non-finite values at iteration {state.t}",
                              iterate=state.rho)
    denoised = denoiser(v, tau)
    rho_next = lam * denoised + (1.0 - lam) * state.rho
    if not _check_finite(rho_next):
        raise DivergenceError(f"non-finite iterate at iteration {state.t}",
                              iterate=state.rho)
    return AmpState(rho=rho_next, residual=r, prev_residual=state.residual,
                    onsager=c_hat, sigma=sigma, tau=tau, t=state.t + 1,
                    pseudo_data=v, denoised=denoised)


def initial_state(smap: SensingMap) -> AmpState:
    """rho_0 = I/d, r_{-1} = 0."""
    d, M = smap.d, smap.M
    return AmpState(rho=np.eye(d, dtype=np.complex128) / d,
                    residual=np.zeros(M), prev_residual=np.zeros(M),
                    onsager=0.0, sigma=0.0, tau=0.0, t=0)


def run_amp(smap: SensingMap, y: np.ndarray, config: AmpConfig,
            ground_truth: np.ndarray | None = None):
    """Run the AMP solver and return ``(rho_hat, trace)``.

    ``y`` holds raw sample means. With ``config.normalize`` (the default) the
    map is rebuilt in normalized form if needed and both map and data are
    rescaled by sqrt(d/M); with it disabled the map and data are used as
    given (the divergent baseline). Raises DivergenceError (carrying the
    trace so far and the last finite iterate) on blow-up.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (smap.M,):
        raise ValueError("data vector length does not match the map")
    if config.normalize:
        if not smap.normalized:
            smap = build_sensing_map(smap.paulis, normalized=True)
        y_run = smap.scale * y
    else:
        y_run = y

    rng = as_rng(config.seed)
    trace = AmpTrace()
    if ground_truth is not None:
        trace.nmse = []
        trace.fidelity = []

    state = initial_state(smap)
    sigma0 = None
    history = []                      # ring buffer for the optional early stop
    try:
        for _ in range(config.max_iter):
            state = amp_step(state, smap, y_run, config, rng)
            trace.sigma.append(state.sigma)
            trace.tau.append(state.tau)
            trace.onsager.append(state.onsager)
            trace.residual_norm.append(state.sigma * np.sqrt(smap.M))
            if ground_truth is not None:
                trace.nmse.append(nmse(ground_truth, state.rho))
                trace.fidelity.append(state_fidelity(ground_truth, state.rho))
            if sigma0 is None:
                sigma0 = state.sigma
            elif sigma0 > 0 and state.sigma > _SIGMA_BLOWUP * sigma0:
                raise DivergenceError(
                    f"residual blow-up at iteration {state.t}: "
                    f"sigma={state.sigma:.3g} vs sigma_0={sigma0:.3g}",
                    iterate=state.rho)
            if config.early_stop:
                history.append(state.rho)
                if len(history) > 10:
                    prev = history.pop(0)
                    num = np.linalg.norm(state.rho - prev)
                    den = np.linalg.norm(state.rho)
                    if den > 0 and num / den < config.early_stop_tol:
                        break
    except DivergenceError as err:
        trace.diverged = True
        err.trace = trace
        raise
    return state.rho, trace
