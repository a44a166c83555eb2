"""Measurement data synthesis: exact expectations, shot noise, per-setting
outcome distributions with parity marginalization, and noise channels.

Outcome bitstrings index the distribution vector with the leftmost qubit as
the most significant bit, matching the Kronecker ordering used everywhere
else. Qubit indices passed to the channel operations are 1-based (qubit 1 is
the leftmost letter).

All operations are pure functions over immutable inputs. Per-setting
simulations inside build_measurements draw from independent RNG streams
keyed by (seed, setting index), so settings can be simulated in parallel
without changing the results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pauli import (
    MeasurementPlan,
    SensingMap,
    apply_sensing,
    build_pauli,
    build_sensing_map,
    check_setting,
    covered_words,
    pauli_expectation,
)
from .states import as_rng

__all__ = [
    "OutcomeDistribution",
    "ShotRecord",
    "NoiseModel",
    "PhotonicNoise",
    "exact_expectations",
    "sample_shots_observable",
    "outcome_distribution",
    "noisy_basis_measurement",
    "estimate_from_setting",
    "apply_readout",
    "apply_depolarizing",
    "apply_coherent",
    "apply_pauli_flip",
    "apply_loss",
    "apply_composite",
    "rotation_x",
    "overrotation_unitary",
    "build_measurements",
    "write_shots",
    "read_shots",
]


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probabilities over the 2^n outcome bitstrings of one setting."""

    setting: str
    probs: np.ndarray

    @property
    def n(self) -> int:
        return len(self.setting)


# ---------------------------------------------------------------------------
# Expectations and shot noise
# ---------------------------------------------------------------------------

def exact_expectations(rho: np.ndarray, smap: SensingMap) -> np.ndarray:
    """Noiseless data: y_k = Tr[P_k rho], with no map rescaling applied."""
    return apply_sensing(smap, rho) / smap.scale


def sample_shots_observable(rho: np.ndarray, P, N: int, seed) -> float:
    """Sample-mean estimate of Tr[P rho] from N binomial shots."""
    if N < 1:
        raise ValueError("shot count must be at least 1")
    if isinstance(P, str):
        P = build_pauli(P)
    rng = as_rng(seed)
    p = 0.5 * (pauli_expectation(P, rho) + 1.0)
    if not -1e-10 <= p <= 1.0 + 1e-10:
        raise ValueError(f"outcome probability {p} outside [0, 1]; corrupted state")
    p = min(max(p, 0.0), 1.0)
    return 2.0 * rng.binomial(N, p) / N - 1.0


# ---------------------------------------------------------------------------
# Per-setting outcome distributions
# ---------------------------------------------------------------------------

def rotation_x(theta: float) -> np.ndarray:
    """Single-qubit X rotation by ``theta``."""
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)

# Columns are the +1 / -1 eigenvectors of each basis letter, so V^dagger maps
# that basis onto the computational one.
_BASIS = {
    "X": np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0),
    "Y": np.array([[1, 1], [1j, -1j]], dtype=np.complex128) / np.sqrt(2.0),
    "Z": np.eye(2, dtype=np.complex128),
}


def _readout_gates(setting: str, theta: float) -> np.ndarray:
    """Tensor product of per-qubit pre-measurement gates for a setting.

    Each X or Y letter contributes ``RX(theta) @ V^dagger`` (basis change
    followed by the overrotation error); Z letters need no rotation and pick
    up no error.
    """
    G = np.array([[1.0]], dtype=np.complex128)
    rx = rotation_x(theta)
    for ch in setting:
        g = _BASIS[ch].conj().T
        if ch != "Z" and theta != 0.0:
            g = rx @ g
        G = np.kron(G, g)
    return G


def _distribution(rho: np.ndarray, setting: str, theta: float) -> OutcomeDistribution:
    setting = check_setting(setting)
    d = 1 << len(setting)
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (d, d):
        raise ValueError("dimension mismatch between state and setting")
    G = _readout_gates(setting, theta)
    T = G @ rho
    probs = np.einsum("ij,ij->i", T, G.conj()).real
    probs = np.clip(probs, 0.0, None)
    return OutcomeDistribution(setting=setting, probs=probs)


def outcome_distribution(rho: np.ndarray, setting: str) -> OutcomeDistribution:
    """Exact outcome probabilities of measuring ``setting`` on ``rho``."""
    return _distribution(rho, setting, 0.0)


def noisy_basis_measurement(rho: np.ndarray, setting: str,
                            theta: float) -> OutcomeDistribution:
    """Outcome distribution when every X/Y basis change carries an extra
    RX(theta) overrotation before the Z-basis readout."""
    return _distribution(rho, setting, float(theta))


def _as_frequencies(dist, n: int | None = None) -> tuple[np.ndarray, int]:
    if isinstance(dist, OutcomeDistribution):
        return dist.probs, dist.n
    p = np.asarray(dist, dtype=np.float64)
    if n is None:
        n = int(p.size).bit_length() - 1
    if p.ndim != 1 or p.size != 1 << n:
        raise ValueError("distribution length is not 2^n")
    total = p.sum()
    if total <= 0:
        raise ValueError("empty outcome distribution")
    return p / total, n


def _parse_mask(a, n: int) -> int:
    if isinstance(a, str):
        if len(a) != n or any(ch not in "01" for ch in a):
            raise ValueError(f"mask {a!r} is not a length-{n} bitstring")
        return int(a, 2)
    a = int(a)
    if not 0 <= a < 1 << n:
        raise ValueError("mask out of range")
    return a


def estimate_from_setting(dist, a) -> float:
    """Expectation of the Pauli obtained by masking a setting with ``a``.

    ``dist`` is an OutcomeDistribution or a vector of probabilities/counts
    (counts are normalized). The estimate is ``sum_b f(b AND a) p(b)`` with
    f the parity sign of the masked bitstring; ``a`` may be a bitstring or
    an integer mask (leftmost qubit = most significant bit).
    """
    freqs, n = _as_frequencies(dist)
    mask = _parse_mask(a, n)
    b = np.arange(1 << n, dtype=np.uint64)
    parity = np.bitwise_count(b & np.uint64(mask)) & 1
    signs = 1.0 - 2.0 * parity.astype(np.float64)
    return float(signs @ freqs)


def apply_readout(dist: OutcomeDistribution, q: float) -> OutcomeDistribution:
    """Convolve an independent per-bit flip channel (flip probability q)
    into the outcome distribution."""
    if not 0.0 <= q <= 0.5:
        raise ValueError("readout flip probability must lie in [0, 0.5]")
    n = dist.n
    p = dist.probs.reshape((2,) * n)
    for axis in range(n):
        p = (1.0 - q) * p + q * np.flip(p, axis=axis)
    return OutcomeDistribution(setting=dist.setting, probs=p.reshape(-1))


# ---------------------------------------------------------------------------
# Noise channels on states
# ---------------------------------------------------------------------------

def apply_depolarizing(rho: np.ndarray, eps: float) -> np.ndarray:
    """(1 - eps) rho + (eps/d) I."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("depolarizing strength must lie in [0, 1]")
    rho = np.asarray(rho, dtype=np.complex128)
    d = rho.shape[0]
    return (1.0 - eps) * rho + (eps / d) * np.eye(d, dtype=np.complex128)


def apply_coherent(rho: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Unitary conjugation C rho C^dagger."""
    rho = np.asarray(rho, dtype=np.complex128)
    C = np.asarray(C, dtype=np.complex128)
    if C.shape != rho.shape:
        raise ValueError("dimension mismatch between state and unitary")
    if np.max(np.abs(C.conj().T @ C - np.eye(C.shape[0]))) > 1e-10:
        raise ValueError("C is not unitary within 1e-10")
    out = C @ rho @ C.conj().T
    return 0.5 * (out + out.conj().T)


def overrotation_unitary(n: int, theta: float) -> np.ndarray:
    """State-preparation perturbation: RX(theta) on every qubit."""
    U = np.array([[1.0]], dtype=np.complex128)
    rx = rotation_x(theta)
    for _ in range(n):
        U = np.kron(U, rx)
    return U


def _check_qubit(i: int, n: int) -> int:
    if not 1 <= i <= n:
        raise ValueError(f"qubit index must satisfy 1 <= i <= {n}, got {i}")
    return i


def apply_pauli_flip(rho: np.ndarray, i: int, kind: str) -> np.ndarray:
    """Bit flip (X_i rho X_i) or phase flip (Z_i rho Z_i) on qubit i (1-based)."""
    rho = np.asarray(rho, dtype=np.complex128)
    d = rho.shape[0]
    n = d.bit_length() - 1
    i = _check_qubit(i, n)
    if kind == "bit":
        t = rho.reshape((2,) * (2 * n))
        t = np.flip(np.flip(t, axis=i - 1), axis=n + i - 1)
        return np.ascontiguousarray(t.reshape(d, d))
    if kind == "phase":
        sign = 1.0 - 2.0 * ((np.arange(d) >> (n - i)) & 1)
        return rho * np.outer(sign, sign)
    raise ValueError(f"flip kind must be 'bit' or 'phase', got {kind!r}")


def apply_loss(rho: np.ndarray, i: int) -> np.ndarray:
    """Photon loss on qubit i: trace out the qubit and replace it with I/2."""
    rho = np.asarray(rho, dtype=np.complex128)
    d = rho.shape[0]
    n = d.bit_length() - 1
    i = _check_qubit(i, n)
    t = rho.reshape((2,) * (2 * n))
    # bring qubit i's row and column axes to the front
    perm = [i - 1] + [ax for ax in range(n) if ax != i - 1] \
        + [n + i - 1] + [ax for ax in range(n, 2 * n) if ax != n + i - 1]
    blocks = t.transpose(perm).reshape(2, d // 2, 2, d // 2)
    ptrace = blocks[0, :, 0, :] + blocks[1, :, 1, :]
    out = np.zeros_like(blocks)
    out[0, :, 0, :] = 0.5 * ptrace
    out[1, :, 1, :] = 0.5 * ptrace
    inv = np.argsort(perm)
    return np.ascontiguousarray(
        out.reshape((2,) * (2 * n)).transpose(inv).reshape(d, d))


@dataclass(frozen=True)
class PhotonicNoise:
    """Convex mixture weights: identity p0 plus per-qubit (bit, phase, loss)."""

    p0: float
    triples: tuple  # n entries (p_i, q_i, r_i)

    def __post_init__(self):
        trip = tuple(tuple(float(x) for x in t) for t in self.triples)
        object.__setattr__(self, "triples", trip)
        weights = [self.p0] + [x for t in trip for x in t]
        if any(len(t) != 3 for t in trip):
            raise ValueError("each qubit needs a (bit, phase, loss) triple")
        if any(w < 0 for w in weights):
            raise ValueError("channel weights must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-10:
            raise ValueError("channel weights must sum to 1 within 1e-10")

    @property
    def n(self) -> int:
        return len(self.triples)


def apply_composite(rho: np.ndarray, model: PhotonicNoise) -> np.ndarray:
    """p0 rho + sum_i (p_i bitflip_i + q_i phaseflip_i + r_i loss_i)."""
    rho = np.asarray(rho, dtype=np.complex128)
    n = rho.shape[0].bit_length() - 1
    if model.n != n:
        raise ValueError("noise model qubit count does not match the state")
    out = model.p0 * rho
    for i, (p, q, r) in enumerate(model.triples, start=1):
        if p:
            out = out + p * apply_pauli_flip(rho, i, "bit")
        if q:
            out = out + q * apply_pauli_flip(rho, i, "phase")
        if r:
            out = out + r * apply_loss(rho, i)
    return out


@dataclass(frozen=True)
class NoiseModel:
    """Channel-level noise configuration.

    ``depolarizing_eps`` and ``photonic`` act on the prepared state;
    ``coherent_theta`` perturbs state preparation and every X/Y basis change
    at measurement; ``readout_q`` flips each measured bit independently.
    """

    depolarizing_eps: float = 0.0
    coherent_theta: float = 0.0
    readout_q: float = 0.0
    photonic: PhotonicNoise | None = None

    def __post_init__(self):
        if not 0.0 <= self.depolarizing_eps <= 1.0:
            raise ValueError("depolarizing_eps must lie in [0, 1]")
        if not 0.0 <= self.readout_q <= 0.5:
            raise ValueError("readout_q must lie in [0, 0.5]")

    @property
    def measurement_side(self) -> bool:
        return self.coherent_theta != 0.0 or self.readout_q != 0.0


# ---------------------------------------------------------------------------
# Plan-driven data synthesis
# ---------------------------------------------------------------------------

def _setting_seed(seed, index: int) -> np.random.Generator:
    if isinstance(seed, (tuple, list)):
        entropy = tuple(int(s) for s in seed) + (index,)
    else:
        entropy = (int(seed), index)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def build_measurements(rho: np.ndarray, plan: MeasurementPlan,
                       shots: int | None, noise: NoiseModel | None = None,
                       seed=0, normalized: bool = False,
                       return_record: bool = False):
    """Simulate a measurement plan on a state and assemble (SensingMap, y).

    Observable mode draws one binomial per Pauli (no measurement-side noise
    is representable there). Setting mode simulates each setting's outcome
    distribution, applies measurement-side coherent/readout corruption from
    ``noise``, draws one multinomial of ``shots`` outcomes shared by all of
    the setting's observables, and extracts each covered Pauli by parity
    marginalization; observables covered by several settings are averaged
    with equal weight. ``shots=None`` means infinite shots (exact values).

    ``y`` is aligned with the returned map's Pauli order and holds raw
    sample means (no sqrt(d/M) rescaling). Set ``return_record=True`` to
    also get the ShotRecord.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    d = 1 << plan.n
    if rho.shape != (d, d):
        raise ValueError("state dimension does not match the plan")
    if shots is not None and shots < 1:
        raise ValueError("shot count must be at least 1 (or None for infinite)")

    if plan.mode == "observables":
        if noise is not None and noise.measurement_side:
            raise ValueError("coherent/readout noise needs a settings-mode plan")
        paulis = [build_pauli(w) for w in plan.words]
        smap = build_sensing_map(paulis, normalized=normalized)
        rng = _setting_seed(seed, 0)
        if shots is None:
            y = exact_expectations(rho, smap)
        else:
            y = np.array([sample_shots_observable(rho, P, shots, rng)
                          for P in paulis])
        record = ShotRecord(n=plan.n, mode="observables", shots=shots,
                            words=tuple(plan.words), values=y.copy(), counts=None)
        return (smap, y, record) if return_record else (smap, y)

    # settings mode
    theta = noise.coherent_theta if noise is not None else 0.0
    q = noise.readout_q if noise is not None else 0.0
    estimates: dict[str, list] = {}
    order: list[str] = []
    counts_per_setting = []
    for k, setting in enumerate(plan.words):
        dist = _distribution(rho, setting, theta)
        if q:
            dist = apply_readout(dist, q)
        if shots is None:
            freqs = dist.probs
            counts_per_setting.append(None)
        else:
            rng = _setting_seed(seed, k)
            p = dist.probs / dist.probs.sum()
            counts = rng.multinomial(shots, p)
            freqs = counts / shots
            counts_per_setting.append(counts)
        for mask, word in enumerate(covered_words(setting)):
            est = estimate_from_setting(freqs, mask)
            if word not in estimates:
                estimates[word] = []
                order.append(word)
            estimates[word].append(est)
    y = np.array([np.mean(estimates[w]) for w in order])
    smap = build_sensing_map([build_pauli(w) for w in order],
                             normalized=normalized)
    record = None
    if return_record:
        if shots is None:
            record = ShotRecord(n=plan.n, mode="observables", shots=None,
                                words=tuple(order), values=y.copy(), counts=None)
        else:
            record = ShotRecord(n=plan.n, mode="settings", shots=shots,
                                words=tuple(plan.words), values=None,
                                counts=tuple(counts_per_setting))
    return (smap, y, record) if return_record else (smap, y)


# ---------------------------------------------------------------------------
# SHOTS v1 text format
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShotRecord:
    """Measured data: per-observable sample means, or per-setting counts."""

    n: int
    mode: str              # "observables" | "settings"
    shots: int | None      # None = infinite
    words: tuple
    values: np.ndarray | None = None   # observables mode: y_k per word
    counts: tuple | None = None        # settings mode: outcome counts per word

    def __post_init__(self):
        if self.mode == "observables":
            if self.values is None or len(self.values) != len(self.words):
                raise ValueError("observable record needs one value per word")
            if np.max(np.abs(np.asarray(self.values))) > 1.0 + 1e-12:
                raise ValueError("sample means must lie in [-1, 1]")
        elif self.mode == "settings":
            if self.shots is None:
                raise ValueError("settings records require a finite shot count")
            if self.counts is None or len(self.counts) != len(self.words):
                raise ValueError("settings record needs counts per word")
            for c in self.counts:
                c = np.asarray(c)
                if c.min() < 0 or c.sum() != self.shots:
                    raise ValueError("counts must be nonnegative and sum to N")
        else:
            raise ValueError(f"unknown record mode {self.mode!r}")


def write_shots(path, record: ShotRecord) -> None:
    N = "inf" if record.shots is None else str(record.shots)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"SHOTS v1 n={record.n} N={N} mode={record.mode}\n")
        if record.mode == "observables":
            for w, v in zip(record.words, record.values):
                fh.write(f"{w} {v:.17g}\n")
        else:
            for w, counts in zip(record.words, record.counts):
                parts = [f"{b:0{record.n}b}:{int(c)}"
                         for b, c in enumerate(counts) if c]
                fh.write(w + " " + " ".join(parts) + "\n")


def read_shots(path) -> ShotRecord:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[:2] != ["SHOTS", "v1"]:
            raise ValueError("not a SHOTS v1 file")
        n = int(header[2][2:])
        shots = None if header[3][2:] == "inf" else int(header[3][2:])
        mode = header[4][5:]
        words, values, counts = [], [], []
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            words.append(parts[0])
            if mode == "observables":
                values.append(float(parts[1]))
            else:
                c = np.zeros(1 << n, dtype=np.int64)
                for item in parts[1:]:
                    bits, _, cnt = item.partition(":")
                    c[int(bits, 2)] = int(cnt)
                counts.append(c)
    if mode == "observables":
        return ShotRecord(n=n, mode=mode, shots=shots, words=tuple(words),
                          values=np.array(values), counts=None)
    return ShotRecord(n=n, mode=mode, shots=shots, words=tuple(words),
                      values=None, counts=tuple(counts))
