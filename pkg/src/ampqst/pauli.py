"""Pauli observables, measurement settings, and the sparse sensing map.

A Pauli string is a word over {I, X, Y, Z}; its matrix is the Kronecker
product of the letters, leftmost letter acting on the most significant bit.
Each string has exactly ``d`` nonzero entries, one per row: X and Y flip the
qubit's bit between row and column index, I and Z preserve it, and the entry
value is ``i**y_count`` times a sign picked up from Y and Z letters.

The sensing map for an ordered list of ``M`` Pauli strings sends a Hermitian
``X`` to the vector of (optionally rescaled) expectation values
``scale * Tr[P_k X]``. Its matrix has rows ``scale * vec(P_k)^dagger``
(row-major vectorization) and factors as ``D @ R`` where ``R`` is an integer
sparse matrix with rows ``i**y_count * vec(P_k)^dagger`` (entries in
{-1, 0, +1}) and ``D`` is diagonal with ``D_kk = scale * (-i)**y_count``.
``R`` stores M*d signed bytes; nothing of size M*d^2 is ever materialized.

PauliString and SensingMap are immutable after construction; applying a
shared map from several threads is safe. Sampling functions take caller-owned
seeds or Generators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .states import as_rng

__all__ = [
    "LETTERS",
    "PauliString",
    "SensingMap",
    "MeasurementPlan",
    "build_pauli",
    "pauli_word_from_index",
    "pauli_index_from_word",
    "pauli_expectation",
    "build_sensing_map",
    "apply_sensing",
    "apply_adjoint",
    "sample_observables",
    "check_setting",
    "observables_of_setting",
    "setting_word_from_index",
    "covered_word",
    "covered_words",
    "sample_settings_until",
    "write_plan",
    "read_plan",
]

LETTERS = "IXYZ"

_IMAG_RESIDUE_ATOL = 1e-10


@dataclass(frozen=True, eq=False)
class PauliString:
    """One n-qubit Pauli observable with its sparse vectorized row.

    ``cols[j]`` is the position of row j's single nonzero within the
    row-major vectorization (index ``j*d + c`` for matrix column c), and
    ``signs[j]`` is the integer value ``i**y_count * conj(P[j, c])``.
    """

    letters: str
    y_count: int
    cols: np.ndarray
    signs: np.ndarray

    def __eq__(self, other):
        return isinstance(other, PauliString) and self.letters == other.letters

    def __hash__(self):
        return hash(self.letters)

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def dim(self) -> int:
        return 1 << self.n

    @property
    def values(self) -> np.ndarray:
        """Complex values of ``vec(P)^dagger`` at ``cols`` (modulus 1)."""
        return (-1j) ** (self.y_count % 4) * self.signs.astype(np.complex128)

    @property
    def sparse_row(self):
        """(column indices, complex values) of the d nonzeros of vec(P)^dagger."""
        return self.cols, self.values

    def dense(self) -> np.ndarray:
        """Materialize the d x d Pauli matrix (small n only)."""
        d = self.dim
        P = np.zeros((d, d), dtype=np.complex128)
        P.reshape(-1)[self.cols] = self.values.conj()
        return P


def build_pauli(word: str) -> PauliString:
    """Build a PauliString from its letter word without Kronecker products.

    Runs in O(n d): for each letter, X/Y flip the qubit's bit between the row
    and column index while Y and Z contribute the phase.
    """
    word = str(word).upper()
    if not word or any(ch not in LETTERS for ch in word):
        raise ValueError(f"invalid Pauli word {word!r}")
    n = len(word)
    d = 1 << n
    rows = np.arange(d, dtype=np.int64)
    cols = rows.copy()
    signs = np.ones(d, dtype=np.int8)
    y_count = 0
    for q, letter in enumerate(word):
        shift = n - 1 - q
        if letter == "I":
            continue
        bit = ((rows >> shift) & 1).astype(np.int8)
        if letter == "X":
            cols ^= 1 << shift
        elif letter == "Y":
            y_count += 1
            cols ^= 1 << shift
            signs *= 2 * bit - 1
        else:  # Z
            signs *= 1 - 2 * bit
    return PauliString(letters=word, y_count=y_count,
                       cols=rows * d + cols, signs=signs)


def pauli_word_from_index(index: int, n: int) -> str:
    """Word for the base-4 digit encoding 0=I, 1=X, 2=Y, 3=Z, leftmost first."""
    if not 0 <= index < 4 ** n:
        raise ValueError("pauli index out of range")
    out = []
    for q in range(n):
        out.append(LETTERS[(index >> (2 * (n - 1 - q))) & 3])
    return "".join(out)


def pauli_index_from_word(word: str) -> int:
    idx = 0
    for ch in word:
        idx = (idx << 2) | LETTERS.index(ch)
    return idx


def pauli_expectation(P: PauliString, rho: np.ndarray) -> float:
    """Tr[P rho] for Hermitian rho, via the sparse row (O(d))."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (P.dim, P.dim):
        raise ValueError("dimension mismatch between Pauli and matrix")
    val = np.dot(P.values, rho.reshape(-1)[P.cols])
    if abs(val.imag) >= _IMAG_RESIDUE_ATOL:
        raise ValueError("expectation has a non-negligible imaginary part; "
                         "input is not Hermitian")
    return float(val.real)


# ---------------------------------------------------------------------------
# Sensing map
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SensingMap:
    """Ordered Pauli observables with the sparse D*R factorization.

    ``R`` is an M x d^2 CSR matrix of signed bytes and ``D`` the diagonal
    complex factor (scale included), so row k of the map's matrix is
    ``D[k] * R[k]``. The float mirror of R is kept for fast matvecs and
    shares R's index arrays.
    """

    paulis: tuple
    n: int
    d: int
    M: int
    normalized: bool
    scale: float
    D: np.ndarray
    R: sp.csr_matrix
    _Rf: sp.csr_matrix = field(repr=False)


def build_sensing_map(paulis, normalized: bool = True) -> SensingMap:
    """Assemble a SensingMap from distinct PauliStrings (or words)."""
    plist = tuple(build_pauli(p) if isinstance(p, str) else p for p in paulis)
    if not plist:
        raise ValueError("need at least one Pauli observable")
    n = plist[0].n
    if any(p.n != n for p in plist):
        raise ValueError("all Pauli strings must have the same length")
    words = [p.letters for p in plist]
    if len(set(words)) != len(words):
        raise ValueError("duplicate Pauli observables in sensing map")
    d = 1 << n
    M = len(plist)
    scale = float(np.sqrt(d / M)) if normalized else 1.0
    y_counts = np.array([p.y_count for p in plist])
    D = scale * (-1j) ** (y_counts % 4)
    data = np.concatenate([p.signs for p in plist])
    indices = np.concatenate([p.cols for p in plist])
    indptr = np.arange(0, (M + 1) * d, d, dtype=np.int64)
    R = sp.csr_matrix((data, indices, indptr), shape=(M, d * d))
    Rf = sp.csr_matrix((data.astype(np.float64), R.indices, R.indptr),
                       shape=(M, d * d))
    return SensingMap(paulis=plist, n=n, d=d, M=M, normalized=normalized,
                      scale=scale, D=D, R=R, _Rf=Rf)


def apply_sensing(smap: SensingMap, X: np.ndarray) -> np.ndarray:
    """Apply the map: component k is ``scale * Tr[P_k X]``.

    The tiny imaginary residue of a Hermitian input is checked against 1e-10
    and dropped.
    """
    X = np.asarray(X, dtype=np.complex128)
    if X.shape != (smap.d, smap.d):
        raise ValueError("dimension mismatch between map and matrix")
    x = np.ascontiguousarray(X).reshape(-1)
    w = smap._Rf @ x.real + 1j * (smap._Rf @ x.imag)
    y = smap.D * w
    if np.max(np.abs(y.imag)) >= _IMAG_RESIDUE_ATOL:
        raise ValueError("sensing output has a non-negligible imaginary part; "
                         "input is not Hermitian")
    return np.ascontiguousarray(y.real)


def apply_adjoint(smap: SensingMap, y: np.ndarray) -> np.ndarray:
    """Adjoint map ``scale * sum_k y_k P_k``, exactly Hermitian."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (smap.M,):
        raise ValueError("dimension mismatch between map and data vector")
    w = smap.D.conj() * y
    v = smap._Rf.T @ w.real + 1j * (smap._Rf.T @ w.imag)
    X = v.reshape(smap.d, smap.d)
    return 0.5 * (X + X.conj().T)


def sample_observables(n: int, M: int, seed) -> list:
    """Sample M distinct Pauli strings uniformly (without replacement)."""
    d2 = 4 ** n
    if not 1 <= M <= d2:
        raise ValueError(f"need 1 <= M <= {d2}, got {M}")
    rng = as_rng(seed)
    idx = rng.choice(d2, size=M, replace=False)
    return [build_pauli(pauli_word_from_index(int(i), n)) for i in idx]


# ---------------------------------------------------------------------------
# Measurement settings
# ---------------------------------------------------------------------------

def check_setting(word: str) -> str:
    """Validate a measurement setting: a nonempty word over {X, Y, Z}."""
    word = str(word).upper()
    if not word or any(ch not in "XYZ" for ch in word):
        raise ValueError(f"invalid measurement setting {word!r}")
    return word


def setting_word_from_index(index: int, n: int) -> str:
    """Word for the base-3 digit encoding 0=X, 1=Y, 2=Z, leftmost first."""
    out = []
    for _ in range(n):
        out.append("XYZ"[index % 3])
        index //= 3
    return "".join(reversed(out))


def covered_word(setting: str, mask: int) -> str:
    """Pauli word obtained from a setting by keeping letters where the mask
    bit is 1 (leftmost letter is the most significant bit) and writing I
    elsewhere."""
    n = len(setting)
    return "".join(setting[j] if (mask >> (n - 1 - j)) & 1 else "I"
                   for j in range(n))


def covered_words(setting: str) -> list:
    """All 2^n Pauli words estimable from one setting, mask order 0, 1, ..."""
    setting = check_setting(setting)
    return [covered_word(setting, a) for a in range(1 << len(setting))]


def observables_of_setting(setting: str) -> set:
    """The set of 2^n PauliStrings whose expectations the setting yields."""
    return {build_pauli(w) for w in covered_words(setting)}


def sample_settings_until(n: int, target_M: int, seed):
    """Draw settings uniformly without replacement until the union of their
    covered observables reaches ``target_M``.

    Returns ``(settings, observables, T)`` where ``settings`` is the ordered
    list of drawn setting words, ``observables`` the set of covered Pauli
    words, and ``T = len(settings)``. Words (not PauliString objects) keep
    the counting experiment cheap for large n.
    """
    d2 = 4 ** n
    if not 1 <= target_M <= d2:
        raise ValueError(f"need 1 <= target_M <= {d2}, got {target_M}")
    rng = as_rng(seed)
    order = rng.permutation(3 ** n)
    masks = np.arange(1 << n, dtype=np.int64)
    bits = (masks[:, None] >> (n - 1 - np.arange(n))) & 1     # (2^n, n)
    powers4 = 4 ** np.arange(n - 1, -1, -1, dtype=np.int64)
    covered = np.zeros(d2, dtype=bool)
    total = 0
    settings = []
    for s_idx in order:
        word = setting_word_from_index(int(s_idx), n)
        digits = np.array([LETTERS.index(ch) for ch in word], dtype=np.int64)
        codes = bits @ (digits * powers4)
        total += int(np.count_nonzero(~covered[codes]))
        covered[codes] = True
        settings.append(word)
        if total >= target_M:
            break
    observables = {pauli_word_from_index(int(i), n)
                   for i in np.flatnonzero(covered)}
    return settings, observables, len(settings)


# ---------------------------------------------------------------------------
# PLAN v1 text format
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementPlan:
    """An ordered measurement plan: Pauli words or setting words."""

    n: int
    mode: str  # "observables" | "settings"
    words: tuple

    def __post_init__(self):
        if self.mode not in ("observables", "settings"):
            raise ValueError(f"unknown plan mode {self.mode!r}")
        if not self.words:
            raise ValueError("empty measurement plan")
        alphabet = LETTERS if self.mode == "observables" else "XYZ"
        for w in self.words:
            if len(w) != self.n or any(ch not in alphabet for ch in w):
                raise ValueError(f"invalid {self.mode} word {w!r}")
        if len(set(self.words)) != len(self.words):
            raise ValueError("duplicate words in measurement plan")


def write_plan(path, plan: MeasurementPlan) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"PLAN v1 n={plan.n} mode={plan.mode}\n")
        for w in plan.words:
            fh.write(w + "\n")


def read_plan(path) -> MeasurementPlan:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[:2] != ["PLAN", "v1"] \
                or not header[2].startswith("n=") or not header[3].startswith("mode="):
            raise ValueError("not a PLAN v1 file")
        n = int(header[2][2:])
        mode = header[3][5:]
        words = tuple(line.strip() for line in fh if line.strip())
    return MeasurementPlan(n=n, mode=mode, words=words)
