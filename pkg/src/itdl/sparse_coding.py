"""Pursuit algorithms, K-SVD initialization and least-squares coding.

Dictionaries are (n, K) matrices of unit-norm atoms. OMP/SOMP break score
ties toward the lowest atom index so runs are reproducible, and every
least-squares solve goes through the SVD pseudoinverse with a relative
cutoff so near-duplicate atoms cannot blow up the coefficients.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

SVD_CUTOFF = 1e-10


@dataclass(frozen=True)
class Dictionary:
    """Matrix of unit-l2-norm atoms, one per column."""

    atoms: np.ndarray

    def __post_init__(self):
        atoms = np.ascontiguousarray(self.atoms, dtype=np.float64)
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise ValueError("atoms must be a non-empty 2-d matrix")
        norms = np.linalg.norm(atoms, axis=0)
        if np.max(np.abs(norms - 1.0)) > 1e-10:
            raise ValueError("every atom must have unit l2 norm")

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def K(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class SparseCodes:
    """Coefficient matrix, one column per signal.

    sparsity is the per-column nonzero budget T; 0 marks dense codes
    (least-squares coding on an already-selected support).
    """

    coeffs: np.ndarray
    sparsity: int = 0

    def __post_init__(self):
        coeffs = np.ascontiguousarray(self.coeffs, dtype=np.float64)
        object.__setattr__(self, "coeffs", coeffs)
        if self.sparsity > 0:
            nnz = (coeffs != 0).sum(axis=0)
            if (nnz > self.sparsity).any():
                raise ValueError("a column exceeds the sparsity budget")


@dataclass(frozen=True)
class Selection:
    """Ordered, distinct atom indices in greedy-selection order."""

    indices: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if len(set(idx)) != len(idx):
            raise ValueError("selection indices must be distinct")
        if any(i < 0 for i in idx):
            raise ValueError("selection indices must be non-negative")

    def __len__(self) -> int:
        return len(self.indices)


def pinv(mat: np.ndarray) -> np.ndarray:
    """SVD pseudoinverse; singular values below 1e-10 x max are dropped."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError("pinv expects a matrix")
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((mat.shape[1], mat.shape[0]))
    inv_s = np.where(s >= SVD_CUTOFF * s[0], 1.0 / np.where(s == 0.0, 1.0, s), 0.0)
    return (vt.T * inv_s) @ u.T


def omp(dictionary: Dictionary, y: np.ndarray, T: int) -> np.ndarray:
    """Orthogonal matching pursuit for one signal.

    Greedy argmax of |d^T r| with lowest-index tie-break, full
    least-squares refit after every pick. Returns a length-K coefficient
    vector with at most T nonzeros; an all-zero signal codes to zeros.
    """
    atoms = dictionary.atoms
    n, K = atoms.shape
    if not 1 <= T <= min(n, K):
        raise ValueError("need 1 <= T <= min(n, K)")
    y = np.asarray(y, dtype=np.float64).reshape(n)
    x = np.zeros(K)
    ynorm = np.linalg.norm(y)
    if ynorm == 0.0:
        return x
    resid = y.copy()
    chosen: list[int] = []
    available = np.ones(K, dtype=bool)
    for _ in range(T):
        scores = np.abs(atoms.T @ resid)
        scores[~available] = -1.0
        best = int(np.argmax(scores))
        if scores[best] <= 1e-12 * ynorm:
            break
        chosen.append(best)
        available[best] = False
        sub = atoms[:, chosen]
        coef = pinv(sub) @ y
        resid = y - sub @ coef
        if np.linalg.norm(resid) <= 1e-12 * ynorm:
            break
    if chosen:
        x[chosen] = coef
    return x


def omp_codes(dictionary: Dictionary, signals: np.ndarray, T: int) -> SparseCodes:
    """Column-wise OMP over a signal matrix."""
    signals = np.asarray(signals, dtype=np.float64)
    coeffs = np.empty((dictionary.K, signals.shape[1]))
    for i in range(signals.shape[1]):
        coeffs[:, i] = omp(dictionary, signals[:, i], T)
    return SparseCodes(coeffs=coeffs, sparsity=T)


def somp(dictionary: Dictionary, signals: np.ndarray, T: int) -> tuple[Selection, SparseCodes]:
    """Simultaneous OMP: one shared support of size T for all signals.

    Each round scores atoms by the summed absolute correlation with all
    current residuals, then refits every signal on the shared support.
    """
    atoms = dictionary.atoms
    n, K = atoms.shape
    if not 1 <= T <= min(n, K):
        raise ValueError("need 1 <= T <= min(n, K)")
    Y = np.asarray(signals, dtype=np.float64)
    resid = Y.copy()
    scale = np.linalg.norm(Y)
    chosen: list[int] = []
    available = np.ones(K, dtype=bool)
    coef = np.zeros((0, Y.shape[1]))
    for _ in range(T):
        scores = np.abs(atoms.T @ resid).sum(axis=1)
        scores[~available] = -1.0
        best = int(np.argmax(scores))
        if scores[best] <= 1e-12 * max(scale, 1.0):
            break
        chosen.append(best)
        available[best] = False
        sub = atoms[:, chosen]
        coef = pinv(sub) @ Y
        resid = Y - sub @ coef
    return Selection(indices=tuple(chosen)), SparseCodes(coeffs=coef, sparsity=0)


def code_ls(dictionary: Dictionary, selection: Selection, signals: np.ndarray) -> SparseCodes:
    """Least-squares coefficients of all signals on the selected atoms."""
    if len(selection) > dictionary.n:
        warnings.warn(
            "selection larger than the signal dimension; coding with the "
            "least-norm pseudoinverse solution",
            stacklevel=2,
        )
    sub = dictionary.atoms[:, list(selection.indices)]
    coeffs = pinv(sub) @ np.asarray(signals, dtype=np.float64)
    return SparseCodes(coeffs=coeffs, sparsity=0)


def ksvd_init(
    signals: np.ndarray,
    K: int,
    T: int,
    iters: int,
    seed: int,
    trace: list | None = None,
) -> Dictionary:
    """K-SVD dictionary initialization.

    Alternates OMP coding with atom-by-atom rank-1 updates (dominant
    singular pair of the deflated residual). Atoms left unused after a
    sweep are replaced by the currently worst-represented signals, each
    renormalized. If ``trace`` is given, the post-sweep objective
    ||Y - DX||_F^2 is appended after every sweep.
    """
    Y = np.asarray(signals, dtype=np.float64)
    n, N = Y.shape
    if K > N:
        raise ValueError("K must not exceed the number of training signals")
    if iters < 1:
        raise ValueError("iters must be at least 1")
    rng = np.random.default_rng(seed)
    cols = rng.choice(N, size=K, replace=False)
    atoms = Y[:, cols].copy()
    norms = np.linalg.norm(atoms, axis=0)
    for k in range(K):
        if norms[k] <= 1e-12:
            atoms[:, k] = rng.standard_normal(n)
            norms[k] = np.linalg.norm(atoms[:, k])
    atoms /= norms

    for _ in range(iters):
        d = Dictionary(atoms=atoms / np.linalg.norm(atoms, axis=0))
        X = omp_codes(d, Y, T).coeffs
        atoms = d.atoms.copy()
        for k in range(K):
            support = np.flatnonzero(X[k, :] != 0.0)
            if support.size == 0:
                continue
            E = Y[:, support] - atoms @ X[:, support] + np.outer(atoms[:, k], X[k, support])
            u, s, vt = np.linalg.svd(E, full_matrices=False)
            atoms[:, k] = u[:, 0]
            X[k, support] = s[0] * vt[0, :]
        unused = [k for k in range(K) if not (X[k, :] != 0.0).any()]
        if unused:
            resid_norms = np.linalg.norm(Y - atoms @ X, axis=0)
            worst = np.argsort(-resid_norms)
            for slot, k in enumerate(unused):
                col = Y[:, worst[slot % N]]
                atoms[:, k] = col / np.linalg.norm(col)
        if trace is not None:
            trace.append(float(np.sum((Y - atoms @ X) ** 2)))
    return Dictionary(atoms=atoms / np.linalg.norm(atoms, axis=0))


def rmse(Y: np.ndarray, Y_hat: np.ndarray) -> float:
    """Frobenius error normalized by sqrt(n*N)."""
    Y = np.asarray(Y, dtype=np.float64)
    return float(np.linalg.norm(Y - Y_hat) / np.sqrt(Y.size))


# ---------------------------------------------------------------------------
# persistence: binary dictionary format and selection CSV
# ---------------------------------------------------------------------------

_MAGIC = b"ITDL"
_VERSION = 1


def save_matrix(mat: np.ndarray, path) -> None:
    """Write a matrix in the binary format: magic, version, n, K, column-major float64."""
    mat = np.asarray(mat, dtype=np.float64)
    n, K = mat.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<B", _VERSION))
        fh.write(struct.pack("<II", n, K))
        fh.write(np.asfortranarray(mat).tobytes(order="F"))


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic bytes {magic!r}")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        n, K = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(8 * n * K), dtype="<f8")
        if data.size != n * K:
            raise ValueError(f"{path}: truncated matrix payload")
    return np.ascontiguousarray(data.reshape((n, K), order="F"))


def save_dictionary(d: Dictionary, path) -> None:
    save_matrix(d.atoms, path)


def load_dictionary(path) -> Dictionary:
    return Dictionary(atoms=load_matrix(path))


def save_selection(selection: Selection, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(str(i) for i in selection.indices) + "\n")


def load_selection(path) -> Selection:
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read().strip()
    if not text:
        raise ValueError(f"{path}: empty selection file")
    return Selection(indices=tuple(int(tok) for tok in text.replace("\n", ",").split(",") if tok))
