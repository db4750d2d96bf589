"""Neumann-Laplacian eigenbasis and diagonal operator calculus on (0,1)^d.

The Laplacian with zero-flux boundary conditions on the unit interval/square
diagonalizes in the cosine basis

    e_j(x) = sqrt(2) cos(j pi x),   lambda_j = j^2 pi^2        (d = 1)

with tensor products in d = 2.  Every field is stored as a distinguished
mean scalar (coefficient of the constant mode e_0 = 1) plus the mean-zero
mode coefficients, so operator powers of A never divide by lambda_0 = 0.

Collocation between coefficients and point values uses midpoint nodes
x_i = (i + 1/2)/n, where the discrete cosine quadrature is exact for every
cosine polynomial of degree < 2n.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisSpec",
    "SpectralField",
    "GridBuffer",
    "CollocationTransform",
    "eigenvalue",
    "eigenfunction_eval",
    "semigroup_factors",
    "apply_semigroup",
    "phi_factors",
    "apply_phi",
    "project",
    "projection_mask",
    "to_grid",
    "to_spectral",
    "min_dealias_grid",
    "default_dealias_grid",
    "save_field",
    "load_field",
]


@functools.lru_cache(maxsize=None)
def _mode_numbers(dim: int, N: int) -> np.ndarray:
    if dim == 1:
        modes = np.arange(1, N + 1, dtype=np.int64)[:, None]
    else:
        k1, k2 = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
        modes = np.stack([k1.ravel(), k2.ravel()], axis=1)[1:].astype(np.int64)
    modes.flags.writeable = False
    return modes


@functools.lru_cache(maxsize=None)
def _eigenvalues(dim: int, N: int) -> np.ndarray:
    modes = _mode_numbers(dim, N)
    lam = np.pi**2 * (modes.astype(float) ** 2).sum(axis=1)
    lam.flags.writeable = False
    return lam


@dataclass(frozen=True)
class BasisSpec:
    """Truncation of the Neumann cosine eigenbasis.

    ``N`` counts modes per dimension.  Mean-zero modes are j = 1..N in d = 1
    and the row-major multi-indices (k1, k2), 0 <= ki <= N, (0,0) excluded,
    in d = 2.
    """

    dim: int
    N: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")

    @property
    def n_modes(self) -> int:
        return self.N if self.dim == 1 else (self.N + 1) ** 2 - 1

    def mode_numbers(self) -> np.ndarray:
        """Integer mode indices, shape (n_modes, dim)."""
        return _mode_numbers(self.dim, self.N)

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of A for every mean-zero mode, shape (n_modes,)."""
        return _eigenvalues(self.dim, self.N)

    def flat_index(self, k) -> int:
        """Position of mode ``k`` (int in d=1, pair in d=2) in the flat layout."""
        if self.dim == 1:
            j = int(k)
            if not 1 <= j <= self.N:
                raise IndexError(f"mode {j} outside 1..{self.N}")
            return j - 1
        k1, k2 = (int(k[0]), int(k[1]))
        if not (0 <= k1 <= self.N and 0 <= k2 <= self.N) or (k1 == 0 and k2 == 0):
            raise IndexError(f"mode {(k1, k2)} invalid for N={self.N}")
        return k1 * (self.N + 1) + k2 - 1


def eigenvalue(k, basis: BasisSpec) -> float:
    """Eigenvalue of A for the mean-zero mode ``k``: pi^2 |k|^2."""
    return float(basis.eigenvalues()[basis.flat_index(k)])


def eigenfunction_eval(k, x, basis: BasisSpec):
    """Evaluate the eigenfunction of mode ``k`` at point(s) ``x``.

    A zero index component contributes the constant factor 1, so every
    returned eigenfunction has unit L2 norm.
    """
    basis.flat_index(k)  # index validity
    if basis.dim == 1:
        return np.sqrt(2.0) * np.cos(int(k) * np.pi * np.asarray(x, dtype=float))
    x = np.asarray(x, dtype=float)
    out = 1.0
    for ki, xi in zip((int(k[0]), int(k[1])), (x[..., 0], x[..., 1])):
        if ki > 0:
            out = out * (np.sqrt(2.0) * np.cos(ki * np.pi * xi))
    return out


@dataclass(frozen=True)
class SpectralField:
    """Mean scalar plus mean-zero mode coefficients; treated as immutable."""

    basis: BasisSpec
    mean: float
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.basis.n_modes,):
            raise ValueError(
                f"coeffs shape {c.shape} does not match {self.basis.n_modes} modes"
            )
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "mean", float(self.mean))

    @classmethod
    def zero(cls, basis: BasisSpec) -> "SpectralField":
        return cls(basis, 0.0, np.zeros(basis.n_modes))

    @classmethod
    def from_modes(cls, basis: BasisSpec, amplitudes: dict, mean: float = 0.0):
        c = np.zeros(basis.n_modes)
        for k, a in amplitudes.items():
            c[basis.flat_index(k)] = a
        return cls(basis, mean, c)

    def norm(self, include_mean: bool = True) -> float:
        """L2(D) norm via Parseval (coefficient l2 norm)."""
        s = float(np.dot(self.coeffs, self.coeffs))
        if include_mean:
            s += self.mean**2
        return float(np.sqrt(s))


@dataclass(frozen=True)
class GridBuffer:
    """Point values at the midpoint collocation nodes."""

    basis: BasisSpec
    n_grid: int
    values: np.ndarray


def semigroup_factors(basis: BasisSpec, t: float) -> np.ndarray:
    """Per-mode factors exp(-t lambda^2) of E(t) = e^{-t A^2}."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    lam = basis.eigenvalues()
    return np.exp(-t * lam * lam)


def apply_semigroup(v: SpectralField, t: float) -> SpectralField:
    """Apply E(t); the mean component is invariant."""
    return SpectralField(v.basis, v.mean, semigroup_factors(v.basis, t) * v.coeffs)


def phi_factors(basis: BasisSpec, tau: float) -> np.ndarray:
    """Per-mode weights (1 - exp(-tau lambda^2))/lambda of A^{-1}(I - E(tau)).

    This equals the exact integral of E(tau - s) A over a step of length tau,
    the weight multiplying the nonlinearity in the exponential schemes.
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    lam = basis.eigenvalues()
    return -np.expm1(-tau * lam * lam) / lam


def apply_phi(v: SpectralField, tau: float) -> SpectralField:
    """Apply A^{-1}(I - E(tau)) to mean-zero (projected) data."""
    if v.mean != 0.0:
        raise ValueError("apply_phi requires a zero mean component")
    return SpectralField(v.basis, 0.0, phi_factors(v.basis, tau) * v.coeffs)


def project(v: SpectralField, n_keep: int) -> SpectralField:
    """Galerkin truncation: zero every mode with an index component > n_keep."""
    if n_keep > v.basis.N:
        raise ValueError(f"cannot project onto {n_keep} > N={v.basis.N} modes")
    if n_keep < 1:
        raise ValueError(f"n_keep must be >= 1, got {n_keep}")
    keep = (v.basis.mode_numbers() <= n_keep).all(axis=1)
    return SpectralField(v.basis, v.mean, np.where(keep, v.coeffs, 0.0))


def projection_mask(basis: BasisSpec, n_keep: int) -> np.ndarray:
    """Boolean mask of modes retained by the truncation onto level n_keep."""
    if n_keep > basis.N or n_keep < 1:
        raise ValueError(f"n_keep={n_keep} outside 1..{basis.N}")
    return (basis.mode_numbers() <= n_keep).all(axis=1)


def min_dealias_grid(N: int) -> int:
    """Smallest midpoint grid on which cubic products alias exactly to zero.

    Products of modes <= N reach mode 3N; on n midpoints a product mode
    m in (n, 2n) folds to -(2n - m), which stays above N for all m <= 3N
    iff n >= 2N + 1.
    """
    return 2 * N + 1


def default_dealias_grid(N: int) -> int:
    return 2 * (N + 1)


class CollocationTransform:
    """Exact transform between mode coefficients and midpoint-grid values.

    Operates on batched "full" coefficient arrays of shape (b, (N+1)^dim)
    that carry the mean in slot 0 (row-major mode layout in d = 2); grid
    values have shape (b, n) in d = 1 and (b, n, n) in d = 2.  Optional
    ``out``/``tmp`` buffers avoid per-call allocation in stepping loops.
    """

    def __init__(self, basis: BasisSpec, n_grid: int):
        if n_grid < basis.N + 1:
            raise ValueError(
                f"n_grid={n_grid} too small for N={basis.N}; need >= N+1"
            )
        self.basis = basis
        self.n_grid = int(n_grid)
        self.n_full = (basis.N + 1) ** basis.dim
        x = (np.arange(self.n_grid) + 0.5) / self.n_grid
        k = np.arange(basis.N + 1)
        # B[i, k] = phi_k(x_i) with phi_0 = 1, phi_k = sqrt(2) cos(k pi x)
        B = np.cos(np.outer(x, k) * np.pi)
        B[:, 1:] *= np.sqrt(2.0)
        self._B = B
        self._Bt = np.ascontiguousarray(B.T)

    def grid_shape(self, batch: int):
        if self.basis.dim == 1:
            return (batch, self.n_grid)
        return (batch, self.n_grid, self.n_grid)

    def values_full(self, full: np.ndarray, out=None, tmp=None) -> np.ndarray:
        """Point values from a full coefficient array."""
        full = np.atleast_2d(np.asarray(full, dtype=float))
        if self.basis.dim == 1:
            return np.matmul(full, self._Bt, out=out)
        K = self.basis.N + 1
        f3 = full.reshape(-1, K, K)
        tmp = np.matmul(f3, self._Bt, out=tmp)  # (b, K, n)
        return np.matmul(self._B, tmp, out=out)  # (b, n, n)

    def modes_full(self, values: np.ndarray, out=None, tmp=None) -> np.ndarray:
        """Quadrature projection of grid values onto the full mode array."""
        values = np.asarray(values, dtype=float)
        if self.basis.dim == 1:
            values = np.atleast_2d(values)
            out = np.matmul(values, self._B, out=out)
            out *= 1.0 / self.n_grid
            return out
        if values.ndim == 2:
            values = values[None]
        K = self.basis.N + 1
        tmp = np.matmul(self._Bt, values, out=tmp)  # (b, K, n)
        res = np.matmul(tmp, self._B)  # (b, K, K)
        res *= 1.0 / (self.n_grid * self.n_grid)
        flat = res.reshape(values.shape[0], -1)
        if out is not None:
            out[...] = flat
            return out
        return flat

    def values(self, mean: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        full = np.empty((coeffs.shape[0], self.n_full))
        full[:, 0] = mean
        full[:, 1:] = coeffs
        return self.values_full(full)

    def modes(self, values: np.ndarray):
        """Quadrature projection onto (mean, coeffs)."""
        full = self.modes_full(values)
        return full[:, 0], full[:, 1:]


def to_grid(v: SpectralField, n_grid: int) -> GridBuffer:
    """Evaluate the field at the midpoint collocation nodes."""
    tr = CollocationTransform(v.basis, n_grid)
    vals = tr.values(np.array([v.mean]), v.coeffs[None])
    return GridBuffer(v.basis, n_grid, vals[0])


def to_spectral(g: GridBuffer, N: int) -> SpectralField:
    """Quadrature projection of grid values onto the first N modes."""
    if g.n_grid < N + 1:
        raise ValueError(f"n_grid={g.n_grid} too small for N={N}; need >= N+1")
    basis = BasisSpec(g.basis.dim, N)
    tr = CollocationTransform(basis, g.n_grid)
    mean, coeffs = tr.modes(g.values)
    return SpectralField(basis, float(mean[0]), coeffs[0])


def save_field(v: SpectralField, path) -> None:
    """Serialize as CSV: header line ``dim,N``, then mean and coefficients."""
    lines = ["dim,N", f"{v.basis.dim},{v.basis.N}", repr(v.mean)]
    lines.extend(repr(float(c)) for c in v.coeffs)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_field(path) -> SpectralField:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines[0] != "dim,N":
        raise ValueError(f"bad field file header: {lines[0]!r}")
    dim, N = (int(s) for s in lines[1].split(","))
    basis = BasisSpec(dim, N)
    vals = [float(s) for s in lines[2:]]
    if len(vals) != basis.n_modes + 1:
        raise ValueError(
            f"expected {basis.n_modes + 1} values, found {len(vals)}"
        )
    return SpectralField(basis, vals[0], np.array(vals[1:]))
