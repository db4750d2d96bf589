"""Q-Wiener covariance spectra, seedable increment sampling and path refinement.

A path is generated once at the finest resolution; every coarser run consumes
block sums of the same Gaussian increments, so coarse and reference solutions
are driven by one Brownian path.  Generation is chunk-keyed from the seed, so
identical (spec, T, M_fine, seed) always reproduce the same increments no
matter how the path is consumed or parallelized.

Block sums use an aligned pairwise (dyadic tree) reduction: for power-of-two
refinement factors, sums of block sums are bit-identical to sums of the fine
increments, which makes coupled-path telescoping exact in floating point.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .spectral import BasisSpec, SpectralField

__all__ = [
    "NoiseKind",
    "NoiseSpec",
    "NoisePath",
    "RegularityDiagnostic",
    "sample_path",
    "increments_on_grid",
    "aligned_block_sums",
    "path_total",
    "regularity_exponent",
    "derive_sample_seed",
    "save_path",
    "load_path",
]

# Fine increments are generated in independent chunks of this many steps,
# each with its own counter-based stream keyed by (seed, chunk index).
CHUNK_STEPS = 1024


class NoiseKind(enum.Enum):
    WHITE = "white"
    TRACE_CLASS_LOG = "trace_class_log"
    SMOOTH_LOG = "smooth_log"
    CUSTOM = "custom"
    NONCOMMUTING_SINE = "noncommuting_sine"


def _log_decay(ranks: np.ndarray, power: int) -> np.ndarray:
    # q_1 = 0, q_i = 1/(i^power * ln(i)^2) for i >= 2; natural logarithm
    q = np.zeros(ranks.shape)
    tail = ranks >= 2
    r = ranks[tail].astype(float)
    q[tail] = 1.0 / (r**power * np.log(r) ** 2)
    return q


@dataclass(frozen=True)
class NoiseSpec:
    """Covariance spectrum of Q over the mean-zero cosine modes.

    In d = 2 the decay laws are applied to the rank of each mode in the
    enumeration by increasing eigenvalue (ties broken row-major).  A custom
    spectrum is a vectorized callable of that 1-based rank.
    """

    kind: NoiseKind
    basis: BasisSpec
    q_custom: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind is NoiseKind.CUSTOM and self.q_custom is None:
            raise ValueError("CUSTOM noise requires q_custom")
        if self.kind is NoiseKind.NONCOMMUTING_SINE and self.basis.dim != 1:
            raise ValueError("NONCOMMUTING_SINE noise is only defined for dim=1")

    def mode_ranks(self) -> np.ndarray:
        """1-based rank of each basis mode in the increasing-eigenvalue order."""
        lam = self.basis.eigenvalues()
        order = np.argsort(lam, kind="stable")
        ranks = np.empty(lam.size, dtype=np.int64)
        ranks[order] = np.arange(1, lam.size + 1)
        return ranks

    def mode_variances(self) -> np.ndarray:
        """Eigenvalues q_k of Q aligned with the basis mode layout."""
        ranks = self.mode_ranks()
        if self.kind is NoiseKind.WHITE:
            return np.ones(ranks.shape)
        if self.kind is NoiseKind.TRACE_CLASS_LOG:
            return _log_decay(ranks, 1)
        if self.kind is NoiseKind.SMOOTH_LOG:
            return _log_decay(ranks, 5)
        if self.kind is NoiseKind.CUSTOM:
            q = np.asarray(self.q_custom(ranks), dtype=float)
            if q.shape != ranks.shape or (q < 0).any() or not np.isfinite(q).all():
                raise ValueError("custom spectrum must be finite and >= 0 per mode")
            return q
        raise ValueError(
            "NONCOMMUTING_SINE has no diagonal cosine-mode spectrum; "
            "use sine_variances()/sine_projection()"
        )

    def sine_variances(self) -> np.ndarray:
        """Variances c_i of the sine-mode amplitudes (non-commuting kind)."""
        if self.kind is not NoiseKind.NONCOMMUTING_SINE:
            raise ValueError("sine_variances only applies to NONCOMMUTING_SINE")
        return _log_decay(np.arange(1, self.basis.N + 1), 1)

    def sine_projection(self) -> np.ndarray:
        """Matrix of <eta_i, e_k> projecting sine modes onto cosine modes.

        eta_i = sqrt(2) sin(i pi x); the constant (mean) part of eta_i is
        dropped, so projected increments are mean-zero exactly.
        """
        if self.kind is not NoiseKind.NONCOMMUTING_SINE:
            raise ValueError("sine_projection only applies to NONCOMMUTING_SINE")
        n = self.basis.N
        i = np.arange(1, n + 1)[:, None]
        k = np.arange(1, n + 1)[None, :]
        odd = (i + k) % 2  # <eta_i, e_k> vanishes unless i + k is odd
        num = 4.0 * i * odd
        den = np.pi * (i * i - k * k)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(i == k, 0.0, num / den)
        return g


@dataclass(frozen=True)
class NoisePath:
    """Fine-resolution Gaussian increments of the Q-Wiener process on [0, T]."""

    spec: NoiseSpec
    T: float
    M_fine: int
    master_seed: int
    fine_increments: np.ndarray  # (M_fine, n_modes)

    @property
    def tau_fine(self) -> float:
        return self.T / self.M_fine

    def increment_array(self, M_coarse: int) -> np.ndarray:
        """Coarse increments as an (M_coarse, n_modes) array of block sums."""
        if M_coarse < 1 or self.M_fine % M_coarse != 0:
            raise ValueError(
                f"M_coarse={M_coarse} does not divide M_fine={self.M_fine}"
            )
        return aligned_block_sums(self.fine_increments, M_coarse)


def derive_sample_seed(master_seed: int, *indices: int) -> int:
    """Stable per-sample seed derived from the master seed and index path."""
    ss = np.random.SeedSequence(entropy=(int(master_seed),) + tuple(int(i) for i in indices))
    return int(ss.generate_state(1, np.uint64)[0])


def _chunk_normals(seed: int, chunk: int, n_steps: int, n_cols: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=(int(seed), int(chunk)))
    gen = np.random.Generator(np.random.Philox(ss))
    return gen.standard_normal((n_steps, n_cols))


def _scaling(spec: NoiseSpec, tau_fine: float):
    """(std per column, projection or None) for raw normals -> increments."""
    if spec.kind is NoiseKind.NONCOMMUTING_SINE:
        return np.sqrt(spec.sine_variances() * tau_fine), spec.sine_projection()
    return np.sqrt(spec.mode_variances() * tau_fine), None


def fine_increment_chunk(
    spec: NoiseSpec, T: float, M_fine: int, master_seed: int, chunk: int
) -> np.ndarray:
    """Scaled fine increments for steps [chunk*CHUNK_STEPS, ...); shared by
    sample_path and the streaming Monte Carlo runner."""
    lo = chunk * CHUNK_STEPS
    n_steps = min(CHUNK_STEPS, M_fine - lo)
    if n_steps <= 0:
        raise ValueError(f"chunk {chunk} outside path of {M_fine} steps")
    std, proj = _scaling(spec, T / M_fine)
    z = _chunk_normals(master_seed, chunk, n_steps, std.size)
    z *= std
    if proj is not None:
        z = z @ proj
    return z


def sample_path(
    spec: NoiseSpec, T: float, M_fine: int, master_seed: int
) -> NoisePath:
    """Draw the full fine-resolution increment array.

    Per-mode fine increments are independent N(0, q_k * T/M_fine); modes with
    q_k = 0 are exactly zero.  Regenerating with identical arguments gives a
    bit-identical array.
    """
    if M_fine < 1:
        raise ValueError(f"M_fine must be >= 1, got {M_fine}")
    if T <= 0:
        raise ValueError(f"T must be > 0, got {T}")
    n_chunks = -(-M_fine // CHUNK_STEPS)
    parts = [
        fine_increment_chunk(spec, T, M_fine, master_seed, c) for c in range(n_chunks)
    ]
    inc = parts[0] if n_chunks == 1 else np.concatenate(parts, axis=0)
    inc.flags.writeable = False
    return NoisePath(spec, float(T), int(M_fine), int(master_seed), inc)


def aligned_block_sums(arr: np.ndarray, n_blocks: int) -> np.ndarray:
    """Sum axis-0 blocks of ``arr`` into ``n_blocks`` groups.

    Power-of-two block sizes reduce by a balanced pairwise tree, so nested
    dyadic refinements compose bit-exactly; other sizes use numpy's reduction.
    """
    m = arr.shape[0]
    if n_blocks < 1 or m % n_blocks != 0:
        raise ValueError(f"{n_blocks} blocks do not divide {m} steps")
    b = m // n_blocks
    out = arr.reshape(n_blocks, b, *arr.shape[1:])
    if b & (b - 1) == 0:
        while out.shape[1] > 1:
            out = out.reshape(
                n_blocks, out.shape[1] // 2, 2, *arr.shape[1:]
            ).sum(axis=2)
        return np.ascontiguousarray(out[:, 0])
    return out.sum(axis=1)


def path_total(arr: np.ndarray) -> np.ndarray:
    """Total increment with the same pairwise tree as aligned_block_sums."""
    return aligned_block_sums(arr, 1)[0]


def increments_on_grid(path: NoisePath, M_coarse: int) -> list[SpectralField]:
    """Coarse-grid increments as mean-zero fields coupled to the fine path."""
    blocks = path.increment_array(M_coarse)
    return [SpectralField(path.spec.basis, 0.0, row) for row in blocks]


@dataclass(frozen=True)
class RegularityDiagnostic:
    """Tail-convergence probe of ||A^{(gamma-2)/2} Q^{1/2}||_HS^2 partial sums."""

    gammas: tuple
    partial_sums: tuple
    tail_ratios: tuple
    converged: tuple
    gamma_max: Optional[float]
    threshold: float
    n_probe: int


def _rank_eigenvalues(dim: int, n: int) -> np.ndarray:
    """First n eigenvalues of A in increasing order (rank order)."""
    if dim == 1:
        r = np.arange(1, n + 1, dtype=float)
        return np.pi**2 * r * r
    # quarter-disc of ~n lattice points; the square [0,K]^2 then contains
    # every mode whose eigenvalue is among the n smallest
    side = int(np.ceil(2.0 * np.sqrt(n / np.pi))) + 2
    k1, k2 = np.meshgrid(np.arange(side + 1), np.arange(side + 1), indexing="ij")
    lam = np.pi**2 * (k1.ravel() ** 2 + k2.ravel() ** 2).astype(float)[1:]
    lam.sort(kind="stable")
    return lam[:n]


def _rank_variances(spec: NoiseSpec, n: int) -> np.ndarray:
    ranks = np.arange(1, n + 1)
    if spec.kind is NoiseKind.WHITE:
        return np.ones(n)
    if spec.kind is NoiseKind.TRACE_CLASS_LOG:
        return _log_decay(ranks, 1)
    if spec.kind is NoiseKind.SMOOTH_LOG:
        return _log_decay(ranks, 5)
    if spec.kind is NoiseKind.CUSTOM:
        return np.asarray(spec.q_custom(ranks), dtype=float)
    raise ValueError(f"no diagonal spectrum for {spec.kind}")


def regularity_exponent(spec: NoiseSpec, N_probe: int = 1 << 20) -> RegularityDiagnostic:
    """Probe which regularity exponents gamma the spectrum admits.

    For gamma on the grid 0.5, 1.0, ..., 4.0, the dyadic tails
    T(n) = S(2n) - S(n) of S(gamma, n) = sum_{k<=n} lambda_k^{gamma-2} q_k are
    compared; T(2n)/T(n) < 1 + 10/ln(n) declares apparent convergence.  The
    grid spacing 0.5 is what this crude ratio test can resolve at feasible n.
    """
    if N_probe < 16:
        raise ValueError(f"N_probe must be >= 16, got {N_probe}")
    lam = _rank_eigenvalues(spec.basis.dim, 4 * N_probe)
    q = _rank_variances(spec, 4 * N_probe)
    gammas = np.arange(1, 9) * 0.5
    threshold = 1.0 + 10.0 / np.log(N_probe)
    sums, ratios, conv = [], [], []
    for g in gammas:
        terms = lam ** (g - 2.0) * q
        s_n = float(terms[:N_probe].sum())
        t1 = float(terms[N_probe : 2 * N_probe].sum())
        t2 = float(terms[2 * N_probe :].sum())
        ratio = t2 / t1 if t1 > 0 else 0.0
        sums.append(s_n)
        ratios.append(ratio)
        conv.append(bool(ratio < threshold) and g > spec.basis.dim / 2)
    gamma_max = max((g for g, c in zip(gammas, conv) if c), default=None)
    return RegularityDiagnostic(
        gammas=tuple(gammas),
        partial_sums=tuple(sums),
        tail_ratios=tuple(ratios),
        converged=tuple(conv),
        gamma_max=gamma_max,
        threshold=float(threshold),
        n_probe=int(N_probe),
    )


_PATH_MAGIC = b"SCHPATH1"


def save_path(path: NoisePath, file) -> None:
    """Flat binary cache: 8-byte magic, (M_fine, modes, seed) u64, T f64, data."""
    header = _PATH_MAGIC + struct.pack(
        "<QQQd", path.M_fine, path.fine_increments.shape[1], path.master_seed, path.T
    )
    with open(file, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(path.fine_increments, dtype="<f8").tobytes())


def load_path(file, spec: NoiseSpec) -> NoisePath:
    with open(file, "rb") as fh:
        magic = fh.read(8)
        if magic != _PATH_MAGIC:
            raise ValueError(f"not a noise path file (magic {magic!r})")
        m_fine, n_cols, seed, T = struct.unpack("<QQQd", fh.read(32))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if n_cols != spec.basis.n_modes:
        raise ValueError(
            f"cached path has {n_cols} modes, spec basis has {spec.basis.n_modes}"
        )
    if data.size != m_fine * n_cols:
        raise ValueError("truncated noise path file")
    inc = data.reshape(int(m_fine), int(n_cols)).copy()
    inc.flags.writeable = False
    return NoisePath(spec, float(T), int(m_fine), int(seed), inc)
