"""Spatially non-stationary channel generation.

Each user sees only a contiguous visibility region (VR) of its serving
subarray.  A channel vector between user k of group j and subarray s is
drawn as

    h = sqrt(M_sub) * C^(1/2) z,   z ~ CN(0, I / M_sub),

where C is the effective covariance obtained by masking a full-array
correlation matrix R to the VR and renormalizing the trace.  Imperfect
CSI is modeled as a variance-preserving mix of the true channel with an
independent draw of the same covariance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import CorrelationModel, CorrelationSpec, Normalization, SystemConfig

__all__ = [
    "VRMask",
    "ChannelRealization",
    "ChannelSampler",
    "build_correlation",
    "sample_vr",
    "effective_covariance",
    "psd_sqrt",
    "corrupt_csi",
    "sample_channel",
    "dump_channel_csv",
]

#: eigenvalues of a covariance below this are clamped to zero before sqrt
PSD_CLAMP = 1e-12


def build_correlation(spec: CorrelationSpec, m_sub: int) -> np.ndarray:
    """Return the m_sub x m_sub Hermitian PSD correlation matrix.

    IDENTITY gives the uncorrelated array; EXPONENTIAL gives the
    standard exponential model with entry (m, n) = rho^|m-n| (unit
    diagonal, reduces to the identity at rho = 0).
    """
    if m_sub < 1:
        raise ValueError(f"m_sub must be >= 1, got {m_sub}")
    if spec.model is CorrelationModel.IDENTITY:
        return np.eye(m_sub, dtype=np.complex128)
    if not 0.0 <= spec.rho < 1.0:
        raise ValueError(f"rho must be in [0, 1), got {spec.rho}")
    idx = np.arange(m_sub)
    return (spec.rho ** np.abs(idx[:, None] - idx[None, :])).astype(np.complex128)


@dataclass(frozen=True)
class VRMask:
    """Contiguous visibility region inside one subarray.

    ``start`` is the first visible antenna (0-based) and ``length`` the
    number of visible antennas, so the mask is [0, 1_length, 0] on the
    subarray's diagonal.
    """

    start: int
    length: int
    m_sub: int

    def __post_init__(self) -> None:
        if not (1 <= self.length <= self.m_sub):
            raise ValueError(f"VR length {self.length} not in [1, {self.m_sub}]")
        if self.start < 0 or self.start + self.length > self.m_sub:
            raise ValueError(
                f"VR block [{self.start}, {self.start + self.length}) "
                f"not inside [0, {self.m_sub})"
            )

    def indicator(self) -> np.ndarray:
        """0/1 diagonal of the mask as a float vector."""
        d = np.zeros(self.m_sub)
        d[self.start : self.start + self.length] = 1.0
        return d


def sample_vr(m_sub: int, rng: np.random.Generator, d_range: tuple[int, int]) -> VRMask:
    """Draw a visibility region: length uniform on [d_min, d_max], then
    start uniform over all placements of that length."""
    d_min, d_max = int(d_range[0]), int(d_range[1])
    if not 1 <= d_min <= d_max <= m_sub:
        raise ValueError(
            f"d_range must satisfy 1 <= d_min <= d_max <= {m_sub}, got {d_range}"
        )
    length = int(rng.integers(d_min, d_max + 1))
    start = int(rng.integers(0, m_sub - length + 1))
    return VRMask(start=start, length=length, m_sub=m_sub)


def effective_covariance(
    R: np.ndarray, vr: VRMask, normalization: Normalization
) -> np.ndarray:
    """Mask correlation matrix R to the visibility region.

    Returns C = D^(1/2) R D^(1/2) with D diagonal and supported on the
    VR block.  Under STATIONARY_TRACE the nonzero entries of D are
    m_sub / length, so trace(C) = m_sub for unit-diagonal R; under
    VISIBLE_TRACE they are 1, so trace(C) = length.
    """
    m_sub = vr.m_sub
    if R.shape != (m_sub, m_sub):
        raise ValueError(f"R has shape {R.shape}, expected {(m_sub, m_sub)}")
    d = vr.indicator()
    if normalization is Normalization.STATIONARY_TRACE:
        d = d * (m_sub / vr.length)
    root = np.sqrt(d)
    return root[:, None] * R * root[None, :]


def psd_sqrt(A: np.ndarray, clamp: float = PSD_CLAMP) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues below ``clamp`` (relative to the largest) are treated as
    zero, which keeps tiny negative rounding noise out of the root.
    """
    vals, vecs = np.linalg.eigh(A)
    top = float(vals[-1]) if vals.size else 0.0
    vals = np.where(vals > clamp * max(top, 1.0), vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def _cn_vector(rng: np.random.Generator, n: int, var: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian vector, per-entry variance var."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def _draw_channel(cov_sqrt: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # h = sqrt(M) C^(1/2) z with z ~ CN(0, I/M): covariance of h is C
    m_sub = cov_sqrt.shape[0]
    z = _cn_vector(rng, m_sub, 1.0 / m_sub)
    return np.sqrt(m_sub) * (cov_sqrt @ z)


def _mix_csi(
    h: np.ndarray, cov_sqrt: np.ndarray, tau: float, rng: np.random.Generator
) -> np.ndarray:
    # The error draw is always consumed so realizations with different
    # tau stay paired under a common seed.
    err = cov_sqrt @ _cn_vector(rng, cov_sqrt.shape[0], 1.0)
    if tau == 0.0:
        return h.copy()
    return np.sqrt(1.0 - tau**2) * h + tau * err


def corrupt_csi(
    h: np.ndarray, cov: np.ndarray, tau: float, rng: np.random.Generator
) -> np.ndarray:
    """Imperfect channel estimate sqrt(1 - tau^2) h + tau * C^(1/2) v.

    v ~ CN(0, I), so the error term has covariance ``cov`` and the mix
    preserves second moments.  tau = 0 returns h exactly; tau = 1
    returns a statistically independent draw.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return _mix_csi(h, psd_sqrt(cov), tau, rng)


@dataclass
class ChannelRealization:
    """One draw of all channels between subarrays and user groups.

    ``H[j][s]`` stacks the true channel vectors between subarray s and
    the users of group j column-per-user (shape m_sub x k_sub[j]);
    ``H_hat`` holds the corresponding estimates.  ``cov[j][k][s]`` and
    ``vr[j][k][s]`` record the effective covariance and visibility
    region that generated column k of H[j][s].  Covariance arrays are
    shared read-only references from the sampler cache.
    """

    H: list[list[np.ndarray]]
    H_hat: list[list[np.ndarray]]
    cov: list[list[list[np.ndarray]]]
    vr: list[list[list[VRMask]]]
    seed: int | None = None

    def local(self, s: int) -> np.ndarray:
        """True channel between subarray s and its own users."""
        return self.H[s][s]

    def local_estimate(self, s: int) -> np.ndarray:
        """Estimated channel between subarray s and its own users."""
        return self.H_hat[s][s]


# covariance roots depend only on (correlation, size, normalization, VR
# block), never on the draw, so they are shared across all samplers in
# the process; values are deterministic, which makes concurrent
# double-computes benign
_ROOT_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


class ChannelSampler:
    """Draws ChannelRealizations for a fixed config.

    Realizations hold read-only references into the shared covariance
    cache.  Sampling is pure in the supplied rng: the same generator
    state yields a bit-identical realization.
    """

    def __init__(self, config: SystemConfig):
        self.config = config
        self._R = build_correlation(config.correlation, config.m_sub)
        self._cache_prefix = (
            config.correlation.model,
            config.correlation.rho,
            config.m_sub,
            config.normalization,
        )

    def _cov_pair(self, vr: VRMask) -> tuple[np.ndarray, np.ndarray]:
        key = self._cache_prefix + (vr.start, vr.length)
        hit = _ROOT_CACHE.get(key)
        if hit is None:
            cov = effective_covariance(self._R, vr, self.config.normalization)
            root = psd_sqrt(cov)
            cov.setflags(write=False)
            root.setflags(write=False)
            hit = (cov, root)
            _ROOT_CACHE[key] = hit
        return hit

    def sample(self, rng: np.random.Generator, seed: int | None = None) -> ChannelRealization:
        cfg = self.config
        m_sub, k_sub = cfg.m_sub, cfg.k_sub
        d_range = cfg.vr_bounds
        H = [[np.zeros((m_sub, k_sub[j]), dtype=np.complex128) for _ in range(cfg.S)]
             for j in range(cfg.S)]
        H_hat = [[np.zeros((m_sub, k_sub[j]), dtype=np.complex128) for _ in range(cfg.S)]
                 for j in range(cfg.S)]
        cov: list[list[list[np.ndarray]]] = []
        vr: list[list[list[VRMask]]] = []
        for j in range(cfg.S):
            cov_j, vr_j = [], []
            for k in range(k_sub[j]):
                cov_jk, vr_jk = [], []
                for s in range(cfg.S):
                    mask = sample_vr(m_sub, rng, d_range)
                    c, root = self._cov_pair(mask)
                    h = _draw_channel(root, rng)
                    h_hat = _mix_csi(h, root, cfg.tau, rng)
                    H[j][s][:, k] = h
                    H_hat[j][s][:, k] = h_hat
                    cov_jk.append(c)
                    vr_jk.append(mask)
                cov_j.append(cov_jk)
                vr_j.append(vr_jk)
            cov.append(cov_j)
            vr.append(vr_j)
        return ChannelRealization(H=H, H_hat=H_hat, cov=cov, vr=vr, seed=seed)


def sample_channel(config: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw one full ChannelRealization for ``config`` from ``rng``."""
    return ChannelSampler(config).sample(rng)


def dump_channel_csv(realization: ChannelRealization, path: str | Path) -> Path:
    """Debug dump: one row per (group, subarray, antenna), Re/Im per user."""
    path = Path(path)
    k_max = max(h.shape[1] for row in realization.H for h in row)
    header = ["user_group", "subarray", "antenna"]
    for k in range(k_max):
        header += [f"user{k}_re", f"user{k}_im"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j, row in enumerate(realization.H):
            for s, block in enumerate(row):
                m_sub, k_here = block.shape
                for a in range(m_sub):
                    cells: list[str] = [str(j), str(s), str(a)]
                    for k in range(k_max):
                        if k < k_here:
                            cells += [repr(block[a, k].real), repr(block[a, k].imag)]
                        else:
                            cells += ["", ""]
                    writer.writerow(cells)
    return path
