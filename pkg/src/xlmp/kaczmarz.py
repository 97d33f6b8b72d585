"""Randomized Kaczmarz solver for ridge-regularized precoding systems.

For a subarray channel H (m_sub x k_sub) and ridge xi > 0, the column
w_k = (H^H H + xi I)^(-1) e_k is obtained without matrix inversion by
running Kaczmarz iterations on the consistent system

    A^H z = e_k,     A = [H; sqrt(xi) I],

whose solution satisfies z = A w_k.  The iterate is kept in the split
form z = [u; sqrt(xi) w] so each step touches one channel column:

    eta = (e_k[r] - h_r^H u - xi w[r]) / (||h_r||^2 + xi)
    u  += eta h_r
    w[r] += eta

Row selection is either uniform i.i.d., or norm-weighted sampling
without replacement: every pass visits each row exactly once, in an
order drawn from the law P_r = (||h_r||^2 + xi) / (||H||_F^2 + k xi).
The guaranteed per-pass coverage is what makes the weighted variant
converge faster; drawing i.i.d. from the same law (kept as an
experimental third mode) starves small-norm rows and is usually slower
than uniform on multi-column solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "SelectionMode",
    "KaczmarzRun",
    "BlockResult",
    "selection_probs",
    "draw_selections",
    "rka_step",
    "rka_solve",
    "rka_solve_block",
    "augmented_matrix",
    "exact_weights",
    "normalized_min_gain",
    "convergence_bound",
]

#: |eta| threshold below which a solve is considered quiescent
DEFAULT_STOP_TOL = 1e-12


class SelectionMode(Enum):
    """Row-selection law for the solver."""

    UNIFORM = "uniform"
    #: norm-weighted sampling without replacement, one full pass at a time
    NORM_WEIGHTED = "norm_weighted"
    #: i.i.d. draws from the static norm-weighted law (experimental)
    NORM_WEIGHTED_IID = "norm_weighted_iid"


def selection_probs(H: np.ndarray, xi: float, mode: SelectionMode) -> np.ndarray:
    """Selection probabilities over the k_sub system rows.

    UNIFORM returns 1/k for every row.  Both weighted modes return
    (||h_r||^2 + xi) / (||H||_F^2 + k xi), which sums to one exactly
    because the denominator is the sum of the numerators; for
    NORM_WEIGHTED this is the law each without-replacement pass starts
    from, for NORM_WEIGHTED_IID the per-draw law itself.
    """
    if H.ndim != 2 or H.size == 0:
        raise ValueError("H must be a nonempty 2-D matrix")
    if xi < 0:
        raise ValueError(f"xi must be >= 0, got {xi}")
    k = H.shape[1]
    if mode is SelectionMode.UNIFORM:
        return np.full(k, 1.0 / k)
    weights = np.einsum("mk,mk->k", H.conj(), H).real + xi
    total = weights.sum()
    if total <= 0.0:
        raise ValueError(
            "undefined distribution: all-zero H with xi = 0 has no "
            "norm-weighted selection law"
        )
    return weights / total


def draw_selections(
    H: np.ndarray, xi: float, mode: SelectionMode, T: int, rng: np.random.Generator
) -> np.ndarray:
    """Pre-draw the T row indices one solve will visit.

    NORM_WEIGHTED concatenates full without-replacement passes, each a
    weighted permutation drawn by exponential-race sorting (key
    Exp(1)/p_r per row, ascending), which is distributed exactly as
    successive renormalized draws from the norm-weighted law.
    """
    k = H.shape[1]
    if mode is SelectionMode.UNIFORM:
        return rng.integers(0, k, size=T)
    probs = selection_probs(H, xi, mode)
    if mode is SelectionMode.NORM_WEIGHTED_IID:
        return rng.choice(k, size=T, p=probs)
    n_pass = math.ceil(T / k)
    keys = rng.exponential(size=(n_pass, k)) / probs[None, :]
    return np.argsort(keys, axis=1, kind="stable").reshape(-1)[:T]


@dataclass
class KaczmarzRun:
    """Solver state for one canonical-basis right-hand side.

    ``u`` (length m_sub) and ``w`` (length k_sub) carry the implicit
    augmented iterate z^t = [u; sqrt(xi) w]; ``w`` converges to the
    solution column.  ``residual_log`` collects |eta| per step when the
    run was created with logging enabled.
    """

    u: np.ndarray
    w: np.ndarray
    rhs_index: int
    t: int = 0
    residual_log: list[float] | None = None

    @classmethod
    def start(
        cls, rhs_index: int, m_sub: int, k_sub: int, log_residuals: bool = False
    ) -> "KaczmarzRun":
        """Fresh run with zero state vectors."""
        if not 0 <= rhs_index < k_sub:
            raise ValueError(f"rhs_index {rhs_index} not in [0, {k_sub})")
        return cls(
            u=np.zeros(m_sub, dtype=np.complex128),
            w=np.zeros(k_sub, dtype=np.complex128),
            rhs_index=rhs_index,
            residual_log=[] if log_residuals else None,
        )

    def augmented(self, xi: float) -> np.ndarray:
        """The iterate z^t = [u; sqrt(xi) w] of the augmented system."""
        return np.concatenate([self.u, np.sqrt(xi) * self.w])


def rka_step(run: KaczmarzRun, H: np.ndarray, xi: float, r: int) -> KaczmarzRun:
    """One Kaczmarz projection onto system row r; returns the new run.

    The residual uses the conjugated pairing h_r^H u, so the fixed
    point is exactly A^H z = e_k.  After the step the row-r residual
    e_k[r] - h_r^H u - xi w[r] is zero to machine precision.
    """
    k_sub = H.shape[1]
    if not 0 <= r < k_sub:
        raise ValueError(f"row index {r} not in [0, {k_sub})")
    h_r = H[:, r]
    target = 1.0 if r == run.rhs_index else 0.0
    gain = np.vdot(h_r, h_r).real + xi
    eta = (target - np.vdot(h_r, run.u) - xi * run.w[r]) / gain
    u = run.u + eta * h_r
    w = run.w.copy()
    w[r] += eta
    log = run.residual_log
    if log is not None:
        log = log + [abs(eta)]
    return KaczmarzRun(u=u, w=w, rhs_index=run.rhs_index, t=run.t + 1, residual_log=log)


@dataclass
class BlockResult:
    """Outcome of a batched solve.

    ``weights`` has one solution column per batched run.  ``iters``
    records when each run went quiescent (T if it never did), and
    ``snapshots`` maps requested iteration counts to (u, w) state
    copies of shape (m_sub, B) / (k_sub, B).
    """

    weights: np.ndarray
    iters: np.ndarray
    snapshots: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def _run_block(
    H: np.ndarray,
    xi: float,
    rhs: np.ndarray,
    selections: np.ndarray,
    stop_tol: float | None,
    snapshots: tuple[int, ...],
) -> BlockResult:
    """Vectorized solver core: B independent runs advance in lockstep.

    Run b projects onto its own pre-drawn row selections[b, t], so the
    batch is mathematically identical to B separate scalar loops.
    """
    m_sub, k_sub = H.shape
    B, T = selections.shape
    colnorm2 = np.einsum("mk,mk->k", H.conj(), H).real
    denom = colnorm2 + xi

    u = np.zeros((m_sub, B), dtype=np.complex128)
    w = np.zeros((k_sub, B), dtype=np.complex128)
    cols = np.arange(B)
    active = np.ones(B, dtype=bool)
    quiet = np.zeros(B, dtype=np.int64)
    iters = np.full(B, T, dtype=np.int64)

    want = set(snapshots)
    snaps: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    if 0 in want:
        snaps[0] = (u.copy(), w.copy())

    stopped_at = T
    for t in range(T):
        r = selections[:, t]
        picked = H[:, r]
        dots = np.einsum("mb,mb->b", picked.conj(), u)
        eta = ((r == rhs) - dots - xi * w[r, cols]) / denom[r]
        eta = np.where(active, eta, 0.0)
        u += picked * eta
        w[r, cols] += eta
        if stop_tol is not None:
            # k_sub consecutive small steps only *trigger* a residual
            # check; untouched rows give exactly-zero steps, so small
            # eta alone does not mean the run converged
            small = np.abs(eta) < stop_tol
            quiet = np.where(active & small, quiet + 1, 0)
            idx = np.flatnonzero(active & (quiet >= k_sub))
            if idx.size:
                resid = -(H.conj().T @ u[:, idx]) - xi * w[:, idx]
                resid[rhs[idx], np.arange(idx.size)] += 1.0
                worst = np.abs(resid / denom[:, None]).max(axis=0)
                done = idx[worst < stop_tol]
                iters[done] = t + 1
                active[done] = False
                quiet[idx[worst >= stop_tol]] = 0
        if (t + 1) in want:
            snaps[t + 1] = (u.copy(), w.copy())
        if not active.any():
            stopped_at = t + 1
            break

    # runs frozen before a requested snapshot keep their final state
    for t in want:
        if t > stopped_at and t not in snaps and t <= T:
            snaps[t] = (u.copy(), w.copy())
    return BlockResult(weights=w, iters=iters, snapshots=snaps)


def rka_solve(
    H: np.ndarray,
    xi: float,
    k: int,
    T: int,
    mode: SelectionMode,
    rng: np.random.Generator,
    stop_tol: float | None = DEFAULT_STOP_TOL,
) -> np.ndarray:
    """Approximate column k of (H^H H + xi I)^(-1) with T iterations.

    The run exits early once |eta| stays below ``stop_tol`` for k_sub
    consecutive steps (pass ``stop_tol=None`` to force all T steps).
    Identical (inputs, rng state) give a bit-identical result.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if xi <= 0:
        raise ValueError(f"xi must be > 0, got {xi}")
    k_sub = H.shape[1]
    if not 0 <= k < k_sub:
        raise ValueError(f"basis index {k} not in [0, {k_sub})")
    sel = draw_selections(H, xi, mode, T, rng)
    out = _run_block(H, xi, np.array([k]), sel[None, :], stop_tol, ())
    return out.weights[:, 0]


def rka_solve_block(
    H: np.ndarray,
    xi: float,
    T: int,
    mode: SelectionMode,
    rng: np.random.Generator,
    rhs: np.ndarray | None = None,
    stop_tol: float | None = DEFAULT_STOP_TOL,
    snapshots: tuple[int, ...] = (),
) -> BlockResult:
    """Run independent solves for several right-hand sides at once.

    ``rhs`` holds one canonical-basis index per run (default: one run
    per basis vector, yielding the full k_sub x k_sub weight matrix).
    Each run draws its selections from its own child stream spawned
    off ``rng``, so results do not depend on execution interleaving.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if xi <= 0:
        raise ValueError(f"xi must be > 0, got {xi}")
    k_sub = H.shape[1]
    if rhs is None:
        rhs = np.arange(k_sub)
    rhs = np.asarray(rhs, dtype=np.int64)
    if rhs.size and not ((rhs >= 0) & (rhs < k_sub)).all():
        raise ValueError(f"rhs indices must lie in [0, {k_sub})")
    streams = rng.spawn(rhs.size)
    selections = np.stack(
        [draw_selections(H, xi, mode, T, stream) for stream in streams]
    )
    return _run_block(H, xi, rhs, selections, stop_tol, tuple(snapshots))


def augmented_matrix(H: np.ndarray, xi: float) -> np.ndarray:
    """Stack [H; sqrt(xi) I], the tall matrix behind the solver."""
    k_sub = H.shape[1]
    return np.vstack([H, np.sqrt(xi) * np.eye(k_sub, dtype=H.dtype)])


def exact_weights(H: np.ndarray, xi: float) -> np.ndarray:
    """Reference weight matrix (H^H H + xi I)^(-1) by direct inversion."""
    k_sub = H.shape[1]
    gram = H.conj().T @ H + xi * np.eye(k_sub, dtype=np.complex128)
    return np.linalg.inv(gram)


def normalized_min_gain(A: np.ndarray) -> float:
    """Smallest nonzero squared singular value of A over ||A||_F^2.

    This is the minimum of ||A x||^2 / (||A||_F^2 ||x||^2) over nonzero
    x in the column span of A^H; it lies in (0, 1] and governs the
    per-iteration contraction of norm-weighted selection.
    """
    s = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("zero matrix has no normalized gain")
    tol = s[0] * max(A.shape) * np.finfo(np.float64).eps
    nonzero = s[s > tol]
    return float(nonzero[-1] ** 2 / np.sum(s**2))


def convergence_bound(gain: float, t: int, init_err_sq: float) -> float:
    """Expected-error bound (1 - gain)^t * init_err_sq after t steps."""
    if not 0.0 < gain <= 1.0:
        raise ValueError(f"gain must be in (0, 1], got {gain}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return (1.0 - gain) ** t * init_err_sq
