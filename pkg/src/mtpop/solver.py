"""Joint low-rank reconstruction of the popularity tensor.

The tensor is modelled as a sum of per-timescale components.  Each
component is regularized through the nuclear norms of its layout blocks
(each block unfolded to a (users*posts) x time matrix), which makes the
proximal step a per-block singular value soft-threshold.  An ADMM-style
loop alternates residual sharing with thresholding:

    delta   = (R - sum of active components), on observed entries only
    R_i    <- Z_i + delta / L
    Z_i    <- blockwise soft-threshold of R_i
    active  = components positively correlated with the observed data

The per-block threshold follows the sqrt(rows) + sqrt(cols) rule on the
unfolded block, optionally rescaled.  Blocks whose thresholded unfolding
vanishes are dropped for that sweep; a component whose correlation gate
fails is excluded from the reconstruction but keeps receiving updates so
it can re-enter later.  Observed entries of the returned tensor are always
the known values; only unobserved cells carry estimates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from mtpop.multiscale import BlockLayout
from mtpop.tensor import Dims, MaskedTensor

log = logging.getLogger(__name__)

_SVD_CHUNK = 4096  # blocks per batched SVD call, bounds transient memory


class SolverError(RuntimeError):
    """Raised when the reconstruction cannot proceed (bad input, divergence)."""


@dataclass
class SolverConfig:
    max_iter: int = 100
    tol: float = 1e-4
    lambda_mode: str = "paper_rule"  # "paper_rule" | "scaled"
    lambda_scale: float = 1.0
    correlation_select: bool = True
    random_init: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.lambda_scale <= 0:
            raise ValueError("lambda_scale must be > 0")
        if self.lambda_mode not in ("paper_rule", "scaled"):
            raise ValueError(f"unknown lambda_mode {self.lambda_mode!r}")

    @property
    def effective_scale(self) -> float:
        return self.lambda_scale if self.lambda_mode == "scaled" else 1.0


@dataclass
class SolverState:
    """Per-component iterates and bookkeeping after a fit."""

    components: list[np.ndarray]  # R_i
    thresholded: list[np.ndarray]  # Z_i
    active: list[bool]
    iterations: int
    last_residual: float


@dataclass(frozen=True)
class SVTFactors:
    """Orthonormal factors and singular values of an unfolded block."""

    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray


def _check_finite(m: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{what} contains non-finite entries")


def svd_factors(m: np.ndarray) -> SVTFactors:
    m = np.asarray(m, dtype=np.float64)
    _check_finite(m, "matrix")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return SVTFactors(u, s, vt.T)


def nuclear_norm(m: np.ndarray) -> float:
    """Sum of singular values; zero exactly for the zero matrix."""
    m = np.asarray(m, dtype=np.float64)
    _check_finite(m, "matrix")
    return float(np.linalg.svd(m, compute_uv=False).sum())


def svt(m: np.ndarray, lam: float) -> np.ndarray:
    """Soft-threshold the singular values of ``m`` by ``lam``.

    Returns the unique minimizer of ``lam * ||X||_nuc + 0.5 * ||X - m||_F^2``.
    """
    if lam <= 0:
        raise ValueError(f"threshold must be > 0, got {lam}")
    f = svd_factors(m)
    shrunk = np.maximum(f.singulars - lam, 0.0)
    if not shrunk.any():
        return np.zeros_like(np.asarray(m, dtype=np.float64))
    return (f.left * shrunk) @ f.right.T


def block_threshold(extents: Dims, lam_scale: float = 1.0) -> float:
    """sqrt(rows) + sqrt(cols) of the time unfolding, times ``lam_scale``."""
    m, n, t = extents
    return lam_scale * (math.sqrt(m * n) + math.sqrt(t))


def _blockwise_svt_values(
    values: np.ndarray, layout: BlockLayout, lam_scale: float
) -> tuple[np.ndarray, list[int]]:
    """Batched per-block SVT on a raw value array; returns (result, dropped ids)."""
    out = np.zeros_like(values)
    dropped: list[int] = []

    by_extent: dict[Dims, list[int]] = {}
    for j, (_, ext) in enumerate(layout.blocks):
        by_extent.setdefault(ext, []).append(j)

    for ext, idxs in by_extent.items():
        m, n, t = ext
        lam = block_threshold(ext, lam_scale)
        for start in range(0, len(idxs), _SVD_CHUNK):
            chunk = idxs[start : start + _SVD_CHUNK]
            stack = np.empty((len(chunk), m * n, t))
            for bi, j in enumerate(chunk):
                (u0, v0, t0), _ = layout.blocks[j]
                stack[bi] = values[u0 : u0 + m, v0 : v0 + n, t0 : t0 + t].reshape(m * n, t)
            u, s, vt = np.linalg.svd(stack, full_matrices=False)
            shrunk = np.maximum(s - lam, 0.0)
            recon = (u * shrunk[:, None, :]) @ vt
            for bi, j in enumerate(chunk):
                (u0, v0, t0), _ = layout.blocks[j]
                if shrunk[bi].max() <= 0.0:
                    dropped.append(j)
                out[u0 : u0 + m, v0 : v0 + n, t0 : t0 + t] = recon[bi].reshape(ext)
    dropped.sort()
    return out, dropped


def blockwise_svt(
    t: MaskedTensor, layout: BlockLayout, lam_scale: float = 1.0
) -> tuple[MaskedTensor, list[int]]:
    """Soft-threshold every layout block of the tensor independently.

    Each block is unfolded to (users*posts) x time, thresholded by
    ``lam_scale * (sqrt(m*n) + sqrt(t))`` and folded back in place.  Returns
    the transformed tensor and the ids of blocks that thresholded to zero
    rank (those are dropped, i.e. left as zeros).
    """
    if tuple(t.dims) != tuple(layout.dims):
        raise ValueError(f"layout dims {layout.dims} do not match tensor dims {t.dims}")
    _check_finite(t.values, "tensor")
    out, dropped = _blockwise_svt_values(t.values, layout, lam_scale)
    return MaskedTensor(out, t.mask.copy()), dropped


def _positively_correlated(z_obs: np.ndarray, r_obs: np.ndarray) -> bool:
    """Pearson gate over observed entries; constant vectors never pass."""
    if len(z_obs) < 2:
        return False
    zc = z_obs - z_obs.mean()
    rc = r_obs - r_obs.mean()
    denom = np.linalg.norm(zc) * np.linalg.norm(rc)
    if denom == 0.0:
        return False
    return float(zc @ rc) / denom > 0.0


def admm_fit(
    r: MaskedTensor, layouts: list[BlockLayout], cfg: SolverConfig | None = None
) -> tuple[MaskedTensor, SolverState]:
    """Complete the tensor from its observed entries.

    ``layouts`` supplies one block layout per time scale.  Iterates the
    residual-share / threshold / correlation-gate cycle until the relative
    change of the observed-entry residual drops below ``cfg.tol`` or
    ``cfg.max_iter`` is reached.  Returns the completed tensor (observed
    entries copied from the input verbatim) and the final solver state.
    Deterministic for fixed inputs and config.
    """
    cfg = cfg or SolverConfig()
    if not layouts:
        raise SolverError("at least one block layout is required")
    for lo in layouts:
        if tuple(lo.dims) != tuple(r.dims):
            raise SolverError(f"layout dims {lo.dims} do not match tensor dims {r.dims}")
    mask = r.mask
    if not mask.any():
        raise SolverError("tensor has no observed entries")
    _check_finite(r.values, "tensor")

    n_scales = len(layouts)
    obs_values = r.values[mask]
    obs_norm = float(np.linalg.norm(obs_values))
    denom = obs_norm if obs_norm > 0 else 1.0

    if cfg.random_init:
        rng = np.random.default_rng(cfg.seed)
        z = [rng.uniform(-0.01, 0.01, size=r.dims) for _ in range(n_scales)]
    else:
        z = [np.zeros(r.dims) for _ in range(n_scales)]
    comps = [np.zeros(r.dims) for _ in range(n_scales)]
    active = [True] * n_scales
    lam_scale = cfg.effective_scale

    prev_residual = None
    residual = math.inf
    iterations = 0
    for it in range(1, cfg.max_iter + 1):
        iterations = it
        recon = _active_sum(z, active, r.dims)
        delta = np.zeros(r.dims)
        delta[mask] = r.values[mask] - recon[mask]

        for i in range(n_scales):
            comps[i] = z[i] + delta / n_scales
            z[i], _ = _blockwise_svt_values(comps[i], layouts[i], lam_scale)

        if cfg.correlation_select:
            active = [_positively_correlated(z[i][mask], obs_values) for i in range(n_scales)]
        else:
            active = [True] * n_scales

        recon = _active_sum(z, active, r.dims)
        residual = float(np.linalg.norm(r.values[mask] - recon[mask])) / denom
        log.info("iter=%d residual=%.6e active=%s", it, residual,
                 "".join("1" if a else "0" for a in active))
        if not math.isfinite(residual):
            raise SolverError(f"residual diverged (non-finite) at iteration {it}")
        if prev_residual is not None:
            if abs(prev_residual - residual) < cfg.tol * max(prev_residual, 1e-12):
                break
        prev_residual = residual

    recon = _active_sum(z, active, r.dims)
    completed = MaskedTensor(np.where(mask, r.values, recon), np.ones(r.dims, dtype=bool))
    state = SolverState(comps, z, list(active), iterations, residual)
    return completed, state


def _active_sum(z: list[np.ndarray], active: list[bool], dims: Dims) -> np.ndarray:
    total = np.zeros(dims)
    for zi, on in zip(z, active):
        if on:
            total += zi
    return total


def predict(completed: MaskedTensor, queries) -> np.ndarray:
    """Read completed values at (u, v, t) positions, preserving query order."""
    out = np.empty(len(queries))
    for i, (u, v, t) in enumerate(queries):
        for axis, (idx, dim) in enumerate(zip((u, v, t), completed.dims)):
            if not 0 <= idx < dim:
                raise IndexError(f"query {i}: index {idx} out of range [0, {dim}) on axis {axis}")
        out[i] = completed.values[u, v, t]
    return out
