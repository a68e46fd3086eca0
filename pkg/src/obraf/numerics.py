"""Dense linear-algebra kernels: ridge regression and the smallest eigenpair of
a symmetric-definite pencil."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

EIG_REGULARIZATION = 1e-6


class NumericError(ArithmeticError):
    """A numerical kernel could not produce a valid result."""


class SingularSystemError(NumericError):
    pass


@dataclass(frozen=True)
class LinearSystemSolution:
    weights: np.ndarray
    residual_norm: float
    form: str  # "primal", "dual" or "pinv"


@dataclass(frozen=True)
class GenEigenResult:
    eigenvector: np.ndarray
    eigenvalue: float


def ridge_solve(D, Y, lam: float, form: str = "auto", pinv_fallback: bool = True) -> LinearSystemSolution:
    """Minimize ``||D w - Y||^2 + lam ||w||^2`` in closed form.

    The primal solution ``(D'D + lam I)^-1 D'Y`` is used when ``D`` has no more
    columns than rows, otherwise the dual ``D'(DD' + lam I)^-1 Y``; ``form``
    forces one of them. With ``lam == 0`` and a rank-deficient ``D`` the
    minimum-norm solution ``pinv(D) Y`` is returned, or
    :class:`SingularSystemError` raised if ``pinv_fallback`` is false.
    """
    D = np.asarray(D, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if D.ndim != 2 or D.shape[0] < 1 or D.shape[1] < 1:
        raise ValueError(f"design matrix must be 2-D and non-empty, got shape {D.shape}")
    if Y.shape[0] != D.shape[0]:
        raise ValueError(f"D has {D.shape[0]} rows but Y has {Y.shape[0]}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if not (np.all(np.isfinite(D)) and np.all(np.isfinite(Y))):
        raise NumericError("non-finite entries in ridge system")
    n, m = D.shape
    if form == "auto":
        form = "primal" if m <= n else "dual"
    if form not in ("primal", "dual"):
        raise ValueError(f"unknown form {form!r}")

    gram = D.T @ D if form == "primal" else D @ D.T
    if lam == 0 and np.linalg.matrix_rank(D) < min(n, m):
        if not pinv_fallback:
            raise SingularSystemError("singular normal equations with lambda = 0")
        w = np.linalg.pinv(D) @ Y
        form = "pinv"
    else:
        gram[np.diag_indices_from(gram)] += lam
        try:
            factor = cho_factor(gram, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(str(exc)) from exc
        if form == "primal":
            w = cho_solve(factor, D.T @ Y, check_finite=False)
        else:
            w = D.T @ cho_solve(factor, Y, check_finite=False)

    resid = D.T @ (D @ w) + lam * w - D.T @ Y
    return LinearSystemSolution(w, float(np.linalg.norm(resid)), form)


def regularize(H: np.ndarray, delta: float = EIG_REGULARIZATION) -> np.ndarray:
    """``H + delta * tr(H)/p * I`` for a (stack of) p x p matrices."""
    p = H.shape[-1]
    tr = np.trace(H, axis1=-2, axis2=-1)
    if np.any(tr <= 0):
        raise NumericError("pencil matrix H has zero trace")
    out = H.copy()
    idx = np.arange(p)
    out[..., idx, idx] += (delta * tr / p)[..., None]
    return out


def gen_eig_smallest_batch(G: np.ndarray, H: np.ndarray, delta: float = EIG_REGULARIZATION):
    """Smallest eigenpairs of ``G z = lam H z`` for stacks of shape (k, p, p).

    ``H`` is Tikhonov-regularized, Cholesky-factored as ``L L'`` and the pencil
    reduced to the standard problem ``L^-1 G L^-T y = lam y`` with
    ``z = L^-T y``. Returns ``(values, vectors)`` of shapes (k,) and (k, p);
    vectors have unit norm and a positive largest-magnitude entry.
    """
    G = np.asarray(G, dtype=float)
    H = np.asarray(H, dtype=float)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(H))):
        raise NumericError("non-finite entries in eigenproblem")
    G = 0.5 * (G + np.swapaxes(G, -1, -2))
    H = regularize(0.5 * (H + np.swapaxes(H, -1, -2)), delta)
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"regularized H is not positive definite: {exc}") from exc
    # C = L^-1 G L^-T via two solves
    X = np.linalg.solve(L, G)
    C = np.linalg.solve(L, np.swapaxes(X, -1, -2))
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    vals, vecs = np.linalg.eigh(C)
    y = vecs[..., :, 0]
    z = np.linalg.solve(np.swapaxes(L, -1, -2), y[..., None])[..., 0]
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    big = np.take_along_axis(z, np.abs(z).argmax(axis=-1)[..., None], axis=-1)
    z *= np.where(big < 0, -1.0, 1.0)
    return np.maximum(vals[..., 0], 0.0), z


def gen_eig_smallest(G, H, delta: float = EIG_REGULARIZATION) -> GenEigenResult:
    """Eigenpair of ``G z = lam H z`` with minimal ``lam`` (see the batch variant)."""
    G = np.asarray(G, dtype=float)
    H = np.asarray(H, dtype=float)
    if G.ndim != 2 or G.shape != H.shape or G.shape[0] != G.shape[1]:
        raise ValueError(f"need two square matrices of equal shape, got {G.shape} and {H.shape}")
    for name, M in (("G", G), ("H", H)):
        if np.all(np.isfinite(M)) and np.max(np.abs(M - M.T), initial=0.0) > 1e-10 * max(1.0, np.abs(M).max()):
            raise ValueError(f"{name} is not symmetric")
    vals, vecs = gen_eig_smallest_batch(G[None], H[None], delta)
    return GenEigenResult(vecs[0], float(vals[0]))
