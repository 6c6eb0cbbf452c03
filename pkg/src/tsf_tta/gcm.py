"""Gated calibration module.

A GCM applies, per variable ``c``, a residual temporal map gated by
``tanh(alpha_c)``::

    out[:, c] = Z[:, c] + tanh(alpha_c) * (W[c] @ Z[:, c] + b[:, c])

Inputs may carry leading batch axes: ``Z`` has shape ``(..., dim, C)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class GcmGradients:
    dW: np.ndarray
    db: np.ndarray
    dalpha: np.ndarray

    def __add__(self, other: "GcmGradients") -> "GcmGradients":
        return GcmGradients(self.dW + other.dW, self.db + other.db, self.dalpha + other.dalpha)

    def as_list(self) -> list[np.ndarray]:
        return [self.dW, self.db, self.dalpha]


@dataclass
class Gcm:
    """Parameters of one calibration module.

    Attributes
    ----------
    W : ndarray, shape (C, dim, dim)
        Per-variable temporal calibration matrices.
    b : ndarray, shape (dim, C)
    alpha : ndarray, shape (C,)
        Gating parameters; the gate is ``tanh(alpha)``.
    """

    W: np.ndarray
    b: np.ndarray
    alpha: np.ndarray

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @property
    def C(self) -> int:
        return self.b.shape[1]

    def params(self) -> list[np.ndarray]:
        return [self.W, self.b, self.alpha]

    def copy(self) -> "Gcm":
        return Gcm(self.W.copy(), self.b.copy(), self.alpha.copy())

    def _check(self, Z: np.ndarray) -> None:
        if Z.ndim < 2 or Z.shape[-2:] != (self.dim, self.C):
            raise ShapeError(f"GCM expects (..., {self.dim}, {self.C}), got {Z.shape}")


def gcm_new(dim: int, C: int, alpha_init: float = 0.1) -> Gcm:
    """Zero calibration weights and bias; every gate set to ``alpha_init``."""
    if dim < 1 or C < 1:
        raise ShapeError(f"dim and C must be positive, got dim={dim}, C={C}")
    return Gcm(
        W=np.zeros((C, dim, dim)),
        b=np.zeros((dim, C)),
        alpha=np.full(C, float(alpha_init)),
    )


def _residual(g: Gcm, Z: np.ndarray) -> np.ndarray:
    return np.einsum("cij,...jc->...ic", g.W, Z) + g.b


def gcm_forward(g: Gcm, Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    g._check(Z)
    return Z + np.tanh(g.alpha) * _residual(g, Z)


def gcm_backward(g: Gcm, Z: np.ndarray, upstream: np.ndarray) -> tuple[GcmGradients, np.ndarray]:
    """Reverse-mode rule for :func:`gcm_forward`.

    Returns parameter gradients of ``<upstream, gcm_forward(g, Z)>`` summed
    over any leading batch axes, plus the gradient with respect to ``Z``.
    """
    Z = np.asarray(Z, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    g._check(Z)
    if upstream.shape != Z.shape:
        raise ShapeError(f"upstream shape {upstream.shape} != input shape {Z.shape}")
    gate = np.tanh(g.alpha)
    batch_axes = tuple(range(Z.ndim - 2))
    flat_u = upstream.reshape(-1, g.dim, g.C)
    flat_z = Z.reshape(-1, g.dim, g.C)
    dW = gate[:, None, None] * np.einsum("nic,njc->cij", flat_u, flat_z)
    db = gate * upstream.sum(axis=batch_axes)
    r = _residual(g, Z)
    dalpha = (1.0 - gate ** 2) * (upstream * r).sum(axis=batch_axes + (Z.ndim - 2,))
    dZ = upstream + gate * np.einsum("cji,...jc->...ic", g.W, upstream)
    return GcmGradients(dW, db, dalpha), dZ
