"""Dense brute-force reference computations.

These deliberately avoid the sparse stride arithmetic used by the engine:
states are reshaped into full tensors and operators act through
``np.tensordot``.  Only usable for small composite dimensions.
"""

from __future__ import annotations

import math

import numpy as np

from .dynamics import UnitaryOp
from .hilbert import StateVector, SystemLayout

__all__ = [
    "dense_apply",
    "dense_operator",
    "dense_partial_trace",
    "two_path_intensity",
    "singlet_correlation",
]


def dense_apply(op: UnitaryOp, vector: np.ndarray) -> np.ndarray:
    """Apply ``op`` to a full dense vector via tensor contraction."""
    layout = op.layout
    dims = list(layout.dims)
    axes = [layout.position(n) for n in op.acting]
    adims = [dims[a] for a in axes]
    k = len(axes)
    tensor = np.asarray(vector, dtype=complex).reshape(dims)
    kernel = op.kernel.reshape(adims + adims)
    out = np.tensordot(kernel, tensor, axes=(list(range(k, 2 * k)), axes))
    # tensordot puts the kernel's output axes first; move them back in place
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(-1)


def dense_operator(op: UnitaryOp) -> np.ndarray:
    """Full ``dimension x dimension`` matrix of ``op``, column by column."""
    dim = op.layout.dimension
    eye = np.eye(dim, dtype=complex)
    return np.stack([dense_apply(op, eye[:, j]) for j in range(dim)], axis=1)


def dense_partial_trace(layout: SystemLayout, vector: np.ndarray, keep: list[str]) -> np.ndarray:
    """Reduced density matrix of a dense vector, rows ordered as ``keep``."""
    dims = list(layout.dims)
    n = len(dims)
    tensor = np.asarray(vector, dtype=complex).reshape(dims)
    keep_axes = [layout.position(k) for k in keep]
    letters = "abcdefghijklmnopqrstuvwxyz"
    upper = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if n > len(letters):
        raise ValueError("too many subsystems for the einsum oracle")
    ket = list(letters[:n])
    bra = list(letters[:n])
    for a, ax in enumerate(keep_axes):
        bra[ax] = upper[a]
    out = "".join(letters[ax] for ax in keep_axes) + "".join(upper[a] for a in range(len(keep_axes)))
    rho = np.einsum(f"{''.join(ket)},{''.join(bra)}->{out}", tensor, tensor.conj())
    kdim = int(np.prod([dims[a] for a in keep_axes]))
    return rho.reshape(kdim, kdim)


def two_path_intensity(
    x: np.ndarray,
    a_top: complex,
    a_bottom: complex,
    separation: float,
    wavelength: float,
    distance: float,
) -> np.ndarray:
    """Closed-form cell probabilities when each slit spreads a flat-modulus wave over ``len(x)`` cells."""
    x = np.asarray(x, dtype=float)
    delta = 2 * np.pi * separation * x / (wavelength * distance)
    return np.abs(a_top + a_bottom * np.exp(1j * delta)) ** 2 / len(x)


def singlet_correlation(theta_a: float, theta_b: float) -> float:
    """<singlet| (n_a . sigma) x (n_b . sigma) |singlet> with n(t) = (sin t, 0, cos t)."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sz = np.diag([1.0, -1.0]).astype(complex)

    def along(t):
        return math.cos(t) * sz + math.sin(t) * sx

    h = 1 / math.sqrt(2)
    psi = np.array([0, h, -h, 0], dtype=complex)
    return float(np.real(psi.conj() @ np.kron(along(theta_a), along(theta_b)) @ psi))
