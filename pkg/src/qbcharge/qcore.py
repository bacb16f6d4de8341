"""Dense complex linear algebra for small quantum systems.

Operators and states are plain ``numpy`` arrays. Composite spaces use a
battery-major index convention: for a battery of dimension ``d_B`` and an
ancilla of dimension ``d_A`` the composite index is ``i = b * d_A + a``,
which is exactly what :func:`numpy.kron` produces for ``kron(battery, ancilla)``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-10
POSITIVITY_ATOL = 1e-10
UNITARITY_ATOL = 1e-10


def _as_square(a, name="matrix"):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {a.shape}")
    return a


def hermiticity_error(a) -> float:
    """Largest absolute entry of ``a - a^dagger``."""
    a = _as_square(a)
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def check_hermitian(a, atol: float = HERMITIAN_ATOL, name: str = "operator"):
    a = _as_square(a, name)
    err = hermiticity_error(a)
    if err > atol:
        raise ValidationError(
            f"{name} is not Hermitian: max |A - A^dagger| = {err:.3e} > {atol:.1e}")
    return a


def check_density_matrix(rho, herm_atol: float = HERMITIAN_ATOL,
                         trace_atol: float = TRACE_ATOL,
                         pos_atol: float = POSITIVITY_ATOL, name: str = "state"):
    """Raise :class:`ValidationError` unless ``rho`` is a valid density matrix.

    Returns the array unchanged so the call can be chained.
    """
    rho = check_hermitian(rho, herm_atol, name)
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_atol:
        raise ValidationError(f"{name} has trace {tr.real:.12g}, expected 1 (atol {trace_atol:.1e})")
    lam_min = float(np.linalg.eigvalsh(rho)[0])
    if lam_min < -pos_atol:
        raise ValidationError(f"{name} has negative eigenvalue {lam_min:.3e}")
    return rho


def is_density_matrix(rho, **tols) -> bool:
    try:
        check_density_matrix(rho, **tols)
    except ValidationError:
        return False
    return True


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of every column real and positive.

    Near-ties (within 1e-9 relative) resolve to the lowest index so that the
    choice is stable against roundoff, e.g. for parity eigenvectors whose
    components at ``N`` and ``-N`` have equal magnitude.
    """
    v = np.array(vectors, copy=True)
    mags = np.abs(v)
    top = mags.max(axis=0)
    for k in range(v.shape[1]):
        idx = int(np.flatnonzero(mags[:, k] >= top[k] * (1 - 1e-9))[0])
        comp = v[idx, k]
        if comp != 0:
            v[:, k] *= np.conj(comp) / abs(comp)
    if np.isrealobj(vectors):
        v = v.real
    return v


def eig_hermitian(h):
    """Eigendecomposition of a Hermitian matrix.

    Returns ascending eigenvalues and a unitary matrix whose columns are the
    eigenvectors, with the phase convention of :func:`fix_phases`.
    """
    h = check_hermitian(h)
    w, v = np.linalg.eigh(h)
    return w, fix_phases(v)


@dataclass(frozen=True)
class UnitaryPropagator:
    """``exp(-i H t)`` together with an identifier of the generator it came from."""

    matrix: np.ndarray = field(repr=False)
    generator_hash: str

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def unitarity_error(self) -> float:
        u = self.matrix
        return float(np.max(np.abs(u @ u.conj().T - np.eye(self.dim))))


def generator_hash(h, t: float) -> str:
    h = np.ascontiguousarray(h, dtype=complex)
    digest = hashlib.sha1(h.tobytes())
    digest.update(np.float64(t).tobytes())
    return digest.hexdigest()


def expm_hermitian_generator(h, t: float) -> UnitaryPropagator:
    """Propagator ``exp(-i H t)`` built from the spectral decomposition of ``H``."""
    w, v = eig_hermitian(h)
    u = (v * np.exp(-1j * w * t)) @ v.conj().T
    prop = UnitaryPropagator(u, generator_hash(h, t))
    err = prop.unitarity_error()
    if err > UNITARITY_ATOL:
        raise ValidationError(f"propagator not unitary: max |UU^dagger - I| = {err:.3e}")
    return prop


def tensor(a, b) -> np.ndarray:
    """Battery-major tensor product ``a (x) b``."""
    a = _as_square(a, "left factor")
    b = _as_square(b, "right factor")
    return np.kron(a, b)


def partial_trace_ancilla(rho, d_b: int, d_a: int) -> np.ndarray:
    """Trace out the (trailing) ancilla factor of a battery-major composite operator."""
    rho = _as_square(rho, "composite operator")
    if rho.shape[0] != d_b * d_a:
        raise ValidationError(
            f"dimension {rho.shape[0]} does not factor as {d_b} x {d_a}")
    return np.trace(rho.reshape(d_b, d_a, d_b, d_a), axis1=1, axis2=3)


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.vdot(rho.conj().T, rho)))
