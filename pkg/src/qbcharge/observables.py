"""Figures of merit of a battery state: stored energy, ergotropy, efficiency.

States are expected in the energy eigenbasis of the battery. Energies are
measured from the ground level (E_0 = 0), which keeps the efficiency ratio
in [0, 1]; pass ``energy_zero="raw"`` to :func:`efficiency` for the ratio
against the unshifted energy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError
from .transmon import Spectrum

ERGOTROPY_CLAMP = 1e-10
EFFICIENCY_MIN_ENERGY = 1e-12


@dataclass(frozen=True)
class ErgotropyResult:
    ergotropy: float
    energy: float
    passive_energy: float
    # permutation[j] = energy level receiving the j-th largest population
    permutation: np.ndarray = field(repr=False)
    populations: np.ndarray = field(repr=False)

    def passive_state(self, dim: int | None = None) -> np.ndarray:
        dim = len(self.populations) if dim is None else dim
        p = np.zeros(dim)
        p[self.permutation] = self.populations
        return np.diag(p)


def _energies(spectrum_or_levels) -> np.ndarray:
    if isinstance(spectrum_or_levels, Spectrum):
        return spectrum_or_levels.shifted_levels
    return np.asarray(spectrum_or_levels, dtype=float)


def stored_energy(rho, spectrum) -> float:
    """Energy above the ground state, sum_m (E_m - E_0) rho_mm."""
    e = _energies(spectrum)
    return float(np.real(np.diagonal(rho)) @ e)


def ergotropy(rho, spectrum) -> ErgotropyResult:
    """Maximal unitarily extractable energy of ``rho``.

    The passive state places the populations (eigenvalues of ``rho``, sorted
    in descending order, ties kept in index order) on the energy levels in
    ascending order.
    """
    e = _energies(spectrum)
    rho = np.asarray(rho)
    if not np.all(np.isfinite(rho)):
        raise ValidationError("state has non-finite entries")
    p = np.linalg.eigvalsh(rho)
    if not np.all(np.isfinite(p)):
        raise ValidationError("state has non-finite eigenvalues")
    order = np.argsort(-p, kind="stable")
    p_desc = p[order]
    levels_asc = np.argsort(e, kind="stable")
    energy = stored_energy(rho, e)
    passive = float(p_desc @ e[levels_asc])
    erg = energy - passive
    if erg < 0:
        if erg < -ERGOTROPY_CLAMP:
            raise ValidationError(f"negative ergotropy {erg:.3e}")
        erg = 0.0
    return ErgotropyResult(ergotropy=erg, energy=energy, passive_energy=passive,
                           permutation=levels_asc, populations=p_desc)


def ergotropy_from_projections(rho, spectrum) -> float:
    """sum_{j,k} p_j E_k (|<p_j|E_k>|^2 - delta_jk), with rho's eigenvectors.

    Written directly from the sorted-rearrangement formula; used as a
    cross-check of :func:`ergotropy`.
    """
    e = np.sort(_energies(spectrum))
    p, vecs = np.linalg.eigh(np.asarray(rho))
    p, vecs = p[::-1], vecs[:, ::-1]
    overlap = np.abs(vecs) ** 2  # overlap[k, j] = |<E_k|p_j>|^2
    return float(np.einsum("j,k,kj->", p, e, overlap) - p @ e)


def efficiency(rho, spectrum, energy_zero: str = "ground") -> float:
    """Ergotropy divided by energy; NaN when the energy is (numerically) zero."""
    res = ergotropy(rho, spectrum)
    if energy_zero == "ground":
        denom = res.energy
    elif energy_zero == "raw":
        if not isinstance(spectrum, Spectrum):
            raise ValueError("raw energy zero needs a Spectrum")
        denom = res.energy + spectrum.ground_energy
    else:
        raise ValueError(f"unknown energy_zero {energy_zero!r}")
    if abs(denom) <= EFFICIENCY_MIN_ENERGY:
        return float("nan")
    return res.ergotropy / denom


def batch_observables(states: np.ndarray, energies: np.ndarray):
    """Vectorized (energy, ergotropy, purity, min eigenvalue) over a stack of states."""
    diag = np.real(np.diagonal(states, axis1=1, axis2=2))
    energy = diag @ energies
    p = np.linalg.eigvalsh(states)
    passive = p[:, ::-1] @ np.sort(energies)
    erg = energy - passive
    erg = np.where((erg < 0) & (erg >= -ERGOTROPY_CLAMP), 0.0, erg)
    pur = np.einsum("nij,nji->n", states, states).real
    return energy, erg, pur, p[:, 0]
