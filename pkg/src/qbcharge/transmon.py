"""Transmon battery spectrum in the Cooper-pair charge basis.

All energies are in units of the charging energy E_C unless a name says
otherwise. The Hamiltonian is::

    H = 4 (N - N_g)^2 - (E_J/E_C) cos(phi)

with ``cos(phi) = (|N><N+1| + h.c.) / 2`` in the charge basis
``N = -N_max, ..., N_max``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Literal

import numpy as np

from .exceptions import ConvergenceError, ValidationError
from .qcore import eig_hermitian

CONVERGENCE_RTOL = 1e-8
CONVERGENCE_EXTRA_CHARGES = 10
# Cutoff guard: N_max >= CUTOFF_FACTOR * sqrt(E_J/E_C).
CUTOFF_FACTOR = 3.0


@dataclass(frozen=True)
class TransmonSpec:
    """Circuit parameters and numerical cutoffs of the battery."""

    ej_over_ec: float = 100.0
    ng: float = 0.0
    charge_cutoff: int = 35
    battery_levels: int = 15

    def __post_init__(self):
        if not self.ej_over_ec > 0:
            raise ValidationError(f"ej_over_ec must be positive, got {self.ej_over_ec}")
        if self.charge_cutoff < 1 or self.battery_levels < 1:
            raise ValidationError("charge_cutoff and battery_levels must be positive integers")
        if self.battery_levels > 2 * self.charge_cutoff + 1:
            raise ValidationError(
                f"battery_levels={self.battery_levels} exceeds charge-basis dimension "
                f"{2 * self.charge_cutoff + 1}")
        if self.charge_cutoff < CUTOFF_FACTOR * math.sqrt(self.ej_over_ec):
            raise ValidationError(
                f"charge_cutoff={self.charge_cutoff} is below "
                f"{CUTOFF_FACTOR:g}*sqrt(E_J/E_C)={CUTOFF_FACTOR * math.sqrt(self.ej_over_ec):.1f}")

    @property
    def plasma_frequency(self) -> float:
        """omega_p = sqrt(8 E_J E_C), in units of E_C."""
        return math.sqrt(8.0 * self.ej_over_ec)

    @property
    def plasma_time(self) -> float:
        """tau_p = 1/omega_p, in units of 1/E_C."""
        return 1.0 / self.plasma_frequency

    @property
    def charge_dim(self) -> int:
        return 2 * self.charge_cutoff + 1


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Diagonalized battery.

    ``levels`` holds the lowest ``battery_levels`` eigenvalues (unshifted, in
    units of E_C); ``charge_matrix`` is N in that eigenbasis.
    """

    spec: TransmonSpec
    levels: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    charge_matrix: np.ndarray = field(repr=False)
    all_levels: np.ndarray = field(repr=False)
    converged_shift: float = 0.0

    @property
    def well_top(self) -> float:
        return self.spec.ej_over_ec

    @property
    def ground_energy(self) -> float:
        return float(self.levels[0])

    @property
    def e_f(self) -> float:
        """Charging ceiling E_J - E_0 (units of E_C)."""
        return self.well_top - self.ground_energy

    @property
    def shifted_levels(self) -> np.ndarray:
        """Levels with the ground state at zero."""
        return self.levels - self.levels[0]

    @property
    def bound_mask(self) -> np.ndarray:
        return self.all_levels < self.well_top

    @property
    def bound_count(self) -> int:
        return int(np.count_nonzero(self.bound_mask))

    @property
    def dim(self) -> int:
        return len(self.levels)

    def gap(self, m: int = 0) -> float:
        return float(self.levels[m + 1] - self.levels[m])


def charge_states(spec: TransmonSpec) -> np.ndarray:
    return np.arange(-spec.charge_cutoff, spec.charge_cutoff + 1, dtype=float)


def build_charge_hamiltonian(spec: TransmonSpec) -> np.ndarray:
    """Real symmetric tridiagonal battery Hamiltonian in the charge basis."""
    n = charge_states(spec)
    off = np.full(len(n) - 1, -0.5 * spec.ej_over_ec)
    return np.diag(4.0 * (n - spec.ng) ** 2) + np.diag(off, 1) + np.diag(off, -1)


def _diagonalize(spec: TransmonSpec):
    w, v = eig_hermitian(build_charge_hamiltonian(spec))
    return w, v


def _level_shift(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1.0)))


@lru_cache(maxsize=64)
def solve_spectrum(spec: TransmonSpec, check_convergence: bool = True) -> Spectrum:
    """Diagonalize the battery and project the charge operator onto the retained levels.

    With ``check_convergence`` the problem is re-solved with the charge cutoff
    raised by ten; a relative shift of any retained level above 1e-8 raises
    :class:`ConvergenceError`.
    """
    w, v = _diagonalize(spec)
    d = spec.battery_levels
    shift = 0.0
    if check_convergence:
        bigger = replace(spec, charge_cutoff=spec.charge_cutoff + CONVERGENCE_EXTRA_CHARGES)
        w2, _ = _diagonalize(bigger)
        shift = _level_shift(w[:d], w2[:d])
        if shift > CONVERGENCE_RTOL:
            raise ConvergenceError(
                f"retained levels shift by {shift:.2e} (> {CONVERGENCE_RTOL:.0e}) when the "
                f"charge cutoff is raised; increase charge_cutoff above {spec.charge_cutoff}")
    vd = v[:, :d]
    charge = vd.T @ (charge_states(spec)[:, None] * vd)
    levels = w[:d]
    if np.any(np.diff(levels) <= 0):
        warnings.warn("degenerate levels in the retained window", RuntimeWarning, stacklevel=2)
    return Spectrum(spec=spec, levels=levels, eigenvectors=vd, charge_matrix=charge,
                    all_levels=w, converged_shift=shift)


def perturbative_level(spec: TransmonSpec, m: int) -> float:
    """Low-order perturbative estimate of level ``m`` (units of E_C)."""
    if m < 0:
        raise ValueError("level index must be non-negative")
    wp = spec.plasma_frequency
    return -spec.ej_over_ec + wp * (m + 0.5) - 0.25 * (2 * m * m + 2 * m + 1)


def relative_anharmonicity(spec: TransmonSpec, m: int = 0,
                           mode: Literal["exact", "approximate"] = "exact") -> float:
    """|dE_{m+1} - dE_m| / dE_0, or its large-E_J/E_C limit sqrt(E_C / 8 E_J)."""
    if mode == "approximate":
        return math.sqrt(1.0 / (8.0 * spec.ej_over_ec))
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    if m < 0 or m + 2 >= spec.battery_levels:
        raise IndexError(f"need levels up to m+2={m + 2}, only {spec.battery_levels} retained")
    e = solve_spectrum(spec).levels
    gaps = np.diff(e)
    return float(abs(gaps[m + 1] - gaps[m]) / gaps[0])


def bound_state_estimate(spec: TransmonSpec) -> float:
    return math.sqrt(spec.ej_over_ec)


def charge_matrix_element(spectrum: Spectrum, m: int, mp: int) -> complex:
    return complex(spectrum.charge_matrix[m, mp])


def harmonic_charge_element(ej_over_ec: float, m: int = 0) -> float:
    """|<m+1|N|m>| of the harmonic approximation, (8 E_J/E_C)^(1/4) sqrt(m+1) / 4."""
    return (8.0 * ej_over_ec) ** 0.25 * math.sqrt(m + 1) / 4.0


def charge_dispersion(spec: TransmonSpec, ngs, n_levels: int = 4) -> np.ndarray:
    """Lowest ``n_levels`` levels (units of E_C) for each gate offset in ``ngs``."""
    rows = []
    for ng in ngs:
        w, _ = _diagonalize(replace(spec, ng=float(ng)))
        rows.append(w[:n_levels])
    return np.array(rows)


def write_spectrum_csv(spectrum: Spectrum, path) -> None:
    ej = spectrum.spec.ej_over_ec
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "E_m_over_EJ", "E_m_over_EC", "bound_flag"])
        for m, e in enumerate(spectrum.levels):
            w.writerow([m, f"{e / ej:.12g}", f"{e:.12g}", int(e < spectrum.well_top)])


def write_dispersion_csv(spec: TransmonSpec, path, ngs=None, n_levels: int = 4) -> None:
    ngs = np.linspace(0.0, 1.0, 41) if ngs is None else np.asarray(ngs)
    table = charge_dispersion(spec, ngs, n_levels)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ng"] + [f"E_{m}_over_EJ" for m in range(n_levels)])
        for ng, row in zip(ngs, table):
            w.writerow([f"{ng:.12g}"] + [f"{e / spec.ej_over_ec:.12g}" for e in row])
