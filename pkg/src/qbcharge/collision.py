"""Repeated battery-ancilla collisions.

Each collision couples the battery to a fresh two-level ancilla for a time
``tau`` under the constant generator::

    H = H_B (x) 1 + 1 (x) (Delta/2) sigma_z + g N (x) sigma_x

and then discards the ancilla. Ancilla matrices use the basis order
``(|1>, |0>)`` = (excited, ground), so ``sigma_z = diag(+1, -1)``.

Frames
------
``frame="interaction"`` (default) propagates every collision with
``U_I = exp(+i H_0 tau) exp(-i H tau)``, ``H_0`` being the uncoupled part,
i.e. the interaction-picture propagator whose clock restarts at the start of
each collision. On the battery this is lab-frame evolution followed by
undoing the free rotation ``exp(-i H_B tau)``. The ancilla therefore always
meets the battery with a fixed relative phase, and a resonant coherent
ancilla keeps adding amplitude collision after collision.

``frame="lab"`` applies ``exp(-i H tau)`` to the same fresh ancilla state every
time. The free battery rotation then dephases successive kicks and almost
no energy is stored. Both frames give the same figures of merit for a given
battery state (energy populations and the spectrum of ``rho`` are invariant
under ``exp(-i H_B t)``); they differ only in the iterated dynamics.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np

from .exceptions import ValidationError
from .observables import batch_observables
from .qcore import (UnitaryPropagator, expm_hermitian_generator, partial_trace_ancilla,
                    tensor)
from .transmon import Spectrum, TransmonSpec, solve_spectrum

Frame = Literal["interaction", "lab"]

STATE_ATOL = 1e-9
SIGMA_Z = np.diag([1.0, -1.0])
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
TRAJECTORY_COLUMNS = ("n", "E_over_Ef", "delta_E_over_Ef", "ergotropy_over_Ef",
                      "efficiency", "purity")
_CHUNK = 1024


@dataclass(frozen=True)
class AncillaSpec:
    """Charger state parameters.

    ``delta`` is the ancilla splitting in units of E_C; ``None`` means resonant
    with the first battery gap, scaled by ``1 + detuning``.
    """

    q: float = 0.5
    c: float = 1.0
    delta: float | None = None
    detuning: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValidationError(f"q must lie in [0, 1], got {self.q}")
        if not 0.0 <= self.c <= 1.0:
            raise ValidationError(f"c must lie in [0, 1], got {self.c}")

    def resolve_delta(self, spectrum: Spectrum) -> float:
        if self.delta is not None:
            return float(self.delta)
        return spectrum.gap(0) * (1.0 + self.detuning)


@dataclass(frozen=True)
class ProtocolConfig:
    coupling_g: float            # units of omega_p
    tau: float = 1.0             # units of tau_p = 1/omega_p
    n_collisions: int = 1000
    transmon: TransmonSpec = field(default_factory=TransmonSpec)
    ancilla: AncillaSpec = field(default_factory=AncillaSpec)
    record_every: int = 1
    frame: Frame = "interaction"

    def __post_init__(self):
        if not self.coupling_g > 0:
            raise ValidationError(f"coupling_g must be positive, got {self.coupling_g}")
        if not self.tau > 0:
            raise ValidationError(f"tau must be positive, got {self.tau}")
        if self.n_collisions < 0 or self.record_every < 1:
            raise ValidationError("n_collisions must be >= 0 and record_every >= 1")
        if self.frame not in ("interaction", "lab"):
            raise ValidationError(f"unknown frame {self.frame!r}")
        if not 1e-3 <= self.coupling_g < 1e-1:
            warnings.warn(f"coupling g/omega_p={self.coupling_g:g} is outside 1e-3..1e-1",
                          RuntimeWarning, stacklevel=2)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    """Observables recorded along one collision run; energies in units of E_f."""

    n: np.ndarray
    energy: np.ndarray
    stored_energy: np.ndarray
    ergotropy: np.ndarray
    efficiency: np.ndarray
    purity: np.ndarray
    config: ProtocolConfig | None = None
    final_state: np.ndarray | None = field(default=None, repr=False)
    min_eigenvalue: float = 0.0
    checks: int = 0

    def __len__(self):
        return len(self.n)

    @property
    def points(self):
        return list(zip(self.n.tolist(), self.energy.tolist(), self.stored_energy.tolist(),
                        self.ergotropy.tolist(), self.efficiency.tolist(),
                        self.purity.tolist()))

    def window(self, start: int, stop: int) -> "Trajectory":
        """Sub-trajectory with ``start <= n < stop``."""
        m = (self.n >= start) & (self.n < stop)
        return Trajectory(self.n[m], self.energy[m], self.stored_energy[m],
                          self.ergotropy[m], self.efficiency[m], self.purity[m],
                          config=self.config)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for row in zip(self.n, self.energy, self.stored_energy, self.ergotropy,
                       self.efficiency, self.purity):
            w.writerow([int(row[0])] + [_fmt(x) for x in row[1:]])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    @classmethod
    def from_csv(cls, path, config: ProtocolConfig | None = None) -> "Trajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TRAJECTORY_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [[float(x) if x else math.nan for x in r] for r in reader]
        a = np.array(rows, dtype=float).reshape(-1, len(TRAJECTORY_COLUMNS))
        return cls(a[:, 0].astype(int), *(a[:, i] for i in range(1, 6)), config=config)


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else f"{x:.12g}"


def trajectory_filename(config: ProtocolConfig) -> str:
    a = config.ancilla
    name = (f"traj_r{config.transmon.ej_over_ec:g}_g{config.coupling_g:g}"
            f"_tau{config.tau:g}_q{a.q:g}_c{a.c:g}")
    if a.detuning:
        name += f"_det{a.detuning:g}"
    return name + ".csv"


def ancilla_state(spec: AncillaSpec) -> np.ndarray:
    """2x2 charger state in the (|1>, |0>) basis."""
    q, c = spec.q, spec.c
    coh = c * math.sqrt(q * (1.0 - q))
    return np.array([[1.0 - q, coh], [coh, q]], dtype=complex)


def _free_hamiltonian(spectrum: Spectrum, delta: float) -> np.ndarray:
    return (tensor(np.diag(spectrum.shifted_levels), np.eye(2))
            + tensor(np.eye(spectrum.dim), 0.5 * delta * SIGMA_Z))


def total_hamiltonian(spectrum: Spectrum, spec: AncillaSpec, coupling_g: float) -> np.ndarray:
    """Collision generator in units of E_C, with ``coupling_g`` given in units of omega_p."""
    if coupling_g < 0 or coupling_g >= 1.0:
        raise ValueError(
            f"coupling_g={coupling_g} must be in units of omega_p (0 <= g < 1); "
            "values in E_C units must be divided by omega_p first")
    g = coupling_g * spectrum.spec.plasma_frequency
    h0 = _free_hamiltonian(spectrum, spec.resolve_delta(spectrum))
    return h0 + g * tensor(spectrum.charge_matrix, SIGMA_X)


def collision_propagator(spectrum: Spectrum, spec: AncillaSpec, coupling_g: float,
                         tau: float, frame: Frame = "interaction") -> UnitaryPropagator:
    """Unitary for one collision of duration ``tau`` (units of tau_p)."""
    h = total_hamiltonian(spectrum, spec, coupling_g)
    t = tau * spectrum.spec.plasma_time
    prop = expm_hermitian_generator(h, t)
    if frame == "lab":
        return prop
    if frame != "interaction":
        raise ValueError(f"unknown frame {frame!r}")
    h0 = np.real(np.diagonal(_free_hamiltonian(spectrum, spec.resolve_delta(spectrum))))
    u = np.exp(1j * h0 * t)[:, None] * prop.matrix
    return UnitaryPropagator(u, prop.generator_hash + ":interaction")


@lru_cache(maxsize=256)
def _cached_channel(transmon: TransmonSpec, ancilla: AncillaSpec, coupling_g: float,
                    tau: float, frame: str):
    spectrum = solve_spectrum(transmon)
    prop = collision_propagator(spectrum, ancilla, coupling_g, tau, frame)
    return spectrum, prop, kraus_operators(prop, ancilla_state(ancilla))


def kraus_operators(prop: UnitaryPropagator, ancilla_rho: np.ndarray) -> list[np.ndarray]:
    """Kraus operators of rho -> Tr_A[U (rho (x) ancilla_rho) U^dagger]."""
    d = prop.dim // 2
    u4 = prop.matrix.reshape(d, 2, d, 2)
    p, v = np.linalg.eigh(ancilla_rho)
    ops = []
    for k in range(2):
        if p[k] <= 0:
            continue
        for a in range(2):
            ops.append(math.sqrt(p[k]) * (u4[:, a, :, :] @ v[:, k]))
    return ops


def superoperator(kraus: list[np.ndarray]) -> np.ndarray:
    """Matrix acting on row-major ``rho.ravel()``."""
    return sum(np.kron(k, k.conj()) for k in kraus)


def collision_step(rho_b, prop: UnitaryPropagator, ancilla_rho,
                   index: int | None = None) -> np.ndarray:
    """One application of the collision map, via the full composite state."""
    rho_b = np.asarray(rho_b)
    d = rho_b.shape[0]
    u = prop.matrix if isinstance(prop, UnitaryPropagator) else np.asarray(prop)
    if u.shape[0] != 2 * d:
        raise ValidationError(f"propagator dim {u.shape[0]} does not match 2*{d}")
    joint = u @ tensor(rho_b, ancilla_rho) @ u.conj().T
    out = partial_trace_ancilla(joint, d, 2)
    _check_state(out, index)
    return out


def _check_state(rho, index):
    where = "" if index is None else f" after collision {index}"
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    if herm > STATE_ATOL:
        raise ValidationError(f"state not Hermitian{where}: {herm:.2e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > STATE_ATOL:
        raise ValidationError(f"trace {tr:.12g} != 1{where}")


def run_protocol(config: ProtocolConfig) -> Trajectory:
    """Charge the battery from its ground state with ``config.n_collisions`` collisions."""
    spectrum, _, kraus = _cached_channel(config.transmon, config.ancilla,
                                         float(config.coupling_g), float(config.tau),
                                         config.frame)
    d = spectrum.dim
    e = spectrum.shifted_levels
    e_f = spectrum.e_f
    smat = superoperator(kraus)
    x = np.zeros(d * d, dtype=complex)
    x[0] = 1.0

    recorded_n = list(range(0, config.n_collisions + 1, config.record_every))
    energies, ergs, purs = [], [], []
    min_eig = math.inf
    buf, buf_n = [], []

    def flush():
        nonlocal min_eig
        states = np.array(buf).reshape(-1, d, d)
        herm = np.max(np.abs(states - np.conj(np.swapaxes(states, 1, 2))), axis=(1, 2))
        tr = np.real(np.trace(states, axis1=1, axis2=2))
        en, erg, pur, lam = batch_observables(states, e)
        bad = (herm > STATE_ATOL) | (np.abs(tr - 1.0) > STATE_ATOL) | (lam < -STATE_ATOL)
        bad |= ~np.isfinite(en) | ~np.isfinite(erg)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(
                f"invalid battery state after collision {buf_n[i]}: herm={herm[i]:.2e}, "
                f"trace={tr[i]:.12g}, min eig={lam[i]:.2e}")
        min_eig = min(min_eig, float(lam.min()))
        energies.append(en)
        ergs.append(erg)
        purs.append(pur)
        buf.clear()
        buf_n.clear()

    for k in range(config.n_collisions + 1):
        if k:
            x = smat @ x
        if k % config.record_every == 0:
            buf.append(x.copy())
            buf_n.append(k)
            if len(buf) >= _CHUNK:
                flush()
    if buf:
        flush()

    stored = np.concatenate(energies)
    erg = np.concatenate(ergs)
    with np.errstate(divide="ignore", invalid="ignore"):
        eff = np.where(stored > 1e-12, erg / stored, np.nan)
    return Trajectory(
        n=np.asarray(recorded_n),
        energy=(stored + spectrum.ground_energy) / e_f,
        stored_energy=stored / e_f,
        ergotropy=erg / e_f,
        efficiency=eff,
        purity=np.concatenate(purs),
        config=config,
        final_state=x.reshape(d, d),
        min_eigenvalue=min_eig,
        checks=len(recorded_n),
    )
