"""Coupling strength reachable with a capacitively coupled charger.

The transmon battery couples to the charger through a capacitance ``C_Bn``.
With the battery charge element ``n10 = |<1|N|0>|`` the ratio of coupling to
plasma frequency is::

    g / omega_p = 4 e^2 n10 C_Bn / (C_B C_n) / sqrt(8 E_J E_C)

Using ``E_C = e^2 / (2 C_B)`` and E_J = 100 E_C this reduces to
``(sqrt(2) n10 / 5) (C_Bn / C_n)``, independent of C_B.
"""
from __future__ import annotations

import math

from scipy.constants import e, femto, h

from ..exceptions import ValidationError

DESIGN_RATIO = 100.0


def feasibility_prefactor(n10: float, ej_over_ec: float = DESIGN_RATIO) -> float:
    """``g/omega_p`` per unit ``C_Bn/C_n``, i.e. 8 n10 / sqrt(8 E_J/E_C)."""
    return 8.0 * n10 / math.sqrt(8.0 * ej_over_ec)


def feasibility_coupling(c_bn: float, c_n: float, n10: float, c_b: float | None = None,
                         ej_ghz: float | None = None, ec_ghz: float | None = None) -> float:
    """Ratio g/omega_p for capacitances in fF.

    Without energies the design point E_J = 100 E_C is assumed and ``c_b``
    drops out. With ``ej_ghz`` and ``ec_ghz`` (energies as frequencies, E/h)
    the general expression is evaluated and ``c_b`` is required.
    """
    if c_bn < 0:
        raise ValidationError(f"c_bn must be non-negative, got {c_bn}")
    if c_n <= 0 or (c_b is not None and c_b <= 0):
        raise ValidationError("capacitances must be positive")
    if ej_ghz is None and ec_ghz is None:
        return feasibility_prefactor(n10) * c_bn / c_n
    if ej_ghz is None or ec_ghz is None or c_b is None:
        raise ValueError("the general form needs ej_ghz, ec_ghz and c_b")
    if ej_ghz <= 0 or ec_ghz <= 0:
        raise ValidationError("energies must be positive")
    coupling = 4.0 * e ** 2 * n10 * (c_bn * femto) / ((c_b * femto) * (c_n * femto))
    plasma = h * 1e9 * math.sqrt(8.0 * ej_ghz * ec_ghz)
    return coupling / plasma
