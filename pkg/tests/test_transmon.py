import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbcharge.exceptions import ConvergenceError, ValidationError
from qbcharge.transmon import (TransmonSpec, bound_state_estimate, build_charge_hamiltonian,
                               charge_dispersion, charge_matrix_element, perturbative_level,
                               relative_anharmonicity, solve_spectrum, write_dispersion_csv,
                               write_spectrum_csv)

DESK = TransmonSpec()


def eq_levels(ratio, m):
    """Independent evaluation of -E_J + w_p (m + 1/2) - (E_C/4)(2m^2 + 2m + 1), E_C = 1."""
    wp = math.sqrt(8 * ratio)
    return -ratio + wp * (m + 0.5) - (2 * m * m + 2 * m + 1) / 4


def test_spec_accessors():
    assert DESK.plasma_frequency == pytest.approx(math.sqrt(800))
    assert DESK.plasma_time == pytest.approx(1 / math.sqrt(800))
    assert DESK.charge_dim == 71


def test_spec_validation():
    with pytest.raises(ValidationError):
        TransmonSpec(ej_over_ec=-1)
    with pytest.raises(ValidationError, match="exceeds"):
        TransmonSpec(ej_over_ec=1, charge_cutoff=3, battery_levels=8)
    with pytest.raises(ValidationError, match="below"):
        TransmonSpec(ej_over_ec=100, charge_cutoff=20)


def test_hamiltonian_without_josephson_is_diagonal():
    spec = TransmonSpec(ej_over_ec=1e-9, charge_cutoff=5, battery_levels=3)
    h = build_charge_hamiltonian(spec)
    n = np.arange(-5, 6)
    assert np.allclose(np.diag(h), 4 * n ** 2)
    assert np.max(np.abs(h - np.diag(np.diag(h)))) < 1e-9


def test_hamiltonian_parity_symmetric_at_zero_offset():
    h = build_charge_hamiltonian(DESK)
    p = np.fliplr(np.eye(DESK.charge_dim))
    assert np.array_equal(p @ h @ p, h)
    assert np.array_equal(h, h.T)


def test_ground_energy_close_to_perturbative():
    e0 = solve_spectrum(DESK).ground_energy
    assert eq_levels(100, 0) == pytest.approx(-86.108, abs=1e-3)
    assert abs(e0 - eq_levels(100, 0)) <= 0.01 * abs(eq_levels(100, 0))


def test_bound_count_desk():
    assert solve_spectrum(DESK).bound_count == 9


def test_first_gap():
    gap = solve_spectrum(DESK).gap(0)
    assert abs(gap - (math.sqrt(800) - 1)) <= 0.02 * gap


def test_levels_strictly_increasing_and_converged():
    s = solve_spectrum(DESK)
    assert np.all(np.diff(s.levels) > 0)
    assert s.converged_shift <= 1e-8
    big = solve_spectrum(replace(DESK, charge_cutoff=70))
    rel = np.abs(big.levels - s.levels) / np.maximum(np.abs(s.levels), 1)
    assert rel.max() <= 1e-8


def test_convergence_error_when_cutoff_too_small():
    spec = TransmonSpec(ej_over_ec=1.0, charge_cutoff=3, battery_levels=7)
    with pytest.raises(ConvergenceError, match="charge_cutoff"):
        solve_spectrum(spec)


def test_perturbative_formula():
    assert perturbative_level(DESK, 0) == pytest.approx(eq_levels(100, 0), abs=1e-12)
    for ratio in (10.0, 50.0, 100.0, 400.0):
        spec = TransmonSpec(ej_over_ec=ratio, charge_cutoff=int(3 * math.sqrt(ratio)) + 5)
        gap = perturbative_level(spec, 1) - perturbative_level(spec, 0)
        assert gap == pytest.approx(spec.plasma_frequency - 1.0)


def test_perturbative_agreement_grows_with_level():
    # the literal m <= 5 bound lives in the acceptance suite; m = 4, 5 miss it
    s = solve_spectrum(DESK)
    diffs = [abs(perturbative_level(DESK, m) - s.levels[m]) for m in range(6)]
    assert max(diffs[:4]) < 0.5
    assert all(b >= a for a, b in zip(diffs, diffs[1:]))


def test_levels_match_mathieu_characteristic_values():
    # 4 N^2 - E_J cos(phi) at N_g = 0 maps onto Mathieu's equation with
    # q = -E_J / 2; levels are a_0, b_2, a_2, b_4, ... in ascending order
    from scipy.special import mathieu_a, mathieu_b

    q = -DESK.ej_over_ec / 2
    ref = sorted([mathieu_a(2 * k, q) for k in range(8)] + [mathieu_b(2 * k, q) for k in range(1, 8)])
    s = solve_spectrum(DESK)
    assert np.max(np.abs(s.levels[:12] - np.array(ref[:12]))) < 1e-8


def test_anharmonicity():
    assert relative_anharmonicity(DESK, mode="approximate") == pytest.approx(math.sqrt(1 / 800))
    a10 = relative_anharmonicity(TransmonSpec(ej_over_ec=10, charge_cutoff=15), mode="approximate")
    assert a10 == pytest.approx(0.1118, abs=1e-4)
    assert a10 / relative_anharmonicity(DESK, mode="approximate") == pytest.approx(math.sqrt(10))
    exact = relative_anharmonicity(DESK, 0)
    approx = relative_anharmonicity(DESK, 0, mode="approximate")
    assert abs(exact - approx) <= 0.15 * exact
    with pytest.raises(IndexError):
        relative_anharmonicity(DESK, m=13)


def test_bound_state_estimate():
    assert bound_state_estimate(DESK) == pytest.approx(10)
    assert bound_state_estimate(TransmonSpec(ej_over_ec=1, charge_cutoff=10)) == pytest.approx(1)
    assert abs(bound_state_estimate(DESK) - solve_spectrum(DESK).bound_count) <= 2


def test_parity_selection_rule():
    s = solve_spectrum(DESK)
    for m in range(s.dim):
        for mp in range(s.dim):
            if (m - mp) % 2 == 0:
                assert abs(charge_matrix_element(s, m, mp)) <= 1e-8
    assert np.max(np.abs(s.charge_matrix - s.charge_matrix.conj().T)) < 1e-12


@pytest.mark.parametrize("ratio, expected", [(100.0, 800 ** 0.25 / 4), (10.0, 80 ** 0.25 / 4)])
def test_charge_element_harmonic_limit(ratio, expected):
    s = solve_spectrum(TransmonSpec(ej_over_ec=ratio, charge_cutoff=max(35, int(3 * ratio ** .5) + 5),
                                    battery_levels=6))
    assert abs(abs(charge_matrix_element(s, 1, 0)) - expected) <= 0.10 * expected


def test_dispersion_low_levels_flat_at_large_ratio():
    table = charge_dispersion(DESK, np.linspace(0, 1, 21), n_levels=4)
    spread = table.max(axis=0) - table.min(axis=0)
    assert np.all(spread / np.abs(table[0]) <= 1e-4)


def test_dispersion_offset_quarter():
    s0 = charge_dispersion(DESK, [0.0], 4)[0]
    s1 = charge_dispersion(DESK, [0.25], 4)[0]
    assert np.max(np.abs(s1 - s0) / np.abs(s0)) <= 1e-4


def test_dispersion_strong_at_small_ratio():
    spec = TransmonSpec(ej_over_ec=1.0, charge_cutoff=10, battery_levels=4)
    e0 = charge_dispersion(spec, np.linspace(0, 1, 21), 1)[:, 0]
    assert (e0.max() - e0.min()) > 0.10 * abs(e0).max()


def test_spectrum_csv(tmp_path):
    s = solve_spectrum(DESK)
    write_spectrum_csv(s, tmp_path / "s.csv")
    raw = (tmp_path / "s.csv").read_bytes()
    assert b"\r\n" not in raw
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert list(rows[0]) == ["m", "E_m_over_EJ", "E_m_over_EC", "bound_flag"]
    assert sum(int(r["bound_flag"]) for r in rows) == 9
    assert float(rows[0]["E_m_over_EC"]) == pytest.approx(s.levels[0], rel=1e-11)
    write_dispersion_csv(DESK, tmp_path / "d.csv")
    drows = list(csv.reader(open(tmp_path / "d.csv")))
    assert drows[0] == ["ng", "E_0_over_EJ", "E_1_over_EJ", "E_2_over_EJ", "E_3_over_EJ"]
    assert len(drows) == 42


@settings(max_examples=25, deadline=None)
@given(st.floats(5.0, 200.0), st.floats(0.0, 1.0))
def test_spectrum_invariants(ratio, ng):
    spec = TransmonSpec(ej_over_ec=ratio, ng=ng, charge_cutoff=int(3 * math.sqrt(ratio)) + 12,
                        battery_levels=8)
    s = solve_spectrum(spec)
    assert np.all(np.diff(s.levels) > 0)
    assert s.bound_count == int(np.sum(s.all_levels < ratio))
    assert s.e_f == pytest.approx(ratio - s.levels[0])
    assert np.max(np.abs(s.charge_matrix - s.charge_matrix.conj().T)) < 1e-10
