import numpy as np
import pytest

from singular_liouville.ansatz import BubbleParams, project_W_exact
from singular_liouville.grid import DiskField, PolarGrid
from singular_liouville.harness import (
    CSV_HEADER,
    MASS_TARGET,
    SweepResult,
    SweepRow,
    fit_bubble,
    mass_check,
    maxima_census,
    report,
    report_json,
    scale_of,
    scaling_check,
    sweep,
)
from singular_liouville.potential import CONSTANT, EXAMPLE
from singular_liouville.solver import SolveConfig, newton_solve


@pytest.fixture(scope="module")
def bubble_field():
    p = BubbleParams(lam=1.0, b=0.004 - 0.003j, delta=1e-3)
    g = PolarGrid.for_bubble(128, 64, p.b, p.delta)
    return p, g, project_W_exact(p, g.x)


def test_fit_exact_projection(bubble_field):
    p, g, W = bubble_field
    f = fit_bubble(DiskField(g, W))
    assert abs(f.params.b - p.b) < 1e-8 * abs(p.b)
    assert f.params.delta == pytest.approx(p.delta, rel=1e-8)
    assert f.confident


def test_fit_with_noise(bubble_field):
    p, g, W = bubble_field
    rng = np.random.default_rng(0)
    f = fit_bubble(DiskField(g, W + 1e-6 * rng.standard_normal(W.shape)))
    assert abs(f.params.b - p.b) < 1e-5 * abs(p.b)
    assert f.params.delta == pytest.approx(p.delta, rel=1e-5)


def test_radial_branch_fit_and_census():
    r = newton_solve(SolveConfig(lam=1e-2, coeffs=CONSTANT, n_r=128, n_theta=32))
    f = fit_bubble(r.w, lam=1e-2)
    assert abs(f.params.b) < 1e-8
    c = maxima_census(r)
    assert c.radial and c.count == 1


def _rows(bt, deltas, masses=None, converged=True):
    rows = []
    for k, (z, d) in enumerate(zip(bt, deltas)):
        rows.append(SweepRow(lam=32 * d**2, delta=d, b=z * scale_of(d),
                             mass=MASS_TARGET if masses is None else masses[k], phi_h1=d**1.9, min_sv=float("nan"),
                             n_newton=3, converged=converged, two_maxima=True, concentration=0.99))
    return rows


def test_scaling_and_mass_checks():
    deltas = np.geomspace(1e-2, 1e-4, 5)
    bt = [(1 - 1j) * (1 - 0.5 / np.log(1 / d)) for d in deltas]
    s = SweepResult(_rows(bt, deltas), EXAMPLE, (1.0, -1.0))
    sc = scaling_check(s)
    assert sc["error_decreasing"] and sc["delta_over_b_decreasing"]
    assert sc["terminal_error"] == pytest.approx(0.5 / np.log(1e4))
    assert sc["ok"]
    assert not scaling_check(s, tol=0.01)["ok"]
    assert not scaling_check(s, xi0=(0.0, 0.0))["ok"]
    assert mass_check(s)["ok"]
    s_bad = SweepResult(_rows(bt, deltas, masses=[MASS_TARGET * 1.1] * 5), EXAMPLE, (1.0, -1.0))
    assert not mass_check(s_bad)["ok"]
    with pytest.raises(ValueError):
        scaling_check(SweepResult(_rows(bt[:3], deltas[:3]), EXAMPLE, (1.0, -1.0)))


def test_report_keys_and_phi_exponent():
    deltas = np.geomspace(1e-2, 1e-5, 6)
    s = SweepResult(_rows([1 - 1j] * 6, deltas), EXAMPLE, (1.0, -1.0))
    rep = report(s)
    assert set(rep) >= {"potential", "xi0", "terminal_errors", "fitted_exponents", "pass_flags"}
    assert rep["fitted_exponents"]["phi_h1"] == pytest.approx(1.9, abs=1e-9)
    assert all(rep["pass_flags"].values())
    assert report_json(s) == report_json(s)


def test_csv_roundtrip():
    deltas = np.geomspace(1e-2, 1e-4, 4)
    s = SweepResult(_rows([0.9 - 1.1j] * 4, deltas), EXAMPLE, (1.0, -1.0))
    text = s.to_csv()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    back = SweepResult.from_csv(text, EXAMPLE)
    assert back.to_csv() == text
    assert [r.b for r in back.rows] == [r.b for r in s.rows]
    with pytest.raises(ValueError):
        SweepResult.from_csv("a,b\n", EXAMPLE)


def test_rows_sorted_by_decreasing_lambda():
    deltas = np.array([1e-4, 1e-2, 1e-3])
    s = SweepResult(_rows([1 - 1j] * 3, deltas), EXAMPLE, (1.0, -1.0))
    assert [r.delta for r in s.rows] == [1e-2, 1e-3, 1e-4]


def test_sweep_rejects_bad_schedule():
    with pytest.raises(ValueError):
        sweep(EXAMPLE, lam_max=1e-4, lam_min=1e-3)
    with pytest.raises(ValueError):
        sweep(EXAMPLE, ratio=1.5)
