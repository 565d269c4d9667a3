import json
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from volpres.energy import EnergySpec
from volpres.errors import SolverError
from volpres.fieldgrid import MapSpec
from volpres.limits import (Problem, SweepReport, cell_gradients, gradient_check, kappa_sweep, lbfgs,
                            minimize_energy, vertex_grid)


def rosen(x):
    f = np.sum(100 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2)
    g = np.zeros_like(x)
    g[:-1] = -400 * x[:-1] * (x[1:] - x[:-1] ** 2) - 2 * (1 - x[:-1])
    g[1:] += 200 * (x[1:] - x[:-1] ** 2)
    return f, g


def test_lbfgs_rosenbrock():
    x, info = lbfgs(rosen, np.full(6, -1.0), rtol=1e-10)
    ref = minimize(lambda z: rosen(z)[0], np.full(6, -1.0), jac=lambda z: rosen(z)[1], method="BFGS", tol=1e-12)
    assert info.converged
    np.testing.assert_allclose(x, ref.x, atol=1e-5)


def test_lbfgs_barrier_error():
    def f(x):
        if x[0] >= 1.0:
            return math.inf, None
        return -x[0], np.array([-1.0])
    with pytest.raises(SolverError) as exc:
        lbfgs(f, np.array([0.5]))
    assert exc.value.state[0] == pytest.approx(1.0, abs=1e-6)


def test_cell_gradients_affine():
    A = np.array([[1.2, 0.3], [-0.1, 0.9]])
    U = vertex_grid(4) @ A.T
    np.testing.assert_allclose(cell_gradients(U, 0.25), np.broadcast_to(A, (4, 4, 2, 2)), atol=1e-13)


@pytest.mark.parametrize("kind", ["neo_hookean", "hookean"])
def test_gradient_check(kind):
    err = gradient_check(MapSpec.parse("twist:0.5"), EnergySpec(kind), kappa=10.0, nodes=20, h=1e-5)
    assert err <= 1e-5


def test_identity_boundary_is_minimiser():
    res = minimize_energy(MapSpec("identity"), EnergySpec(), kappa=100.0, n=8)
    assert res.energy_total == 0
    np.testing.assert_allclose(res.vertices, vertex_grid(8), atol=1e-14)


def test_shear_converges_to_constrained():
    b = MapSpec.parse("shear:0.3")
    spec = EnergySpec()
    ref = minimize_energy(b, spec, kappa=1e6, n=8)
    devs, isos = [], []
    x0 = None
    for k in (10.0, 100.0, 1000.0):
        r = minimize_energy(b, spec, kappa=k, n=8, x0=x0)
        x0 = r.vertices
        devs.append(float(np.sum((1 - r.det) ** 2)))
        isos.append(r.energy_iso)
    # the affine shear is itself unimodular, so every row sits on it
    assert all(b2 <= a2 * 1.05 + 1e-24 for a2, b2 in zip(devs, devs[1:]))
    assert max(devs) < 1e-20
    assert isos[-1] == pytest.approx(ref.energy_iso, rel=1e-6)
    assert ref.energy_iso == pytest.approx(0.3 ** 2, rel=1e-6)


def test_sweep_identity_degenerate():
    rep = kappa_sweep(MapSpec("identity"), EnergySpec(), [10, 100, 1000], n=8)
    assert "degenerate-zero sweep" in rep.tags
    assert all(r.proj_err == 0 for r in rep.rows)
    assert math.isnan(rep.fitted_slope)


def test_sweep_invariants():
    b = MapSpec.parse("twist:0.5")
    rep = kappa_sweep(b, EnergySpec(), [10, 100, 1000], n=12)
    devs = [r.det_dev_l2 for r in rep.rows]
    assert all(b2 <= a2 * 1.05 for a2, b2 in zip(devs, devs[1:]))
    for r in rep.rows:
        assert r.energy_total <= rep.comparison_energy[r.kappa] * (1 + 1e-12)
        assert r.status == "ok" and r.min_det > 0.2
    d = json.loads(rep.to_json())
    assert set(d) == {"fitted_slope", "c_envelope", "envelope_spread", "tags", "rows"}
    assert rep.to_csv().splitlines()[0] == ",".join(SweepReport.COLUMNS)
    assert rep.plot_data().startswith("log10_kappa")


def test_sweep_validation():
    b = MapSpec("identity")
    with pytest.raises(ValueError):
        kappa_sweep(b, EnergySpec(), [10, 100])
    with pytest.raises(ValueError):
        kappa_sweep(b, EnergySpec(), [10, 20, 50])
    with pytest.raises(ValueError):
        kappa_sweep(b, EnergySpec(), [100, 10, 1000])


def test_problem_infeasible_point():
    spec = EnergySpec(penalty_kind="windowed", window=(0.5, 2.0), kappa=1.0)
    prob = Problem(MapSpec("identity"), spec, 4)
    z = prob.pack(prob.V)
    assert prob.value_and_grad(z)[0] == 0
    z2 = z.copy()
    z2[:2] += 0.3  # first interior vertex: neighbouring cells get det 2.2 and -0.2
    val, g = prob.value_and_grad(z2)
    assert val == math.inf and g is None
