"""The compiled core and the pure-NumPy fallback must agree numerically."""

import numpy as np
import pytest

from cogneq._kernels import get_backend
from cogneq.network import Profile, Strategy
from cogneq.solver import cold_start, player_data

from conftest import make_model, make_scenario

try:
    CX = get_backend("compiled")
except ImportError:          # pure-python environment: nothing to compare
    pytest.skip("compiled backend unavailable", allow_module_level=True)
PY = get_backend("python")


@pytest.fixture(scope="module")
def pld():
    scn = make_scenario(2)
    model = make_model(scn)
    prof = Profile(x=[Strategy(1.1, np.full(scn.N, 0.08), 0.3)
                      for _ in range(scn.Q)])
    return player_data(0, prof, scn, model)


class TestScalarKernels:
    def test_qfunc(self):
        xs = np.linspace(-9, 9, 181)
        np.testing.assert_allclose(CX.qfunc(xs), PY.qfunc(xs), rtol=0,
                                   atol=1e-16)

    def test_qinv(self):
        ps = np.concatenate([np.geomspace(1e-14, 0.5, 50),
                             1 - np.geomspace(1e-14, 0.5, 50)])
        np.testing.assert_allclose(CX.qinv(ps), PY.qinv(ps), rtol=1e-14,
                                   atol=1e-14)

    def test_pmiss_terms(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 6))
            sig0 = rng.uniform(0.5, 2.0, n)
            sig1 = rng.uniform(0.5, 3.0, n)
            dmu = rng.uniform(0.2, 2.0, n)
            th = float(rng.uniform(0.1, 2.5))
            pf = float(rng.uniform(0.01, 0.49))
            a = CX.pmiss_terms(th, pf, sig0, sig1, dmu, order=2)
            b = PY.pmiss_terms(th, pf, sig0, sig1, dmu, order=2)
            for u, v in zip(a, b):
                np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-14)


class TestProjections:
    def test_capped_simplex(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 9))
            p = rng.normal(0.3, 0.5, n)
            pmax = rng.uniform(0.1, 0.8, n)
            total = float(rng.uniform(0.1, 2.0))
            np.testing.assert_allclose(
                CX.project_capped_simplex(p, pmax, total),
                PY.project_capped_simplex(p, pmax, total), atol=1e-12)

    def test_sensing_box(self, pld):
        rng = np.random.default_rng(2)
        for _ in range(300):
            t0 = float(rng.uniform(pld.tmin - 1, pld.tmax + 1))
            p0 = float(rng.uniform(-0.3, 0.9))
            a = CX.project_sensing_box(t0, p0, pld.tmin, pld.tmax, pld.beta,
                                       pld.ccurve, pld.dcurve)
            b = PY.project_sensing_box(t0, p0, pld.tmin, pld.tmax, pld.beta,
                                       pld.ccurve, pld.dcurve)
            np.testing.assert_allclose(a, b, atol=1e-9)

    def test_project_player(self, pld):
        rng = np.random.default_rng(3)
        n = pld.pmax.size
        for _ in range(200):
            x = np.concatenate(([rng.uniform(0, 3)],
                                rng.normal(0.2, 0.4, n),
                                [rng.uniform(-0.4, 0.9)]))
            np.testing.assert_allclose(CX.project_player(x, pld),
                                       PY.project_player(x, pld), atol=1e-9)


class TestObjective:
    def test_eval_obj_grad(self, pld):
        rng = np.random.default_rng(4)
        n = pld.pmax.size
        for _ in range(200):
            x = PY.project_player(np.concatenate((
                [rng.uniform(pld.tmin, pld.tmax)],
                rng.uniform(0.01, 0.3, n),
                [rng.uniform(0.05, 0.45)])), pld)
            lp = float(rng.uniform(0, 3))
            va, ga = CX.eval_obj_grad(x, pld, lp)
            vb, gb = PY.eval_obj_grad(x, pld, lp)
            assert va == pytest.approx(vb, rel=1e-13, abs=1e-13)
            np.testing.assert_allclose(ga, gb, rtol=1e-11, atol=1e-13)

    def test_inner_solve_endpoints_agree(self, pld):
        x0 = cold_start(pld)
        xa, _, ra, fa = CX.inner_solve(x0, pld, 0.8, grad_tol=1e-9,
                                       max_iter=6000)
        xb, _, rb, fb = PY.inner_solve(x0, pld, 0.8, grad_tol=1e-9,
                                       max_iter=6000)
        assert ra <= 1e-8 and rb <= 1e-8
        np.testing.assert_allclose(xa, xb, atol=1e-7)
        assert fa == pytest.approx(fb, abs=1e-12)


def test_python_backend_end_to_end():
    """The fallback must select and solve when forced via the environment."""
    import os
    import subprocess
    import sys
    code = (
        "import cogneq\n"
        "assert cogneq.BACKEND_NAME == 'python', cogneq.BACKEND_NAME\n"
        "import numpy as np\n"
        "from cogneq.network import generate_scenario, Profile, Strategy\n"
        "from cogneq.sensing import SensingModel\n"
        "from cogneq.solver import best_response\n"
        "scn = generate_scenario(1, Q=1, N=2, normalize_direct=True)\n"
        "model = SensingModel.from_snr(1, 2)\n"
        "prof = Profile(x=[Strategy(1.0, np.array([0.1, 0.1]), 0.3)])\n"
        "s, lam, diag = best_response(0, prof, 0.0, scn, model)\n"
        "assert diag.resid <= 1e-6, diag.resid\n"
        "print('py-backend best response ok')\n"
    )
    env = dict(os.environ, COGNEQ_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, timeout=300)
    assert out.returncode == 0, out.stderr
    assert "ok" in out.stdout
