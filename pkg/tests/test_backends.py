"""The numba kernels and the pure-numpy fallback must agree."""

import numpy as np
import pytest

from integrikit import _backend
from integrikit.expr import EvalDomainError, compile_expr, compile_system, eval_many, parse

numba_available = _backend.BACKEND == "numba"
needs_numba = pytest.mark.skipif(not numba_available, reason="numba backend unavailable")

MESSY = "sin(x*y) + exp(x/2)/(1 + y^2) - tanh(x - y)^3 + atan(x)*cos(y)"


@needs_numba
def test_eval_points_backends_agree(rng):
    prog = compile_expr(parse(MESSY), ("x", "y"))
    pts = rng.uniform(-2, 2, size=(500, 2)).astype(np.complex128)
    a = _backend.eval_points_numba(prog.code, prog.consts, pts)
    b = _backend.eval_points_numpy(prog.code, prog.consts, pts)
    assert np.max(np.abs(a - b)) <= 1e-12 * (1 + np.max(np.abs(a)))


@needs_numba
def test_eval_points_match_tree_walk(rng):
    e = parse(MESSY)
    pts = rng.uniform(-2, 2, size=(20, 2))
    batch = eval_many(e, ("x", "y"), pts)
    direct = np.array([e.eval({"x": p[0], "y": p[1]}) for p in pts])
    assert np.max(np.abs(batch - direct)) <= 1e-13 * (1 + np.max(np.abs(direct)))


@needs_numba
def test_rk4_backends_agree():
    prog = compile_system((parse("y"), parse("-sin(x)")), ("x", "y"))
    x0 = np.array([1.0, 0.2], dtype=np.complex128)
    args = (prog.code, prog.starts, prog.ends, prog.consts, x0,
            0.0, 1e-2, 1e-2, 2.0, 200, 1e12)
    ts_a, ys_a, st_a, _ = _backend.rk4_numba(*args)
    ts_b, ys_b, st_b, _ = _backend.rk4_numpy(*args)
    assert st_a == st_b == 0
    assert np.max(np.abs(np.asarray(ts_a) - np.asarray(ts_b))) == 0
    assert np.max(np.abs(np.asarray(ys_a) - np.asarray(ys_b))) <= 1e-12


def test_division_guard_produces_domain_error(monkeypatch):
    pts = np.array([[1.0], [0.0]])
    for backend in (["numpy", "numba"] if numba_available else ["numpy"]):
        monkeypatch.setattr(_backend, "BACKEND", backend)
        with pytest.raises(EvalDomainError, match="division by zero"):
            eval_many(parse("1/x"), ("x",), pts)


def test_pow_and_log_guards(monkeypatch):
    monkeypatch.setattr(_backend, "BACKEND", "numpy")
    with pytest.raises(EvalDomainError):
        eval_many(parse("x^-1"), ("x",), np.array([[0.0]]))
    with pytest.raises(EvalDomainError, match="ln"):
        eval_many(parse("ln(x)"), ("x",), np.array([[0.0]]))


def test_backend_name_reports_something():
    assert _backend.backend_name() in ("numba", "numpy")


def test_env_flag_selects_fallback():
    import subprocess
    import sys
    out = subprocess.run(
        [sys.executable, "-c", "import integrikit; print(integrikit.backend_name())"],
        env={"PATH": "/usr/bin:/bin", "INTEGRIKIT_BACKEND": "numpy"},
        capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_env_flag_rejects_nonsense():
    import subprocess
    import sys
    out = subprocess.run(
        [sys.executable, "-c", "import integrikit"],
        env={"PATH": "/usr/bin:/bin", "INTEGRIKIT_BACKEND": "cuda"},
        capture_output=True, text=True)
    assert out.returncode != 0
