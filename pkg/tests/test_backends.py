import os
import subprocess
import sys

import numpy as np
import pytest

from mixcomp import _core, smcm

HAS_C = "c" in _core.available_backends()
needs_c = pytest.mark.skipif(not HAS_C, reason="compiled backend not built")


def random_smcm_instance(seed, I=5, J=4, K=3, m=12):
    rng = np.random.default_rng(seed)
    theta = rng.normal(0, 1, (I + J) * K)
    rows = rng.integers(0, I, m).astype(np.intp)
    cols = rng.integers(0, J, m).astype(np.intp)
    vals = rng.normal(0, 1, m)
    return theta, rows, cols, vals, I, J, K


def test_available_and_selected():
    backends = _core.available_backends()
    assert backends[-1] == "python"
    if HAS_C:
        assert backends == ["c", "python"]
    assert _core.BACKEND in backends
    assert _core.backend_name() == _core.BACKEND
    assert _core.kernels is _core.get_kernels(_core.BACKEND)
    assert _core.smcm_logjoint_grad is _core.kernels.smcm_logjoint_grad
    assert _core.hmcm_logjoint_grad is _core.kernels.hmcm_logjoint_grad


def test_get_kernels_names():
    py = _core.get_kernels("python")
    assert py.__name__.endswith("pykernels")
    with pytest.raises(ValueError):
        _core.get_kernels("fortran")


@needs_c
@pytest.mark.parametrize("seed", range(5))
def test_smcm_backends_agree(seed):
    theta, rows, cols, vals, I, J, K = random_smcm_instance(seed)
    results = [
        _core.get_kernels(name).smcm_logjoint_grad(
            theta, rows, cols, vals, I, J, K, 0.8, 0.15)
        for name in ("c", "python")
    ]
    (lp_c, g_c), (lp_py, g_py) = results
    assert lp_c == pytest.approx(lp_py, rel=1e-10)
    assert np.all(np.abs(g_c - g_py) <= 1e-10 * np.maximum(np.abs(g_py), 1.0))


@needs_c
@pytest.mark.parametrize("seed", range(5))
def test_hmcm_backends_agree(seed):
    rng = np.random.default_rng(100 + seed)
    R, S, I, J, K, m = 2, 3, 5, 6, 2, 14
    theta = rng.normal(0, 1, (R + S + I + J) * K + R + S)
    rows = rng.integers(0, I, m).astype(np.intp)
    cols = rng.integers(0, J, m).astype(np.intp)
    vals = rng.normal(0, 1, m)
    slab = np.asarray([i * R // I for i in range(I)], dtype=np.intp)
    wlab = np.asarray([j * S // J for j in range(J)], dtype=np.intp)
    results = [
        _core.get_kernels(name).hmcm_logjoint_grad(
            theta, rows, cols, vals, slab, wlab, R, S, I, J, K, 1.0, 0.15, 1.0)
        for name in ("c", "python")
    ]
    (lp_c, g_c), (lp_py, g_py) = results
    assert lp_c == pytest.approx(lp_py, rel=1e-10)
    assert np.all(np.abs(g_c - g_py) <= 1e-10 * np.maximum(np.abs(g_py), 1.0))


@needs_c
def test_model_layer_accepts_injected_backend(grid_matrix):
    cfg = smcm.SmcmConfig(k=2)
    theta = np.random.default_rng(8).normal(0, 1, 12)
    default = smcm.make_log_joint(grid_matrix, cfg)
    injected = smcm.make_log_joint(grid_matrix, cfg,
                                   kernels=_core.get_kernels("python"))
    lp_a, g_a = default(theta)
    lp_b, g_b = injected(theta)
    assert lp_a == pytest.approx(lp_b, rel=1e-10)
    assert np.allclose(g_a, g_b, rtol=1e-10, atol=1e-12)


def run_with_backend(value):
    env = dict(os.environ, MIXCOMP_BACKEND=value)
    return subprocess.run(
        [sys.executable, "-c",
         "import mixcomp._core as c; print(c.BACKEND, c.kernels.__name__)"],
        capture_output=True, text=True, env=env,
    )


def test_backend_env_override():
    proc = run_with_backend("python")
    assert proc.returncode == 0
    assert proc.stdout.split() == ["python", "mixcomp._core.pykernels"]
    proc = run_with_backend("fortran")
    assert proc.returncode != 0
    assert "MIXCOMP_BACKEND" in proc.stderr
