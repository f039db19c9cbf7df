import os
import subprocess
import sys

import numpy as np
import pytest

from luckock import sim
from luckock.model import uniform

compiled = pytest.mark.skipif(sim.CChainState is None, reason="compiled kernel not built")


def _run(kernel, spec, **kw):
    return sim.run(spec, 50_000, seed=7, kernel=kernel, **kw)


@compiled
@pytest.mark.parametrize("spec", [uniform(0.25, 0.75), uniform(0.1, 0.9)], ids=["recurrent", "transient"])
def test_kernels_agree_exactly(spec):
    col = sim.Collectors(regions=[(0.3, 0.5)], sample_every=250, lyapunov=spec.interval_lo == 0.25)
    a = _run("cython", spec, collectors=col)
    b = _run("python", spec, collectors=col)
    assert a.final_book == b.final_book
    assert np.array_equal(a.empirical_f_minus, b.empirical_f_minus)
    assert np.array_equal(a.empirical_f_plus, b.empirical_f_plus)
    assert np.array_equal(a.counters, b.counters)
    assert np.array_equal(a.return_times, b.return_times)
    assert np.array_equal(a.book_size_series, b.book_size_series)
    assert np.array_equal(a.running_min_bid, b.running_min_bid)
    assert a.max_size == b.max_size
    if a.functional_series is not None:
        assert np.allclose(a.functional_series, b.functional_series, atol=1e-9)


@compiled
def test_return_time_kernels_agree():
    spec = uniform(0.25, 0.75)
    a = sim.return_time_stats(spec, 200, cap=5000, seed=1, kernel="cython")
    b = sim.return_time_stats(spec, 200, cap=5000, seed=1, kernel="python")
    assert a == b


@pytest.mark.parametrize("kernel", ["python", pytest.param("cython", marks=compiled)])
def test_crossing_check_fires(kernel):
    # a crossed state can only come from direct insertion; the invariant check catches it
    state = sim.kernel_class(kernel)(0.0, 1.0, 0, np.array([0.5]), 0, 1, 1, np.zeros((0, 2)), 0, 0, True)
    state.insert(0.6, True)
    state.insert(0.4, False)
    with pytest.raises(AssertionError):
        state.advance(np.array([0.3]), np.array([1], dtype=np.uint8), np.ones(1), np.zeros((1, 0)))


def test_unknown_kernel():
    with pytest.raises(ValueError):
        sim.kernel_class("fortran")


def test_environment_forces_pure_python():
    env = dict(os.environ, LUCKOCK_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from luckock import sim; print(sim.KERNEL)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
