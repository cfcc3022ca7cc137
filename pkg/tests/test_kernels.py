"""Compiled and pure-Python kernel backends must agree bit-for-bit in results."""

import numpy as np
import pytest

from posspath import _kernels
from posspath._kernels import py_backend
from posspath.rules import build_rule_set


def random_problem(rng, rules, T, dynamic=True):
    emission = rng.normal(size=(T, rules.n_edges))
    rows = max(T - 1, 1)
    trans = rng.normal(size=(rows if dynamic else 1, rules.n_allowed))
    return emission, trans


@pytest.fixture(scope="module")
def compiled():
    if _kernels.BACKEND_NAME != "compiled":
        pytest.skip("compiled kernel backend not available")
    return _kernels


@pytest.mark.parametrize("shape", [(2, 0), (3, 1), (6, 4), (22, 4)])
@pytest.mark.parametrize("T", [1, 2, 7])
def test_backends_agree(compiled, shape, T):
    rng = np.random.default_rng(hash(shape + (T,)) % 2**32)
    rules = build_rule_set(*shape)
    emission, trans = random_problem(rng, rules, T)
    args = (emission, trans, rules.allowed_prev, rules.allowed_next,
            rules.by_next_order, rules.by_next_starts)

    a_fwd, a_logz = compiled.sparse_forward(*args)
    b_fwd, b_logz = py_backend.sparse_forward(*args)
    np.testing.assert_allclose(a_fwd, b_fwd, rtol=1e-12, atol=1e-12)
    assert a_logz == pytest.approx(b_logz, rel=1e-12)

    a_bwd = compiled.sparse_backward(*args)
    b_bwd = py_backend.sparse_backward(*args)
    np.testing.assert_allclose(a_bwd, b_bwd, rtol=1e-12, atol=1e-12)

    a_path, a_score = compiled.sparse_viterbi(*args)
    b_path, b_score = py_backend.sparse_viterbi(*args)
    assert a_path.tolist() == b_path.tolist()
    assert a_score == pytest.approx(b_score, rel=1e-12)


def test_backend_env_override():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "from posspath import _kernels; print(_kernels.BACKEND_NAME)"],
        env={"POSSPATH_KERNEL": "python", "PATH": "/usr/bin:/bin"},
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"
