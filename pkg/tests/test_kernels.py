"""The compiled and pure-Python kernel backends must agree bit for bit."""

import numpy as np
import pytest

from msfuse import kernels
from msfuse.geometry import Box, iou

py = kernels.python_backend
cy = kernels.compiled_backend

needs_ext = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def _boxes(rng, n):
    xy = rng.uniform(0, 50, size=(n, 2))
    wh = rng.uniform(1, 20, size=(n, 2))
    return np.hstack([xy, xy + wh])


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


def test_python_iou_matrix_matches_scalar_iou():
    rng = np.random.default_rng(0)
    a, b = _boxes(rng, 7), _boxes(rng, 5)
    m = py.iou_matrix(a, b)
    for i in range(7):
        for j in range(5):
            assert m[i, j] == iou(Box(*a[i]), Box(*b[j]))


@needs_ext
@pytest.mark.parametrize("seed", range(20))
def test_backends_agree(seed):
    rng = np.random.default_rng(seed)
    nr, nt = rng.integers(0, 12, size=2)
    br, bt = _boxes(rng, nr), _boxes(rng, nt)
    sr = np.round(rng.uniform(0, 1, nr), 1).tolist()  # coarse scores force ties
    st = np.round(rng.uniform(0, 1, nt), 1).tolist()
    assert np.array_equal(py.iou_matrix(br, bt), cy.iou_matrix(br, bt))
    assert np.array_equal(py.dpair_indices(br, sr, bt, st, 0.3), cy.dpair_indices(br, sr, bt, st, 0.3))

    gts = _boxes(rng, int(rng.integers(0, 6)))
    ign = rng.random(gts.shape[0]) < 0.3
    lp, mp = py.greedy_match(br, gts, ign, 0.5)
    lc, mc = cy.greedy_match(br, gts, ign, 0.5)
    assert np.array_equal(lp, lc) and np.array_equal(mp, mc)

    assert np.array_equal(py.nms(br, sr, 0.5), cy.nms(br, sr, 0.5))


@pytest.mark.parametrize("backend", [py, cy] if cy is not None else [py], ids=lambda b: b.__name__)
def test_empty_inputs(backend):
    e = np.zeros((0, 4))
    assert backend.iou_matrix(e, e).shape == (0, 0)
    assert backend.dpair_indices(e, [], e, [], 0.5).shape[0] == 0
    labels, _ = backend.greedy_match(e, e, np.zeros(0, dtype=bool), 0.5)
    assert labels.shape == (0,)
    assert backend.nms(e, [], 0.5).shape == (0,)


@pytest.mark.parametrize("backend", [py, cy] if cy is not None else [py], ids=lambda b: b.__name__)
def test_nms_suppresses_overlap(backend):
    b = np.array([[0, 0, 10, 10], [1, 1, 11, 11], [30, 30, 40, 40]], dtype=float)
    assert sorted(backend.nms(b, [0.9, 0.8, 0.7], 0.5).tolist()) == [0, 2]
