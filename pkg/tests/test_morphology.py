import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecrseg import _accel
from ecrseg.morphology import (
    CUBE6,
    StructuringElement,
    dilate,
    erode,
    largest_connected_component,
    opening,
    postprocess,
)
from ecrseg.volume import Mask

BACKENDS = ["numpy"] + (["numba"] if _accel.NUMBA_OK else [])


def _mask(shape, *boxes):
    data = np.zeros(shape, dtype=bool)
    for lo, hi in boxes:
        data[tuple(slice(a, b + 1) for a, b in zip(lo, hi))] = True
    return Mask(data)


def _brute_erode(m, offsets):
    out = np.zeros_like(m)
    for v in itertools.product(*map(range, m.shape)):
        out[v] = all(
            all(0 <= v[k] + o[k] < m.shape[k] for k in range(3)) and m[tuple(v[k] + o[k] for k in range(3))]
            for o in offsets
        )
    return out


def _brute_components(m):
    """Flood fill; returns list of (size, min x-fastest linear index, voxel set)."""
    seen = set()
    nx, ny, _ = m.shape
    comps = []
    for start in map(tuple, np.argwhere(m)):
        if start in seen:
            continue
        stack = [start]
        seen.add(start)
        members = []
        while stack:
            v = stack.pop()
            members.append(v)
            for d in itertools.product((-1, 0, 1), repeat=3):
                w = tuple(a + b for a, b in zip(v, d))
                if all(0 <= w[k] < m.shape[k] for k in range(3)) and m[w] and w not in seen:
                    seen.add(w)
                    stack.append(w)
        lin = min(x + nx * (y + ny * z) for x, y, z in members)
        comps.append((len(members), lin, set(members)))
    return comps


def test_cube6_offsets():
    offs = CUBE6.array
    assert offs.shape == (216, 3)
    assert offs.min() == -3 and offs.max() == 2
    assert (0, 0, 0) in CUBE6.offsets
    assert StructuringElement.cube(3).array.min() == -1


@pytest.mark.parametrize("backend", BACKENDS)
def test_erode_solid_cube(backend):
    m = _mask((16, 16, 16), ((0, 0, 0), (9, 9, 9)))
    out = erode(m, CUBE6, backend).data
    assert out.sum() == 125
    assert np.argwhere(out).min() == 3 and np.argwhere(out).max() == 7


@pytest.mark.parametrize("backend", BACKENDS)
def test_erode_trivial_cases(backend):
    assert not erode(Mask(np.zeros((8, 8, 8), bool)), CUBE6, backend).data.any()
    thin = _mask((12, 12, 12), ((0, 0, 0), (11, 11, 4)))
    assert not erode(thin, CUBE6, backend).data.any()


@pytest.mark.parametrize("backend", BACKENDS)
def test_dilate_single_voxel(backend):
    m = _mask((32, 32, 32), ((10, 10, 10), (10, 10, 10)))
    out = dilate(m, CUBE6, backend).data
    idx = np.argwhere(out)
    assert out.sum() == 216
    # w set iff w - o is set, so the voxel spreads to 10 + [-3..2]
    assert idx.min(axis=0).tolist() == [7, 7, 7]
    assert idx.max(axis=0).tolist() == [12, 12, 12]
    assert not dilate(Mask(np.zeros((5, 5, 5), bool)), CUBE6, backend).data.any()


@pytest.mark.parametrize("backend", BACKENDS)
def test_erode_matches_brute_force(backend):
    rng = np.random.default_rng(0)
    se = StructuringElement(((0, 0, 0), (1, 0, 0), (0, -1, 0), (1, 1, -1), (-2, 0, 1)))
    for _ in range(5):
        m = rng.random((7, 6, 5)) < 0.8
        assert np.array_equal(erode(Mask(m), se, backend).data, _brute_erode(m, se.offsets))


@given(seed=st.integers(0, 2**32 - 1), size=st.integers(1, 5), p=st.floats(0.2, 0.9))
@settings(max_examples=25, deadline=None)
def test_duality_on_padded_domain(seed, size, p):
    se = StructuringElement.cube(size)
    pad = size + 1
    rng = np.random.default_rng(seed)
    inner = rng.random((10, 9, 8)) < p
    padded = np.pad(inner, pad)
    m = Mask(padded)
    comp = m.with_data(~padded)
    dual = ~dilate(comp, se.reflect()).data
    core = tuple(slice(pad, -pad) for _ in range(3))
    assert np.array_equal(erode(m, se).data[core], dual[core])


@given(seed=st.integers(0, 2**32 - 1), size=st.integers(2, 6), p=st.floats(0.4, 0.95))
@settings(max_examples=25, deadline=None)
def test_opening_anti_extensive_and_idempotent(seed, size, p):
    se = StructuringElement.cube(size)
    m = Mask(np.random.default_rng(seed).random((16, 16, 16)) < p)
    once = opening(m, se)
    assert not np.any(once.data & ~m.data)
    assert opening(once, se) == once


def test_opening_of_solid_cube_is_contained():
    m = _mask((16, 16, 16), ((0, 0, 0), (9, 9, 9)))
    assert not np.any(dilate(erode(m)).data & ~m.data)


@pytest.mark.parametrize("backend", BACKENDS)
def test_lcc_basic_cases(backend):
    data = np.zeros((20, 20, 20), dtype=bool)
    data[1:3, 1:6, 1] = True  # 10 voxels
    data[10, 10:15, 10] = True  # 5 voxels
    out = largest_connected_component(Mask(data), backend).data
    assert out.sum() == 10 and out[1, 1, 1]
    diag = np.zeros((4, 4, 4), dtype=bool)
    diag[0, 0, 0] = diag[1, 1, 1] = True
    assert largest_connected_component(Mask(diag), backend).data.sum() == 2


@pytest.mark.parametrize("backend", BACKENDS)
def test_lcc_tie_goes_to_smallest_linear_index(backend):
    data = np.zeros((10, 10, 10), dtype=bool)
    # x-fastest: (9, 0, 0) -> 9 and (0, 5, 0) -> 50; C order would rank them the other way
    data[9, 0, 0] = data[9, 1, 0] = True
    data[0, 5, 0] = data[0, 6, 0] = True
    out = largest_connected_component(Mask(data), backend).data
    assert out[9, 0, 0] and not out[0, 5, 0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_lcc_matches_flood_fill(backend):
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = rng.random((9, 8, 7)) < 0.12
        if not m.any():
            continue
        comps = _brute_components(m)
        best = min(comps, key=lambda c: (-c[0], c[1]))
        out = largest_connected_component(Mask(m), backend).data
        assert set(map(tuple, np.argwhere(out))) == best[2]


def test_lcc_empty_warns(caplog):
    out = largest_connected_component(Mask(np.zeros((3, 3, 3), bool)))
    assert not out.data.any()
    assert "empty" in caplog.text


def test_backends_agree_on_random_masks():
    if len(BACKENDS) < 2:
        pytest.skip("numba unavailable")
    rng = np.random.default_rng(4)
    for _ in range(10):
        m = Mask(rng.random((24, 20, 18)) < 0.55)
        for op in (erode, dilate):
            assert op(m, CUBE6, "numba") == op(m, CUBE6, "numpy")
        assert largest_connected_component(m, "numba") == largest_connected_component(m, "numpy")


def test_postprocess_removes_speckle():
    m = _mask((32, 32, 32), ((0, 0, 0), (19, 19, 19)), ((26, 26, 26), (28, 28, 28)))
    res = postprocess(m)
    assert not res.degraded
    assert not res.mask.data[26:29, 26:29, 26:29].any()
    main = m.data.copy()
    main[26:29, 26:29, 26:29] = False
    assert not np.any(res.mask.data & ~main)
    # a box wider than the element survives opening unchanged
    assert np.array_equal(res.mask.data, main)


def test_postprocess_degraded_paths():
    res = postprocess(Mask(np.zeros((8, 8, 8), bool)))
    assert res.degraded and not res.mask.data.any()
    thin = _mask((20, 20, 20), ((2, 2, 2), (15, 15, 5)), ((2, 2, 10), (3, 3, 12)))
    res = postprocess(thin)
    assert res.degraded
    assert res.mask.count == 14 * 14 * 4


@given(seed=st.integers(0, 2**32 - 1), p=st.floats(0.3, 0.9))
@settings(max_examples=15, deadline=None)
def test_postprocess_output_is_single_component(seed, p):
    m = Mask(np.random.default_rng(seed).random((18, 18, 18)) < p)
    out = postprocess(m).mask.data
    if out.any():
        assert len(_brute_components(out)) == 1


@given(
    seed=st.integers(0, 2**32 - 1),
    lo=st.tuples(*[st.integers(-4, 1)] * 3),
    ext=st.tuples(*[st.integers(0, 9)] * 3),
)
@settings(max_examples=30, deadline=None)
def test_box_fast_path_matches_general_kernel(seed, lo, ext):
    if "numba" not in BACKENDS:
        pytest.skip("numba unavailable")
    from ecrseg.morphology import _box_nb, _dilate_nb, _erode_nb

    rng = list(itertools.product(*(range(l, l + e + 1) for l, e in zip(lo, ext))))
    se = StructuringElement(tuple(rng))
    assert se.box == tuple((l, l + e) for l, e in zip(lo, ext))
    m = np.random.default_rng(seed).random((9, 8, 7)) < 0.85
    assert np.array_equal(_box_nb(m, se.box, True), _erode_nb(m, se.array))
    assert np.array_equal(_box_nb(m, se.box, False), _dilate_nb(m, se.array))


def test_box_detection():
    assert CUBE6.box == ((-3, 2),) * 3
    assert StructuringElement(((0, 0, 0), (2, 0, 0))).box is None
