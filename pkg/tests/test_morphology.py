import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from topoguard import BinaryMask, Connectivity, Spacing, boundary, dilate, edt

from oracles import brute_boundary, brute_dilate, brute_edt

CONNS = [Connectivity.FACE6, Connectivity.EDGE18, Connectivity.VERTEX26]


def random_mask(rng, dims=None, p=0.3):
    dims = dims or tuple(rng.integers(2, 9, size=3))
    return BinaryMask(rng.random(dims) < p)


@st.composite
def masks(draw):
    dims = draw(st.tuples(*(st.integers(1, 6),) * 3))
    bits = draw(st.binary(min_size=int(np.prod(dims)), max_size=int(np.prod(dims))))
    arr = (np.frombuffer(bits, dtype=np.uint8) % 2).astype(bool).reshape(dims)
    return BinaryMask(arr)


class TestDilate:
    def test_center_voxel_fills_3x3x3(self):
        m = np.zeros((3, 3, 3), dtype=bool)
        m[1, 1, 1] = True
        assert dilate(BinaryMask(m), Connectivity.VERTEX26).data.all()

    def test_empty_stays_empty(self):
        m = BinaryMask(np.zeros((3, 3, 3), dtype=bool))
        for conn in CONNS:
            assert not dilate(m, conn).data.any()

    def test_corner_face_neighbors_clipped(self):
        m = np.zeros((3, 3, 3), dtype=bool)
        m[0, 0, 0] = True
        got = dilate(BinaryMask(m), Connectivity.FACE6).data
        want = {(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)}
        assert set(map(tuple, np.argwhere(got))) == want

    @pytest.mark.parametrize("conn", CONNS)
    def test_matches_brute_oracle(self, conn):
        rng = np.random.default_rng(11)
        for _ in range(25):
            m = random_mask(rng)
            got = dilate(m, conn).data
            want = brute_dilate(m.data, conn.value)
            assert np.array_equal(got, want)

    @given(masks())
    @settings(max_examples=40, deadline=None)
    def test_extensive_and_connectivity_nesting(self, m):
        d6 = dilate(m, Connectivity.FACE6).data
        d18 = dilate(m, Connectivity.EDGE18).data
        d26 = dilate(m, Connectivity.VERTEX26).data
        assert (d6 | m.data).sum() == d6.sum()  # output contains input
        assert not (d6 & ~d18).any()
        assert not (d18 & ~d26).any()

    @given(masks(), masks())
    @settings(max_examples=25, deadline=None)
    def test_monotone(self, a, b):
        if a.dims != b.dims:
            return
        sub = BinaryMask(a.data & b.data)
        for conn in CONNS:
            assert not (dilate(sub, conn).data & ~dilate(a, conn).data).any()

    @pytest.mark.parametrize("axis", [0, 1, 2])
    def test_commutes_with_mirroring(self, axis):
        rng = np.random.default_rng(12)
        m = random_mask(rng, dims=(5, 6, 4))
        for conn in CONNS:
            flipped_then = dilate(BinaryMask(np.flip(m.data, axis)), conn).data
            then_flipped = np.flip(dilate(m, conn).data, axis)
            assert np.array_equal(flipped_then, then_flipped)


class TestBoundary:
    def test_solid_cube_has_hollow_boundary(self):
        got = boundary(BinaryMask(np.ones((3, 3, 3), dtype=bool))).data
        assert got.sum() == 26
        assert not got[1, 1, 1]

    def test_single_voxel_is_its_own_boundary(self):
        m = np.zeros((3, 3, 3), dtype=bool)
        m[1, 2, 0] = True
        assert np.array_equal(boundary(BinaryMask(m)).data, m)

    def test_cube_inside_volume(self):
        m = np.zeros((7, 7, 7), dtype=bool)
        m[1:6, 1:6, 1:6] = True
        got = boundary(BinaryMask(m)).data
        assert np.array_equal(got, brute_boundary(m))
        assert got.sum() == 5 ** 3 - 3 ** 3  # 98

    @given(masks())
    @settings(max_examples=40, deadline=None)
    def test_subset_of_mask_and_matches_oracle(self, m):
        got = boundary(m).data
        assert not (got & ~m.data).any()
        assert np.array_equal(got, brute_boundary(m.data))

    def test_empty_mask(self):
        assert not boundary(BinaryMask(np.zeros((4, 4, 4), dtype=bool))).data.any()


class TestEdt:
    def test_axis_aligned_distance(self):
        m = np.zeros((4, 4, 4), dtype=bool)
        m[0, 0, 0] = True
        f = edt(BinaryMask(m), Spacing(1, 1, 1))
        assert f.data[0, 0, 3] == pytest.approx(3.0, abs=1e-12)
        assert f.data[0, 0, 0] == 0.0

    def test_zero_exactly_on_sources(self):
        rng = np.random.default_rng(13)
        m = random_mask(rng, dims=(6, 5, 7))
        f = edt(m, Spacing(1.3, 0.7, 2.1))
        assert (f.data[m.data] == 0.0).all()
        assert (f.data[~m.data] > 0.0).all()

    def test_empty_mask_gives_infinity(self):
        f = edt(BinaryMask(np.zeros((3, 3, 3), dtype=bool)), Spacing(1, 1, 1))
        assert np.isinf(f.data).all()

    def test_matches_brute_force_isotropic(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            m = random_mask(rng, p=0.2)
            if not m.data.any():
                continue
            got = edt(m, Spacing(1, 1, 1)).data
            want = brute_edt(m.data, (1, 1, 1))
            assert np.abs(got - want).max() < 1e-9

    def test_matches_brute_force_anisotropic(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            m = random_mask(rng, p=0.15)
            if not m.data.any():
                continue
            sp = Spacing(*rng.uniform(0.3, 3.0, size=3))
            got = edt(m, sp).data
            want = brute_edt(m.data, tuple(sp))
            assert np.abs(got - want).max() < 1e-9

    def test_single_line_volume(self):
        m = np.zeros((1, 1, 5), dtype=bool)
        m[0, 0, 2] = True
        f = edt(BinaryMask(m), Spacing(1, 1, 0.5))
        assert np.allclose(f.data[0, 0], [1.0, 0.5, 0.0, 0.5, 1.0])
