import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ttplan.indexmath import (LayoutError, MultiIndex, Permutation, TensorLayout, coords_from_position,
                              cumulative_volume, lane_arrays, lane_parallel_position, mixed_radix_vec,
                              p_major_in, p_major_out, p_minor_in, p_minor_out, p_shared,
                              scalar_position, transpose_position, transpose_position_vec)
from ttplan.plans import build_partition

from .strategies import cases


def brute_transpose(layout, perm):
    """Output position of every input position via explicit coordinates."""
    ext = layout.extents
    out_ext = [ext[w - 1] for w in perm.order]
    out = np.empty(layout.volume, dtype=np.int64)
    for p, coords in enumerate(itertools.product(*[range(e) for e in reversed(ext)])):
        x = coords[::-1]                      # x[0] is the stride-1 coordinate
        q, stride = 0, 1
        for j, w in enumerate(perm.order):
            q += x[w - 1] * stride
            stride *= out_ext[j]
        out[p] = q
    return out


# -- layout and permutation types ---------------------------------------------

def test_layout_rejects_bad_input():
    with pytest.raises(LayoutError):
        TensorLayout(())
    with pytest.raises(LayoutError):
        TensorLayout((3, 0))
    with pytest.raises(LayoutError):
        TensorLayout((3,), element_size=2)
    with pytest.raises(LayoutError):
        TensorLayout((1 << 32, 1 << 32))


def test_layout_volume_and_labels():
    lay = TensorLayout((2, 3, 4), 4)
    assert (lay.rank, lay.volume, lay.nbytes) == (3, 24, 96)
    assert lay.extent(3) == 4
    with pytest.raises(LayoutError):
        lay.extent(0)


def test_permutation_validation_and_inverse():
    with pytest.raises(LayoutError):
        Permutation((1, 1, 2))
    with pytest.raises(LayoutError):
        Permutation((0, 1))
    p = Permutation((3, 1, 2))
    assert p.inverse().order == (2, 3, 1)
    assert Permutation.identity(3).is_identity
    assert Permutation.reverse(3).order == (3, 2, 1)


def test_multiindex_rejects_duplicates():
    with pytest.raises(LayoutError):
        MultiIndex((1, 1), (2, 2))


def test_empty_multiindex_has_volume_one():
    assert MultiIndex((), ()).volume == 1


# -- cumulative volume and scalar positions -----------------------------------

@pytest.mark.parametrize("order,z,expect", [((1, 2, 3), 1, 1), ((1, 2, 3), 3, 6), ((3, 1, 2), 2, 8)])
def test_cumulative_volume_examples(order, z, expect):
    assert cumulative_volume(z, order, TensorLayout((2, 3, 4))) == expect


def test_cumulative_volume_missing_label():
    with pytest.raises(LayoutError):
        cumulative_volume(4, (1, 2, 3), TensorLayout((2, 3, 4)))


def test_scalar_position_examples():
    lay = TensorLayout((2, 3))
    assert scalar_position((0, 0), (1, 2), lay) == 0
    assert scalar_position((1, 2), (1, 2), lay) == 5
    assert scalar_position((7,), (1,), TensorLayout((9,))) == 7
    with pytest.raises(LayoutError):
        scalar_position((2, 0), (1, 2), lay)


def test_coords_from_position_examples():
    lay = TensorLayout((2, 3))
    assert coords_from_position(0, (1, 2), lay) == (0, 0)
    assert coords_from_position(5, (1, 2), lay) == (1, 2)
    with pytest.raises(LayoutError):
        coords_from_position(6, (1, 2), lay)


@given(cases(max_rank=8, max_volume=1 << 14), st.data())
def test_position_roundtrip(case, data):
    lay, perm = case
    coords = tuple(data.draw(st.integers(0, e - 1)) for e in lay.extents)
    for order in (tuple(range(1, lay.rank + 1)), perm.order):
        p = scalar_position(coords, order, lay)
        assert coords_from_position(p, order, lay) == coords


# -- transpose position --------------------------------------------------------

def test_transpose_position_examples():
    lay = TensorLayout((2, 3))
    assert transpose_position(1, Permutation((2, 1)), lay) == 3
    for p in range(6):
        assert transpose_position(p, Permutation((1, 2)), lay) == p
    with pytest.raises(LayoutError):
        transpose_position(6, Permutation((2, 1)), lay)


def test_matrix_transpose_moves_element_by_hand():
    # (x1, x2) = (1, 2) in a 2x3 matrix lands at (2, 1) of the 3x2 result
    lay = TensorLayout((2, 3))
    p_in = scalar_position((1, 2), (1, 2), lay)
    p_out = transpose_position(p_in, Permutation((2, 1)), lay)
    assert p_out == 2 + 1 * 3


@given(cases(max_rank=6, max_volume=1 << 10))
def test_transpose_position_matches_brute_force(case):
    lay, perm = case
    p = np.arange(lay.volume)
    assert np.array_equal(transpose_position_vec(p, perm, lay), brute_transpose(lay, perm))
    assert [transpose_position(int(q), perm, lay) for q in p[:50]] == \
        list(transpose_position_vec(p[:50], perm, lay))


@given(cases(max_rank=12, max_volume=1 << 16))
def test_transpose_is_bijection_and_inverse_undoes_it(case):
    lay, perm = case
    p = np.arange(lay.volume, dtype=np.int64)
    q = transpose_position_vec(p, perm, lay)
    assert np.array_equal(np.sort(q), p)
    back = transpose_position_vec(q, perm.inverse(), perm.output_layout(lay))
    assert np.array_equal(back, p)


# -- major / minor / shared positions -----------------------------------------

def test_major_minor_small_examples():
    lay = TensorLayout((5, 6, 7))
    perm = Permutation((3, 1, 2))
    part = build_partition(lay, perm, 1, 1)
    assert part.mbar_in.labels == (2,)
    assert p_major_in(0, part.mbar_in, lay) == 0
    assert p_major_in(4, part.mbar_in, lay) == 4 * 5                 # h=1: b * c(s_1, I)
    assert p_major_out(4, part.mbar_out, lay, perm) == 4 * 7 * 5     # b * c(s_1, O)
    assert p_minor_in(0, part.mk_in, lay) == 0
    assert p_minor_out(0, part.mk_out, lay, perm) == 0
    assert p_shared(0, part.mk_out, part.mk_in) == 0
    with pytest.raises(LayoutError):
        p_major_in(6, part.mbar_in, lay)


def test_tiled_specialisations():
    L = 32
    lay = TensorLayout((40, 3, 50))
    perm = Permutation((3, 1, 2))
    w1 = perm.order[0]
    tile_in = MultiIndex((1, w1), (L, L))
    # minor read position of thread (x, y) in a tile: x + y c(w1, I)
    for x, y in [(0, 0), (5, 0), (3, 7), (31, 31)]:
        k = x + y * L
        expect = x + y * lay.input_stride(w1)
        strides = [lay.input_stride(1), lay.input_stride(w1)]
        assert int(mixed_radix_vec(np.array([k]), tile_in.extents, strides)[0]) == expect
    # padded buffer read in the write phase: lane tx walks w1, row ty walks
    # dimension 1, so output-order index tx + ty L sits at ty + tx (L + 1)
    buf_in = MultiIndex((1, w1), (L + 1, L))
    buf_out = MultiIndex((w1, 1), (L, L))
    for tx, ty in [(0, 0), (1, 0), (0, 1), (17, 29)]:
        assert p_shared(tx + ty * L, buf_out, buf_in) == ty + tx * (L + 1)


@given(cases(max_rank=6, max_volume=1 << 11), st.data())
def test_major_minor_decomposition(case, data):
    lay, perm = case
    m = data.draw(st.integers(1, lay.rank))
    k = data.draw(st.integers(1, lay.rank))
    part = build_partition(lay, perm, m, k)
    vb, vk = part.vol_mbar, part.vol_mk
    assert vb * vk == lay.volume
    b = np.arange(vb)
    kk = np.arange(vk)
    maj_in = np.array([p_major_in(int(x), part.mbar_in, lay) for x in b])
    min_in = np.array([p_minor_in(int(x), part.mk_in, lay) for x in kk])
    pin = (maj_in[:, None] + min_in[None, :]).ravel()
    assert np.array_equal(np.sort(pin), np.arange(lay.volume))
    maj_out = np.array([p_major_out(int(x), part.mbar_out, lay, perm) for x in b])
    min_out = np.array([p_minor_out(int(x), part.mk_out, lay, perm) for x in kk])
    pout = (maj_out[:, None] + min_out[None, :]).ravel()
    assert np.array_equal(np.sort(pout), np.arange(lay.volume))


@given(cases(max_rank=6, max_volume=1 << 11), st.data())
def test_paired_positions_reproduce_transpose(case, data):
    # Read and write sides must agree on which element they address: decode b
    # and k once, in input order, and apply input and output strides to it.
    lay, perm = case
    part = build_partition(lay, perm, data.draw(st.integers(1, lay.rank)),
                           data.draw(st.integers(1, lay.rank)))
    b = np.arange(part.vol_mbar)
    k = np.arange(part.vol_mk)
    out_s = lambda mi: [perm.output_stride(z, lay) for z in mi]
    in_s = lambda mi: [lay.input_stride(z) for z in mi]
    pin = (mixed_radix_vec(b, part.mbar_in.extents, in_s(part.mbar_in))[:, None]
           + mixed_radix_vec(k, part.mk_in.extents, in_s(part.mk_in))[None, :])
    pout = (mixed_radix_vec(b, part.mbar_in.extents, out_s(part.mbar_in))[:, None]
            + mixed_radix_vec(k, part.mk_in.extents, out_s(part.mk_in))[None, :])
    assert np.array_equal(transpose_position_vec(pin.ravel(), perm, lay), pout.ravel())


@given(cases(max_rank=6, max_volume=1 << 11), st.data())
def test_shared_read_position_inverts_staging(case, data):
    # element k of the output-ordered walk sits at p_shared(k) of the
    # input-ordered staging buffer
    lay, perm = case
    part = build_partition(lay, perm, data.draw(st.integers(1, lay.rank)),
                           data.draw(st.integers(1, lay.rank)))
    k = data.draw(st.integers(0, part.vol_mk - 1))
    s = p_shared(k, part.mk_out, part.mk_in)
    coords_in = {z: (s // part.mk_in.cumulative(z)) % lay.extent(z) for z in part.mk_in}
    coords_out = {z: (k // part.mk_out.cumulative(z)) % lay.extent(z) for z in part.mk_out}
    assert coords_in == coords_out


# -- lane-parallel evaluation --------------------------------------------------

def test_lane_parallel_empty_sum():
    c, d, ct, h = lane_arrays(MultiIndex((), ()), [])
    assert h == 0
    assert lane_parallel_position(12345, c, d, ct, h) == 0


def test_lane_parallel_rejects_too_many_terms():
    with pytest.raises(LayoutError):
        lane_parallel_position(0, np.ones(32), np.ones(32), np.zeros(32), 33)


@given(cases(max_rank=12, max_volume=1 << 16), st.data())
def test_lane_parallel_matches_major_positions(case, data):
    lay, perm = case
    part = build_partition(lay, perm, 1, 1)
    b = data.draw(st.integers(0, part.vol_mbar - 1))
    c, d, ct, h = lane_arrays(part.mbar_in, [lay.input_stride(s) for s in part.mbar_in])
    lanes = lane_parallel_position(b, c, d, ct, h, return_lanes=True)
    assert (lanes == p_major_in(b, part.mbar_in, lay)).all()      # replicated on every lane
    c, d, ct, h = lane_arrays(part.mbar_out, [perm.output_stride(s, lay) for s in part.mbar_out])
    assert lane_parallel_position(b, c, d, ct, h) == p_major_out(b, part.mbar_out, lay, perm)


def test_lane_parallel_order_independent():
    rng = np.random.default_rng(0)
    c = np.array([1, 3, 12, 60] + [1] * 28)
    d = np.array([3, 4, 5, 2] + [1] * 28)
    ct = np.array([7, 1, 100, 999] + [0] * 28)
    b = 77
    seq = sum(((b // c[i]) % d[i]) * ct[i] for i in range(4))
    for _ in range(5):
        idx = rng.permutation(4)
        c2, d2, ct2 = c.copy(), d.copy(), ct.copy()
        c2[:4], d2[:4], ct2[:4] = c[idx], d[idx], ct[idx]
        assert lane_parallel_position(b, c2, d2, ct2, 4) == seq
