"""Acceptance criteria. Each test records a PASS/FAIL line printed after the run."""
import csv
import io
import time
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from ttplan import cli, costmodel as cm
from ttplan.bench import arithmetic_intensity
from ttplan.device import get_profile
from ttplan.executor import TensorBuffer, WriteMode, transpose_execute, transpose_scatter
from ttplan.indexmath import (coords_from_position, lane_arrays, lane_parallel_position,
                              mixed_radix_vec, p_major_in,
                              p_major_out, p_minor_in, p_minor_out, p_shared, scalar_position,
                              transpose_position, transpose_position_vec)
from ttplan.plans import build_all_plans, build_partition
from ttplan.selection import select_heuristic
from ttplan.sim import SimConfig, TrafficReport, WarpAccess, bank_transactions, simulate_plan

from .conftest import ACCEPTANCE
from .strategies import random_case

L = 32
KEPLER = get_profile("kepler-k20x")


def record(num, ok, msg):
    ACCEPTANCE[num] = (bool(ok), msg)
    assert ok, f"criterion {num}: {msg}"


# -- 1: index math ---------------------------------------------------------------

def numpy_positions(layout, perm):
    """Output position of every input element, from numpy's own transpose."""
    idx = np.arange(layout.volume).reshape(layout.extents, order="F")
    moved = idx.transpose([p - 1 for p in perm.order]).reshape(-1, order="F")
    dest = np.empty(layout.volume, dtype=np.int64)
    dest[moved] = np.arange(layout.volume)
    return dest


def check_index_case(layout, perm, rng):
    n, vol = layout.rank, layout.volume
    inp_order = tuple(range(1, n + 1))
    # scalar round trips on sampled positions
    for p in rng.integers(0, vol, size=4):
        p = int(p)
        assert scalar_position(coords_from_position(p, inp_order, layout), inp_order, layout) == p
        q = transpose_position(p, perm, layout)
        assert transpose_position(q, perm.inverse(), perm.output_layout(layout)) == p
    # bijection, against numpy, and inverted by the inverse permutation
    pin = np.arange(vol, dtype=np.int64)
    dest = transpose_position_vec(pin, perm, layout)
    assert np.array_equal(dest, numpy_positions(layout, perm))
    back = transpose_position_vec(dest, perm.inverse(), perm.output_layout(layout))
    assert np.array_equal(back, pin)
    # major/minor decomposition for a random partition
    part = build_partition(layout, perm, int(rng.integers(1, n + 1)), int(rng.integers(1, n + 1)))
    b, k = np.arange(part.vol_mbar), np.arange(part.vol_mk)
    in_s = lambda mi: [layout.input_stride(z) for z in mi]
    out_s = lambda mi: [perm.output_stride(z, layout) for z in mi]
    maj_in = mixed_radix_vec(b, part.mbar_in.extents, in_s(part.mbar_in))
    min_in = mixed_radix_vec(k, part.mk_in.extents, in_s(part.mk_in))
    both_in = (maj_in[:, None] + min_in[None, :]).ravel()
    assert np.array_equal(np.sort(both_in), pin)
    maj_out = mixed_radix_vec(b, part.mbar_out.extents, out_s(part.mbar_out))
    min_out = mixed_radix_vec(k, part.mk_out.extents, out_s(part.mk_out))
    assert np.array_equal(np.sort((maj_out[:, None] + min_out[None, :]).ravel()), pin)
    paired = (mixed_radix_vec(b, part.mbar_in.extents, out_s(part.mbar_in))[:, None]
              + mixed_radix_vec(k, part.mk_in.extents, out_s(part.mk_in))[None, :]).ravel()
    assert np.array_equal(dest[both_in], paired)
    # scalar forms and the lane-parallel sum agree with the vector forms
    bs = int(rng.integers(0, part.vol_mbar))
    ks = int(rng.integers(0, part.vol_mk))
    assert p_major_in(bs, part.mbar_in, layout) == maj_in[bs]
    assert p_major_out(bs, part.mbar_out, layout, perm) == maj_out[bs]
    assert p_minor_in(ks, part.mk_in, layout) == min_in[ks]
    assert p_minor_out(ks, part.mk_out, layout, perm) == min_out[ks]
    if len(part.mbar_in) <= L:
        c, d, ct, h = lane_arrays(part.mbar_in, in_s(part.mbar_in))
        assert lane_parallel_position(bs, c, d, ct, h) == maj_in[bs]
    # shared read position inverts the staging order
    s = p_shared(ks, part.mk_out, part.mk_in)
    assert all((s // part.mk_in.cumulative(z)) % layout.extent(z)
               == (ks // part.mk_out.cumulative(z)) % layout.extent(z) for z in part.mk_in)


def test_criterion_1_index_math():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    for _ in range(1000):
        layout, perm = random_case(rng, max_rank=12, max_log2=18)
        check_index_case(layout, perm, rng)
    dt = time.perf_counter() - t0
    record(1, dt < 30, f"1000 cases, rank 1-12, volume <= 2^18, exact identities, {dt:.1f} s")


# -- 2: executor -------------------------------------------------------------------

def test_criterion_2_executor():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    runs = 0
    kinds = set()
    for _ in range(500):
        layout, perm = random_case(rng, max_rank=8, max_log2=22)
        inp = TensorBuffer.random(layout, rng)
        ref = transpose_scatter(inp, perm).bits()
        by_kind = {}
        for p in build_all_plans(layout, perm, KEPLER):
            by_kind.setdefault(p.kind, []).append(p)
        for kind, plans in by_kind.items():
            plan = plans[int(rng.integers(len(plans)))]
            for w in (1, 4, 16):
                got = transpose_execute(plan, inp, WriteMode.WRITE, w)
                assert np.array_equal(got.bits(), ref), (layout.extents, perm.order, plan.label(), w)
                runs += 1
            kinds.add(kind)
    dt = time.perf_counter() - t0
    record(2, dt < 300 and len(kinds) == 4,
           f"500 cases, {runs} runs over {len(kinds)} plan kinds and workers 1/4/16, "
           f"bit-identical, {dt:.0f} s")


# -- 3: bank conflicts -------------------------------------------------------------

def test_criterion_3_bank_conflicts():
    # lane y reads column 0 of row y, 4-byte words
    unpadded = bank_transactions(WarpAccess(tuple(y * L * 4 for y in range(L)), "load", "shared", 4))
    padded = bank_transactions(WarpAccess(tuple(y * (L + 1) * 4 for y in range(L)), "load", "shared", 4))
    record(3, unpadded == 32 and padded == 1,
           f"column read of a {L}x{L} buffer: {unpadded} transactions, padded: {padded}")


# -- 4: MLP closed form --------------------------------------------------------------

def test_criterion_4_mlp():
    bad = []
    for R in (1, 2, 4, 8):
        for vm in range(L, 20 * L + 1, L):
            for vk in (L, 2 * L, 7 * L, 32 * L):
                c = cm.tile_census(vm, vk, L)
                if cm.mlp_tiled(c, L, R) != L / R or cm.mlp_tiled_copy(c, L, R) != L / R:
                    bad.append((R, vm, vk))
    record(4, not bad, f"mlp = L/R for R in 1,2,4,8 and multiple-of-L volumes; {len(bad)} misses")


# -- 5: model plumbing ----------------------------------------------------------------

def test_criterion_5_plumbing():
    t = TrafficReport(ld_req=37, st_req=53, ld_tran=101, st_tran=211, cl_full=17, cl_part=0)
    eq_ok = cm.tpr_mem(t) == (101 + 211) / (37 + 53)
    table = {"kepler-k20x": (14, 358, 11, 50), "maxwell-m40": (2.5, 385, 1, 220),
             "pascal-p100": (2.8, 485, 1, 260)}
    prof_ok = all((p.delta, p.mem_baselat, p.shmem_lat, p.cycles_ac) == v
                  for p, v in ((get_profile(n), v) for n, v in table.items()))
    lat = cm.mem_latency(KEPLER, 2)
    record(5, eq_ok and prof_ok and lat == 372,
           f"tpr_mem exact {eq_ok}, profile constants {prof_ok}, Kepler latency at tpr 2 = {lat}")


# -- 6 and 7: sampling fidelity and heuristic quality -----------------------------------

@pytest.fixture(scope="module")
def model_cases():
    rng = np.random.default_rng(606)
    cfg = SimConfig()
    out = []
    for _ in range(200):
        layout, perm = random_case(rng, max_rank=7, max_log2=20, elem=8)
        plans = build_all_plans(layout, perm, KEPLER)
        exact = [simulate_plan(p, cfg, verify=False) for p in plans]
        out.append((layout, perm, plans, exact))
    return out


def test_criterion_6_sampling(model_cases):
    # a case passes when every one of its plans samples within tolerance
    good = 0
    for layout, perm, plans, exact in model_cases:
        ok = True
        for p, t in zip(plans, exact):
            est, ref = cm.sample_traffic(p, 0).per_slice(), t.per_slice()
            ok &= (abs(est.ld_tran - ref.ld_tran) <= 0.25 * ref.ld_tran
                   and abs(est.st_tran - ref.st_tran) <= 0.25 * ref.st_tran)
        good += ok
    frac = good / len(model_cases)
    record(6, frac >= 0.90,
           f"sampled LD/ST within 25% of exact for {good}/{len(model_cases)} = {frac:.1%}")


def test_criterion_7_heuristic(model_cases):
    good = 0
    for layout, perm, plans, exact in model_cases:
        chosen = select_heuristic(plans, KEPLER, 0)
        best = min(t.global_tran for t in exact)
        good += exact[plans.index(chosen)].global_tran <= 1.5 * best
    frac = good / len(model_cases)
    record(7, frac >= 0.85,
           f"heuristic plan within 1.5x of best transactions for {good}/{len(model_cases)} = {frac:.1%}")


# -- 8: determinism ---------------------------------------------------------------------

def bench_csv():
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = cli.main(["bench", "set1", "--seed", "42"])
    return code, out.getvalue()


def test_criterion_8_determinism():
    c1, a = bench_csv()
    c2, b = bench_csv()
    rows = list(csv.DictReader(io.StringIO(a)))
    record(8, c1 == c2 == 0 and a == b and len(rows) == 36,
           f"bench set1 --seed 42 twice: {len(rows)} rows, identical bytes {a == b}")


# -- 9: arithmetic intensity -------------------------------------------------------------

def test_criterion_9_intensity():
    ok = arithmetic_intensity(9, 9, 9) == 2
    ok &= all(abs(arithmetic_intensity(v, v, v) - 2 / 3 * np.sqrt(v)) <= 1e-12 * max(1, v)
              for v in (1, 4, 100))
    record(9, ok, "AI(9,9,9) = 2 and AI(V,V,V) = (2/3) sqrt(V) for V in 1, 4, 100")
