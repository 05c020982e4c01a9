"""End-to-end acceptance checks; each prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``.  The quality-ordering
check trains three methods on five 1024-colour sets and takes a while on one core.
"""
import itertools
import json
import time

import numpy as np
import pytest

from shufflesort import bench, cli
from shufflesort.baselines import min_rank_for, train_kissing
from shufflesort.config import TrainConfig
from shufflesort.data import generate_colors
from shufflesort.gradcheck import TOLERANCE, gradient_suite
from shufflesort.numkernel import track_peak_bytes
from shufflesort.objective import GridShape, neighbor_pairs, total_loss
from shufflesort.permutation import apply_soft_rowwise, find_duplicate, is_valid, softsort
from shufflesort.shuffler import TauSchedule, run_shuffle_softsort, transpose_shuffle


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def test_1_parameter_counts(capsys):
    t0 = time.perf_counter()
    counts = bench.parameter_table(1024)
    elapsed = time.perf_counter() - t0
    expected = {"gumbel-sinkhorn": 1048576, "kissing": 26624, "softsort": 1024,
                "shuffle-softsort": 1024}
    ok = counts == expected and min_rank_for(1024) == 13 and elapsed < 1.0
    verdict(capsys, 1, ok, f"counts {counts}, {elapsed * 1e3:.2f} ms")


@pytest.mark.slow
def test_2_quality_ordering(capsys):
    g = GridShape.square(1024)
    scores = {m: [] for m in ("shuffle-softsort", "softsort", "gumbel-sinkhorn")}
    for seed in range(5):
        x = generate_colors(1024, seed)
        rep = bench.benchmark(x, g, TrainConfig(seed=seed), tuple(scores))
        for row in rep["methods"]:
            assert row["valid"], row
            scores[row["method"]].append(row["quality"])
    med = {m: float(np.median(v)) for m, v in scores.items()}
    sss_vs_ss = med["shuffle-softsort"] - med["softsort"]
    gs_vs_sss = med["gumbel-sinkhorn"] - med["shuffle-softsort"]
    ok = sss_vs_ss >= 0.05 and gs_vs_sss >= -0.05
    detail = (f"median quality {json.dumps({m: round(v, 4) for m, v in med.items()})}; "
              f"SSS - SS = {sss_vs_ss:+.4f} (need >= 0.05), GS - SSS = {gs_vs_sss:+.4f} "
              f"(need >= -0.05)")
    verdict(capsys, 2, ok, detail)


def test_3_small_instance_optimality(capsys):
    g = GridShape(3, 3)
    a, b = neighbor_pairs(g)
    perms = np.array(list(itertools.permutations(range(9))))
    ratios = []
    t0 = time.perf_counter()
    for seed in range(10):
        x = generate_colors(9, 100 + seed)
        d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
        optimum = d[perms[:, a], perms[:, b]].sum(axis=1).min()
        res = run_shuffle_softsort(x, g, cfg=TrainConfig(seed=seed))
        ratios.append(d[res.perm[a], res.perm[b]].sum() / optimum)
    elapsed = time.perf_counter() - t0
    ok = max(ratios) <= 1.15 and elapsed < 120
    verdict(capsys, 3, ok, f"L_nbr / optimum per seed {np.round(ratios, 3).tolist()}, "
                           f"{elapsed:.1f} s")


def test_4_gradient_suite(capsys):
    errs = gradient_suite(seed=0, n=8, d=3)
    required = {"softsort", "gumbel_sinkhorn", "kissing", "l_nbr", "l_s", "l_sigma",
                "streaming_path"}
    worst = max(errs, key=errs.get)
    ok = required <= set(errs) and all(e < TOLERANCE for e in errs.values())
    verdict(capsys, 4, ok, f"max rel err {errs[worst]:.2e} ({worst}) over {len(errs)} ops")


def test_5_validity(capsys):
    rng = np.random.default_rng(2024)
    failures, fallbacks = [], 0
    for trial in range(1000):
        n_y = int(rng.integers(1, 9))
        n_x = int(rng.integers(max(1, -(-4 // n_y)), 9))
        g = GridShape(n_y, n_x)
        kind = trial % 4
        if kind == 0:  # heavy duplication: a handful of distinct vectors
            x = rng.random((3, 3))[rng.integers(0, 3, g.n)]
        elif kind == 1:  # all vectors identical except one
            x = np.zeros((g.n, 2))
            x[rng.integers(g.n)] = 1.0
        else:
            x = rng.random((g.n, int(rng.integers(1, 5))))
        cfg = TrainConfig(seed=trial, runs=int(rng.integers(1, 4)),
                          iters_per_run=int(rng.integers(0, 6)),
                          shuffle="random" if trial % 5 == 0 else "transpose",
                          repair_attempts=int(rng.integers(1, 4)))
        res = run_shuffle_softsort(x, g, cfg=cfg)
        fallbacks += sum(r.fallback for r in res.history)
        if not is_valid(res.perm, g.n):
            failures.append(trial)

    # kissing: whatever hardening gives is reported, and invalid results are flagged
    flagged = 0
    for seed in range(4):
        x = generate_colors(256, seed)
        r = bench.run_method(x, GridShape.square(256),
                             TrainConfig(method="kissing", seed=seed, kissing_steps=150))
        raw = train_kissing(x, GridShape.square(256),
                            TrainConfig(method="kissing", seed=seed, kissing_steps=150)).perm
        consistent = (r.valid == is_valid(raw, 256)
                      and (r.quality is None) == (not r.valid)
                      and r.duplicate == find_duplicate(raw)
                      and not r.repaired)
        if not consistent:
            failures.append(f"kissing seed {seed}")
        flagged += not r.valid
    ok = not failures
    verdict(capsys, 5, ok, f"1000 ShuffleSoftSort runs valid ({fallbacks} greedy fallbacks "
                           f"exercised); kissing flagged invalid in {flagged}/4 runs; "
                           f"failures {failures[:5]}")


def test_6_streaming(capsys):
    rng = np.random.default_rng(6)
    worst = 0.0
    for n in (4, 9, 17, 36, 64):
        g = GridShape.square(n) if int(np.sqrt(n)) ** 2 == n else GridShape(1, n)
        w, x = rng.random(n), rng.random((n, 3))
        tau = 0.5 / n
        p = softsort(w, tau)
        ref_y = p @ x
        ref_loss, ref_grad = total_loss(w, x, g, tau, materialize=True)
        for block in range(1, n + 1):
            loss, grad = total_loss(w, x, g, tau, block=block)
            worst = max(worst, abs(loss.total - ref_loss.total), np.abs(grad - ref_grad).max(),
                        np.abs(apply_soft_rowwise(w, tau, x, block) - ref_y).max())
    n, block, d = 4096, 256, 3
    w, x = rng.random(n), rng.random((n, d))
    g = GridShape.square(n)
    pairs = neighbor_pairs(g)
    total_loss(w, x, g, 1e-3, norm=1.0, block=block, pairs=pairs)
    with track_peak_bytes() as mem:
        total_loss(w, x, g, 1e-3, norm=1.0, block=block, pairs=pairs)
    bound = block * n * 8 + 32 * n * d * 8
    ok = worst < 1e-10 and mem["peak"] <= bound
    verdict(capsys, 6, ok, f"max streaming deviation {worst:.1e}; peak {mem['peak']} B at "
                           f"N=4096 block=256 vs bound {bound} B "
                           f"(dense matrix would be {n * n * 8} B)")


def test_7_structural_invariants(capsys):
    problems = []
    s = TauSchedule(0.1, 1e-3, 20)
    if not (s(0) == 0.1 and s(20) == 1e-3):
        problems.append("schedule endpoints")
    x = generate_colors(30, 7)
    g = GridShape(5, 6)

    def track(state, rec):
        if not np.array_equal(state.vectors, x[state.indices]):
            problems.append(f"tracking run {rec.run}")

    for shuffle in ("transpose", "random"):
        run_shuffle_softsort(x, g, cfg=TrainConfig(runs=6, iters_per_run=5, shuffle=shuffle),
                             callback=track)
    for runs in (1, 2, 7):
        res = run_shuffle_softsort(x, g, cfg=TrainConfig(runs=runs, iters_per_run=0))
        if not np.array_equal(res.perm, np.arange(30)):
            problems.append(f"zero-iteration identity runs={runs}")
    for side in range(1, 20):
        t = transpose_shuffle(GridShape(side, side))
        if not np.array_equal(t[t], np.arange(side * side)):
            problems.append(f"involution {side}")
    verdict(capsys, 7, not problems, f"problems {problems}" if problems else
            "tau endpoints exact, tracking holds every run, zero-iteration loop is identity, "
            "transpose is an involution")


def _stable(report_path):
    data = json.loads(report_path.read_text())
    return json.dumps(bench.strip_timing(data), sort_keys=True)


def test_8_determinism(tmp_path, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        d.mkdir()
        args = ["sort", "--random-colors", "64", "--seed", "3", "--runs", "8", "--iters", "6",
                "--out", str(d / "o.csv"), "--png", str(d / "o.png"),
                "--report", str(d / "sort.json")]
        assert cli.main(args) == 0
        assert cli.main(["benchmark", "--random-colors", "16", "--seed", "3", "--runs", "3",
                         "--iters", "3", "--report", str(d / "bench.json")]) == 0
        outs.append(d)
    a, b = outs
    same = {
        "csv": (a / "o.csv").read_bytes() == (b / "o.csv").read_bytes(),
        "png": (a / "o.png").read_bytes() == (b / "o.png").read_bytes(),
        "sort report": _stable(a / "sort.json") == _stable(b / "sort.json"),
        "benchmark report": _stable(a / "bench.json") == _stable(b / "bench.json"),
    }
    verdict(capsys, 8, all(same.values()), f"byte-identical outputs {same}")
