"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``ACCEPTANCE n: PASS|FAIL`` line; the lines are
collected again in the pytest terminal summary. Run alone with

    python3 -m pytest tests/test_acceptance.py -v
"""

import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from mca import instrument
from mca.affinity import PredictorConfig, compute_affinity
from mca.causality import CcmConfig, ccm_run, global_causality
from mca.cli import main
from mca.community import (Graph, cluster_affinity, community_stats, delta_q, dice, link_weight,
                           merge_to_maximize_dice, modularity)
from mca.ensemble import Ensemble, PreprocessConfig, RegionMask, out_of_band_fraction, preprocess
from mca.glm import glm_weights
from mca.grbf import grbf_activations, lstsq_solver
from mca.synth import SynthSpec, gen_stimulus_ensemble, generate, ground_truth_mask

from oracles import glm_weights_scalar, modularity_scratch, normal_equations, simplex_cross_map

pytestmark = pytest.mark.acceptance


def test_1_glm_weights(report):
    rng = np.random.default_rng(1)
    D = np.sort(rng.exponential(1.0, (1000, 4)), axis=1)
    D[::97, :2] = 0.0  # a few zero-distance rows
    t0 = time.perf_counter()
    W = glm_weights(D)
    dt = time.perf_counter() - t0
    sums = np.abs(W.sum(axis=1) - 1).max()
    ref = np.array([glm_weights_scalar(row.tolist()) for row in D])
    err = np.abs(W - ref).max()
    report(1, sums <= 1e-12 and err <= 1e-12 and dt < 1.0,
           f"GLM weights: max |sum-1| {sums:.1e}, max scalar diff {err:.1e}, {dt * 1e3:.1f} ms")


def test_2_grbf_formulas(report):
    rng = np.random.default_rng(2)
    A = grbf_activations(rng.normal(0, 3, (1000, 3)), rng.standard_normal((12, 3)), 0.4)
    rows = np.abs(A.sum(axis=1) - 1).max()
    err = 0.0
    for _ in range(20):
        M = rng.uniform(0, 1, (20, 4))
        M /= M.sum(axis=1, keepdims=True)
        y = rng.standard_normal(20)
        err = max(err, np.abs(lstsq_solver(M) @ y - normal_equations(M, y)).max())
    report(2, rows <= 1e-10 and err <= 1e-8,
           f"GRBF: activation row sums {rows:.1e}, lstsq vs normal equations {err:.1e}")


def test_3_modularity(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 13))
        W = rng.uniform(0, 1, (n, n)) * (rng.uniform(size=(n, n)) < 0.6)
        np.fill_diagonal(W, 0)
        W = 0.5 * (W + W.T)
        W[0, 1] = W[1, 0] = W[0, 1] + 0.5
        g = Graph(W)
        labels = rng.integers(0, 3, n)
        i = int(rng.integers(n))
        labels[i] = labels.max() + 1
        c = int(labels[(i + 1) % n])
        s_in, s_tot = community_stats(g, labels, c)
        dq = delta_q(s_in, s_tot, g.degrees[i], link_weight(g, i, np.flatnonzero(labels == c)), g.m)
        moved = labels.copy()
        moved[i] = c
        ref = modularity_scratch(W.tolist(), moved.tolist()) - modularity_scratch(W.tolist(), labels.tolist())
        worst = max(worst, abs(dq - ref))
    g = Graph(W)
    q0 = modularity(g, np.zeros(g.n, dtype=int))
    two = np.zeros((8, 8))
    two[:4, :4] = 1.0
    two[4:, 4:] = 1.0
    np.fill_diagonal(two, 0)
    q5 = modularity(Graph(two), np.repeat([0, 1], 4))
    report(3, worst <= 1e-10 and abs(q0) <= 1e-12 and abs(q5 - 0.5) <= 1e-12,
           f"modularity: max dQ error {worst:.1e}, Q(all-in-one) {q0:.1e}, Q(two components) {q5:.15f}")


def test_4_community_recovery(report):
    t0 = time.perf_counter()
    good, scores = 0, []
    for seed in range(5):
        s = generate(SynthSpec(kind="community_blocks", L=488, n_communities=3, community_size=30,
                               sigma=0.5, seed=seed))
        e = preprocess(s.ensemble, PreprocessConfig(drop=0))
        A = compute_affinity(e, threads=4).values
        _, p = cluster_affinity(A)
        d = [merge_to_maximize_dice(p, reg)[1] for reg in s.regions]
        scores.append(min(d))
        good += min(d) >= 0.9
    dt = time.perf_counter() - t0
    report(4, good >= 4 and dt < 300,
           f"community recovery: {good}/5 seeds with all Dice >= 0.9 "
           f"(min per seed {', '.join(f'{v:.2f}' for v in scores)}), {dt:.0f} s")


def _logistic_edge(seed, beta):
    s = generate(SynthSpec(kind="coupled_logistic", L=1000, beta_yx=beta, seed=seed))
    res = ccm_run(s.ensemble, s.regions, CcmConfig(), threads=4)
    gc = global_causality(res)
    return s, gc


def test_5_ccm_causality(report):
    # X drives Y, so Y's delay manifold reconstructs X: raw skill Y -> X converges
    fr = np.array(CcmConfig().fractions)
    high = fr >= 0.5
    coupled = uncoupled = 0
    oracle_ok = 0
    for seed in range(10):
        s, gc = _logistic_edge(seed, 0.3)
        y_to_x = gc.median[:, 1, 0]
        gain = y_to_x[-1] - y_to_x[0]
        p = gc.pvalues[:, 0, 1]
        asym = bool((p[high] < 0.05).all()) and bool((y_to_x[high] > gc.median[high, 0, 1]).all())
        coupled += gain > 0.1 and asym and gc.edges[0]["direction"] == "Y->X"
        if seed < 3:
            x, y = s.ensemble.series
            fwd = simplex_cross_map(y.tolist(), x.tolist(), E=3)
            bwd = simplex_cross_map(x.tolist(), y.tolist(), E=3)
            oracle_ok += fwd > bwd + 0.1
        _, gc0 = _logistic_edge(seed, 0.0)
        uncoupled += gc0.edges[0]["direction"] == "symmetric"
    report(5, coupled >= 9 and uncoupled >= 9 and oracle_ok == 3,
           f"CCM: coupled detected {coupled}/10, uncoupled symmetric {uncoupled}/10, "
           f"oracle direction agrees {oracle_ok}/3")


def test_6_identity(report):
    rng = np.random.default_rng(6)
    x = rng.standard_normal((8, 300))
    regs = [RegionMask("a", (0, 3, 5)), RegionMask("b", (1, 2, 7))]
    ok = []
    for cfg, f in ((PredictorConfig(seed=11), 1.0), (PredictorConfig(kind="grbf", seed=11), 0.6)):
        A = compute_affinity(Ensemble(x), cfg).values
        res = ccm_run(Ensemble(x), regs, CcmConfig(fractions=(f,), repetitions=1, predictor=cfg))
        idx = list(res.nodes)
        ok.append(np.array_equal(res.skills[0, 0], A[np.ix_(idx, idx)]))
    report(6, all(ok), f"MCA=CCM identity bit-exact: glm {ok[0]}, grbf {ok[1]}")


def test_7_decoupling(report):
    rng = np.random.default_rng(7)
    n = 50
    instrument.reset()
    am = compute_affinity(Ensemble(rng.standard_normal((n, 488))))
    counts_ok = am.stage_counts == {"expensive": n, "cheap": n * (n - 1)}
    t = {}
    for N in (200, 400):
        x = np.random.default_rng(N).standard_normal((N, 488))
        t[N] = statistics.median(compute_affinity(Ensemble(x), threads=4).timings["stage1_s"] for _ in range(5))
    ratio = t[400] / t[200]
    report(7, counts_ok and ratio <= 2.6,
           f"decoupling: counts {am.stage_counts} at N={n}; stage-1 N=400/N=200 = {ratio:.2f} "
           f"({t[400]:.2f} s / {t[200]:.2f} s)")


def test_8_preprocessing(report):
    fixtures = [generate(SynthSpec(kind="community_blocks", L=488, seed=8)).ensemble,
                generate(SynthSpec(kind="coupled_logistic", L=1000, seed=8)).ensemble,
                generate(SynthSpec(kind="noise", L=488, n_series=50, seed=8)).ensemble,
                gen_stimulus_ensemble(seed=8).ensemble]
    worst = [0.0, 0.0, 0.0]
    for e in fixtures:
        p = preprocess(e)
        x = p.series
        worst[0] = max(worst[0], out_of_band_fraction(x, 0.0083, 0.08, p.dt).max())
        worst[1] = max(worst[1], np.abs(x.mean(axis=1)).max())
        worst[2] = max(worst[2], np.abs(x.std(axis=1) - 1).max())
    report(8, worst[0] <= 1e-10 and worst[1] <= 1e-12 and worst[2] <= 1e-12,
           f"preprocessing: out-of-band {worst[0]:.1e}, |mean| {worst[1]:.1e}, |std-1| {worst[2]:.1e}")


def _outputs(d: Path) -> dict:
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*"))
            if p.is_file() and p.name != "manifest.txt"}


def test_9_cli_determinism(report, tmp_path, capsys):
    syn = tmp_path / "syn"
    log = tmp_path / "log"
    a = lambda *v: [str(x) for x in v]
    runs = {
        "synth": a("synth", "--n-communities", 2, "--community-size", 10, "--length", 200, "--seed", 4),
        "logistic": a("synth", "--kind", "coupled_logistic", "--length", 300, "--seed", 4),
        "preprocess": a("preprocess", "--input", syn / "ensemble.csv", "--meta", syn / "ensemble.meta",
                        "--drop", 0),
        "affinity": a("affinity", "--input", syn / "ensemble.csv", "--predictor", "grbf"),
        "cluster": a("cluster", "--affinity", tmp_path / "affinity" / "affinity.bin"),
        "dice": a("dice", "--partition", tmp_path / "cluster" / "partition.csv", "--truth", syn / "truth.csv"),
        "ccm": a("ccm", "--input", log / "ensemble.csv", "--regions", log / "truth.csv", "--ccm-repetitions", 5),
        "influence": a("influence", "--ccm-dir", tmp_path / "ccm", "--fraction", 0.8, "--regions",
                       log / "truth.csv", "--region1", "X", "--region2", "Y"),
        "pipeline": a("pipeline", "--input", syn / "ensemble.csv", "--meta", syn / "ensemble.meta",
                      "--regions", syn / "truth.csv", "--truth", syn / "truth.csv", "--ccm", "true",
                      "--ccm-repetitions", 3, "--ccm-fractions", "0.4,0.8"),
        "render": a("render", "--what", "matrix", "--file", tmp_path / "affinity" / "affinity.csv"),
    }
    outdir = {"synth": syn, "logistic": log}
    same = {}
    for name, argv in runs.items():
        out = outdir.get(name, tmp_path / name)
        rc1 = main(argv + ["--threads", "1", "--out", str(out)])
        replay = tmp_path / f"{name}.replay"
        rc2 = main([argv[0], "--config", str(out / "manifest.txt"), "--threads", "3", "--out", str(replay)])
        same[name] = rc1 == 0 and rc2 == 0 and _outputs(out) == _outputs(replay) and bool(_outputs(out))
    capsys.readouterr()
    bad = [k for k, v in same.items() if not v]
    report(9, not bad, f"CLI determinism under --threads 1 vs 3: {sum(same.values())}/{len(same)} "
           f"subcommand runs byte-identical" + (f" (differ: {', '.join(bad)})" if bad else ""))


def test_10_ground_truth(report):
    scores = []
    for seed in range(5):
        s = gen_stimulus_ensemble(n_series=100, n_active=30, snr=2.0, L=488, seed=seed)
        mask = ground_truth_mask(s.ensemble, s.truth["stimulus"], 0.55)
        scores.append(dice(mask.indices, s.regions[0].indices))
    ok = sum(v >= 0.95 for v in scores)
    report(10, ok == 5, f"ground truth: Dice >= 0.95 in {ok}/5 seeds ({', '.join(f'{v:.3f}' for v in scores)})")
