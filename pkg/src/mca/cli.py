"""Command-line entry point: ``mca <subcommand> [options]``.

Every option can also be given as ``key=value`` in a ``--config`` file
(``#`` starts a comment). Precedence: command line > config file > default.
Each run writes ``manifest.txt`` into its output directory; the manifest is
itself a valid config file and reproduces the run when passed back with
``--config``.

Exit codes: 0 success, 1 data error, 2 usage / configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from .affinity import (PredictorConfig, block_average, compute_affinity, load_affinity,
                       save_affinity_bin, save_affinity_csv)
from .causality import DEFAULT_FRACTIONS, CcmConfig, ccm_run, global_causality, influence_scores
from .community import cluster_affinity, default_knn_k, merge_to_maximize_dice
from .ensemble import (BAND_HI, BAND_LO, PreprocessConfig, RegionMask, load_ensemble, load_regions,
                       preprocess, save_ensemble, save_regions, smooth_spatial, write_matrix_csv)
from .errors import InvalidArgument, McaError
from .svg import influence_grid, render_curves, render_heatmap
from .synth import KINDS, SynthSpec, generate

log = logging.getLogger("mca")


class UsageError(Exception):
    pass


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v) -> tuple:
    if isinstance(v, (tuple, list)):
        return tuple(float(x) for x in v)
    return tuple(float(x) for x in str(v).split(",") if x.strip())


def _opt_int(v):
    return None if v in (None, "", "auto", "none") else int(v)


def _opt_float(v):
    return None if v in (None, "", "auto", "none") else float(v)


def _choice(*allowed):
    def conv(v):
        v = str(v).strip()
        if v not in allowed:
            raise ValueError(f"expected one of {' | '.join(allowed)}, got {v!r}")
        return v
    return conv


def _opt_str(v):
    return None if v in (None, "", "none") else str(v)


@dataclass(frozen=True)
class Opt:
    key: str
    conv: Callable
    default: Any
    help: str


# name -> option; subcommands pick from this table
OPTS = {o.key: o for o in [
    Opt("out", str, "out", "output directory"),
    Opt("seed", int, 0, "master seed; all randomness derives from it"),
    Opt("threads", int, 1, "worker threads (falls back to $MCA_THREADS); results do not depend on it"),
    Opt("input", _opt_str, None, "ensemble CSV (row = series)"),
    Opt("meta", _opt_str, None, "sidecar key=value metadata for the ensemble"),
    Opt("regions", _opt_str, None, "region mask CSV: series_index,region_name"),
    Opt("truth", _opt_str, None, "ground-truth mask CSV: series_index,region_name"),
    Opt("affinity", _opt_str, None, "affinity matrix (CSV or MCA1 binary)"),
    Opt("partition", _opt_str, None, "partition CSV: node_index,community_id"),
    # synth
    Opt("kind", _choice(*KINDS), "community_blocks", "synthetic system: " + " | ".join(KINDS)),
    Opt("length", int, 512, "samples per synthetic series"),
    Opt("dt", float, 0.5, "sampling period (s)"),
    Opt("n_communities", int, 3, "community_blocks: number of communities"),
    Opt("community_size", int, 30, "community_blocks: series per community"),
    Opt("sigma", float, 0.5, "community_blocks: member noise level"),
    Opt("rx", float, 3.8, "coupled_logistic: growth rate of X"),
    Opt("ry", float, 3.5, "coupled_logistic: growth rate of Y"),
    Opt("beta_xy", float, 0.0, "coupled_logistic: effect of Y on X"),
    Opt("beta_yx", float, 0.3, "coupled_logistic: effect of X on Y"),
    Opt("burn_in", int, 300, "coupled_logistic: discarded initial steps"),
    Opt("n_series", int, 10, "noise: number of series"),
    # preprocess
    Opt("drop", int, 24, "initial samples to discard"),
    Opt("f_lo", float, BAND_LO, "band-pass lower edge (Hz)"),
    Opt("f_hi", float, BAND_HI, "band-pass upper edge (Hz)"),
    Opt("detrend", _bool, True, "apply linear detrending"),
    Opt("bandpass", _bool, True, "apply the Fourier band mask"),
    Opt("smooth_sigma", _opt_float, None, "spatial Gaussian sigma in pixels (needs grid)"),
    # predictor
    Opt("predictor", _choice("glm", "grbf"), "glm", "glm | grbf"),
    Opt("embed_dim", int, 3, "delay embedding dimension d (prediction horizon is d)"),
    Opt("theiler", int, 0, "GLM: exclude neighbours with |t - t_n| <= w"),
    Opt("train_fraction", float, 0.6, "GRBF: training share of delay vectors"),
    Opt("grbf_k", _opt_int, None, "GRBF: prototypes K (default min(20, ceil(sqrt|Tr|)))"),
    Opt("grbf_rho", _opt_float, None, "GRBF: kernel width (default mean nearest-prototype distance)"),
    Opt("grbf_m", float, 2.0, "GRBF: fuzzy C-means fuzzifier"),
    Opt("format", _choice("csv", "bin", "both"), "both", "affinity output: csv | bin | both"),
    Opt("svg", _bool, True, "also write SVG figures"),
    # cluster
    Opt("knn_k", _opt_int, None, "mutual-kNN k (default round(0.2 N))"),
    Opt("symmetrize", _bool, True, "average W and W^T before Louvain"),
    Opt("region", _opt_str, None, "restrict Dice evaluation to one truth region"),
    # ccm
    Opt("ccm", _bool, False, "pipeline: also run CCM on --regions"),
    Opt("ccm_fractions", _floats, DEFAULT_FRACTIONS, "comma-separated library/training fractions"),
    Opt("ccm_repetitions", int, 20, "random subsets per fraction"),
    Opt("ccm_test", _choice("ranksum", "permutation"), "ranksum", "ranksum | permutation"),
    Opt("convergence_min", float, 0.1, "minimum median gain for a causal direction"),
    # influence
    Opt("region1", _opt_str, None, "first region name"),
    Opt("region2", _opt_str, None, "second region name"),
    Opt("fraction", _opt_float, None, "influence from a CCM run directory at this fraction"),
    Opt("ccm_dir", _opt_str, None, "CCM output directory (averaged_affinity.csv)"),
    # render
    Opt("what", _choice("summary", "matrix", "influence"), "summary", "render: summary | matrix | influence"),
    Opt("file", _opt_str, None, "render: input CSV"),
]}

COMMON = ["out", "seed", "threads"]
PRED = ["embed_dim", "predictor", "theiler", "train_fraction", "grbf_k", "grbf_rho", "grbf_m"]
PRE = ["drop", "f_lo", "f_hi", "detrend", "bandpass", "smooth_sigma"]
CCM = ["ccm_fractions", "ccm_repetitions", "ccm_test", "convergence_min"]
SUBCOMMANDS = {
    "synth": ["kind", "length", "dt", "n_communities", "community_size", "sigma", "rx", "ry",
              "beta_xy", "beta_yx", "burn_in", "n_series"],
    "preprocess": ["input", "meta"] + PRE,
    "affinity": ["input", "meta", "format", "svg"] + PRED,
    "cluster": ["affinity", "knn_k", "symmetrize", "truth"],
    "dice": ["partition", "truth", "region"],
    "ccm": ["input", "meta", "regions", "svg"] + PRED + CCM,
    "influence": ["affinity", "ccm_dir", "fraction", "regions", "region1", "region2", "meta", "svg"],
    "pipeline": ["input", "meta", "regions", "truth", "format", "svg", "knn_k", "symmetrize", "ccm"]
                + PRE + PRED + CCM,
    "render": ["what", "file", "meta"],
}


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mca", description="Mutual connectivity analysis toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, keys in SUBCOMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="key=value config file")
        sp.add_argument("-v", "--verbose", action="store_true")
        for key in COMMON + keys:
            o = OPTS[key]
            sp.add_argument(_flag(key), dest=key, default=None, metavar=key.upper(),
                            help=f"{o.help} [default: {o.default}]")
        if "symmetrize" in keys:
            sp.add_argument("--no-symmetrize", dest="symmetrize", action="store_const", const="false",
                            help="run Louvain on the raw directed weights")
    return p


def read_config(path) -> dict:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def resolve(command: str, ns: argparse.Namespace) -> dict:
    keys = COMMON + SUBCOMMANDS[command]
    cfg = {k: OPTS[k].default for k in keys}
    if os.environ.get("MCA_THREADS"):
        cfg["threads"] = os.environ["MCA_THREADS"]
    if ns.config:
        for k, v in read_config(ns.config).items():
            if k not in cfg:
                raise UsageError(f"unknown config key {k!r} for '{command}'")
            cfg[k] = v
    for k in keys:
        v = getattr(ns, k, None)
        if v is not None:
            cfg[k] = v
    for k in keys:
        try:
            cfg[k] = OPTS[k].conv(cfg[k]) if cfg[k] is not None else None
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {_flag(k)}: {exc}") from None
    if cfg["threads"] is None or cfg["threads"] < 1:
        raise UsageError("--threads must be >= 1")
    return cfg


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return "none" if v is None else str(v)


def _r(v) -> str:
    return repr(float(v))


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: dict, inputs: list) -> None:
    lines = [f"# mca {__version__} manifest; subcommand: {command}",
             f"# reproduce: mca {command} --config {out / 'manifest.txt'}"]
    for p in dict.fromkeys(inputs):
        if p and Path(p).exists():
            lines.append(f"# sha256 {_digest(p)} {p}")
    lines += [f"{k}={_fmt(v)}" for k, v in cfg.items()]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def need(cfg, key):
    if cfg.get(key) is None:
        raise UsageError(f"{_flag(key)} is required")
    return cfg[key]


def predictor_config(cfg: dict, L: int) -> PredictorConfig:
    if cfg["predictor"] not in ("glm", "grbf"):
        raise UsageError(f"--predictor must be glm or grbf, got {cfg['predictor']!r}")
    p = PredictorConfig(kind=cfg["predictor"], d=cfg["embed_dim"], theiler=cfg["theiler"],
                        train_fraction=cfg["train_fraction"], grbf_k=cfg["grbf_k"],
                        grbf_rho=cfg["grbf_rho"], fcm_m=cfg["grbf_m"], seed=cfg["seed"])
    try:
        p.validate(L)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None
    return p


def ccm_config(cfg: dict, L: int) -> CcmConfig:
    c = CcmConfig(fractions=cfg["ccm_fractions"], repetitions=cfg["ccm_repetitions"],
                  predictor=predictor_config(cfg, L), test=cfg["ccm_test"],
                  convergence_min=cfg["convergence_min"])
    try:
        c.validate(L)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None
    return c


def _load(cfg):
    return load_ensemble(need(cfg, "input"), cfg.get("meta"))


def _regions_by_name(regions, *names):
    byname = {r.name: r for r in regions}
    out = []
    for n in names:
        if n not in byname:
            raise UsageError(f"region {n!r} not found; available: {', '.join(byname)}")
        out.append(byname[n])
    return out


# --------------------------------------------------------------------------
# subcommands; each returns a one-line summary

def cmd_synth(cfg, out: Path) -> str:
    spec = SynthSpec(kind=cfg["kind"], L=cfg["length"], dt=cfg["dt"], seed=cfg["seed"],
                     n_communities=cfg["n_communities"], community_size=cfg["community_size"],
                     sigma=cfg["sigma"], rx=cfg["rx"], ry=cfg["ry"], beta_xy=cfg["beta_xy"],
                     beta_yx=cfg["beta_yx"], burn_in=cfg["burn_in"], n_series=cfg["n_series"])
    try:
        spec.validate()
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None
    s = generate(spec)
    save_ensemble(s.ensemble, out / "ensemble.csv", out / "ensemble.meta")
    save_regions(out / "truth.csv", s.regions)
    if s.truth.get("drives") is not None:
        (out / "truth_direction.txt").write_text((",".join(s.truth["drives"]) or "none") + "\n")
    e = s.ensemble
    return f"synth {spec.kind}: N={e.n_series} L={e.length} regions={len(s.regions)} -> {out}"


def _preprocess(cfg, e):
    if cfg.get("smooth_sigma"):
        e = smooth_spatial(e, cfg["smooth_sigma"])
    pc = PreprocessConfig(drop=cfg["drop"], f_lo=cfg["f_lo"], f_hi=cfg["f_hi"],
                          do_detrend=cfg["detrend"], do_bandpass=cfg["bandpass"])
    if not 0 <= pc.drop < e.length:
        raise UsageError(f"--drop {pc.drop} must be in [0, {e.length})")
    if pc.do_bandpass and not (0 <= pc.f_lo < pc.f_hi <= 1 / (2 * e.dt)):
        raise UsageError(f"band [{pc.f_lo}, {pc.f_hi}] invalid for Nyquist {1 / (2 * e.dt)} Hz (--f-lo/--f-hi)")
    return preprocess(e, pc)


def cmd_preprocess(cfg, out: Path) -> str:
    e = _preprocess(cfg, _load(cfg))
    save_ensemble(e, out / "preprocessed.csv", out / "preprocessed.meta")
    return f"preprocess: N={e.n_series} L={e.length} -> {out / 'preprocessed.csv'}"


def _write_affinity(cfg, A, out: Path):
    fmt = cfg["format"]
    if fmt not in ("csv", "bin", "both"):
        raise UsageError("--format must be csv, bin or both")
    if fmt in ("csv", "both"):
        save_affinity_csv(out / "affinity.csv", A)
    if fmt in ("bin", "both"):
        save_affinity_bin(out / "affinity.bin", A)
    if cfg["svg"]:
        render_heatmap(A.values, out / "affinity.svg", "affinity")


def cmd_affinity(cfg, out: Path) -> str:
    e = _load(cfg)
    p = predictor_config(cfg, e.length)
    A = compute_affinity(e, p, threads=cfg["threads"])
    _write_affinity(cfg, A, out)
    c = A.stage_counts
    return (f"affinity {p.kind}: N={A.n} expensive={c['expensive']} cheap={c['cheap']} "
            f"stage1={A.timings['stage1_s']:.2f}s stage2={A.timings['stage2_s']:.2f}s -> {out}")


def _write_partition(path, p):
    with open(path, "w") as fh:
        for i, c in enumerate(p.assignment.tolist()):
            fh.write(f"{i},{c}\n")


def _load_partition(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append((int(row[0]), int(row[1])))
            except (ValueError, IndexError):
                raise McaError(f"{path}: bad partition row {r}: {row}") from None
    rows.sort()
    if [i for i, _ in rows] != list(range(len(rows))):
        raise McaError(f"{path}: node indices must be 0..N-1")
    return np.array([c for _, c in rows])


def _dice_outputs(out: Path, assignment, truth_regions) -> list:
    results = []
    with open(out / "dice.csv", "w") as fh:
        fh.write("region,dice,clusters\n")
        for reg in truth_regions:
            merged, d, trace = merge_to_maximize_dice(assignment, reg)
            fh.write(f"{reg.name},{_r(d)},{len(trace)}\n")
            with open(out / f"merge_trace_{reg.name}.csv", "w") as tf:
                tf.write("step,cluster_id,dice_after\n")
                for step, cid, val in trace:
                    tf.write(f"{step},{cid},{_r(val)}\n")
            results.append((reg.name, d))
    return results


def _knn_k(cfg, n: int) -> int:
    k = cfg["knn_k"] if cfg["knn_k"] is not None else default_knn_k(n)
    if not 1 <= k < n:
        raise UsageError(f"--knn-k {k} must satisfy 1 <= k < N={n}")
    return k


def _cluster(cfg, A, out: Path):
    n = A.shape[0]
    k = _knn_k(cfg, n)
    g, p = cluster_affinity(A, k=k, seed=cfg["seed"], symmetrize=cfg["symmetrize"])
    _write_partition(out / "partition.csv", p)
    with open(out / "levels.csv", "w") as fh:
        fh.write("node_index," + ",".join(f"level{i}" for i in range(len(p.levels))) + "\n")
        for i in range(n):
            fh.write(f"{i}," + ",".join(str(int(lv[i])) for lv in p.levels) + "\n")
    (out / "modularity.txt").write_text("".join(f"level{i}={_r(q)}\n" for i, q in enumerate(p.level_Q)))
    msg = f"cluster: N={n} k={k} communities={p.n_communities} Q={p.Q:.4f}"
    if cfg.get("truth"):
        res = _dice_outputs(out, p.assignment, load_regions(cfg["truth"]))
        msg += " dice " + " ".join(f"{name}={d:.3f}" for name, d in res)
    return msg


def cmd_cluster(cfg, out: Path) -> str:
    A = load_affinity(need(cfg, "affinity"))
    return _cluster(cfg, A, out) + f" -> {out}"


def cmd_dice(cfg, out: Path) -> str:
    assignment = _load_partition(need(cfg, "partition"))
    regions = load_regions(need(cfg, "truth"))
    if cfg.get("region"):
        regions = _regions_by_name(regions, cfg["region"])
    res = _dice_outputs(out, assignment, regions)
    return "dice: " + " ".join(f"{name}={d:.3f}" for name, d in res)


def _ccm(cfg, e, regions, out: Path) -> str:
    c = ccm_config(cfg, e.length)
    res = ccm_run(e, regions, c, threads=cfg["threads"])
    gc = global_causality(res) if len(regions) >= 2 and c.repetitions >= 2 else None
    name = {i: r.name for r in regions for i in r.indices}
    with open(out / "ccm.csv", "w") as fh:
        fh.write("fraction,repetition,source_region,target_region,source_node,target_node,skill\n")
        for fi, f in enumerate(res.fractions):
            for r in range(c.repetitions):
                for a, na in enumerate(res.nodes):
                    for b, nb in enumerate(res.nodes):
                        if name[na] != name[nb]:
                            fh.write(f"{_r(f)},{r},{name[na]},{name[nb]},{na},{nb},{_r(res.skills[fi, r, a, b])}\n")
    with open(out / "averaged_affinity.csv", "w") as fh:
        fh.write("fraction,source_node,target_node,skill\n")
        avg = res.averaged_affinity
        for fi, f in enumerate(res.fractions):
            for a, na in enumerate(res.nodes):
                for b, nb in enumerate(res.nodes):
                    if a != b:
                        fh.write(f"{_r(f)},{na},{nb},{_r(avg[fi, a, b])}\n")
    if gc is None:
        return f"ccm: fractions={len(res.fractions)} repetitions={c.repetitions} (no direction tests)"
    rows = summary_rows(gc)
    with open(out / "summary.csv", "w") as fh:
        fh.write("fraction,pair,direction,median,p25,p75,pvalue,significant\n")
        for r in rows:
            fh.write(",".join(str(r[k]) for k in ("fraction", "pair", "direction", "median", "p25", "p75",
                                                   "pvalue", "significant")) + "\n")
    with open(out / "edges.csv", "w") as fh:
        keys = list(gc.edges[0])
        fh.write(",".join(keys) + "\n")
        for ed in gc.edges:
            fh.write(",".join(_r(ed[k]) if isinstance(ed[k], (float, np.floating)) else str(ed[k]) for k in keys) + "\n")
    if cfg["svg"]:
        render_curves(rows, out / "ccm.svg", "cross-map skill vs library fraction")
    return "ccm: " + " ".join(f"{ed['pair']}:{ed['direction']}" for ed in gc.edges)


def summary_rows(gc) -> list:
    rows = []
    med, p25, p75 = gc.median, gc.p25, gc.p75
    G = len(gc.names)
    for fi, f in enumerate(gc.fractions):
        for a in range(G):
            for b in range(a + 1, G):
                pair = f"{gc.names[a]}|{gc.names[b]}"
                for s, t in ((a, b), (b, a)):
                    rows.append({
                        "fraction": _r(f), "pair": pair, "direction": f"{gc.names[s]}->{gc.names[t]}",
                        "median": repr(float(med[fi, s, t])), "p25": repr(float(p25[fi, s, t])),
                        "p75": repr(float(p75[fi, s, t])), "pvalue": repr(float(gc.pvalues[fi, a, b])),
                        "significant": "true" if gc.significant[fi, a, b] else "false",
                    })
    return rows


def cmd_ccm(cfg, out: Path) -> str:
    e = _load(cfg)
    regions = load_regions(need(cfg, "regions"))
    ccm_config(cfg, e.length)
    return _ccm(cfg, e, regions, out) + f" -> {out}"


def _read_averaged(path, fraction):
    entries = {}
    nodes = set()
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            if math.isclose(float(row["fraction"]), fraction):
                a, b = int(row["source_node"]), int(row["target_node"])
                entries[(a, b)] = float(row["skill"])
                nodes |= {a, b}
    if not entries:
        raise McaError(f"{path}: no entries at fraction {fraction}")
    n = max(nodes) + 1
    A = np.zeros((n, n))
    for (a, b), v in entries.items():
        A[a, b] = v
    return A


def cmd_influence(cfg, out: Path) -> str:
    regions = load_regions(need(cfg, "regions"))
    r1, r2 = _regions_by_name(regions, need(cfg, "region1"), need(cfg, "region2"))
    if cfg.get("ccm_dir"):
        A = _read_averaged(Path(cfg["ccm_dir"]) / "averaged_affinity.csv", need(cfg, "fraction"))
    else:
        A = load_affinity(need(cfg, "affinity"))
    im = influence_scores(A, r1, r2)
    with open(out / "influence.csv", "w") as fh:
        fh.write("node_index,region,score\n")
        for n, reg, s in zip(im.nodes, im.regions, im.scores.tolist()):
            fh.write(f"{n},{reg},{_r(s)}\n")
    if cfg["svg"]:
        _influence_svg(cfg, im, out / "influence.svg")
    return f"influence {r1.name}<->{r2.name}: {len(im.nodes)} nodes, max |I| = {np.abs(im.scores).max():.4f}"


def _influence_svg(cfg, im, path):
    grid = None
    if cfg.get("meta"):
        from .ensemble import read_sidecar

        kv = read_sidecar(cfg["meta"])
        if "coords" in kv:
            grid = _coords_grid(Path(cfg["meta"]).parent / kv["coords"], kv)
    if grid is not None:
        coords, shape = grid
        render_heatmap(influence_grid(im.nodes, im.scores, coords, shape), path, "influence")
    else:
        render_heatmap(im.scores[None, :], path, "influence")


def _coords_grid(path, kv):
    coords = {}
    with open(path) as fh:
        for row in csv.reader(fh):
            if row:
                coords[int(row[0])] = (int(row[1]), int(row[2]))
    shape = (int(kv.get("grid_h", 1 + max(r for r, _ in coords.values()))),
             int(kv.get("grid_w", 1 + max(c for _, c in coords.values()))))
    return coords, shape


def cmd_pipeline(cfg, out: Path) -> str:
    e = _preprocess(cfg, _load(cfg))
    # validate everything before the first expensive step
    p = predictor_config(cfg, e.length)
    _knn_k(cfg, e.n_series)
    regions = None
    if cfg["ccm"]:
        ccm_config(cfg, e.length)
        regions = load_regions(need(cfg, "regions"))
    if cfg.get("truth"):
        load_regions(cfg["truth"])
    pre_dir, aff_dir, clu_dir = out / "preprocess", out / "affinity", out / "cluster"
    for d in (pre_dir, aff_dir, clu_dir):
        d.mkdir(parents=True, exist_ok=True)
    save_ensemble(e, pre_dir / "preprocessed.csv", pre_dir / "preprocessed.meta")
    A = compute_affinity(e, p, threads=cfg["threads"])
    _write_affinity(cfg, A, aff_dir)
    parts = [f"pipeline: N={e.n_series} L={e.length}", _cluster(cfg, A.values, clu_dir)]
    if cfg["ccm"]:
        ccm_dir = out / "ccm"
        ccm_dir.mkdir(exist_ok=True)
        parts.append(_ccm(cfg, e, regions, ccm_dir))
    return "; ".join(parts) + f" -> {out}"


def _read_dict_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise McaError(f"{path}: empty")
    return rows


def cmd_render(cfg, out: Path) -> str:
    path = need(cfg, "file")
    what = cfg["what"]
    try:
        if what == "summary":
            rows = _read_dict_rows(path)
            for r in rows:
                float(r["median"]), float(r["p25"]), float(r["p75"]), float(r["fraction"])
            render_curves(rows, out / "summary.svg", Path(path).name)
            return f"render: {out / 'summary.svg'}"
        if what == "matrix":
            render_heatmap(load_affinity(path), out / "matrix.svg", Path(path).name)
            return f"render: {out / 'matrix.svg'}"
        if what == "influence":
            rows = _read_dict_rows(path)
            nodes = [int(r["node_index"]) for r in rows]
            scores = np.array([float(r["score"]) for r in rows])
            from .causality import InfluenceMap

            im = InfluenceMap(tuple(nodes), tuple(r["region"] for r in rows), scores)
            _influence_svg(cfg, im, out / "influence.svg")
            return f"render: {out / 'influence.svg'}"
    except (KeyError, ValueError) as exc:
        raise McaError(f"{path}: malformed input ({exc})") from None
    raise UsageError("--what must be summary, matrix or influence")


COMMANDS = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "affinity": cmd_affinity, "cluster": cmd_cluster,
    "dice": cmd_dice, "ccm": cmd_ccm, "influence": cmd_influence, "pipeline": cmd_pipeline,
    "render": cmd_render,
}

INPUT_KEYS = ("input", "meta", "regions", "truth", "affinity", "partition", "file")


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(ns.command, ns)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[ns.command](cfg, out)
        write_manifest(out, ns.command, cfg, [cfg.get(k) for k in INPUT_KEYS if cfg.get(k)])
    except UsageError as exc:
        print(f"mca {ns.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (McaError, OSError) as exc:
        print(f"mca {ns.command}: data error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
