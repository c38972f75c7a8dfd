"""Replicate orchestration and result bundles.

Every (k, alpha, replicate) cell is independent: its generator is derived
from ``(rng_seed, replicate)`` alone, so the same replicate sees the same
seed data and user stream for every k and alpha, and results never depend
on how cells are spread over worker processes. Rows are sorted before
they are written.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import metrics as M
from .cf_market import run_cf_market
from .config import ExperimentConfig
from .dataset import load_dataset
from .distributions import EmpiricalSource, make_source
from .engine import CompetitionConfig, alpha_label, make_rng, run_competition
from .errors import CompetesimError, ConfigError
from .selection import CLASSIFICATION, NEGATIVE_LOSS, SelectionRule

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
# key for the evaluation stream; far above any engine substream index
_EVAL_KEY = 2 ** 31


def fmt(value) -> str:
    """Shortest round-trip text for numbers; 'inf' for infinite alpha."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


@dataclass
class Table:
    columns: list[str]
    rows: list[tuple] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([fmt(v) for v in r])
        return buf.getvalue()


@dataclass
class ResultBundle:
    manifest: dict
    tables: dict[str, Table]
    extra_json: dict[str, dict] = field(default_factory=dict)

    def files(self) -> dict[str, str]:
        out = {f"{name}.csv": t.to_csv() for name, t in sorted(self.tables.items())}
        for name, payload in sorted(self.extra_json.items()):
            out[f"{name}.json"] = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        manifest = dict(self.manifest, files=sorted(out))
        out["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        return out

    def write(self, out_dir) -> Path:
        """Write every file into a temp directory, then swap it into place."""
        out_dir = Path(out_dir)
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.tmp-", dir=out_dir.parent))
        try:
            for rel, text in self.files().items():
                target = tmp / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(text)
            old = None
            if out_dir.exists():
                old = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.old-", dir=out_dir.parent))
                out_dir.rename(old / "prev")
            tmp.rename(out_dir)
            if old is not None:
                shutil.rmtree(old, ignore_errors=True)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        return out_dir


def _manifest(config: ExperimentConfig, command: str) -> dict:
    return {"format_version": FORMAT_VERSION, "package": "competesim", "version": __version__,
            "command": command, "config": config.to_dict()}


def _map(fn: Callable, cells: list, workers: int, progress: Callable[[str], None] | None):
    total = len(cells)
    if workers <= 1 or total <= 1:
        out = []
        for i, c in enumerate(cells):
            out.append(fn(c))
            if progress:
                progress(f"cell {i + 1}/{total} done")
        return out
    with ProcessPoolExecutor(max_workers=workers) as pool:
        out = []
        for i, res in enumerate(pool.map(fn, cells)):
            out.append(res)
            if progress:
                progress(f"cell {i + 1}/{total} done")
        return out


# ------------------------------------------------------------ supervised

@lru_cache(maxsize=4)
def _cached_dataset(path, label, categorical, group, classification):
    return load_dataset(path, label, categorical, group, classification)


def build_task(sup: dict, rng_seed: int, replicate: int):
    """Source plus held-out test data for one replicate.

    Returns ``(source, X_test, y_test, groups_test, num_groups)``.
    """
    src_cfg = dict(sup["source"])
    kind = src_cfg.pop("kind")
    eval_rng = make_rng(rng_seed, replicate, _EVAL_KEY)
    if kind == "dataset":
        try:
            ds = _cached_dataset(src_cfg["path"], src_cfg["label"], tuple(src_cfg.get("categorical", ())),
                                 src_cfg.get("group"), bool(src_cfg.get("classification", True)))
        except KeyError as exc:
            raise ConfigError(f"dataset source needs {exc.args[0]!r}") from None
        sp = ds.split(sup["test_fraction"], eval_rng)
        source = EmpiricalSource(sp.X_train, sp.y_train, ds.num_classes)
        return source, sp.X_test, sp.y_test, sp.g_test, ds.num_groups
    try:
        source = make_source(kind, **src_cfg)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for source {kind!r}: {exc}") from None
    X, y = source.test_set(sup["test_size"], eval_rng)
    return source, X, y, None, None


def _competition_config(sup: dict, learner, k: int, alpha: float, seed: int, classification: bool,
                        baseline: bool) -> CompetitionConfig:
    rule = SelectionRule(alpha=alpha, per_user_alpha=sup["per_user_alpha"], clamp_negative=sup["clamp_negative"],
                         quality_kind=CLASSIFICATION if classification else NEGATIVE_LOSS)
    return CompetitionConfig(k, sup["seed_size"], sup["rounds"], rule, learner, seed, baseline,
                             sup["test_fraction"])


def supervised_cell(args) -> dict:
    """Competition and matched baseline for one (k, alpha, replicate) cell."""
    config, k, alpha, rep, want_trace = args
    sup = config.supervised
    supd = {"source": sup.source, "per_user_alpha": sup.per_user_alpha, "clamp_negative": sup.clamp_negative,
            "seed_size": sup.seed_size, "rounds": sup.rounds, "test_fraction": sup.test_fraction,
            "test_size": sup.test_size}
    where = f"cell k={k}, alpha={alpha_label(alpha)}, replicate={rep}"
    try:
        source, X, y, groups, num_groups = build_task(supd, config.rng_seed, rep)
        cls = source.classification
        traces = {}
        for base in (False, True):
            cc = _competition_config(supd, sup.learner, k, alpha, config.rng_seed, cls, base)
            traces[base] = run_competition(cc, source, make_rng(config.rng_seed, rep))
        comp, basel = traces[False], traces[True]
        out = {"key": (k, alpha, rep), "metrics": {}, "spec": [], "group_spec": [], "trace": None}
        m = out["metrics"]
        m["user_quality"] = M.user_quality(comp)
        m["baseline_user_quality"] = M.user_quality(basel)
        m["mean_risk"] = M.mean_risk(comp.learners, X, y)
        m["baseline_mean_risk"] = M.mean_risk(basel.learners, X, y)
        if cls:
            m["population_accuracy"] = 1.0 - m["mean_risk"]
            m["accuracy_delta"] = M.population_accuracy_delta(comp, basel, X, y)
            delta = M.specialization_matrix(comp.learners, X, y, source.num_classes)
            m["specialization_index"] = M.specialization_index(delta)
            out["spec"] = [(int(r), int(p), float(delta[r, p])) for r in range(delta.shape[0])
                           for p in range(delta.shape[1])]
            if groups is not None:
                gd = M.specialization_matrix(comp.learners, X, y, groups=groups, num_groups=num_groups)
                m["group_specialization_index"] = M.specialization_index(gd)
                out["group_spec"] = [(int(r), int(p), float(gd[r, p])) for r in range(gd.shape[0])
                                     for p in range(gd.shape[1])]
        if want_trace:
            out["trace"] = comp.rows()
        return out
    except CompetesimError as exc:
        raise type(exc)(f"{where}: {exc}") from exc
    except Exception as exc:
        raise CompetesimError(f"{where}: {type(exc).__name__}: {exc}") from exc


def _supervised_bundle(config: ExperimentConfig, results: list[dict], command: str) -> ResultBundle:
    results = sorted(results, key=lambda r: r["key"])
    tables: dict[str, Table] = {}
    raw: dict[str, list] = {}
    for r in results:
        k, a, rep = r["key"]
        for name, v in r["metrics"].items():
            raw.setdefault(name, []).append((k, alpha_label(a), rep, v))
        for name, rows in (("specialization", r["spec"]), ("group_specialization", r["group_spec"])):
            if rows:
                t = tables.setdefault(name, Table(["k", "alpha", "replicate", "row", "predictor", "value"]))
                t.rows.extend((k, alpha_label(a), rep, *row) for row in rows)
        if r["trace"] is not None:
            cols = list(r["trace"][0])
            t = Table(cols, [tuple(row[c] for c in cols) for row in r["trace"]])
            tables[f"traces/k{k}_alpha{alpha_label(a)}_rep{rep}"] = t
    for name, rows in raw.items():
        tables[f"metrics/{name}"] = Table(["k", "alpha", "replicate", "value"], rows)
    tables["aggregate"] = _aggregate(raw, [(k, alpha_label(a)) for k, a, _ in (r["key"] for r in results)])
    tables["risk_ratio"] = _risk_ratios(raw.get("mean_risk", []))
    return ResultBundle(_manifest(config, command), tables)


def _aggregate(raw: dict[str, list], order) -> Table:
    t = Table(["metric", "k", "alpha", "n", "mean", "se"])
    cells = list(dict.fromkeys(order))
    for name in sorted(raw):
        groups: dict = {}
        for k, a, _, v in raw[name]:
            groups.setdefault((k, a), []).append(v)
        for cell in cells:
            if cell in groups:
                mean, se = M.mean_se(groups[cell])
                t.rows.append((name, cell[0], cell[1], len(groups[cell]), mean, se))
    return t


def _risk_ratios(mean_risk_rows: list) -> Table:
    """Mean k-predictor risk over replicates divided by the k = 1 mean at the same alpha."""
    t = Table(["k", "alpha", "value", "infinite"])
    by: dict = {}
    for k, a, _, v in mean_risk_rows:
        by.setdefault((k, a), []).append(v)
    for (k, a), vals in sorted(by.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        if (1, a) not in by:
            continue
        den = float(np.mean(by[(1, a)]))
        num = float(np.mean(vals))
        if den == 0.0:
            t.rows.append((k, a, math.inf if num > 0 else math.nan, True))
        else:
            t.rows.append((k, a, num / den, False))
    return t


def _cells(config: ExperimentConfig, ks, alphas, want_trace: bool) -> list:
    return [(config, k, a, rep, want_trace) for k in ks for a in alphas for rep in range(config.replicates)]


def run_sweep(config: ExperimentConfig, workers: int = 1, progress=None) -> ResultBundle:
    """Full grid over k, alpha and replicates, with a matched baseline per cell."""
    sup = config.supervised
    results = _map(supervised_cell, _cells(config, sup.k, sup.alpha, False), workers, progress)
    return _supervised_bundle(config, results, "sweep")


def run_single(config: ExperimentConfig, workers: int = 1, progress=None) -> ResultBundle:
    """First k and alpha of the grid only, with per-round trace tables."""
    sup = config.supervised
    if len(sup.k) > 1 or len(sup.alpha) > 1:
        log.warning("run uses only k=%d and alpha=%s; use sweep for the full grid",
                    sup.k[0], alpha_label(sup.alpha[0]))
    results = _map(supervised_cell, _cells(config, sup.k[:1], sup.alpha[:1], True), workers, progress)
    return _supervised_bundle(config, results, "run")


# ------------------------------------------------------------------ cf

def cf_cell(args) -> dict:
    config, k, rep = args
    cf = config.cf
    try:
        out = {"key": (k, rep), "metrics": {}, "trajectory": []}
        traces = {}
        for base in (False, True):
            traces[base] = run_cf_market(cf.r, cf.m, k, cf.rounds, make_rng(config.rng_seed, rep),
                                         baseline=base, **cf.market_options())
        comp, basel = traces[False], traces[True]
        m = out["metrics"]
        m["user_quality"] = comp.user_quality()
        m["baseline_user_quality"] = basel.user_quality()
        m["pctr"] = float(comp.final_pctr().mean())
        m["baseline_pctr"] = float(basel.final_pctr().mean())
        m["pctr_delta"] = m["pctr"] - m["baseline_pctr"]
        for mode, tr in (("competition", comp), ("baseline", basel)):
            for t_idx, rnd in enumerate(tr.eval_rounds):
                for a in range(k):
                    out["trajectory"].append((mode, int(rnd), a, float(tr.pctr[t_idx, a])))
        return out
    except CompetesimError as exc:
        raise type(exc)(f"cell k={k}, replicate={rep}: {exc}") from exc
    except Exception as exc:
        raise CompetesimError(f"cell k={k}, replicate={rep}: {type(exc).__name__}: {exc}") from exc


def run_cf_sweep(config: ExperimentConfig, workers: int = 1, progress=None) -> ResultBundle:
    cells = [(config, k, rep) for k in config.cf.k for rep in range(config.replicates)]
    results = sorted(_map(cf_cell, cells, workers, progress), key=lambda r: r["key"])
    raw: dict[str, list] = {}
    traj = Table(["k", "replicate", "mode", "round", "recommender", "pctr"])
    for r in results:
        k, rep = r["key"]
        for name, v in r["metrics"].items():
            raw.setdefault(name, []).append((k, "na", rep, v))
        traj.rows.extend((k, rep, *row) for row in r["trajectory"])
    tables = {f"metrics/{name}": Table(["k", "alpha", "replicate", "value"], rows) for name, rows in raw.items()}
    tables["aggregate"] = _aggregate(raw, [(r["key"][0], "na") for r in results])
    tables["pctr_trajectory"] = traj
    return ResultBundle(_manifest(config, "cf"), tables)
