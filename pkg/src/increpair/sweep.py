"""Resumable grid search over per-stage false-negative costs and stack capacity."""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

from .corpus import Utterance
from .evaluation import MetricsReport, evaluate_runs, format_table, total_score
from .forest import CostMatrix, Forest, ForestParams, train_forest
from .pipeline import Detector, run_detector
from .training import Bundle, TrainingError

POW2_8 = (1, 2, 4, 8, 16, 32, 64, 128)
POW2_5 = (1, 2, 4, 8, 16)
SWEPT = ("rp_start", "rm_start", "rp_end")


@dataclass(frozen=True)
class SweepConfig:
    rp_start_fn_costs: tuple = POW2_8
    rm_start_fn_costs: tuple = POW2_5
    rp_end_fn_costs: tuple = POW2_8
    stack_capacities: tuple = (1, 2)
    fp_cost: float = 1.0

    def cost_grid(self) -> list[tuple]:
        return list(itertools.product(self.rp_start_fn_costs, self.rm_start_fn_costs,
                                      self.rp_end_fn_costs))

    def settings(self) -> list[tuple]:
        """(rp_start, rm_start, rp_end, capacity) in a fixed order."""
        return [c + (k,) for k in self.stack_capacities for c in self.cost_grid()]


def setting_key(s: tuple) -> str:
    return "rp{:g}_rm{:g}_re{:g}_cap{}".format(*s)


class ForestCache:
    """Per-(stage, fn cost) forests trained on demand, optionally stored on disk."""

    def __init__(self, bundle: Bundle, params: ForestParams, fp_cost: float = 1.0,
                 cache_dir: Path | None = None):
        self.bundle = bundle
        self.params = params
        self.fp_cost = fp_cost
        self.cache_dir = cache_dir
        self._mem: dict = {}

    def get(self, stage: str, fn_cost: float) -> Forest:
        key = (stage, float(fn_cost))
        if key in self._mem:
            return self._mem[key]
        path = self.cache_dir / f"{stage}_fn{fn_cost:g}.json" if self.cache_dir else None
        if path is not None and path.exists():
            f = Forest.load(path, self.bundle.forests[stage].manifest)
        else:
            data = self.bundle.data.get(stage)
            if data is None or len(data) == 0:
                raise TrainingError(f"bundle has no stored training data for stage {stage!r}")
            seed = self.params.seed + ("edit", "rp_start", "rm_start", "rp_end").index(stage)
            f = train_forest(data.X, data.y, CostMatrix(fn_cost, self.fp_cost),
                             replace(self.params, seed=seed), data.names, stage)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                f.save(path)
        self._mem[key] = f
        return f


def evaluate_setting(bundle: Bundle, corpus: Sequence[Utterance], cache: ForestCache,
                     setting: tuple) -> MetricsReport:
    rp, rm, re, cap = setting
    forests = {"edit": bundle.forests["edit"], "rp_start": cache.get("rp_start", rp),
               "rm_start": cache.get("rm_start", rm), "rp_end": cache.get("rp_end", re)}
    det = Detector(bundle.lms, forests, cap)
    return evaluate_runs(corpus, [run_detector(det, u.tokens) for u in corpus])


def load_results(path: Path) -> dict[str, dict]:
    done = {}
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    # a torn final line from an interrupted run
                    continue
                done[rec["key"]] = rec
    return done


_WORKER: dict = {}


def _worker_init(bundle_dir: str, corpus: list, params: dict, fp_cost: float, cache_dir: str | None):
    bundle = Bundle.load(bundle_dir, with_data=True)
    _WORKER.update(bundle=bundle, corpus=corpus,
                   cache=ForestCache(bundle, ForestParams(**params), fp_cost,
                                     Path(cache_dir) if cache_dir else None))


def _worker_run(setting: tuple) -> tuple:
    rep = evaluate_setting(_WORKER["bundle"], _WORKER["corpus"], _WORKER["cache"], setting)
    return setting, rep.to_dict()


def run_sweep(bundle: Bundle, corpus: Sequence[Utterance], config: SweepConfig,
              results_path: str | Path, params: ForestParams | None = None,
              workers: int = 1, bundle_dir: str | Path | None = None,
              limit: int | None = None) -> list[dict]:
    """Evaluate every setting not yet in ``results_path`` and append its report.

    ``limit`` stops after that many new settings (used to simulate an
    interrupted run).  Returns all records in setting order.
    """
    results_path = Path(results_path)
    results_path.parent.mkdir(parents=True, exist_ok=True)
    params = params or ForestParams(seed=bundle.meta.get("seed", 0))
    cache_dir = results_path.parent / (results_path.stem + "_forests")
    done = load_results(results_path)
    todo = [s for s in config.settings() if setting_key(s) not in done]
    if limit is not None:
        todo = todo[:limit]

    def record(setting, rep_dict):
        rec = {"key": setting_key(setting), "rp_start": setting[0], "rm_start": setting[1],
               "rp_end": setting[2], "capacity": setting[3], "report": rep_dict}
        with open(results_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        done[rec["key"]] = rec

    if workers > 1 and todo:
        if bundle_dir is None:
            raise ValueError("parallel sweeps need bundle_dir")
        init = (str(bundle_dir), list(corpus), asdict(params), config.fp_cost, str(cache_dir))
        # pre-train shared forests once so workers only read them
        cache = ForestCache(bundle, params, config.fp_cost, cache_dir)
        for s in todo:
            for stage, c in zip(SWEPT, s[:3]):
                cache.get(stage, c)
        with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=init) as pool:
            for setting, rep in pool.map(_worker_run, todo):
                record(setting, rep)
    else:
        cache = ForestCache(bundle, params, config.fp_cost, cache_dir)
        for s in todo:
            record(s, evaluate_setting(bundle, corpus, cache, s).to_dict())
    return [done[setting_key(s)] for s in config.settings() if setting_key(s) in done]


def _report(d: dict) -> MetricsReport:
    return MetricsReport(**d)


def best_settings(records: Sequence[dict]) -> list[tuple[str, dict, MetricsReport]]:
    """Table rows: the best setting per metric and the best total score.

    Total scores are computed over all records; ties keep the first setting
    in grid order.
    """
    if not records:
        return []
    reports = [_report(r["report"]) for r in records]
    for rep, ts in zip(reports, total_score(reports)):
        rep.ts = ts
    rows = []
    picks = (("best F_rm", "f_rm", max), ("best F_s", "f_s", max), ("best DA", "da", max),
             ("best EO", "eo", min), ("best PO", "po", min), ("best TS", "ts", max))
    for label, metric, pick in picks:
        vals = [getattr(r, metric) for r in reports]
        target = pick(vals)
        i = vals.index(target)
        rows.append((label, records[i], reports[i]))
    return rows


def format_report(records: Sequence[dict]) -> str:
    rows = best_settings(records)
    table = format_table([(f"{lab} ({rec['key']})", rep) for lab, rec, rep in rows])
    return table + f"\n\n{len(records)} settings evaluated"
