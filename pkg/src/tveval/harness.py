"""Experiment orchestration: generate, bias, learn, fit, evaluate, report.

Seeds
-----
Every replicate draws from its own seed,
``int.from_bytes(sha256(f"{master_seed}:{recipe}:{replicate}")[:8], "big")``,
so a single replicate can be rerun in isolation with :func:`replicate_seed`.

Artifacts
---------
With ``output_dir`` set, each replicate writes under
``<output_dir>/<recipe>/<setting>/rep<NNN>/``: ``truth.graph``,
``truth.net``, ``data.csv`` and one ``<algorithm>.graph`` per learner (for
the over/under recipe, one graph per mutant). :func:`replay_tv` recomputes a
row's ``tv_dag`` from those files.
"""

from __future__ import annotations

import concurrent.futures as cf
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import (
    GenConfig,
    generate_lookalike,
    generate_network,
    lookalike_config,
    mutate_overspecify,
    mutate_underspecify,
    observational_network,
    sample,
)
from .dataset import Dataset, DatasetError, read_dataset
from .discovery import DEFAULT_MAX_COND, hill_climb, pc
from .distances import MODES, InterventionPolicy, tv_dag, tv_pair
from .graphs import Dag, format_graph, read_graph
from .metrics import metric_on_cpdag, shd, sid
from .networks import (
    GaussianNetwork,
    fit_mle_discrete,
    fit_mle_gaussian,
    read_network,
    write_network,
)

__all__ = [
    "RECIPES",
    "WORKERS_ENV",
    "ConfigError",
    "ExperimentConfig",
    "EvalRow",
    "EvalReport",
    "TvContext",
    "replicate_seed",
    "run_experiment",
    "ingest_dataset",
    "emit_report",
    "read_report",
    "replay_tv",
    "worked_example_models",
    "table1",
    "converse_counterexample",
]

RECIPES = ("relative_performance", "over_under", "strength_sweep", "table1", "custom")
ALGORITHMS = ("pc", "hill_climb")
WORKERS_ENV = "TVEVAL_WORKERS"
METRICS = ("shd", "sid", "tv_dag")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """One experiment.

    ``gen`` lists the generator settings (one per family in the relative
    performance recipe). ``external`` maps an algorithm name to a graph-file
    path template with ``{setting}`` and ``{replicate}`` placeholders; those
    algorithms are read from disk instead of learned (the ``custom`` recipe).
    """

    recipe: str = "relative_performance"
    gen: list = field(default_factory=lambda: [GenConfig()])
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS))
    replicates: int = 30
    sample_sizes: list = field(default_factory=lambda: [5000])
    beta: float = 1.0
    tv_mode: str = "marginal"
    policy_rule: str = "default"
    output_dir: str | None = None
    master_seed: int = 0
    alpha: float = 0.05
    max_cond_size: int | None = DEFAULT_MAX_COND
    extension_cap: int = 100
    strength_multipliers: list = field(default_factory=lambda: [0.1, 1.0, 10.0])
    domain: str = "P"
    subjects: int | None = None
    external: dict = field(default_factory=dict)

    def __post_init__(self):
        self.gen = [g if isinstance(g, GenConfig) else GenConfig(**_gen_kwargs(g)) for g in self.gen]
        self.validate()

    def validate(self):
        if self.recipe not in RECIPES:
            raise ConfigError(f"unknown recipe {self.recipe!r}; choose from {RECIPES}")
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be >= 1")
        if self.tv_mode not in MODES:
            raise ConfigError(f"unknown tv mode {self.tv_mode!r}")
        if self.policy_rule != "default":
            raise ConfigError(f"unknown intervention policy rule {self.policy_rule!r}")
        if not self.sample_sizes or any(int(n) < 1 for n in self.sample_sizes):
            raise ConfigError("sample_sizes must be a non-empty list of positive integers")
        if self.extension_cap < 1:
            raise ConfigError("extension_cap must be >= 1")
        for a in self.algorithms:
            if a not in ALGORITHMS and a not in self.external:
                raise ConfigError(f"unknown algorithm {a!r} (no learner and no external file)")
        if self.recipe in ("relative_performance", "strength_sweep", "custom") and not self.gen:
            raise ConfigError(f"recipe {self.recipe!r} needs at least one gen entry")
        if self.recipe == "strength_sweep" and not self.strength_multipliers:
            raise ConfigError("strength_sweep needs strength_multipliers")
        if self.recipe == "custom" and not self.external:
            raise ConfigError("custom recipe needs external learner files")
        if self.recipe == "over_under":
            lookalike_config(self.domain)
        for name, template in self.external.items():
            if "{" not in template and not Path(template).exists():
                raise ConfigError(f"external graph for {name!r} not found: {template}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for g in d["gen"]:
            g["weight_interval"] = list(g["weight_interval"])
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        return cls(**dict(d))

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _gen_kwargs(g):
    g = dict(g)
    if "weight_interval" in g:
        g["weight_interval"] = tuple(g["weight_interval"])
    return g


def replicate_seed(master_seed: int, recipe: str, replicate: int) -> int:
    digest = hashlib.sha256(f"{master_seed}:{recipe}:{replicate}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class EvalRow:
    recipe: str
    setting: str
    family: str
    algorithm: str
    replicate: int
    seed: int
    n: int
    shd: float
    sid: float
    tv_dag: float
    wall_time: float
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


ROW_FIELDS = tuple(f.name for f in dataclasses.fields(EvalRow))


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    @property
    def failed_replicates(self) -> int:
        return len({(r.setting, r.family, r.replicate) for r in self.rows if r.failed})

    def select(self, **kw) -> list:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in kw.items())]

    def values(self, metric, **kw) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.select(**kw) if not r.failed], dtype=float)


# ---------------------------------------------------------------------------
# evaluation pieces


def _fit(dag: Dag, data: Dataset):
    data = data.select(list(dag.vertices))
    if all(data.spec(v).kind == "discrete" for v in dag.vertices):
        return fit_mle_discrete(dag, data)
    return fit_mle_gaussian(dag, data)


class TvContext:
    """``extension -> tv_dag(truth, MLE fit of the extension on data)``."""

    def __init__(self, truth, data: Dataset, mode="marginal", policy=None, pairs=None):
        self.truth = truth
        self.data = data
        self.mode = mode
        self.policy = policy or InterventionPolicy()
        self.pairs = pairs

    def fitted(self, dag: Dag):
        return _fit(dag, self.data)

    def __call__(self, dag: Dag) -> float:
        return tv_dag(self.truth, self.fitted(dag), self.policy, self.mode, self.pairs)


def evaluate_estimate(truth_net, estimate, data, cfg: ExperimentConfig, pairs=None, truth_dag=None):
    """Mean SHD, SID and TV of ``estimate`` (a Dag or Cpdag) over its extensions."""
    g = truth_dag or truth_net.dag
    ctx = TvContext(truth_net, data, cfg.tv_mode, InterventionPolicy(rule=cfg.policy_rule), pairs)
    cap = cfg.extension_cap
    return tuple(
        metric_on_cpdag(g, estimate, m, cap=cap, seed=0, tv_context=ctx).value for m in ("shd", "sid", "tv")
    )


def _learn(algorithm, data: Dataset, cfg: ExperimentConfig, variables, setting, replicate):
    if algorithm in cfg.external:
        path = cfg.external[algorithm].format(setting=setting, replicate=replicate)
        return read_graph(path)
    if algorithm == "pc":
        discrete = all(data.spec(v).kind == "discrete" for v in variables)
        return pc(data, "g_test" if discrete else "fisher_z", cfg.alpha, cfg.max_cond_size, variables)
    if algorithm == "hill_climb":
        return hill_climb(data, variables=variables)
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def _manifest(algorithm, cfg, seed):
    if algorithm == "pc":
        return [f"algorithm=pc alpha={cfg.alpha} max_cond_size={cfg.max_cond_size} seed={seed}"]
    return [f"algorithm={algorithm} seed={seed}"]


def _rep_dir(cfg, setting, replicate):
    if cfg.output_dir is None:
        return None
    d = Path(cfg.output_dir) / cfg.recipe / setting / f"rep{replicate:03d}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_truth(d, net, data, truth_dag=None):
    if d is None:
        return
    (d / "truth.graph").write_text(format_graph(truth_dag or net.dag), encoding="utf-8")
    write_network(net, d / "truth.net")
    data.write(d / "data.csv")


def _failed(base, algorithm, exc):
    return EvalRow(**base, algorithm=algorithm, shd=math.nan, sid=math.nan, tv_dag=math.nan,
                   wall_time=0.0, error=f"{type(exc).__name__}: {exc}")


# ---------------------------------------------------------------------------
# recipes (one task = one setting x replicate)


def _task_learners(cfg, setting, family, gen, n, replicate):
    seed = replicate_seed(cfg.master_seed, cfg.recipe, replicate)
    base = dict(recipe=cfg.recipe, setting=setting, family=family, replicate=replicate, seed=seed, n=n)
    try:
        net = generate_network(dataclasses.replace(gen, seed=seed))
        data = sample(net, n, seed=np.random.SeedSequence(seed).spawn(3)[2])
        d = _rep_dir(cfg, setting, replicate)
        _write_truth(d, net, data)
    except Exception as exc:  # stage failure: every algorithm fails for this replicate
        return [_failed(base, a, exc) for a in cfg.algorithms]
    rows = []
    for a in cfg.algorithms:
        if a == "hill_climb" and family == "linear_gaussian":
            continue  # the BIC score here is defined for discrete data only
        try:
            t0 = time.perf_counter()
            est = _learn(a, data, cfg, net.vertices, setting, replicate)
            wall = time.perf_counter() - t0
            if d is not None:
                (d / f"{a}.graph").write_text(format_graph(est, _manifest(a, cfg, seed)), encoding="utf-8")
            s, i, t = evaluate_estimate(net, est, data, cfg)
            rows.append(EvalRow(**base, algorithm=a, shd=s, sid=i, tv_dag=t, wall_time=wall))
        except Exception as exc:
            rows.append(_failed(base, a, exc))
    return rows


def _task_over_under(cfg, setting, replicate):
    seed = replicate_seed(cfg.master_seed, cfg.recipe, replicate)
    la = lookalike_config(cfg.domain).with_(beta=cfg.beta)
    if cfg.subjects is not None:
        la = la.with_(subjects=int(cfg.subjects))
    if cfg.gen:
        la = la.with_(gen=cfg.gen[0])
    base = dict(recipe=cfg.recipe, setting=setting, family=la.gen.family, replicate=replicate, seed=seed,
                n=la.subjects)
    try:
        truth, consistent, _, obs = generate_lookalike(la, seed)
        net = observational_network(truth, la)
        data = obs.drop([c for c in obs.names if obs.spec(c).role == "id"])
        d = _rep_dir(cfg, setting, replicate)
        _write_truth(d, net, data, consistent)
    except Exception as exc:
        return [_failed(base, "over", exc)]
    pairs = [(t, o) for t in la.treatments for o in la.outcomes]
    mutants = [("consistent", consistent)]
    for t in la.treatments:
        mutants.append((f"over:{t}", mutate_overspecify(consistent, t, la.outcomes)))
        mutants.append((f"under:{t}", mutate_underspecify(consistent, t)))
    policy = InterventionPolicy({t: 1 for t in la.treatments})
    rows = []
    for name, g in mutants:
        try:
            t0 = time.perf_counter()
            fitted = _fit(g, data)
            wall = time.perf_counter() - t0
            if d is not None:
                (d / f"{name.replace(':', '_')}.graph").write_text(
                    format_graph(g, [f"mutant={name} seed={seed}"]), encoding="utf-8")
            tv = tv_dag(net, fitted, policy, cfg.tv_mode, pairs)
            rows.append(EvalRow(**base, algorithm=name, shd=shd(consistent, g).value,
                                sid=sid(consistent, g).value, tv_dag=tv, wall_time=wall))
        except Exception as exc:
            rows.append(_failed(base, name, exc))
    return rows


def _run_task(args):
    kind, cfg, payload = args
    if kind == "learners":
        return _task_learners(cfg, *payload)
    return _task_over_under(cfg, *payload)


def _tasks(cfg: ExperimentConfig):
    reps = range(int(cfg.replicates))
    if cfg.recipe == "over_under":
        return [("over_under", cfg, (cfg.domain, r)) for r in reps]
    tasks = []
    for gen in cfg.gen:
        for n in cfg.sample_sizes:
            mults = cfg.strength_multipliers if cfg.recipe == "strength_sweep" else [None]
            for m in mults:
                g = gen if m is None else dataclasses.replace(gen, strength_multiplier=float(m))
                setting = f"{gen.family}_n{n}" + ("" if m is None else f"_x{m:g}")
                for r in reps:
                    tasks.append(("learners", cfg, (setting, gen.family, g, int(n), r)))
    return tasks


def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> EvalReport:
    """Execute ``config.recipe`` and return its report.

    Replicates run in a process pool of ``workers`` (default: the
    ``TVEVAL_WORKERS`` environment variable, else 1). Rows are assembled in
    task order, so the report does not depend on the pool size.
    """
    config.validate()
    if config.recipe == "table1":
        return _table1_report(config)
    tasks = _tasks(config)
    n_workers = _workers(workers)
    if n_workers == 1:
        results = [_run_task(t) for t in tasks]
    else:
        with cf.ProcessPoolExecutor(n_workers) as pool:
            results = list(pool.map(_run_task, tasks))
    report = EvalReport([row for rows in results for row in rows])
    if config.output_dir is not None:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        config.write_json(out / "config.json")
        emit_report(report, "csv", out / "report.csv")
    return report


# ---------------------------------------------------------------------------
# three-variable worked example


def worked_example_models():
    """The three-vertex Gaussian models ``G1``, ``P2`` and ``P3``.

    In ``G1``, ``V1, V2 ~ N(0, 1)`` and ``V3 ~ N(V1 + 0.1 V2, 1)``. ``P2``
    drops ``V2 -> V3`` and ``P3`` drops ``V1 -> V3``; all other parameters
    are unchanged.
    """
    vs = ["V1", "V2", "V3"]
    full = {("V1", "V3"): 1.0, ("V2", "V3"): 0.1}

    def net(drop=None):
        w = {e: x for e, x in full.items() if e != drop}
        return GaussianNetwork(Dag(vs, list(w)), w, {v: 0.0 for v in vs}, {v: 1.0 for v in vs})

    return net(), net(("V2", "V3")), net(("V1", "V3"))


def table1(mode: str = "parents-at-mean", value: float = 2.0) -> dict:
    """TV of ``V3`` for ``do(V1=value)`` and ``do(V2=value)`` against ``P2`` and ``P3``.

    Keys are ``(treatment, model_name)``.
    """
    g1, p2, p3 = worked_example_models()
    return {
        (t, name): tv_pair(g1, m, t, value, "V3", mode)
        for t in ("V1", "V2")
        for name, m in (("P2", p2), ("P3", p3))
    }


def _table1_report(cfg):
    g1, p2, p3 = worked_example_models()
    rows = []
    for t in ("V1", "V2"):
        for name, m in (("P2", p2), ("P3", p3)):
            t0 = time.perf_counter()
            tv = tv_pair(g1, m, t, 2.0, "V3", cfg.tv_mode)
            rows.append(EvalRow(cfg.recipe, f"do({t}=2)", "linear_gaussian", name, 0, 0, 0,
                                shd(g1.dag, m.dag).value, sid(g1.dag, m.dag).value, tv,
                                time.perf_counter() - t0))
    return EvalReport(rows)


# ---------------------------------------------------------------------------
# SID = 0 does not imply TV = 0


def converse_counterexample(n: int = 50, seed: int = 0, output_dir=None) -> dict:
    """A structurally perfect estimate whose fitted parameters still differ.

    The estimate is the true DAG itself (so SID = 0), fitted by MLE on ``n``
    samples; finite-sample error leaves ``tv_dag > 0``. With ``output_dir``
    the truth, data and fitted network are written there.
    """
    gen = GenConfig(n_vertices=5, expected_neighborhood=2.0, family="dirichlet", arity=2, seed=seed)
    truth = generate_network(gen)
    data = sample(truth, n, seed=seed + 1)
    fitted = fit_mle_discrete(truth.dag, data)
    result = {
        "truth": truth,
        "data": data,
        "fitted": fitted,
        "sid": sid(truth.dag, fitted.dag).value,
        "tv_dag": tv_dag(truth, fitted),
    }
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_network(truth, out / "truth.net")
        write_network(fitted, out / "fitted.net")
        data.write(out / "data.csv")
        (out / "summary.json").write_text(
            json.dumps({"n": n, "seed": seed, "sid": result["sid"], "tv_dag": result["tv_dag"]}, indent=2) + "\n",
            encoding="utf-8",
        )
    return result


# ---------------------------------------------------------------------------
# I/O


def ingest_dataset(path, schema=None) -> Dataset:
    """Read a delimited dataset and check that every column has a role.

    Without ``schema`` the second line must carry ``type|role`` annotations.
    Type or arity violations raise :class:`DatasetError` listing the first
    ten offending lines.
    """
    data = read_dataset(path, schema)
    if not data.names:
        raise DatasetError("dataset has no columns")
    return data


def replay_tv(rep_dir, algorithm: str, cfg: ExperimentConfig, pairs=None, truth_graph: str = "truth.graph") -> float:
    """Recompute a row's ``tv_dag`` from a replicate's persisted artifacts."""
    d = Path(rep_dir)
    truth = read_network(d / "truth.net")
    data = read_dataset(d / "data.csv")
    est = read_graph(d / f"{algorithm.replace(':', '_')}.graph")
    truth_dag = read_graph(d / truth_graph)
    ctx = TvContext(truth, data, cfg.tv_mode, InterventionPolicy(rule=cfg.policy_rule), pairs)
    if cfg.recipe == "over_under":
        treatments = data.with_role("treatment")
        if pairs is None:
            ctx.pairs = [(t, o) for t in treatments for o in data.with_role("outcome")]
        ctx.policy = InterventionPolicy({t: 1 for t in treatments})
        return ctx(est)
    return metric_on_cpdag(truth_dag, est, "tv", cap=cfg.extension_cap, seed=0, tv_context=ctx).value


def _fmt_num(x):
    return "nan" if isinstance(x, float) and math.isnan(x) else repr(x)


def _group_key(r):
    return (r.recipe, r.setting, r.family, r.algorithm)


def _median(v):
    return float(np.median(v))  # even count: midpoint of the middle two


def _table(report):
    groups = {}
    for r in report.rows:
        groups.setdefault(_group_key(r), []).append(r)
    head = ["setting", "family", "algorithm", "reps"] + [
        f"{m}:{s}" for m in METRICS for s in ("min", "median", "max")
    ]
    lines, notes = [head], []
    for key, rows in groups.items():
        ok = [r for r in rows if not r.failed]
        if not ok:
            notes.append(f"* omitted {key[1]}/{key[2]}/{key[3]}: no successful replicates")
            continue
        cells = [key[1], key[2], key[3], str(len(ok))]
        for m in METRICS:
            v = np.array([getattr(r, m) for r in ok], dtype=float)
            cells += [f"{v.min():.4g}", f"{_median(v):.4g}", f"{v.max():.4g}"]
        lines.append(cells)
    widths = [max(len(row[i]) for row in lines) for i in range(len(head))]
    out = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in lines]
    out += notes
    out.append(f"failed replicates: {report.failed_replicates}")
    return "\n".join(out) + "\n"


def _csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in report.rows:
        w.writerow([_fmt_num(getattr(r, f)) if isinstance(getattr(r, f), float) else getattr(r, f)
                    for f in ROW_FIELDS])
    return buf.getvalue()


def _plotdata(report):
    groups = {}
    for r in report.rows:
        if r.failed:
            continue
        g = groups.setdefault((r.family, r.setting, r.algorithm), {m: [] for m in METRICS})
        for m in METRICS:
            g[m].append(getattr(r, m))
    doc = {
        "x": "family",
        "hue": "algorithm",
        "metrics": list(METRICS),
        "failed_replicates": report.failed_replicates,
        "groups": [
            {"family": f, "setting": s, "algorithm": a, **vals} for (f, s, a), vals in groups.items()
        ],
    }
    return json.dumps(doc, indent=1) + "\n"


_FORMATS: dict[str, Callable] = {"table": _table, "csv": _csv, "plotdata": _plotdata}


def emit_report(report: EvalReport, format: str = "table", path=None) -> str:
    """Render ``report`` as ``table``, ``csv`` or ``plotdata`` (JSON).

    ``table`` gives min/median/max per (setting, family, algorithm) and a
    failed-replicate footer. ``csv`` has one line per row; failures keep
    their row with ``nan`` metrics and an ``error`` message. ``plotdata``
    groups raw values by (family, setting, algorithm) for box plots.
    The text is returned and, with ``path``, also written.
    """
    if format not in _FORMATS:
        raise ValueError(f"unknown report format {format!r}")
    if not report.rows:
        raise ValueError("empty report")
    text = _FORMATS[format](report)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_report(path) -> EvalReport:
    """Inverse of the ``csv`` format of :func:`emit_report`."""
    types = {f.name: f.type for f in dataclasses.fields(EvalRow)}
    conv = {"int": int, "float": float, "str": str}
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != ROW_FIELDS:
            raise DatasetError(f"unexpected report header {reader.fieldnames}")
        for rec in reader:
            rows.append(EvalRow(**{k: conv[types[k]](v) for k, v in rec.items()}))
    return EvalReport(rows)

