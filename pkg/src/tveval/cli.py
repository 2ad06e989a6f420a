"""Command-line entry point: ``python -m tveval <subcommand>``.

Subcommands follow the evaluation pipeline::

    generate  random network (or look-alike) and sampled data
    bias      observational rows from a factorial dataset
    learn     PC or hill climbing on a dataset
    fit       MLE parameters for a DAG
    eval      SHD, SID and TV of an estimate against a true network
    run       a whole experiment from a JSON config plus flag overrides
    report    re-render a report CSV

The worker pool of ``run`` is sized by the ``TVEVAL_WORKERS`` environment
variable. ``run`` exits with status 1 when any replicate failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datagen, discovery, harness
from .dataset import read_dataset
from .distances import MODES, InterventionPolicy, tv_dag
from .graphs import EXACT_ENUMERATION_LIMIT, Dag, enumerate_extensions, format_graph, read_graph, write_graph
from .metrics import metric_on_cpdag, shd, sid
from .networks import read_network, write_network


def _gen_config(a) -> datagen.GenConfig:
    return datagen.GenConfig(
        n_vertices=a.n_vertices,
        expected_neighborhood=a.expected_neighborhood,
        family=a.family,
        S=a.S,
        arity=a.arity,
        delta=a.delta,
        strength_multiplier=a.strength,
        seed=a.seed,
    )


def cmd_generate(a):
    if a.lookalike:
        cfg = datagen.lookalike_config(a.lookalike).with_(beta=a.beta)
        if a.subjects:
            cfg = cfg.with_(subjects=a.subjects)
        net, consistent, inter, obs = datagen.generate_lookalike(cfg, a.seed)
        # the observational rows follow the generating network with biased treatments
        write_network(datagen.observational_network(net, cfg), a.network)
        if a.graph:
            write_graph(consistent, a.graph, ["consistent DAG: generating DAG plus biasing-covariate edges"])
        if a.data:
            obs.write(a.data)
        if a.factorial:
            inter.write(a.factorial)
        return 0
    net = datagen.generate_network(_gen_config(a))
    write_network(net, a.network)
    if a.graph:
        write_graph(net.dag, a.graph)
    if a.data:
        data = datagen.sample(net, a.samples, seed=a.seed + 1)
        data.write(a.data)
    if a.factorial:
        treatments = a.treatments.split(",") if a.treatments else []
        if not treatments:
            raise SystemExit("--factorial needs --treatments")
        datagen.factorial_dataset(net, a.subjects or 100, treatments, seed=a.seed + 2).write(a.factorial)
    return 0


def cmd_bias(a):
    data = read_dataset(a.data)
    datagen.bias_sample(data, a.beta, a.covariate, a.seed).write(a.out)
    return 0


def cmd_learn(a):
    data = read_dataset(a.data)
    variables = [c for c in data.names if data.spec(c).role != "id"]
    if a.algorithm == "pc":
        test = a.test or ("g_test" if all(data.spec(v).kind == "discrete" for v in variables) else "fisher_z")
        g = discovery.pc(data, test, a.alpha, a.max_cond_size, variables)
        manifest = [f"algorithm=pc test={test} alpha={a.alpha} max_cond_size={a.max_cond_size} seed={a.seed}"]
    else:
        g = discovery.hill_climb(data, a.max_iters, a.seed, variables)
        manifest = [f"algorithm=hill_climb max_iters={a.max_iters} seed={a.seed}"]
    text = format_graph(g, manifest)
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _as_dag(g, extension):
    if isinstance(g, Dag):
        return g
    # indices refer to the deterministic enumeration order of the whole class
    exts = enumerate_extensions(g, cap=EXACT_ENUMERATION_LIMIT, seed=0)
    if extension >= len(exts):
        raise SystemExit(f"pattern has only {len(exts)} extension(s)")
    return exts[extension]


def cmd_fit(a):
    dag = _as_dag(read_graph(a.graph), a.extension)
    data = read_dataset(a.data)
    write_network(harness._fit(dag, data), a.out)
    return 0


def cmd_eval(a):
    truth = read_network(a.truth)
    policy = InterventionPolicy(rule=a.policy_rule)
    out = {}
    if a.estimate_network:
        est = read_network(a.estimate_network)
        out["shd"] = shd(truth.dag, est.dag).value
        res = sid(truth.dag, est.dag, criterion=a.criterion)
        out["sid"] = res.value
        out["tv_dag"] = tv_dag(truth, est, policy, a.mode)
        if a.detail_csv:
            Path(a.detail_csv).write_text(res.detail_csv(truth.vertices), encoding="utf-8")
    else:
        if not a.estimate or not a.data:
            raise SystemExit("eval needs --estimate-network, or --estimate with --data")
        est = read_graph(a.estimate)
        data = read_dataset(a.data)
        ctx = harness.TvContext(truth, data, a.mode, policy)
        out["shd"] = metric_on_cpdag(truth.dag, est, "shd", a.cap).value
        out["sid"] = metric_on_cpdag(truth.dag, est, lambda g, h: sid(g, h, a.criterion).value, a.cap).value
        out["tv_dag"] = metric_on_cpdag(truth.dag, est, "tv", a.cap, tv_context=ctx).value
        if a.detail_csv and isinstance(est, Dag):
            Path(a.detail_csv).write_text(sid(truth.dag, est, a.criterion).detail_csv(truth.vertices), encoding="utf-8")
    print(json.dumps(out))
    return 0


_RUN_FLAGS = {
    "recipe": str,
    "replicates": int,
    "master_seed": int,
    "output_dir": str,
    "tv_mode": str,
    "policy_rule": str,
    "beta": float,
    "alpha": float,
    "max_cond_size": int,
    "extension_cap": int,
    "domain": str,
    "subjects": int,
}


def cmd_run(a):
    base = {}
    if a.config:
        with open(a.config, encoding="utf-8") as fh:
            base = json.load(fh)
    for key in _RUN_FLAGS:
        v = getattr(a, key)
        if v is not None:
            base[key] = v
    if a.algorithms:
        base["algorithms"] = a.algorithms.split(",")
    if a.sample_sizes:
        base["sample_sizes"] = [int(x) for x in a.sample_sizes.split(",")]
    if a.strength_multipliers:
        base["strength_multipliers"] = [float(x) for x in a.strength_multipliers.split(",")]
    if a.families:
        gens = base.get("gen") or [{}]
        base["gen"] = [dict(gens[0], family=f) for f in a.families.split(",")]
    cfg = harness.ExperimentConfig.from_dict(base)
    report = harness.run_experiment(cfg)
    sys.stdout.write(harness.emit_report(report, "table"))
    if cfg.output_dir:
        harness.emit_report(report, "plotdata", Path(cfg.output_dir) / "plotdata.json")
        harness.emit_report(report, "table", Path(cfg.output_dir) / "report.txt")
    return 1 if report.failed_replicates else 0


def cmd_report(a):
    report = harness.read_report(a.report)
    text = harness.emit_report(report, a.format, a.out)
    if not a.out:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tveval", description="Evaluate causal structure learners by interventional TV.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="random network and data")
    g.add_argument("--network", required=True, help="output network file")
    g.add_argument("--graph", help="output graph file")
    g.add_argument("--data", help="output observational dataset")
    g.add_argument("--factorial", help="output factorial (interventional) dataset")
    g.add_argument("--treatments", help="comma-separated treatments for --factorial")
    g.add_argument("--subjects", type=int, help="subjects for --factorial / look-alikes")
    g.add_argument("--samples", type=int, default=5000)
    g.add_argument("--family", choices=datagen.FAMILIES, default="dirichlet")
    g.add_argument("--n-vertices", type=int, default=14)
    g.add_argument("--expected-neighborhood", type=float, default=2.0)
    g.add_argument("--S", type=float, default=10.0, help="Dirichlet equivalent sample size")
    g.add_argument("--arity", type=int, default=2)
    g.add_argument("--delta", type=float, default=0.375, help="logistic weight magnitude")
    g.add_argument("--strength", type=float, default=1.0, help="dependence-strength multiplier")
    g.add_argument("--lookalike", help="J, P or H: generate a look-alike of a real domain")
    g.add_argument("--beta", type=float, default=1.0, help="bias strength for look-alikes")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("bias", help="biased observational sample from a factorial dataset")
    b.add_argument("--data", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--beta", type=float, default=1.0)
    b.add_argument("--covariate", required=True, help="discrete biasing covariate column")
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bias)

    le = sub.add_parser("learn", help="learn a structure")
    le.add_argument("--data", required=True)
    le.add_argument("--algorithm", choices=discovery.LEARNERS, default="pc")
    le.add_argument("--test", choices=("g_test", "fisher_z"))
    le.add_argument("--alpha", type=float, default=0.05)
    le.add_argument("--max-cond-size", type=int, default=discovery.DEFAULT_MAX_COND)
    le.add_argument("--max-iters", type=int, default=1000)
    le.add_argument("--seed", type=int, default=0)
    le.add_argument("--out", help="graph file (default stdout)")
    le.set_defaults(func=cmd_learn)

    f = sub.add_parser("fit", help="MLE parameters for a graph")
    f.add_argument("--graph", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--extension", type=int, default=0, help="which extension of a CPDAG to fit")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="SHD, SID and TV against a true network")
    e.add_argument("--truth", required=True, help="true network file")
    e.add_argument("--estimate", help="estimated graph (DAG or CPDAG), fitted on --data")
    e.add_argument("--estimate-network", help="estimated network file")
    e.add_argument("--data")
    e.add_argument("--mode", choices=MODES, default="marginal")
    e.add_argument("--criterion", choices=("generalized", "backdoor"), default="generalized")
    e.add_argument("--policy-rule", default="default")
    e.add_argument("--cap", type=int, default=100, help="max CPDAG extensions averaged")
    e.add_argument("--detail-csv", help="write the per-pair SID matrix here")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("run", help="run an experiment recipe")
    r.add_argument("--config", help="JSON config (keys are ExperimentConfig fields)")
    for key, typ in _RUN_FLAGS.items():
        r.add_argument("--" + key.replace("_", "-"), type=typ)
    r.add_argument("--algorithms", help="comma-separated")
    r.add_argument("--sample-sizes", help="comma-separated")
    r.add_argument("--strength-multipliers", help="comma-separated")
    r.add_argument("--families", help="comma-separated generator families")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="render a report CSV")
    rep.add_argument("--report", required=True)
    rep.add_argument("--format", choices=("table", "csv", "plotdata"), default="table")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
