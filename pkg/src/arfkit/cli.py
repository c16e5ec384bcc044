"""Command-line surface.

Commands: train (adversarial fit + density estimation -> model file),
sample (synthesis, optionally evidence-conditioned), nll (held-out score),
simulate (data generators), efficacy (synthetic-vs-oracle learner protocol),
bench (suite runners emitting plot-ready CSV), report (figures from a bench
CSV).

Exit codes: 0 ok, 2 usage, 3 data/model error, 4 adversarial round budget
exhausted (the model is still written). Thread count comes from --threads,
falling back to ARFKIT_THREADS, then 1.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

from . import __version__
from .arf import ArfConfig, arf_fit
from .evalbench import (ForgeGenerator, IdentityGenerator, discriminator_score,
                        fit_pwc, pwc_nll, run_efficacy, write_bench_csv)
from .forde import FordeFitConfig, forde_fit, nll
from .forest import ForestConfig
from .forge import conditional_sample, forge_sample
from .persist import load_model, save_model
from .simgen import (SHAPE_NAMES, ShapeSpec, ToeplitzSpec, gen_logistic_dataset,
                     gen_shape, gen_toeplitz_gaussian)
from .tabular import (DataError, drop_column, load_csv, load_schema, save_csv,
                      save_schema, split_train_test, stack_rows)

_TOEPLITZ_GRID = (250, 1000, 4000)


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    return int(os.environ.get("ARFKIT_THREADS", "1"))


def _seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")


def _load_data(path, schema_path=None):
    schema = load_schema(schema_path) if schema_path else None
    return load_csv(path, schema=schema)


def _forest_config(args) -> ForestConfig:
    return ForestConfig(num_trees=args.trees, mtry=args.mtry,
                        min_node_size=args.min_node, max_depth=args.max_depth)


def cmd_train(args) -> int:
    ds = _load_data(args.data, args.schema)
    cfg = ArfConfig(forest=_forest_config(args), delta=args.delta,
                    max_iters=args.max_iters, seed=args.seed)
    t0 = time.perf_counter()
    arf = arf_fit(ds, cfg, threads=_threads(args))
    model = forde_fit(arf, ds, FordeFitConfig(alpha=args.alpha))
    dt = time.perf_counter() - t0
    model.meta.update({
        "seed": args.seed,
        "trace": [float(a) for a in arf.trace],
        "iterations_run": arf.iterations_run,
        "converged": arf.converged,
        "delta": cfg.delta,
        "forest": {"num_trees": cfg.forest.num_trees,
                   "min_node_size": cfg.forest.min_node_size,
                   "mtry": cfg.forest.mtry,
                   "max_depth": cfg.forest.max_depth},
    })
    save_model(model, args.out)
    status = "converged" if arf.converged else "not converged"
    print(f"rounds: {arf.iterations_run} ({status})")
    print("oob accuracy trace: " + " ".join(f"{a:.4f}" for a in arf.trace))
    print(f"wall time: {dt:.2f} s")
    print(f"wrote {args.out}")
    if not arf.converged:
        print(f"warning: no convergence within {cfg.max_iters} rounds; "
              "model written anyway", file=sys.stderr)
        return 4
    return 0


def _parse_evidence(text: str) -> dict:
    if text.startswith("@"):
        with open(text[1:], encoding="utf-8") as fh:
            return json.load(fh)
    return json.loads(text)


def cmd_sample(args) -> int:
    model = load_model(args.model)
    if args.evidence:
        spec = _parse_evidence(args.evidence)
        out = conditional_sample(model, spec, args.n, args.seed,
                                 exact_bayes=args.exact_bayes)
    else:
        out = forge_sample(model, args.n, args.seed)
    save_csv(out, args.out)
    print(f"wrote {out.n_rows} rows to {args.out}")
    return 0


def cmd_nll(args) -> int:
    model = load_model(args.model)
    ds = load_csv(args.data, schema=model.schema)
    res = nll(model, ds, zero_floor=args.zero_floor)
    print(res)
    return 0


def cmd_simulate(args) -> int:
    if args.toeplitz:
        if args.informative is not None:
            ds = gen_logistic_dataset(args.n, args.d, args.rho,
                                      args.informative, args.seed,
                                      target=args.target)
        else:
            ds = gen_toeplitz_gaussian(ToeplitzSpec(args.n, args.d, args.rho,
                                                    args.seed))
    else:
        ds = gen_shape(ShapeSpec(args.name, args.n, args.seed))
    save_csv(ds, args.out)
    if args.schema_out:
        save_schema(ds.schema, args.schema_out)
    print(f"wrote {ds.n_rows} rows x {ds.n_cols} columns to {args.out}")
    return 0


def _make_generator(name: str, threads: int):
    if name == "identity":
        return IdentityGenerator()
    if name.startswith("forge-"):
        return ForgeGenerator(preset=name.split("-", 1)[1], threads=threads)
    raise ValueError(f"unknown generator {name!r}")


def cmd_efficacy(args) -> int:
    ds = _load_data(args.data, args.schema)
    trn, tst = split_train_test(ds, args.test_fraction, args.split_seed,
                                stratify=args.target)
    gen = _make_generator(args.generator, _threads(args))
    report = run_efficacy(trn, tst, args.target, gen, seeds=args.seeds)
    summary = report.summary()
    for learner in report.learners + ("all",):
        o = summary["oracle"][learner]
        s = summary["synthetic"][learner]
        print(f"{learner:>8}  oracle acc {o['accuracy'][0]:.4f} "
              f"f1 {o['f1'][0]:.4f} | synthetic acc {s['accuracy'][0]:.4f} "
              f"f1 {s['f1'][0]:.4f}")
    gm, gse = summary["gen_seconds"]
    se_txt = "" if math.isnan(gse) else f" (se {gse:.2f})"
    print(f"generator fit+sample: {gm:.2f} s per seed{se_txt}")
    if args.out:
        dataset = os.path.splitext(os.path.basename(args.data))[0]
        write_bench_csv(args.out, report.csv_rows(dataset, gen.name))
        print(f"wrote {args.out}")
    return 0


def _bench_toeplitz(args, threads: int) -> list[tuple]:
    rows = []
    trees = args.trees if args.trees else 100
    for seed in args.seeds:
        tst = gen_toeplitz_gaussian(
            ToeplitzSpec(args.n_tst, args.d, args.rho, seed + 10_000))
        for n in args.n_grid:
            ds_xy = gen_logistic_dataset(n, args.d, args.rho,
                                         args.informative, seed)
            ds_x = drop_column(ds_xy, "y")
            arf = arf_fit(ds_x, ArfConfig(
                forest=ForestConfig(num_trees=trees), seed=seed),
                threads=threads)
            forde = forde_fit(arf, ds_x)
            name = f"toeplitz_n{n}"
            rows.append((name, "forde", "all", "nll",
                         nll(forde, tst).mean, seed))
            pwc_u = fit_pwc(ds_x, arf)
            rows.append((name, "pwc-unsup", "all", "nll",
                         pwc_nll(pwc_u, tst).mean, seed))
            pwc_s = fit_pwc(ds_xy, "y", ForestConfig(num_trees=trees, seed=seed))
            rows.append((name, "pwc-sup", "all", "nll",
                         pwc_nll(pwc_s, tst).mean, seed))
    return rows


def _bench_shapes(args, threads: int) -> list[tuple]:
    rows = []
    for name in SHAPE_NAMES:
        for seed in args.seeds:
            ds = gen_shape(ShapeSpec(name, args.n, seed))
            gen = ForgeGenerator(threads=threads)
            gen.fit(ds, seed)
            synth = gen.sample(args.m, seed)
            score = discriminator_score(ds, synth, seed=seed)
            rows.append((name, gen.name, "all", "disc_score", score, seed))
    return rows


TWENTYDS_NAMES = ("nltcs", "msnbc", "kdd", "plants", "audio", "jester",
                  "netflix", "accidents", "retail", "pumsb_star", "dna",
                  "kosarek", "msweb", "book", "tmovie", "cwebkb", "cr52",
                  "c20ng", "bbc", "ad")


def _bench_twentyds(args, threads: int) -> list[tuple]:
    data_dir = args.data_dir or os.environ.get("ARFKIT_DATA")
    if not data_dir or not os.path.isdir(data_dir):
        raise DataError("twentyds suite needs --data-dir (or ARFKIT_DATA) "
                        "pointing at the converted CSVs; see "
                        "scripts/fetch_twentyds.py")
    trees = args.trees if args.trees else 100
    names = args.datasets or [n for n in TWENTYDS_NAMES if os.path.exists(
        os.path.join(data_dir, f"{n}.train.csv"))]
    rows = []
    for name in names:
        schema = load_schema(os.path.join(data_dir, f"{name}.schema.json"))
        parts = {p: load_csv(os.path.join(data_dir, f"{name}.{p}.csv"),
                             schema=schema) for p in ("train", "valid", "test")}
        trn = stack_rows(parts["train"], parts["valid"])
        for seed in args.seeds:
            arf = arf_fit(trn, ArfConfig(
                forest=ForestConfig(num_trees=trees), seed=seed),
                threads=threads)
            model = forde_fit(arf, trn)
            rows.append((name, "forde", "all", "nll",
                         nll(model, parts["test"]).mean, seed))
    return rows


def cmd_bench(args) -> int:
    threads = _threads(args)
    if args.suite == "toeplitz":
        rows = _bench_toeplitz(args, threads)
    elif args.suite == "shapes":
        rows = _bench_shapes(args, threads)
    else:
        rows = _bench_twentyds(args, threads)
    write_bench_csv(args.out, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_report(args) -> int:
    from .report import render_report
    paths = render_report(args.csv, args.outdir)
    if not paths:
        print("no recognized metrics in the CSV", file=sys.stderr)
        return 3
    for p in paths:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arfkit",
        description="Adversarial random forests: density estimation and "
                    "tabular data synthesis.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a density model from a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", help="schema sidecar (otherwise inferred)")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--min-node", type=int, default=2, dest="min_node")
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=None, dest="max_depth")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--max-iters", type=int, default=10, dest="max_iters")
    p.add_argument("--alpha", type=float, default=1.0,
                   help="Dirichlet prior count per allowed level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw synthetic rows from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--evidence", help="JSON object or @file: column -> "
                                      "[lo, hi] | level | [levels...]")
    p.add_argument("--exact-bayes", action="store_true", dest="exact_bayes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("nll", help="mean negative log-likelihood on a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--zero-floor", action="store_true", dest="zero_floor")
    p.set_defaults(func=cmd_nll)

    p = sub.add_parser("simulate", help="write a generated dataset")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--name", choices=SHAPE_NAMES)
    g.add_argument("--toeplitz", action="store_true")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--informative", type=float, default=None,
                   help="with --toeplitz: add a logistic target with this "
                        "informative feature fraction")
    p.add_argument("--target", default="y")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out", dest="schema_out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("efficacy", help="synthetic-vs-oracle learner protocol")
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--target", required=True)
    p.add_argument("--generator", default="forge-default",
                   help="identity | forge-default | forge-benchmark")
    p.add_argument("--seeds", type=_seeds, default=(0, 1, 2, 3, 4))
    p.add_argument("--test-fraction", type=float, default=1 / 3,
                   dest="test_fraction")
    p.add_argument("--split-seed", type=int, default=0, dest="split_seed")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="also write per-seed rows as bench CSV")
    p.set_defaults(func=cmd_efficacy)

    p = sub.add_parser("bench", help="run a suite, write plot-ready CSV")
    p.add_argument("--suite", required=True,
                   choices=("toeplitz", "shapes", "twentyds"))
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=_seeds, default=(0, 1, 2, 3, 4))
    p.add_argument("--trees", type=int, default=None,
                   help="default 20 (toeplitz/shapes) or 100 (twentyds)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--n-grid", type=_seeds, default=_TOEPLITZ_GRID,
                   dest="n_grid", help="toeplitz training sizes")
    p.add_argument("--n-tst", type=int, default=1000, dest="n_tst")
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--informative", type=float, default=0.5)
    p.add_argument("--n", type=int, default=2000, help="shapes training size")
    p.add_argument("--m", type=int, default=1000, help="shapes synthetic size")
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--datasets", type=lambda s: s.split(","), default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="render figures from a bench CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--outdir")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        return args.func(args)
    except (DataError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
