"""Batch command-line front door.

Subcommands: ``train``, ``certify``, ``check-loss``, ``estimate-rad``,
``minimax``, ``sweep-gamma``.  Models and certificates are JSON, datasets and
sweeps are CSV.  Exit codes: 0 success, 1 usage error, 2 data error, 3
numeric-domain error.

Randomized commands take ``--seed``; when omitted a seed is generated and
recorded in the command's output so every artifact stays reproducible.  A JSON
file passed via ``--config`` supplies defaults for any flag (keys use
underscores, e.g. ``{"rounds": 50}``); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import secrets
import sys

import numpy as np

from . import bounds, complexity, minimax
from .boosting import Ensemble, TrainConfig, empirical_risk, train
from .data import load_dataset
from .errors import DataFormatError, NumericDomainError
from .losses import check_sbl, parse_loss

_TASK_BY_KIND = {
    "class": "multiclass",
    "multilabel": "multilabel",
    "regression": "regression",
    "sign": "sign",
}


class UsageError(ValueError):
    pass


def _resolve_seed(seed, sink):
    if seed is not None:
        return int(seed)
    seed = secrets.randbits(32)
    sink(f"generated seed: {seed}")
    return seed


def _load_for_loss(path, loss, q=None):
    task = _TASK_BY_KIND[loss.label_kind]
    k = getattr(loss, "k", None) or getattr(getattr(loss, "inner", None), "k", None)
    return load_dataset(path, task=task, q=q, k=k)


def _write_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _floats(text):
    return [float(x) for x in str(text).split(",") if x != ""]


def _ints(text):
    return [int(x) for x in str(text).split(",") if x != ""]


# ---------------------------------------------------------------------------
# subcommand implementations

def _cmd_train(args, out):
    loss = parse_loss(args.loss)
    data = _load_for_loss(args.data, loss, q=args.q)
    seed = _resolve_seed(args.seed, out)
    cfg = TrainConfig(
        rounds=args.rounds,
        leaves=args.leaves,
        tau=args.tau,
        tau_decay=args.tau_decay,
        beta=args.beta,
        shrinkage=args.shrinkage,
        min_samples_leaf=args.min_samples_leaf,
        patience=args.patience,
        certify_aware=args.certify_aware,
        delta=args.delta,
        rng_seed=seed,
    )
    ens = train(data, loss, cfg)
    doc = ens.to_dict()
    _write_json(doc, args.out)
    out(f"trained {len(ens.stages)} stages, budget used "
        f"{sum(a for a, _ in ens.stages):.6g} of {ens.beta:.6g}")
    out(f"training risk: {empirical_risk(ens, data):.6g}")
    out(f"model written to {args.out} (hash {doc['content_hash'][:12]})")
    return 0


def _cmd_certify(args, out):
    doc = _read_json(args.model)
    ens = Ensemble.from_dict(doc)
    data = _load_for_loss(args.data, ens.loss, q=ens.q)
    if data.q != ens.q or data.d != ens.d:
        raise DataFormatError(
            f"data dimensions (q={data.q}, d={data.d}) do not match the model "
            f"(q={ens.q}, d={ens.d})"
        )
    cert = bounds.certify(ens, data, delta=args.delta, c0=args.c0)
    cert_doc = cert.to_dict()
    if args.out:
        _write_json(cert_doc, args.out)
        out(f"certificate written to {args.out}")
    rows = [
        ("empirical risk", cert.empirical_risk),
        ("gamma", cert.gamma),
        ("rhat", cert.rhat),
        ("r0", cert.r0),
        ("bound (explicit)", cert.bound_explicit),
        ("bound (c-form, c0=%g)" % cert.c0, cert.bound_cform),
        ("ensemble term", cert.ensemble_term),
    ]
    width = max(len(name) for name, _ in rows)
    for name, val in rows:
        out(f"{name:<{width}}  {val:.6g}")
    out(f"model hash: {cert.model_hash}")
    return 0


def _cmd_check_loss(args, out):
    loss = parse_loss(args.loss)
    seed = _resolve_seed(args.seed, out)
    params = None
    if args.lam is not None or args.theta is not None:
        from .losses import SblParams

        if args.lam is None or args.theta is None:
            raise UsageError("--lambda and --theta must be given together")
        params = SblParams(args.lam, args.theta, args.bound)
    report = check_sbl(
        loss,
        params=params,
        q=args.q,
        trials=args.trials,
        box=args.box,
        rng_seed=seed,
    )
    verdict = "passed" if report.passed else "FALSIFIED"
    out(f"loss {args.loss!r}: {verdict} after {report.trials} trials "
        f"(max violation {report.max_violation:.3g}, tolerance {report.tolerance:g})")
    out(f"observed lambda: {report.observed_lam:.6g}")
    if not report.passed:
        u, v, y = report.worst_case
        out(f"worst case: u={np.round(u, 6).tolist()} v={np.round(v, 6).tolist()} y={y}")
    return 0


def _cmd_estimate_rad(args, out):
    seed = _resolve_seed(args.seed, out)
    if (args.model is None) == (not args.stumps):
        raise UsageError("exactly one of --model or --stumps is required")
    if args.stumps:
        if args.tau is None:
            raise UsageError("--stumps requires --tau")
        # any numeric CSV works here; labels are irrelevant for the stump class
        data = load_dataset(args.data, task="multiclass", q=None)
        est = complexity.exact_stump_rademacher(
            data.X, q=args.q or data.q, tau=args.tau, draws=args.draws, rng_seed=seed
        )
        q = args.q or data.q
        report = {
            "kind": "exact_stump",
            "n": data.n,
            "d": data.d,
            "q": q,
            "tau": args.tau,
            "estimate": est.mean,
            "std_error": est.std_error,
            "draws": est.draws,
            "analytic_bound": complexity.tree_class_rad_bound(2, args.tau, data.d, data.n, q),
            "seed": seed,
        }
    else:
        ens = Ensemble.from_dict(_read_json(args.model))
        data = _load_for_loss(args.data, ens.loss, q=ens.q)
        if not ens.stages:
            raise UsageError("model has no stages; nothing to project")
        grid = complexity.project_class(
            [tree.predict_batch for _, tree in ens.stages], data.X, ens.q
        )
        est = complexity.empirical_rademacher(grid, draws=args.draws, rng_seed=seed)
        tau_max = max(t for _, t in ens.alpha_tau_pairs)
        report = {
            "kind": "model_trees",
            "n": data.n,
            "d": data.d,
            "q": ens.q,
            "members": len(ens.stages),
            "estimate": est.mean,
            "std_error": est.std_error,
            "draws": est.draws,
            "analytic_bound": complexity.tree_class_rad_bound(
                ens.max_leaves, tau_max, data.d, data.n, ens.q
            ),
            "seed": seed,
        }
    if args.out:
        _write_json(report, args.out)
    out(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_minimax(args, out):
    seed = _resolve_seed(args.seed, out)
    rows = []
    for lam, theta, n, kappa in itertools.product(
        _floats(args.lam), _floats(args.theta), _ints(args.n), _floats(args.kappa)
    ):
        rep = minimax.run_experiment(
            lam, theta, n, args.q, kappa, trials=args.trials, rng_seed=seed
        )
        for res in rep["results"].values():
            rows.append(
                {
                    "lambda": lam,
                    "theta": theta,
                    "n": n,
                    "kappa": kappa,
                    "learner": res.learner,
                    "mean_risk": res.mean_risk,
                    "se": res.std_error,
                    "lower_envelope": rep["lower_envelope"],
                }
            )
    fields = ["lambda", "theta", "n", "kappa", "learner", "mean_risk", "se", "lower_envelope"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    out(f"{len(rows)} rows written to {args.out} (seed {seed})")
    return 0


def _cmd_sweep_gamma(args, out):
    grid = _read_json(args.grid_file)
    keys = ["n", "q", "delta", "lambda", "theta", "beta", "loss_bound", "rad_nq"]
    missing = [k for k in keys if k not in grid]
    if missing:
        raise UsageError(f"grid file is missing keys: {missing}")
    lists = [grid[k] if isinstance(grid[k], list) else [grid[k]] for k in keys]
    rows = []
    for combo in itertools.product(*lists):
        vals = dict(zip(keys, combo))
        inputs = bounds.BoundInputs(
            n=int(vals["n"]),
            q=int(vals["q"]),
            delta=float(vals["delta"]),
            lam=float(vals["lambda"]),
            theta=float(vals["theta"]),
            beta=float(vals["beta"]),
            loss_bound=float(vals["loss_bound"]),
            rad_nq=float(vals["rad_nq"]),
        )
        vals["gamma"] = bounds.gamma(inputs)
        rows.append(vals)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys + ["gamma"])
        writer.writeheader()
        writer.writerows(rows)
    out(f"{len(rows)} rows written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mobound",
        description="Train, certify and stress-test multi-output tree ensembles.",
        exit_on_error=False,
    )
    parser.add_argument("--config", help="JSON file of default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", exit_on_error=False)
    p.add_argument("--data", required=True)
    p.add_argument("--loss", required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--leaves", type=int, default=4)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--tau-decay", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--shrinkage", type=float, default=0.5)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--patience", type=int, default=0)
    p.add_argument("--certify-aware", action="store_true")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--q", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("certify", exit_on_error=False)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("check-loss", exit_on_error=False)
    p.add_argument("--loss", required=True)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--box", type=float, default=5.0)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--bound", type=float, default=float("inf"))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_check_loss)

    p = sub.add_parser("estimate-rad", exit_on_error=False)
    p.add_argument("--data", required=True)
    p.add_argument("--model")
    p.add_argument("--stumps", action="store_true")
    p.add_argument("--tau", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--draws", type=int, default=2000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_estimate_rad)

    p = sub.add_parser("minimax", exit_on_error=False)
    p.add_argument("--lambda", dest="lam", required=True, help="comma-separated sweep values")
    p.add_argument("--theta", required=True, help="comma-separated sweep values")
    p.add_argument("--n", required=True, help="comma-separated sweep values")
    p.add_argument("--kappa", required=True, help="comma-separated sweep values")
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_minimax)

    p = sub.add_parser("sweep-gamma", exit_on_error=False)
    p.add_argument("--grid-file", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep_gamma)

    return parser


def _apply_config(parser, argv):
    """Insert config-file values as defaults for flags not given explicitly."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    try:
        path = argv[i + 1]
    except IndexError:
        raise UsageError("--config needs a file argument")
    try:
        config = _read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(config, dict):
        raise UsageError("config file must hold a JSON object")
    rest = argv[:i] + argv[i + 2 :]
    extra = []
    for key, val in config.items():
        flag = "--" + str(key).replace("_", "-")
        if flag in rest:
            continue
        if isinstance(val, bool):
            if val:
                extra.append(flag)
        else:
            extra.extend([flag, str(val)])
    # config defaults go right after the subcommand name
    for j, tok in enumerate(rest):
        if not tok.startswith("-"):
            return rest[: j + 1] + extra + rest[j + 1 :]
    return rest + extra


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    out = print
    try:
        argv = _apply_config(parser, argv)
        try:
            args = parser.parse_args(argv)
        except argparse.ArgumentError as exc:
            raise UsageError(str(exc))
        except SystemExit:  # argparse --help or hard error paths
            return 0 if ("-h" in argv or "--help" in argv) else 1
        return args.func(args, out)
    except NumericDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
