"""Command-line entry point: ``berncert <command> ...``.

Exit codes: 0 success, 2 bad arguments, 3 I/O failure, 4 constraint violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import datasets
from .attacks import (AttackConfig, HeadTarget, InputTarget, SmoothedTarget, fgsm, pgd)
from .bernstein import BernsteinSmoother
from .boundary import BoundarySystem
from .certify import CERT_F_TOL, certified_curve, certify, certify_2d, certify_point, smoother_for
from .errors import ConstraintError, DomainError, GridTooLargeError
from .model import AdversarialConfig, MlpModel, TrainConfig, accuracy, train_toy
from .regression import fit_regressor, smoothed_curve, total_variation
from .solvers import METHODS, SolverConfig

log = logging.getLogger("berncert")

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_CONSTRAINT = 0, 2, 3, 4

CERT_HEADER = ["index", "label", "prediction", "radius", "p", "residual", "converged", "xi", "c",
               "space", "rho", "anchor_residual"]
ATTACK_HEADER = ["index", "label", "pred_clean", "pred_adv", "epsilon", "norm", "success"]


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _fmt(v) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


def _float_or_inf(text) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def _int_list(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _default_seed() -> int:
    try:
        return int(os.environ.get("BERNCERT_SEED", "0"))
    except ValueError:
        return 0


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}", EXIT_IO)


def _load_model(path) -> MlpModel:
    try:
        return MlpModel.from_json(_read_text(path))
    except (KeyError, ValueError, TypeError) as e:
        raise CliError(f"{path}: invalid model file ({e})", EXIT_IO)


def _load_dataset(path):
    try:
        return datasets.read_labeled_csv(path)
    except OSError as e:
        raise CliError(f"cannot read dataset {path}: {e.strerror}", EXIT_IO)
    except ValueError as e:
        raise CliError(str(e), EXIT_IO)


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(f"cannot create output directory {out}: {e.strerror}", EXIT_IO)
    return out


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _smoother(model, n) -> BernsteinSmoother:
    try:
        return smoother_for(model, n)
    except GridTooLargeError as e:
        raise CliError(str(e), EXIT_CONSTRAINT)


# --- data -------------------------------------------------------------------

def cmd_data(args):
    if args.kind == "regression":
        x, y = datasets.wiggly_regression(n=args.n, seed=args.seed)
        datasets.write_xy_csv(args.out, x, y)
        return
    if args.kind == "moons":
        x, y = datasets.two_moons(n=args.n, noise=args.noise, seed=args.seed)
    else:
        x, y = datasets.blobs(n=args.n, seed=args.seed)
    datasets.write_labeled_csv(args.out, x, y)


# --- train ------------------------------------------------------------------

def cmd_train(args):
    x, y = _load_dataset(args.dataset)
    adv = None
    if args.adv_steps:
        adv = AdversarialConfig(steps=args.adv_steps, epsilon=args.adv_eps, norm=args.adv_norm)
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size,
                      power_iters_train=args.power_iters_train,
                      power_iters_freeze=args.power_iters_freeze, adversarial=adv)
    model = train_toy(x, y, cfg, d=args.d, hidden=args.hidden, head_hidden=args.head_hidden,
                      num_classes=args.classes, seed=args.seed)
    xt, yt = _load_dataset(args.test) if args.test else (x, y)
    smoother = _smoother(model, args.n)
    metrics = {
        "train_acc": accuracy(model, x, y),
        "nat_acc": float(np.mean(smoother.predict(model.features(xt)) == yt)),
        "base_acc": accuracy(model, xt, yt),
        "n": args.n,
        "epochs": args.epochs,
        "seed": args.seed,
    }
    out = _out_dir(args.out_dir)
    (out / "model.json").write_text(model.to_json() + "\n")
    _write_json(out / "metrics.json", metrics)
    log.info("train_acc=%.4f nat_acc=%.4f", metrics["train_acc"], metrics["nat_acc"])


# --- certify ----------------------------------------------------------------

def _certify_chunk(payload):
    model_json, smoother_json, rows, p, c, cfg, allow = payload
    model = MlpModel.from_json(model_json)
    smoother = BernsteinSmoother.from_json(smoother_json)
    out = []
    for index, inputs, label in rows:
        t0 = time.perf_counter()
        r = certify(inputs, model, smoother, p, c, cfg, index=index, label=label,
                    allow_truncation=allow)
        out.append((r, time.perf_counter() - t0))
    return out


def _cert_row(r):
    return [r.index, r.label, r.prediction, _fmt(r.radius), _fmt(r.p), _fmt(r.residual_norm_sq),
            int(r.converged), _fmt(r.xi), _fmt(r.c_param), "feature",
            " ".join(str(i) for i in r.rho), _fmt(r.anchor_residual)]


def cmd_certify(args):
    model = _load_model(args.model)
    x, y = _load_dataset(args.dataset)
    if model.d > model.k and not args.allow_truncation:
        raise CliError(f"feature dimension d={model.d} exceeds the number of classes "
                       f"K={model.k}; the boundary system needs d <= K", EXIT_CONSTRAINT)
    if x.shape[1] != model.input_dim:
        raise CliError(f"dataset has {x.shape[1]} features, model expects {model.input_dim}",
                       EXIT_ARGS)
    cfg = SolverConfig(method=args.solver, max_iters=args.max_iters, f_tol=args.tol,
                       x_tol=args.xtol, subproblem_norm=math.inf if args.dogbox else 2)
    smoother = _smoother(model, args.n)
    rows = [(i, x[i], int(y[i])) for i in range(len(y))]
    jobs = max(1, min(args.jobs or os.cpu_count() or 1, len(rows)))
    chunks = [rows[i::jobs] for i in range(jobs)]
    payloads = [(model.to_json(), smoother.to_json(), ch, args.p, args.C, cfg, args.allow_truncation)
                for ch in chunks]
    start = time.perf_counter()
    if jobs == 1:
        parts = [_certify_chunk(payloads[0])]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_certify_chunk, payloads))
    wall = time.perf_counter() - start
    done = sorted((item for part in parts for item in part), key=lambda it: it[0].index)
    results = [r for r, _ in done]

    out = _out_dir(args.out_dir)
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CERT_HEADER)
        for r in results:
            w.writerow(_cert_row(r))
    summary = {
        "examples": len(results),
        "natural_accuracy": float(np.mean([r.correct for r in results])),
        "mean_radius": float(np.mean([r.radius for r in results])),
        "convergence_rate": float(np.mean([r.converged for r in results])),
        "seconds_per_example": float(np.mean([t for _, t in done])),
        "wall_seconds": wall,
        "n": args.n, "p": _fmt(args.p), "C": _fmt(args.C), "solver": args.solver,
        "radius_space": "feature",
        "seed": args.seed,
    }
    _write_json(out / "summary.json", summary)
    log.info("certified %d examples, mean radius %.4g", len(results), summary["mean_radius"])


# --- curve ------------------------------------------------------------------

class _Row:
    def __init__(self, rec):
        self.label = int(rec["label"])
        self.prediction = int(rec["prediction"])
        self.radius = float(rec["radius"])
        self.converged = rec["converged"].strip() in ("1", "true", "True")

    @property
    def correct(self):
        return self.label == self.prediction


def read_results_csv(path):
    try:
        with open(path, newline="") as fh:
            return [_Row(rec) for rec in csv.DictReader(fh)]
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}", EXIT_IO)
    except (KeyError, ValueError) as e:
        raise CliError(f"{path}: malformed results file ({e})", EXIT_IO)


def cmd_curve(args):
    radii = args.radii
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise CliError("--radii must be sorted ascending", EXIT_ARGS)
    rows = read_results_csv(args.results)
    if not rows:
        raise CliError(f"{args.results}: no results", EXIT_IO)
    curve = certified_curve(rows, radii, exclude_unconverged=args.exclude_unconverged)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "certified_accuracy"])
        for r, acc in curve:
            w.writerow([_fmt(r), _fmt(acc)])


# --- attack -----------------------------------------------------------------

def cmd_attack(args):
    model = _load_model(args.model)
    x, y = _load_dataset(args.dataset)
    smoother = _smoother(model, args.n) if args.target == "smoothed" else None
    if args.space == "feature":
        target = SmoothedTarget(smoother) if smoother is not None else HeadTarget(model)
        points = model.features(x)
    else:
        target = InputTarget(model, smoother)
        points = x
    cfg = AttackConfig(norm=args.norm, epsilon=args.eps, steps=args.steps, step_size=args.step_size,
                       space=args.space)
    out = _out_dir(args.out_dir)
    clean_ok = adv_ok = 0
    with open(out / "attack.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ATTACK_HEADER)
        for i, (pt, label) in enumerate(zip(points, y)):
            clean = int(np.argmax(target.logits(pt)))
            if args.method == "fgsm":
                adv, _ = fgsm(target, pt, int(label), args.eps, args.norm)
            else:
                adv, _ = pgd(target, pt, int(label), cfg)
            pred = int(np.argmax(target.logits(adv)))
            clean_ok += clean == label
            adv_ok += pred == label
            w.writerow([i, int(label), clean, pred, _fmt(args.eps), _fmt(args.norm), int(pred != clean)])
    _write_json(out / "attack_summary.json", {
        "examples": len(y),
        "natural_accuracy": clean_ok / len(y),
        "robust_accuracy": adv_ok / len(y),
        "method": args.method, "space": args.space, "target": args.target,
        "epsilon": args.eps, "norm": _fmt(args.norm), "seed": args.seed,
    })


# --- demo2d -----------------------------------------------------------------

def cmd_demo2d(args):
    model = _load_model(args.model)
    if model.d != 2:
        raise CliError(f"demo2d needs a d=2 model, got d={model.d}", EXIT_CONSTRAINT)
    axis = np.linspace(0.0, 1.0, args.grid)
    pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    base = np.argmax(model.logits(pts), axis=1)
    rasters, disagreement = {}, {}
    for n in args.n:
        pred = _smoother(model, n).predict(pts)
        rasters[n] = pred
        disagreement[str(n)] = float(np.mean(pred != base))
    out = _out_dir(args.out_dir)
    with open(out / "grids.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_1", "x_2", "base"] + [f"n_{n}" for n in args.n])
        for i, p in enumerate(pts):
            w.writerow([_fmt(p[0]), _fmt(p[1]), int(base[i])] + [int(rasters[n][i]) for n in args.n])

    smoother = _smoother(model, args.radius_n)
    rng = np.random.default_rng(args.seed)
    centers = rng.uniform(0.0, 1.0, (args.samples, 2))
    with open(out / "radii.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x_1", "x_2", "prediction", "radius", "point_1", "point_2", "converged"])
        for i, c in enumerate(centers):
            if args.method == "regularized":
                r = certify_2d(c, BoundarySystem.at(smoother, c), index=i)
            else:
                r = certify_point(c, smoother, 2, index=i, allow_truncation=True)
            w.writerow([i, _fmt(c[0]), _fmt(c[1]), r.prediction, _fmt(r.radius),
                        _fmt(r.boundary_point[0]), _fmt(r.boundary_point[1]), int(r.converged)])
    _write_json(out / "demo_summary.json", {"grid": args.grid, "disagreement": disagreement,
                                            "radius_n": args.radius_n, "method": args.method})


# --- regress ----------------------------------------------------------------

def cmd_regress(args):
    try:
        x, y = datasets.read_xy_csv(args.data)
    except OSError as e:
        raise CliError(f"cannot read {args.data}: {e.strerror}", EXIT_IO)
    except ValueError as e:
        raise CliError(str(e), EXIT_IO)
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        raise CliError("regression data needs at least two distinct x values", EXIT_ARGS)
    u = (x - lo) / (hi - lo)
    reg = fit_regressor(u, y, hidden=args.hidden, epochs=args.epochs, seed=args.seed)
    grid, base, smooth = smoothed_curve(reg, args.n, args.points)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "base_prediction", "smoothed_prediction"])
        for g, b, s in zip(grid, base, smooth):
            w.writerow([_fmt(lo + g * (hi - lo)), _fmt(b), _fmt(s)])
    log.info("total variation: base %.4g, smoothed %.4g", total_variation(base), total_variation(smooth))


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="berncert", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def seeded(p):
        p.add_argument("--seed", type=int, default=_default_seed(),
                       help="random seed (default: $BERNCERT_SEED or 0)")
        return p

    p = seeded(sub.add_parser("data", help="write a toy dataset CSV"))
    p.add_argument("kind", choices=["moons", "blobs", "regression"])
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_data)

    p = seeded(sub.add_parser("train", help="train a spectrally normalized MLP"))
    p.add_argument("dataset")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--test", help="held-out CSV for nat_acc (default: training set)")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--hidden", type=_int_list, default=(16, 16))
    p.add_argument("--head-hidden", type=_int_list, default=(16,))
    p.add_argument("--d", type=int, default=2, help="feature dimension")
    p.add_argument("--classes", type=int, help="number of classes (default: max label + 1)")
    p.add_argument("--n", type=int, default=1, help="Bernstein degree for nat_acc")
    p.add_argument("--power-iters-train", type=int, default=1)
    p.add_argument("--power-iters-freeze", type=int, default=1000)
    p.add_argument("--adv-steps", type=int, default=0, help="PGD adversarial training steps (0 = off)")
    p.add_argument("--adv-eps", type=float, default=0.1)
    p.add_argument("--adv-norm", type=_float_or_inf, default=2)
    p.set_defaults(func=cmd_train)

    p = seeded(sub.add_parser("certify", help="certified radii for every row of a dataset"))
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--p", type=_float_or_inf, default=2)
    p.add_argument("--C", type=_float_or_inf, default=math.inf, help="conservative parameter")
    p.add_argument("--solver", choices=METHODS, default="lm")
    p.add_argument("--dogbox", action="store_true", help="l-inf trust region (trust_region only)")
    p.add_argument("--tol", type=float, default=CERT_F_TOL, help="residual sum-of-squares tolerance")
    p.add_argument("--xtol", type=float, default=1.49e-8)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--jobs", type=int, default=0, help="worker processes (default: all cores)")
    p.add_argument("--allow-truncation", action="store_true",
                   help="accept d > K by truncating the boundary system")
    p.set_defaults(func=cmd_certify)

    p = seeded(sub.add_parser("curve", help="certified accuracy at a list of radii"))
    p.add_argument("results")
    p.add_argument("--radii", type=_float_list, default=[0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3])
    p.add_argument("--out", default="curve.csv")
    p.add_argument("--exclude-unconverged", action="store_true")
    p.set_defaults(func=cmd_curve)

    p = seeded(sub.add_parser("attack", help="FGSM or PGD against the base or smoothed classifier"))
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--out-dir", default=".")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--fgsm", dest="method", action="store_const", const="fgsm")
    g.add_argument("--pgd", dest="method", action="store_const", const="pgd")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--norm", type=_float_or_inf, default=2)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--step-size", type=float)
    p.add_argument("--space", choices=["input", "feature"], default="feature")
    p.add_argument("--target", choices=["base", "smoothed"], default="smoothed")
    p.add_argument("--n", type=int, default=1)
    p.set_defaults(func=cmd_attack)

    p = seeded(sub.add_parser("demo2d", help="decision rasters and safe-zone radii for d=2 models"))
    p.add_argument("model")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--n", type=_int_list, default=(1, 2, 4, 8, 16, 32, 64))
    p.add_argument("--radius-n", type=int, default=4)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--method", choices=["regularized", "boundary"], default="regularized")
    p.set_defaults(func=cmd_demo2d)

    p = seeded(sub.add_parser("regress", help="Bernstein-smooth an over-fitted 1-D regressor"))
    p.add_argument("data", help="CSV with header x,y")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--hidden", type=_int_list, default=(64, 64))
    p.add_argument("--epochs", type=int, default=10000)
    p.add_argument("--points", type=int, default=1001)
    p.add_argument("--out", default="smoothed_curve.csv")
    p.set_defaults(func=cmd_regress)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as e:
        print(f"berncert: error: {e}", file=sys.stderr)
        return e.code
    except ConstraintError as e:
        print(f"berncert: error: {e}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except DomainError as e:
        print(f"berncert: error: {e}", file=sys.stderr)
        return EXIT_ARGS
    except OSError as e:
        print(f"berncert: error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
