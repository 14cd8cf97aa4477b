"""``mcn`` command line: certified builds, bound calculators and experiments.

Exit status is 0 on success, 1 when a verdict or certificate check fails
and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import covering_bound, generalization_bound, lipschitz_report
from .constructive import (
    CertifiedNet,
    build_basis,
    build_floor,
    build_fourier_approx,
    build_polynomial,
    build_product,
    build_sawtooth_square,
    build_trig,
    sup_error,
)
from .core import EXP, RELU
from .network import NetworkError, network_from_dict, random_network, serialize
from .training import experiments as ex
from .training.model import make_extractor
from .training.train import TrainConfig, train

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_VERDICT, EXIT_USAGE = 0, 1, 2

FOURIER_TARGETS = {
    "zero": lambda X: np.zeros(X.shape[0]),
    "one": lambda X: np.ones(X.shape[0]),
    "cos-product": lambda X: np.prod(np.cos(np.pi * X), axis=1),
    "cos-mix": lambda X: np.cos(np.pi * X[:, 0]) + 0.5 * np.cos(2 * np.pi * X[:, 0]),
    "neumann-bump": lambda X: np.prod((1 - X**2) ** 2, axis=1),
}

INTERP_TARGETS = {"sin": lambda X: np.sin(np.pi * X[:, 0])}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- io helpers


def atomic_write(path, data: bytes | str):
    """Write to a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    try:
        if p.suffix == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as e:
        raise UsageError(f"cannot parse config {path}: {e}") from None


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, key: str, timing: bool) -> str:
    fields = ex.CSV_FIELDS_N if key == "n" else ex.CSV_FIELDS
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    # canonical order, independent of how rows were produced
    for r in sorted(rows, key=lambda r: (r["experiment"], r[key], r["restart"])):
        r = dict(r)
        if not timing:
            r["wall_ms"] = 0
        w.writerow([_fmt(r[f]) for f in fields])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def write_results(out_dir, name, results, settings, args, timing, wall_s):
    out_dir = Path(out_dir)
    rows = [r for res in results for r in res.rows]
    key = results[0].key
    atomic_write(out_dir / f"{name}.csv", rows_to_csv(rows, key, timing))
    meta = {
        "command": args.command,
        "argv": args.argv,
        "settings": settings,
        "seed": settings.get("seed"),
        "versions": {"mcn": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "verdict": all(r.verdict for r in results),
        "results": [{"name": r.name, "summary": r.summary, "meta": r.meta, "verdict": r.verdict} for r in results],
        "deviations": [
            "gamma = exp is clamped to [-30, 30]",
            "wall_ms is written as 0 unless --timing is given, so identical seeds give identical CSVs",
        ],
    }
    if timing:
        meta["wall_s"] = wall_s
    atomic_write(out_dir / f"{name}.meta.json", json.dumps(_jsonable(meta), indent=1, sort_keys=True))


def _read_net(path):
    try:
        doc = json.loads(Path(path).read_bytes())
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot read network {path}: {e}") from None
    return doc


def _ints(s):
    return [int(v) for v in str(s).split(",") if v.strip()]


def _floats(s):
    return [float(v) for v in str(s).split(",") if v.strip()]


def _settings(args, cfg, defaults: dict) -> dict:
    """Flags override config values, which override defaults."""
    out = {}
    for k, d in defaults.items():
        flag = getattr(args, k, None)
        out[k] = flag if flag is not None else cfg.get(k, d)
    extra = set(cfg) - set(defaults)
    if extra:
        raise UsageError(f"unknown config keys {sorted(extra)}")
    return out


def _train_cfg(s) -> TrainConfig:
    return TrainConfig(
        optimizer=s["optimizer"],
        lr=s["lr"],
        epochs=s["epochs"],
        seed=s["seed"],
        restarts=s["restarts"],
        grad_tol=s["grad_tol"],
        lbfgs_restarts=0,
    )


TRAIN_DEFAULTS = {"seed": 0, "optimizer": "lbfgs", "lr": 1e-2, "epochs": 1000, "restarts": 20, "grad_tol": 1e-6}


# ---------------------------------------------------------------- commands


def cmd_build(args):
    kind = args.kind
    if kind == "square":
        cnet = build_sawtooth_square(args.stages, args.blocks)
    elif kind == "product":
        cnet = build_product(args.arity, args.stages, args.blocks)
    elif kind == "poly":
        if not args.coeffs:
            raise UsageError("build poly needs --coeffs")
        cnet = build_polynomial(_floats(args.coeffs), args.stages, args.blocks)
    elif kind == "floor":
        cnet = build_floor(args.J, negative=args.negative)
    elif kind in ("cos", "sin"):
        cnet = build_trig(kind, args.n, args.p, args.stages, args.blocks)
    elif kind == "phi":
        n = _ints(args.index)
        i = _ints(args.parity) if args.parity else [0] * len(n)
        cnet = build_basis(n, i, args.p, args.stages, args.blocks)
    else:
        f = FOURIER_TARGETS[args.target]
        cnet, _ = build_fourier_approx(f, args.dim, args.level, args.p, args.stages, args.blocks, tol=args.tol)
    if args.out:
        atomic_write(args.out, cnet.serialize())
    print(f"{kind}: bound={cnet.bound!r} formula='{cnet.bound_formula}' depth={cnet.stats['depth']} width={cnet.stats['width']}")
    if args.grid:
        e = sup_error(cnet, args.grid)
        ok = e.value <= cnet.bound
        print(f"{kind}: measured={e.value!r} at {e.argmax.tolist()} verdict={'pass' if ok else 'fail'}")
        return EXIT_OK if ok else EXIT_VERDICT
    return EXIT_OK


def cmd_eval_error(args):
    try:
        cnet = CertifiedNet.from_dict(_read_net(args.net))
    except NetworkError as e:
        raise UsageError(str(e)) from None
    grid = args.grid or (10_000 if cnet.dim == 1 else 201 if cnet.dim == 2 else 50)
    e = sup_error(cnet, grid)
    ok = e.value <= cnet.bound
    print(f"measured={e.value!r} bound={cnet.bound!r} argmax={e.argmax.tolist()} points={e.points} verdict={'pass' if ok else 'fail'}")
    if args.out:
        atomic_write(args.out, json.dumps({"measured": e.value, "bound": cnet.bound, "argmax": e.argmax.tolist(), "points": e.points, "pass": ok}, indent=1))
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_bounds(args):
    if args.which == "kappa":
        if not args.net:
            raise UsageError("bounds kappa needs --net")
        try:
            net = network_from_dict(_read_net(args.net))
        except NetworkError as e:
            raise UsageError(str(e)) from None
        rep = lipschitz_report(net)
        for k, r in enumerate(rep.layers):
            print(f"layer {k + 1}: kappa={r.kappa!r} theta_norm={r.theta_norm!r} rho={r.rho!r}")
        print(f"product={rep.product!r}")
        out = rep.to_dict()
    elif args.which == "covering":
        need = ("s", "l", "w", "rho", "input_norm", "kappas", "delta")
        missing = [k for k in need if getattr(args, k) is None]
        if missing:
            raise UsageError(f"bounds covering needs {', '.join('--' + m.replace('_', '-') for m in missing)}")
        val = covering_bound(args.s, args.l, args.w, args.rho, args.input_norm, _floats(args.kappas), args.delta)
        print(f"covering_log={val!r}")
        out = {"covering_log": val}
    else:
        need = ("delta_n", "approx", "s", "l", "w", "n")
        missing = [k for k in need if getattr(args, k) is None]
        if missing:
            raise UsageError(f"bounds generalization needs {', '.join('--' + m.replace('_', '-') for m in missing)}")
        out = generalization_bound(args.delta_n, args.approx, args.s, args.l, args.w, args.n)
        print(" ".join(f"{k}={v!r}" for k, v in out.items()))
    if args.out:
        atomic_write(args.out, json.dumps(_jsonable(out), indent=1))
    return EXIT_OK


def cmd_train(args, cfg):
    s = _settings(args, cfg, {**TRAIN_DEFAULTS, "target": "sin-product", "depth": 2, "d_L": 4, "width": 4, "n": 64})
    data = ex.toy_suite(s["seed"], s["n"])[s["target"]]
    tc = _train_cfg(s)
    t0 = time.perf_counter()
    best = None
    rows = []
    for k in range(tc.restarts):
        net = random_network(
            ex.sub_rng(s["seed"], s["depth"], k), data.X.shape[1], [(s["d_L"], s["width"])] * s["depth"],
            1, gamma=EXP, sigma=RELU, readout_mode="learnable", scale=0.5, atilde_scale=0.3,
        )
        tr = train(net, data, tc)
        rows.append({"experiment": "train", "depth": s["depth"], "restart": k, "final_loss": tr.final_loss,
                     "grad_norm": tr.grad_norm, "wall_ms": tr.wall_ms, "verdict": "pass"})
        print(f"train restart={k} final_loss={tr.final_loss!r} grad_norm={tr.grad_norm!r} stop={tr.stop}")
        if best is None or tr.final_loss < best.final_loss:
            best = tr
    res = ex.ExperimentResult("train", rows, [{"best_loss": best.final_loss}], True, {})
    write_results(args.out or ".", "train", [res], s, args, args.timing, time.perf_counter() - t0)
    atomic_write(Path(args.out or ".") / "train.net.json", serialize(best.net))
    return EXIT_OK


def cmd_depth_sweep(args, cfg):
    s = _settings(
        args, cfg,
        {**TRAIN_DEFAULTS, "depths": [1, 2, 3, 4], "targets": list(ex.TOY_TARGETS), "d_L": 4, "width": 4,
         "n": 64, "tol": 1e-3, "warm_start": False},
    )
    if isinstance(s["depths"], str):
        s["depths"] = _ints(s["depths"])
    if isinstance(s["targets"], str):
        s["targets"] = s["targets"].split(",")
    suite = ex.toy_suite(s["seed"], s["n"])
    t0 = time.perf_counter()
    results = []
    for name in s["targets"]:
        if name not in suite:
            raise UsageError(f"unknown target {name!r}; choose from {sorted(suite)}")
        r = ex.depth_sweep(_train_cfg(s), s["depths"], suite[name], s["d_L"], s["width"], s["tol"],
                           s["warm_start"], experiment=f"depth-sweep-{name}")
        results.append(r)
        for row in r.summary:
            print(f"{name} depth={row['depth']} min={row['min']!r} median={row['median']!r} max={row['max']!r}")
        print(f"{name} verdict={'pass' if r.verdict else 'fail'}")
    write_results(args.out or ".", "depth-sweep", results, s, args, args.timing, time.perf_counter() - t0)
    return EXIT_OK if all(r.verdict for r in results) else EXIT_VERDICT


def cmd_append(args, cfg):
    s = _settings(
        args, cfg,
        {**TRAIN_DEFAULTS, "restarts": 5, "extractors": ["identity", "relu1", "relu2"], "mode": "full",
         "depth": 2, "d_L": 4, "width": 4, "target": "sin-product", "n": 64},
    )
    if isinstance(s["extractors"], str):
        s["extractors"] = s["extractors"].split(",")
    data = ex.toy_suite(s["seed"], s["n"])[s["target"]]
    t0 = time.perf_counter()
    results = []
    for j, name in enumerate(s["extractors"]):
        ext = make_extractor(name, data.X.shape[1], ex.sub_rng(s["seed"], 500, j))
        r = ex.append_experiment(ext, s["mode"], data, _train_cfg(s), s["depth"], s["d_L"], s["width"])
        results.append(r)
        for row in r.summary:
            print(f"{name} " + " ".join(f"{k}={v!r}" for k, v in row.items()))
        print(f"{name} verdict={'pass' if r.verdict else 'fail'}")
    write_results(args.out or ".", "append", results, s, args, args.timing, time.perf_counter() - t0)
    return EXIT_OK if all(r.verdict for r in results) else EXIT_VERDICT


def cmd_interpolation(args, cfg):
    s = _settings(
        args, cfg,
        {**TRAIN_DEFAULTS, "sizes": [32, 128, 512], "seeds": 5, "noise": 0.1, "beta": 1.0, "target": "sin"},
    )
    if isinstance(s["sizes"], str):
        s["sizes"] = _ints(s["sizes"])
    t0 = time.perf_counter()
    r = ex.interpolation_experiment(INTERP_TARGETS[s["target"]], s["beta"], s["sizes"], _train_cfg(s),
                                    noise=s["noise"], seeds=s["seeds"])
    for row in r.summary:
        print(f"n={row['n']} median_test_mse={row['median_test_mse']!r} fits={row['fits']}")
    print(f"slope={r.meta['slope']!r} reference={r.meta['reference_slope']!r} verdict={'pass' if r.verdict else 'fail'}")
    write_results(args.out or ".", "interpolation", [r], s, args, args.timing, time.perf_counter() - t0)
    return EXIT_OK if r.verdict else EXIT_VERDICT


def cmd_stationarity(args, cfg):
    s = _settings(args, cfg, {**TRAIN_DEFAULTS, "epochs": 5000, "needed": 10, "max_seeds": 60,
                              "target": "sin-product", "n": 64})
    data = ex.toy_suite(s["seed"], s["n"])[s["target"]]
    t0 = time.perf_counter()
    r = ex.stationarity_runs(data, _train_cfg(s), s["needed"], s["max_seeds"])
    for row in r.rows:
        print(f"restart={row['restart']} loss={row['final_loss']!r} grad_norm={row['grad_norm']!r} "
              f"score={row['score']!r} gap={row['relative_gap']!r} converged={row['converged']}")
    print(f"converged={r.meta['converged']}/{r.meta['attempted']} verdict={'pass' if r.verdict else 'fail'}")
    write_results(args.out or ".", "stationarity", [r], s, args, args.timing, time.perf_counter() - t0)
    return EXIT_OK if r.verdict else EXIT_VERDICT


# ---------------------------------------------------------------- parser


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed for all randomness")
    p.add_argument("--out", default=None, help="output file (build, bounds) or directory (experiments)")
    p.add_argument("--config", default=None, help="TOML or JSON file with command settings")
    p.add_argument("--grid", type=int, default=None, help="grid points per axis for error scans")


def _train_flags(p):
    p.add_argument("--optimizer", choices=("sgd", "adam", "lbfgs"), default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--grad-tol", dest="grad_tol", type=float, default=None)
    p.add_argument("--timing", action="store_true", help="record wall_ms in CSV rows")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build a certified network")
    b.add_argument("kind", choices=("square", "product", "poly", "floor", "cos", "sin", "phi", "fourier"))
    b.add_argument("--stages", type=int, default=8, help="stages per block (m)")
    b.add_argument("--blocks", type=int, default=1, help="number of blocks (l)")
    b.add_argument("--arity", type=int, default=2)
    b.add_argument("--coeffs", default=None, help="comma-separated a_1..a_p")
    b.add_argument("--J", type=int, default=8)
    b.add_argument("--negative", action="store_true")
    b.add_argument("--n", type=int, default=1)
    b.add_argument("--p", type=int, default=16)
    b.add_argument("--index", default="1")
    b.add_argument("--parity", default=None)
    b.add_argument("--target", choices=sorted(FOURIER_TARGETS), default="cos-product")
    b.add_argument("--dim", type=int, default=2)
    b.add_argument("--level", type=int, default=2)
    b.add_argument("--tol", type=float, default=1e-12)
    _common(b)

    e = sub.add_parser("eval-error", help="measure the sup error of a certified network")
    e.add_argument("--net", required=True)
    _common(e)

    bo = sub.add_parser("bounds", help="Lipschitz, covering and generalization bounds")
    bo.add_argument("which", choices=("kappa", "covering", "generalization"))
    bo.add_argument("--net", default=None)
    for name, typ in (("s", float), ("l", float), ("w", float), ("rho", float), ("delta", float), ("n", float)):
        bo.add_argument(f"--{name}", type=typ, default=None)
    bo.add_argument("--input-norm", dest="input_norm", type=float, default=None)
    bo.add_argument("--kappas", default=None, help="comma-separated per-layer kappas")
    bo.add_argument("--delta-n", dest="delta_n", type=float, default=None)
    bo.add_argument("--approx", type=float, default=None)
    _common(bo)

    t = sub.add_parser("train", help="train on the toy regression suite")
    t.add_argument("--target", default=None)
    t.add_argument("--depth", type=int, default=None)
    t.add_argument("--width", type=int, default=None)
    _train_flags(t)
    _common(t)

    d = sub.add_parser("depth-sweep", help="best-of-K loss per depth with a fixed readout")
    d.add_argument("--depths", default=None)
    d.add_argument("--targets", default=None)
    d.add_argument("--warm-start", dest="warm_start", action="store_const", const=True, default=None)
    _train_flags(d)
    _common(d)

    a = sub.add_parser("append", help="MCNs appended to fixed feature extractors")
    a.add_argument("--extractors", default=None)
    a.add_argument("--mode", choices=("partial", "full"), default=None)
    _train_flags(a)
    _common(a)

    i = sub.add_parser("interpolation", help="test error of exact-fit networks versus n")
    i.add_argument("--sizes", default=None)
    i.add_argument("--seeds", type=int, default=None)
    i.add_argument("--noise", type=float, default=None)
    i.add_argument("--beta", type=float, default=None)
    _train_flags(i)
    _common(i)

    st = sub.add_parser("stationarity", help="loss versus least squares on last-layer features")
    st.add_argument("--needed", type=int, default=None)
    st.add_argument("--max-seeds", dest="max_seeds", type=int, default=None)
    _train_flags(st)
    _common(st)
    return parser


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    args.argv = argv
    try:
        if args.command == "build":
            return cmd_build(args)
        if args.command == "eval-error":
            return cmd_eval_error(args)
        if args.command == "bounds":
            return cmd_bounds(args)
        cfg = load_config(args.config)
        handler = {
            "train": cmd_train,
            "depth-sweep": cmd_depth_sweep,
            "append": cmd_append,
            "interpolation": cmd_interpolation,
            "stationarity": cmd_stationarity,
        }[args.command]
        return handler(args, cfg)
    except (UsageError, ValueError) as e:
        print(f"mcn {args.command}: error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
