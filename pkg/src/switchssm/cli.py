"""Command-line entry point: ``switchssm <command> [options]``.

Every command builds its outputs in memory and writes them at the end, each
file through a temporary name and a rename.  Exit status is 0 on success, 1 on
runtime failures (bad input files, numerical errors) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from dataclasses import asdict

import numpy as np

from . import changefinder as cf
from . import datagen, metrics
from . import io as sio
from . import segmentation as seg
from .snlds import checkpoint
from .snlds.encoder import pinv_encoder
from .snlds.model import generate
from .snlds.train import FitConfig, fit, init_from_data, segment

SEED_MAX = 2 ** 64


class UsageError(Exception):
    """Invalid invocation; reported with exit status 2."""


def _sdar_defaults():
    return asdict(cf.SdarConfig())


DETECT_DEFAULTS = {
    "stage1": _sdar_defaults(),
    "stage2": _sdar_defaults(),
    "window": 25,
    "kappa": cf.DEFAULT_KAPPA,
    "quantile": None,
    "warmup": cf.DEFAULT_WARMUP,
    "min_separation": 50,
}

SPLIT_DEFAULTS = {
    **copy.deepcopy(DETECT_DEFAULTS),
    "horizon": 200,
    "alpha": 0.5,
    "rho": 1.5,
    "gap": 10,
    "recent_window": None,
    "readout": {k: v for k, v in asdict(seg.ReadoutConfig()).items() if k != "horizon"},
}

GEN_DEFAULTS = {
    "switching": {"blocks": None, "n_blocks": 6, "regimes": [[0.0, 1.0], [3.0, 0.5]],
                  "length_range": [600, 1200]},
    "lorenz": {"T": 500, "dt": 0.01, "params": dict(datagen.LORENZ_DEFAULTS), "obs": "x1",
               "noise_std": 0.0, "burn_in": 2000},
    "ball": {"n_traj": 1, "T": 200, "board": 256.0, "vel_range": [-5.0, 5.0],
             "noise_std": 0.0},
    "slds": {"T": 500, "n_traj": 1, "theta": 0.25, "q_std": 0.05, "r_std": 0.05,
             "stay_logit": 4.0, "radius": 4.0},
}

FIT_DEFAULTS = {"num_modes": 2, "state_dim": 2, "epochs": 20, "lr": 5e-4, "eta0": 100.0,
                "num_samples": 1, "learn_encoder": True, "resample_noise": False,
                "chunk": 20, "stay": 0.95}
SEGMENT_DEFAULTS = {}
GENERATE_DEFAULTS = {"T": 200, "n_traj": 1, "x_feedback": True}


def resolve(defaults, overrides, where="config"):
    """Defaults updated by ``overrides``; unknown keys are a usage error.

    Keys whose default is a dict are resolved recursively.
    """
    if not isinstance(overrides, dict):
        raise UsageError(f"{where} must be a JSON object")
    unknown = sorted(set(overrides) - set(defaults))
    if unknown:
        raise UsageError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    out = copy.deepcopy(defaults)
    for k, v in overrides.items():
        if isinstance(defaults[k], dict):
            out[k] = resolve(defaults[k], v, f"{where}.{k}")
        else:
            out[k] = v
    return out


def load_config(path, defaults):
    if path is None:
        return copy.deepcopy(defaults)
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    return resolve(defaults, raw)


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required")


def _echo(cfg, args, **extra):
    return {"config": cfg, "seed": args.seed, **extra}


def _read_1d(path):
    values, _, _ = sio.read_series(path)
    if values.shape[1] != 1:
        raise ValueError(f"{path}: expected one value column, got {values.shape[1]}")
    return values[:, 0]


def _sdar(d):
    return cf.SdarConfig(**d)


# ---------------------------------------------------------------- gen

def cmd_gen(args, out):
    cfg = load_config(args.config, GEN_DEFAULTS[args.kind])
    seed = args.seed
    if args.kind == "switching":
        if cfg["blocks"] is None:
            plan = datagen.two_regime_blocks(seed, cfg["n_blocks"],
                                             tuple(map(tuple, cfg["regimes"])),
                                             tuple(cfg["length_range"]))
        else:
            plan = {"blocks": cfg["blocks"], "regime_of_block": None}
        series = [datagen.gen_switching_gaussian(plan["blocks"], seed=seed)]
        series[0].meta["regime_of_block"] = plan["regime_of_block"]
    elif args.kind == "lorenz":
        series = [datagen.gen_lorenz(cfg["T"], cfg["dt"], cfg["params"], seed, cfg["obs"],
                                     cfg["noise_std"], cfg["burn_in"])]
    elif args.kind == "ball":
        series = datagen.gen_bouncing_ball(cfg["n_traj"], cfg["T"], cfg["board"],
                                           tuple(cfg["vel_range"]), seed, cfg["noise_std"])
    else:
        kw = {k: v for k, v in cfg.items() if k not in ("T", "n_traj")}
        series = datagen.gen_switching_linear(cfg["T"], seed, cfg["n_traj"], **kw)
    values = np.concatenate([s.values for s in series])
    labels = np.concatenate([s.labels for s in series])
    traj = None
    if len(series) > 1:
        traj = np.concatenate([np.full(len(s), i) for i, s in enumerate(series)])
    out.add("data.csv", sio.series_csv(values, labels, traj))
    out.add("meta.json", sio.json_text(_echo(cfg, args, kind=args.kind,
                                             series=[s.meta for s in series])))


# ---------------------------------------------------------------- detect

def cmd_detect(args, out):
    _need(args, "input")
    cfg = load_config(args.config, DETECT_DEFAULTS)
    values, _, _ = sio.read_series(args.input)
    x = values[:, 0] if values.shape[1] == 1 else values
    scores = cf.change_scores(x, _sdar(cfg["stage1"]), _sdar(cfg["stage2"]), cfg["window"])
    cps = cf.extract_change_points(scores, kappa=cfg["kappa"], quantile=cfg["quantile"],
                                   min_separation=cfg["min_separation"],
                                   warmup=cfg["warmup"])
    scores_path = None
    if args.scores:
        tab = scores.table()
        # relative to the report, so reports do not depend on the output location
        scores_path = "scores.csv"
        out.add(scores_path, sio.csv_text(
            ["t", "outlier", "smoothed", "change"],
            [tab[:, 0].astype(int), tab[:, 1], tab[:, 2], tab[:, 3]]))
    thr = cf.threshold_value(scores.change, cfg["kappa"], cfg["quantile"], cfg["warmup"])
    out.add("report.json", sio.json_text(_echo(
        cfg, args, input=args.input, change_points=[int(c) for c in cps],
        scores_path=scores_path, threshold=float(thr) if np.isfinite(thr) else None)))


# ---------------------------------------------------------------- split-predict

def _split_config(cfg):
    return seg.SplitConfig(
        stage1=_sdar(cfg["stage1"]), stage2=_sdar(cfg["stage2"]), window=cfg["window"],
        kappa=cfg["kappa"], quantile=cfg["quantile"], warmup=cfg["warmup"],
        min_separation=cfg["min_separation"], alpha=cfg["alpha"], rho=cfg["rho"],
        gap=cfg["gap"], recent_window=cfg["recent_window"],
        readout=seg.ReadoutConfig(**cfg["readout"]))


def cmd_split_predict(args, out):
    _need(args, "input")
    cfg = load_config(args.config, SPLIT_DEFAULTS)
    if args.horizon is not None:
        cfg["horizon"] = args.horizon
    F = cfg["horizon"]
    if not isinstance(F, int) or isinstance(F, bool) or F < 1:
        raise UsageError(f"horizon must be a positive integer, got {F!r}")
    x = _read_1d(args.input)
    if x.shape[0] - F <= max(cfg["warmup"], 1):
        raise ValueError(f"series of length {x.shape[0]} is too short for horizon {F} "
                         f"after a warm-up of {cfg['warmup']}")
    train, test = x[:-F], x[-F:]
    sc = _split_config(cfg)
    runs = [("no_split", False)] if args.no_split else [("split", True), ("no_split", False)]
    header, cols, reports = ["t"], [np.arange(train.shape[0], x.shape[0])], {}
    for name, flag in runs:
        forecast, rep = seg.s4_split_pipeline(train, F, sc, test=test, split=flag)
        header.append(name)
        cols.append(forecast)
        reports[name] = rep.to_dict()
    header.append("truth")
    cols.append(test)
    out.add("forecast.csv", sio.csv_text(header, cols))
    summary = {name: reports[name]["mse_test"] for name in reports}
    out.add("report.json", sio.json_text(_echo(cfg, args, input=args.input, mse=summary,
                                               no_split_only=bool(args.no_split),
                                               runs=reports)))


# ---------------------------------------------------------------- snlds

def _sequences(path):
    values, labels, traj = sio.read_series(path)
    return values, traj, sio.split_trajectories(values, traj)


def _load_checkpoint(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise checkpoint.CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    model, enc = checkpoint.loads(text)
    return model, enc if enc is not None else pinv_encoder(model)


def cmd_snlds_fit(args, out):
    _need(args, "input")
    cfg = load_config(args.config, FIT_DEFAULTS)
    _, _, data = _sequences(args.input)
    model, enc = init_from_data(data, cfg["num_modes"], cfg["state_dim"], seed=args.seed,
                                chunk=cfg["chunk"], stay=cfg["stay"])
    fc = FitConfig(lr=cfg["lr"], epochs=cfg["epochs"], eta0=cfg["eta0"], seed=args.seed,
                   num_samples=cfg["num_samples"], learn_encoder=cfg["learn_encoder"],
                   resample_noise=cfg["resample_noise"])
    res = fit(model, enc, data, fc)
    if res.diverged:
        raise RuntimeError(f"training diverged: {res.message}")
    out.add("checkpoint.json", checkpoint.dumps(res.model, res.encoder) + "\n")
    tr = res.trace
    out.add("trace.csv", sio.csv_text(
        ["t", "eta", "total", "elbo", "ce"],
        [np.array([r["epoch"] for r in tr], dtype=int)]
        + [np.array([r[k] for r in tr], dtype=float) for k in ("eta", "total", "elbo", "ce")]))
    out.add("report.json", sio.json_text(_echo(
        cfg, args, input=args.input, num_sequences=len(data),
        final=tr[-1] if tr else None)))


def cmd_snlds_segment(args, out):
    _need(args, "input", "checkpoint")
    cfg = load_config(args.config, SEGMENT_DEFAULTS)
    model, enc = _load_checkpoint(args.checkpoint)
    values, traj, data = _sequences(args.input)
    labs, gams = [], []
    for i, x in enumerate(data):
        lab, gam = segment(model, enc, x, seed=[args.seed, i])
        labs.append(lab)
        gams.append(gam)
    lab, gam = np.concatenate(labs), np.concatenate(gams)
    t = np.concatenate([np.arange(len(a)) for a in labs])
    lead_h, lead_c = ["t"], [t]
    if traj is not None:
        lead_h, lead_c = ["t", "traj"], [t, np.concatenate(
            [np.full(len(a), i) for i, a in enumerate(labs)])]
    K = gam.shape[1]
    out.add("labels.csv", sio.csv_text(lead_h + ["label"], lead_c + [lab]))
    out.add("gamma.csv", sio.csv_text(lead_h + ["label"] + [f"gamma_{k + 1}" for k in range(K)],
                                      lead_c + [lab] + [gam[:, k] for k in range(K)]))
    out.add("report.json", sio.json_text(_echo(cfg, args, input=args.input,
                                               checkpoint=args.checkpoint, num_modes=K)))


def cmd_snlds_generate(args, out):
    _need(args, "checkpoint")
    cfg = load_config(args.config, GENERATE_DEFAULTS)
    if cfg["T"] < 1 or cfg["n_traj"] < 1:
        raise UsageError("T and n_traj must be >= 1")
    model, _ = _load_checkpoint(args.checkpoint)
    xs, zs, ss = [], [], []
    for child in np.random.SeedSequence(args.seed).spawn(cfg["n_traj"]):
        x, z, s = generate(model, cfg["T"], seed=child, x_feedback=cfg["x_feedback"])
        xs.append(x)
        zs.append(z)
        ss.append(s)
    traj = np.repeat(np.arange(cfg["n_traj"]), cfg["T"]) if cfg["n_traj"] > 1 else None
    X, Z, S = np.concatenate(xs), np.concatenate(zs), np.concatenate(ss)
    out.add("trajectory.csv", sio.series_csv(X, S, traj))
    out.add("latent.csv", sio.series_csv(Z, S, traj))
    out.add("report.json", sio.json_text(_echo(cfg, args, checkpoint=args.checkpoint)))


# ---------------------------------------------------------------- eval

def _named(items, flag):
    pairs = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise UsageError(f"{flag} expects name=value, got {item!r}")
        if name in pairs:
            raise UsageError(f"duplicate name {name!r} in {flag}")
        pairs[name] = value
    return pairs


def _eval_columns(path, metric):
    header, arr = sio.read_table(path)
    if metric == metrics.SEGMENTATION_ACCURACY:
        if "label" not in header:
            raise ValueError(f"{path}: no label column")
        return arr[:, header.index("label")].astype(int)
    cols = [i for i, h in enumerate(header) if h not in sio.RESERVED]
    if not cols:
        raise ValueError(f"{path}: no value columns")
    return arr[:, cols]


def cmd_eval(args, out):
    preds = _named(args.pred, "--pred")
    scores = _named(args.score, "--score")
    if not preds and not scores:
        raise UsageError("give at least one --pred or --score")
    if preds:
        _need(args, "truth")
    cfg = load_config(args.config, {})
    results = {}
    for name, value in scores.items():
        try:
            results[name] = float(value)
        except ValueError as exc:
            raise UsageError(f"--score {name}: {exc}") from exc
    if preds:
        truth = _eval_columns(args.truth, args.metric)
        for name, path in preds.items():
            if name in results:
                raise UsageError(f"duplicate name {name!r}")
            p = _eval_columns(path, args.metric)
            if p.shape != truth.shape:
                raise ValueError(f"{name}: shape {p.shape} does not match truth {truth.shape}")
            fn = metrics.mse if args.metric == metrics.MSE else metrics.segmentation_accuracy
            results[name] = fn(p, truth)
    out.add("metrics.json", sio.json_text(_echo(
        cfg, args, metric=args.metric, truth=args.truth, results=results,
        ranking=metrics.rank(results, args.metric))))


# ---------------------------------------------------------------- parser

def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", required=True, help="output directory")
    common.add_argument("--config", help="JSON file with parameter overrides")
    common.add_argument("--seed", type=_seed, default=0, help="root seed (default 0)")

    p = argparse.ArgumentParser(prog="switchssm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("kind", choices=sorted(GEN_DEFAULTS))
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("detect", parents=[common], help="ChangeFinder change points")
    d.add_argument("--input")
    d.add_argument("--scores", action="store_true", help="also write per-step scores")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("split-predict", parents=[common],
                       help="forecast with and without segment grouping")
    s.add_argument("--input")
    s.add_argument("--horizon", type=int, help="forecast horizon F (overrides config)")
    s.add_argument("--no-split", action="store_true", help="baseline only")
    s.set_defaults(func=cmd_split_predict)

    n = sub.add_parser("snlds", help="switching model fit, segment, generate")
    nsub = n.add_subparsers(dest="action", required=True)
    nf = nsub.add_parser("fit", parents=[common])
    nf.add_argument("--input")
    nf.set_defaults(func=cmd_snlds_fit)
    ns = nsub.add_parser("segment", parents=[common])
    ns.add_argument("--input")
    ns.add_argument("--checkpoint")
    ns.set_defaults(func=cmd_snlds_segment)
    ng = nsub.add_parser("generate", parents=[common])
    ng.add_argument("--checkpoint")
    ng.set_defaults(func=cmd_snlds_generate)

    e = sub.add_parser("eval", parents=[common], help="score predictions against truth")
    e.add_argument("--pred", action="append", metavar="NAME=PATH")
    e.add_argument("--score", action="append", metavar="NAME=VALUE",
                   help="precomputed metric value to include in the ranking")
    e.add_argument("--truth")
    e.add_argument("--metric", choices=metrics.METRICS, default=metrics.MSE)
    e.set_defaults(func=cmd_eval)
    return p


RUNTIME_ERRORS = (ValueError, OSError, RuntimeError, np.linalg.LinAlgError,
                  FloatingPointError)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = sio.OutputSet(args.output)
    try:
        args.func(args, out)
        written = out.commit()
    except UsageError as exc:
        print(f"switchssm: usage error: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"switchssm: error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
