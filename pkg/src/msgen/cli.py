"""Command-line entry point: ``msgen <command> [--config cfg.json] [--out dir] ...``.

Exit codes: 0 success, 1 failed check, 2 bad config, 3 training diverged
(checkpoint written), 4 missing input file.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import tensor as T
from .errors import TrainingDiverged
from .io import load_container, save_container, save_tensor

EXIT_CHECK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISSING = 1, 2, 3, 4
GLOBAL_KEYS = ("seed", "out_dir", "precision")


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class GenDataConfig:
    n: int = 5000
    seed: int = 0


@dataclasses.dataclass
class GenPendulumConfig:
    n: int = 3000
    seed: int = 0


@dataclasses.dataclass
class EvalConfig:
    bins: int = 20
    seed: int = 0


@dataclasses.dataclass
class TraverseConfig:
    which: str = "c"  # c or z for the image pipeline; L, B or Z for the pendulum
    dim: int = 0
    index: int = 0
    grid: tuple = (-2.0, -1.0, 0.0, 1.0, 2.0)
    seed: int = 0


@dataclasses.dataclass
class SeedOnly:
    seed: int = 0


def _config_class(command):
    from .msflow import MSFlowConfig
    from .pendulum import PendulumConfig
    from .stage1 import Stage1Config
    from .stage2 import Stage2Config

    return {
        "gen-data": GenDataConfig,
        "gen-pendulum": GenPendulumConfig,
        "train-stage1": Stage1Config,
        "train-stage2": Stage2Config,
        "train-msflow": MSFlowConfig,
        "train-pendulum": PendulumConfig,
        "eval-metrics": EvalConfig,
        "traverse": TraverseConfig,
        "dsep-demo": SeedOnly,
        "grad-check": SeedOnly,
    }[command]


def resolve_config(command, path, seed=None, out=None, precision=None):
    """Merge defaults, the JSON file and command-line flags. Unknown keys are rejected."""
    cls = _config_class(command)
    raw = {}
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - fields - set(GLOBAL_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {unknown}")
    glob = {"seed": 0, "out_dir": ".", "precision": "f32"}
    glob.update({k: raw[k] for k in GLOBAL_KEYS if k in raw})
    for key, value in (("seed", seed), ("out_dir", out), ("precision", precision)):
        if value is not None:
            glob[key] = value
    if glob["precision"] not in ("f32", "f64"):
        raise ConfigError(f"precision must be f32 or f64, got {glob['precision']!r}")
    kwargs = {k: v for k, v in raw.items() if k in fields}
    kwargs["seed"] = glob["seed"]
    defaults = cls()
    for k, v in kwargs.items():
        expected = type(getattr(defaults, k))
        if expected is tuple and isinstance(v, list):
            kwargs[k] = tuple(v)
        elif expected is float and isinstance(v, int) and not isinstance(v, bool):
            kwargs[k] = float(v)
        elif not isinstance(v, expected) or isinstance(v, bool) != (expected is bool):
            raise ConfigError(f"{k}: expected {expected.__name__}, got {type(v).__name__}")
    return cls(**kwargs), glob


def _jsonable(x):
    if dataclasses.is_dataclass(x):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(x).items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, np.generic):
        return x.item()
    return x


class Run:
    """Output directory, resolved config and JSON-lines log for one command."""

    def __init__(self, command, config, glob):
        self.command, self.config, self.glob = command, config, glob
        self.out = glob["out_dir"]
        os.makedirs(self.out, exist_ok=True)
        with open(self.path("resolved_config.json"), "w") as fh:
            json.dump({"command": command, **glob, **_jsonable(config)}, fh, indent=2, sort_keys=True)
        self._log = open(self.path("log.jsonl"), "w")

    def path(self, name):
        return os.path.join(self.out, name)

    def log(self, record):
        self._log.write(json.dumps(_jsonable(record), sort_keys=True) + "\n")
        self._log.flush()

    def close(self):
        self._log.close()

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)


def _need(args, name):
    value = getattr(args, name)
    if value is None:
        raise ConfigError(f"--{name} is required for this command")
    if not os.path.exists(value):
        raise FileNotFoundError(value)
    return value


def cmd_gen_data(run, cfg, args):
    from .data import sample_dataset, save_dataset

    ds = sample_dataset(cfg.n, cfg.seed)
    save_dataset(ds, run.out)
    run.log({"event": "dataset", "n": len(ds)})


def cmd_gen_pendulum(run, cfg, args):
    from .pendulum import sample_pendulum_dataset, save_pendulum_dataset

    data = sample_pendulum_dataset(cfg.n, cfg.seed)
    save_pendulum_dataset(data, run.out)
    run.log({"event": "dataset", "n": len(data)})


def _load_stage1(path):
    from .stage1 import Stage1Model

    return Stage1Model.from_entries(load_container(path))


def _load_stage2(path):
    from .stage2 import Stage2Model

    return Stage2Model.from_entries(load_container(path))


def cmd_train_stage1(run, cfg, args):
    from .data import load_dataset
    from .stage1 import train_stage1

    ds = load_dataset(_need(args, "data"))
    model = train_stage1(cfg, ds, log=run.log)
    save_container(run.path("stage1.msmd"), model.to_entries())


def cmd_train_stage2(run, cfg, args):
    from .data import load_dataset
    from .stage2 import train_stage2

    ds = load_dataset(_need(args, "data"))
    stage1 = _load_stage1(_need(args, "stage1"))
    model = train_stage2(cfg, ds, stage1, log=run.log)
    save_container(run.path("stage2.msmd"), model.to_entries())


def cmd_train_msflow(run, cfg, args):
    from .data import load_dataset
    from .msflow import save_entries, train_msflow

    ds = load_dataset(_need(args, "data"))
    gmm, flow = train_msflow(cfg, ds, log=run.log)
    save_container(run.path("msflow.msmd"), save_entries(gmm, flow))


def cmd_train_pendulum(run, cfg, args):
    from .pendulum import load_pendulum_dataset, posterior_z, train_hierarchy

    data = load_pendulum_dataset(_need(args, "data"))
    h = train_hierarchy(cfg, data, log=run.log)
    save_container(run.path("pendulum.msmd"), h.to_entries())
    save_tensor(run.path("z_posterior.mstn"), posterior_z(h, data))


def evaluate_pipeline(stage1, stage2, ds, bins=20, seed=0):
    from .metrics import conditioning_metrics, frechet_gaussian, mig, normalized_mi
    from .stage1 import encode_mean
    from .stage2 import reconstruct

    x = ds.flat
    y, x_hat = reconstruct(stage1, stage2, x)
    c_r = encode_mean(stage1, x)
    m = conditioning_metrics(stage1, stage2, x, seed=seed, bins=bins)
    return {
        "mig": mig(c_r, ds.independent_factors(), bins),
        "normalized_mi": normalized_mi(encode_mean(stage1, x_hat), c_r, bins),
        "m1": m[0], "m2": m[1], "m3": m[2], "m4": m[3],
        "frechet_recon": frechet_gaussian(x, x_hat),
        "frechet_stage1": frechet_gaussian(x, y),
        "l1": float(np.mean(np.abs(x - x_hat))),
        "l1_stage1": float(np.mean(np.abs(x - y))),
        "mse": float(np.mean((x - x_hat) ** 2)),
        "mse_stage1": float(np.mean((x - y) ** 2)),
    }


def cmd_eval_metrics(run, cfg, args):
    from .data import load_dataset

    ds = load_dataset(_need(args, "data"))
    report = evaluate_pipeline(_load_stage1(_need(args, "stage1")), _load_stage2(_need(args, "stage2")),
                               ds, cfg.bins, cfg.seed)
    run.write_json("metrics.json", report)
    print(json.dumps(report, sort_keys=True))


def cmd_traverse(run, cfg, args):
    grid = np.asarray(cfg.grid, dtype=np.float32)
    if args.model is not None:
        from .pendulum import PendulumHierarchy, traverse

        h = PendulumHierarchy.from_entries(load_container(_need(args, "model")))
        if cfg.which not in ("L", "B", "Z"):
            raise ConfigError("pendulum traversal needs which in {L, B, Z}")
        out = traverse(h, cfg.which, grid)
    else:
        from .data import load_dataset
        from .stage1 import decode, encode_mean
        from .stage2 import posterior_mean, refine_batched

        ds = load_dataset(_need(args, "data"))
        stage1 = _load_stage1(_need(args, "stage1"))
        stage2 = _load_stage2(_need(args, "stage2"))
        if cfg.which not in ("c", "z"):
            raise ConfigError("image traversal needs which in {c, z}")
        x = ds.flat[cfg.index:cfg.index + 1]
        c = encode_mean(stage1, x)
        y_base = T.sigmoid(decode(stage1, c)).data
        z = posterior_mean(stage2, x, y_base)
        c = np.repeat(c, len(grid), axis=0)
        z = np.repeat(z, len(grid), axis=0)
        target = c if cfg.which == "c" else z
        if not 0 <= cfg.dim < target.shape[1]:
            raise ConfigError(f"dim {cfg.dim} out of range for {cfg.which} of size {target.shape[1]}")
        target[:, cfg.dim] = grid
        y = T.sigmoid(decode(stage1, c)).data
        out = {"y": y, "x": refine_batched(stage2, y, z)}
    for name, arr in out.items():
        save_tensor(run.path(f"traverse_{name}.mstn"), arr)
    run.log({"event": "traverse", "which": cfg.which, "points": len(grid)})


def cmd_dsep_demo(run, cfg, args):
    from .dsep import demo_report

    report = demo_report()
    for key, value in report.items():
        if isinstance(value, list):
            print(key)
            for row in value:
                print("   ", tuple(row["values"]), row["p"])
        else:
            print(key, value)
    run.write_json("dsep.json", report)


def cmd_grad_check(run, cfg, args):
    from .gradsuite import TOL, run as run_suite

    results = run_suite(seed=cfg.seed)
    for r in results:
        print(f"{r['kind']:4s} {r['name']:16s} {r['max_rel_err']:.3e} {'ok' if r['ok'] else 'FAIL'}")
        run.log(r)
    worst = max(r["max_rel_err"] for r in results)
    print(f"max relative error {worst:.3e} (tolerance {TOL:g})")
    run.write_json("grad_check.json", {"max_rel_err": worst, "results": results})
    return 0 if worst < TOL else EXIT_CHECK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "gen-pendulum": cmd_gen_pendulum,
    "train-stage1": cmd_train_stage1,
    "train-stage2": cmd_train_stage2,
    "train-msflow": cmd_train_msflow,
    "train-pendulum": cmd_train_pendulum,
    "eval-metrics": cmd_eval_metrics,
    "traverse": cmd_traverse,
    "dsep-demo": cmd_dsep_demo,
    "grad-check": cmd_grad_check,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="msgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--precision", choices=["f32", "f64"])
        p.add_argument("--data", help="dataset directory")
        p.add_argument("--stage1", help="stage-one model container")
        p.add_argument("--stage2", help="stage-two model container")
        p.add_argument("--model", help="pendulum hierarchy container")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    run = None
    try:
        cfg, glob = resolve_config(args.command, args.config, args.seed, args.out, args.precision)
        run = Run(args.command, cfg, glob)
        with T.precision(glob["precision"]):
            code = COMMANDS[args.command](run, cfg, args)
        return code or 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except TrainingDiverged as exc:
        path = os.path.join(run.out if run else ".", "checkpoint.msmd")
        save_container(path, exc.last_good)
        print(f"training diverged at epoch {exc.epoch}: {exc}; checkpoint written to {path}", file=sys.stderr)
        return EXIT_DIVERGED
    finally:
        if run is not None:
            run.close()


if __name__ == "__main__":
    sys.exit(main())
