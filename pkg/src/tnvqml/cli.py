"""Command-line experiment runner: ``entropy``, ``truncation``, ``regress`` and ``kernel``."""

from __future__ import annotations

import argparse
import copy
import json
import platform
import sys
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import experiments as ex
from .analysis import write_csv, write_json
from .circuits.dense import SizeLimitError
from .datakit import DatasetUnavailable
from .learn import TrainConfig

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE = 0, 2, 3

DEFAULTS: dict[str, dict[str, Any]] = {
    "entropy": {"n": [6], "layers": [1, 2, 3, 4, 5, 6], "gamma": [0.0], "reuploading": None, "max_sites": 12},
    "truncation": {
        "n": [6, 8],
        "settings": [{"layers": 3, "gamma": 0.0}, {"layers": 10, "gamma": 0.0}, {"layers": 10, "gamma": 0.15}],
        "D": [4, 8, 16, 32, 64],
        "normalize": False,
        "max_sites": 12,
    },
    "regress": {
        "scenarios": [
            {"n": 6, "encoding": "exponential", "layers": 10, "gamma": 0.0, "m_train": 1500, "chi": 4},
            {"n": 8, "encoding": "naive", "layers": 10, "gamma": 0.0, "m_train": 500, "chi": 4},
        ],
        "step": {"k": [1, 3], "chi": [4, 8], "lams": [1e-3, 1e-4, 1e-5, 1e-6, 0.0], "vqml_layers": None},
        "fmnist": {"n": [], "chi": 3, "vqml": False, "source": None},
        "training": {"epochs": 500, "lr": 0.01},
    },
    "kernel": {"n": [3, 4, 5], "lam": 0.01, "source": None, "max_qubits": 12},
}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class ExperimentConfig:
    """A subcommand, its parameter block, the global seed and the number of random parameter sets."""

    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    samples: int = 4
    jobs: int = 1
    output: str = "out"

    @property
    def seeds(self) -> list[int]:
        return list(range(self.seed, self.seed + self.samples))

    def to_dict(self) -> dict:
        return {"command": self.command, "params": self.params, "seed": self.seed, "samples": self.samples,
                "jobs": self.jobs, "output": self.output}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        cmd = d.get("command")
        if cmd not in DEFAULTS:
            raise ConfigError(f"unknown command {cmd!r}")
        unknown = set(d) - {"command", "params", "seed", "samples", "jobs", "output"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        params = copy.deepcopy(DEFAULTS[cmd])
        extra = set(d.get("params", {})) - set(params)
        if extra:
            raise ConfigError(f"unknown {cmd} parameters {sorted(extra)}")
        params.update(copy.deepcopy(d.get("params", {})))
        cfg = cls(cmd, params, int(d.get("seed", 0)), int(d.get("samples", 4)), int(d.get("jobs", 1)),
                  str(d.get("output", "out")))
        if cfg.samples < 1 or cfg.jobs < 1:
            raise ConfigError("samples and jobs must be positive")
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tnvqml", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("entropy", "Rényi-2 entanglement of coefficient MPSs"),
        ("truncation", "truncation errors of coefficient MPSs"),
        ("regress", "cMPS and VQML regression studies"),
        ("kernel", "quantum and product kernel ridge regression"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--n", type=_ints, help="comma-separated sizes")
        p.add_argument("--layers", type=_ints, help="comma-separated layer counts")
        p.add_argument("--gamma", type=_floats, help="comma-separated noise rates")
        p.add_argument("--seeds", type=int, help="number of random parameter sets")
        p.add_argument("--seed", type=int, help="first seed")
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--out", type=str, help="output directory")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (if any) with command-line overrides applied."""
    base: dict[str, Any] = {"command": args.command}
    if args.config is not None:
        try:
            base = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if base.get("command", args.command) != args.command:
            raise ConfigError(f"config is for {base.get('command')!r}, not {args.command!r}")
        base["command"] = args.command
    cfg = ExperimentConfig.from_dict(base)
    p = cfg.params
    if args.n is not None:
        if args.command == "regress":
            p["fmnist"]["n"] = args.n
        else:
            p["n"] = args.n
    if args.layers is not None:
        if args.command == "entropy":
            p["layers"] = args.layers
        elif args.command == "truncation":
            p["settings"] = [{"layers": lay, "gamma": s["gamma"]} for lay in args.layers for s in p["settings"]]
        else:
            raise ConfigError(f"--layers does not apply to {args.command}")
    if args.gamma is not None:
        if args.command == "entropy":
            p["gamma"] = args.gamma
        elif args.command == "truncation":
            p["settings"] = [{"layers": s["layers"], "gamma": g} for g in args.gamma for s in p["settings"]]
        else:
            raise ConfigError(f"--gamma does not apply to {args.command}")
    if args.seeds is not None:
        cfg.samples = args.seeds
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.out is not None:
        cfg.output = args.out
    if cfg.samples < 1 or cfg.jobs < 1:
        raise ConfigError("--seeds and --jobs must be positive")
    return cfg


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(cfg: ExperimentConfig, outputs: Sequence[str], argv: Sequence[str] | None) -> None:
    write_json(
        Path(cfg.output) / f"{cfg.command}_manifest.json",
        {"config": cfg.to_dict(), "seeds": cfg.seeds, "version": _version(), "argv": list(argv or []),
         "python": platform.python_version(), "numpy": np.__version__, "outputs": list(outputs)},
    )


# ---------------------------------------------------------------------------
# commands


def cmd_entropy(cfg: ExperimentConfig) -> list[str]:
    p, out = cfg.params, Path(cfg.output)
    if p.get("reuploading"):
        r = p["reuploading"]
        points = ex.reuploading_points(int(r["n_q"]), int(r["reps"]), r["block_layers"], p["gamma"], cfg.seeds)
    else:
        points = ex.parallel_points(p["n"], p["layers"], p["gamma"], cfg.seeds)
    rows, _, summary = ex.run_entropy(points, cfg.jobs, "entropy", int(p["max_sites"]))
    write_csv(out / "entropy.csv", rows)
    write_json(out / "entropy_summary.json", summary)
    return ["entropy.csv", "entropy_summary.json"]


def cmd_truncation(cfg: ExperimentConfig) -> list[str]:
    p, out = cfg.params, Path(cfg.output)
    points = []
    for s in p["settings"]:
        points += ex.parallel_points(p["n"], [s["layers"]], [s["gamma"]], cfg.seeds)
    rows, _, summary = ex.run_truncation(points, p["D"], cfg.jobs, "truncation", bool(p["normalize"]),
                                         int(p["max_sites"]))
    write_csv(out / "truncation.csv", rows)
    write_json(out / "truncation_summary.json", summary)
    return ["truncation.csv", "truncation_summary.json"]


def cmd_regress(cfg: ExperimentConfig) -> list[str]:
    p, out = cfg.params, Path(cfg.output)
    tc = TrainConfig(**{**p["training"], "seed": cfg.seed})
    files, summary = [], {"scenarios": [], "step": [], "fmnist": []}
    for i, sc in enumerate(p["scenarios"]):
        for seed in cfg.seeds:
            res = ex.coefficient_fit(seed=seed, cfg=tc, **sc)
            name = f"regress_scenario{i}_seed{seed}.csv"
            write_csv(out / name, res["rows"])
            files.append(name)
            summary["scenarios"].append(res["summary"])
    step = p["step"]
    step_rows = []
    for k in step["k"]:
        for chi in step["chi"]:
            for seed in cfg.seeds:
                res = ex.step_task(int(k), chi=int(chi), lams=step["lams"], seed=seed, cfg=tc,
                                   vqml_layers=step.get("vqml_layers"))
                step_rows += [{**r, "k": k} for r in res["rows"]]
                summary["step"].append({"k": k, "chi": chi, "seed": seed, "best_cmps": res["best_cmps"],
                                        "vqml": res.get("vqml")})
    if step_rows:
        write_csv(out / "regress_step.csv", step_rows)
        files.append("regress_step.csv")
    fm_rows = []
    for n in p["fmnist"]["n"]:
        for seed in cfg.seeds:
            res = ex.fmnist_regression(int(n), int(p["fmnist"]["chi"]), seed, tc, p["fmnist"].get("source"),
                                       bool(p["fmnist"].get("vqml")))
            fm_rows += res["rows"]
            summary["fmnist"].append({"n": n, "seed": seed, "provenance": res["provenance"]})
    if fm_rows:
        write_csv(out / "regress_fmnist.csv", fm_rows)
        files.append("regress_fmnist.csv")
    write_json(out / "regress_summary.json", summary)
    return files + ["regress_summary.json"]


def cmd_kernel(cfg: ExperimentConfig) -> list[str]:
    p, out = cfg.params, Path(cfg.output)
    rows = []
    for n in p["n"]:
        for seed in cfg.seeds:
            rows += ex.kernel_task(int(n), float(p["lam"]), seed, p.get("source"), int(p["max_qubits"]))["rows"]
    write_csv(out / "kernel.csv", rows)
    return ["kernel.csv"]


COMMANDS = {"entropy": cmd_entropy, "truncation": cmd_truncation, "regress": cmd_regress, "kernel": cmd_kernel}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = resolve_config(args)
        outputs = COMMANDS[cfg.command](cfg)
    except (ConfigError, DatasetUnavailable, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ex.ResourceLimit, SizeLimitError, MemoryError) as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    write_manifest(cfg, outputs, argv)
    print(f"wrote {len(outputs)} files to {cfg.output}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
