"""Command-line entry point.

Subcommands: gen-data, train, eval, ablate, grad-check, inspect.  Every run
with a config writes the fully resolved configuration next to its outputs so
results can be reproduced from the artifact directory alone.

Exit codes: 1 malformed config, 2 I/O failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from pathlib import Path

from .aggregation import LossConfig
from .bundleio import read_bundle, write_bundle, write_manifest
from .checkpoint import load_params, save_params
from .data import SyntheticDataset, SyntheticSpec, degenerate_semantics, gen_synthetic
from .errors import ConfigError, DataFormatError, NumericsError
from .metrics import evaluate
from .model import ModelConfig, forward
from .oracle import REL_TOL, run_gradient_oracle
from .pgm import patch_grid_shape, write_pgm
from .training import (
    ABLATION_AXES,
    TrainConfig,
    ablation_csv,
    ablation_text,
    predict_scores,
    run_ablation,
    train,
)

DEFAULT_CONFIG = {
    "model": {
        "c": 8,
        "m": 16,
        "d": 32,
        "l": 4,
        "d_tok": None,
        "ssp_variant": "qsm",
        "kap": True,
        "cap": True,
        "dsf": True,
        "enable_v2s": True,
        "enable_s2v": True,
        "enable_gate": True,
        "aggregator": "soft",
        "branch": "G+R",
        "loss": {"gamma_pos": 0.0, "gamma_neg": 2.0, "lam": 1.0},
        "seed": 0,
    },
    "data": {
        "n_train": 2000,
        "n_test": 500,
        "density": 0.3,
        "noise": 0.05,
        "separation": 1.2,
        "background": 1.0,
        "background_scale": 1.25,
        "semantic_noise": 0.03,
        "seed": 0,
        "file": None,
        "degenerate_semantics": False,
    },
    "train": {
        "epochs": 30,
        "batch": 32,
        "lr": 1e-4,
        "weight_decay": 0.01,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "ema_decay": 0.9997,
    },
}


def _merge_section(defaults: dict, override: dict, path: str) -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in override.items():
        if key not in merged:
            raise ConfigError(f"unknown config key '{path}.{key}'")
        if isinstance(merged[key], dict) and isinstance(value, dict):
            merged[key] = _merge_section(merged[key], value, f"{path}.{key}")
        else:
            merged[key] = value
    return merged


def load_config(path: str | None, overrides: list[str], seed: int | None) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        for section, content in user.items():
            if section not in config:
                raise ConfigError(f"unknown config section '{section}'")
            if not isinstance(content, dict):
                raise ConfigError(f"config section '{section}' must be an object")
            config[section] = _merge_section(config[section], content, section)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = dotted.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"unknown config key '{dotted}'")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"unknown config key '{dotted}'")
        node[parts[-1]] = value
    if seed is not None:
        config["model"]["seed"] = seed
        config["data"]["seed"] = seed
    return config


def build_model_config(config: dict) -> ModelConfig:
    section = dict(config["model"])
    loss = section.pop("loss")
    try:
        return ModelConfig(loss=LossConfig(**loss), **section)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def build_spec(config: dict) -> SyntheticSpec:
    m = config["model"]
    d = config["data"]
    return SyntheticSpec(
        c=m["c"],
        m=m["m"],
        d=m["d"],
        n=d["n_train"] + d["n_test"],
        density=d["density"],
        noise=d["noise"],
        separation=d["separation"],
        seed=d["seed"],
        background=d["background"],
        background_scale=d["background_scale"],
        semantic_noise=d["semantic_noise"],
    )


def load_datasets(config: dict) -> tuple[SyntheticDataset, SyntheticDataset]:
    """(train, test) datasets from a bundle file or the synthetic generator."""
    d = config["data"]
    if d["file"]:
        bundle = read_bundle(d["file"])
        if bundle.t_ka is None:
            raise DataFormatError(f"{d['file']}: bundle carries no category embeddings")
        cats = [f"class_{j}" for j in range(bundle.c)]
        ds = SyntheticDataset(
            x0=bundle.x0,
            x=bundle.x,
            y=bundle.y,
            t_ka=bundle.t_ka,
            prototypes=bundle.t_ka,
            categories=cats,
        )
        return ds, ds
    spec = build_spec(config)
    full = gen_synthetic(spec)
    if d["degenerate_semantics"]:
        full = degenerate_semantics(spec, full)
    return full.slice(0, d["n_train"]), full.slice(d["n_train"], spec.n)


def _write_resolved(config: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "resolved_config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)


def _report_json(report) -> str:
    return json.dumps(report.as_dict(), indent=2)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(config: dict, out: Path) -> int:
    spec = build_spec(config)
    dataset = gen_synthetic(spec)
    if config["data"]["degenerate_semantics"]:
        dataset = degenerate_semantics(spec, dataset)
    _write_resolved(config, out)
    write_bundle(out / "data.sspafb", dataset.x0, dataset.x, dataset.y, dataset.t_ka)
    write_manifest(out / "manifest.json", dataset.categories, None)
    print(f"wrote {out / 'data.sspafb'} ({dataset.n} samples)")
    return 0


def cmd_train(config: dict, out: Path) -> int:
    cfg = build_model_config(config)
    tc = TrainConfig(**config["train"])
    train_data, test_data = load_datasets(config)
    _write_resolved(config, out)
    t0 = time.perf_counter()
    result = train(cfg, train_data, test_data, tc)
    elapsed = time.perf_counter() - t0
    save_params(out / "params.npz", result.params, result.ema)
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        fh.write(_report_json(result.final_eval))
    keys = list(result.history[0].keys())
    with open(out / "history.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(keys) + "\n")
        for row in result.history:
            fh.write(",".join(repr(row[k]) for k in keys) + "\n")
    print(f"trained {tc.epochs} epochs in {elapsed:.1f}s; test mAP {result.final_eval.m_ap:.4f}")
    return 0


def cmd_eval(config: dict, out: Path, params_path: str) -> int:
    cfg = build_model_config(config)
    _, test_data = load_datasets(config)
    params = load_params(params_path, cfg)
    _write_resolved(config, out)
    scores = predict_scores(cfg, params, test_data)
    report = evaluate(scores, test_data.y)
    with open(out / "eval.json", "w", encoding="utf-8") as fh:
        fh.write(_report_json(report))
    with open(out / "eval.txt", "w", encoding="utf-8") as fh:
        fh.write(report.text_table() + "\n")
    print(report.text_table())
    return 0


def cmd_ablate(config: dict, out: Path, axis: str) -> int:
    if axis not in ABLATION_AXES:
        raise ConfigError(f"unknown ablation axis '{axis}'")
    cfg = build_model_config(config)
    tc = TrainConfig(**config["train"])
    train_data, test_data = load_datasets(config)
    _write_resolved(config, out)
    rows = run_ablation(cfg, train_data, test_data, axis, tc)
    with open(out / "ablation.csv", "w", encoding="utf-8") as fh:
        fh.write(ablation_csv(rows))
    text = ablation_text(axis, rows)
    with open(out / "ablation.txt", "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text)
    return 0


def cmd_grad_check(out: Path | None, seed: int | None) -> int:
    results = run_gradient_oracle(seed=seed or 0)
    failed = False
    lines = []
    for r in results:
        status = "ok" if r.passed else "FAIL"
        line = f"{status:<5} {r.name:<20} worst rel err {r.worst_rel_err:.3e} ({r.instances} instances)"
        lines.append(line)
        print(line)
        failed = failed or not r.passed
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "grad_check.txt", "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    if failed:
        raise NumericsError(f"gradient check failed at tolerance {REL_TOL}")
    return 0


def cmd_inspect(config: dict, out: Path, params_path: str, count: int) -> int:
    cfg = build_model_config(config)
    _, test_data = load_datasets(config)
    params = load_params(params_path, cfg)
    _write_resolved(config, out)
    count = min(count, test_data.n)
    res = forward(cfg, params, test_data.x0[:count], test_data.x[:count], test_data.t_ka)
    grid = patch_grid_shape(cfg.m)
    written = []
    if res.gamma is not None:
        for i in range(count):
            for j in range(cfg.c):
                path = out / f"gamma_img{i}_cat{j}.pgm"
                write_pgm(path, res.gamma[i, :, j].reshape(grid))
                written.append(path)
    if res.gate_s2v is not None:
        gates = res.gate_s2v.mean(axis=-1)  # (B, M) passing rate per patch
        for i in range(count):
            path = out / f"gate_img{i}.pgm"
            write_pgm(path, gates[i].reshape(grid))
            written.append(path)
    print(f"wrote {len(written)} PGM files to {out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sspa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override model+data seed")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            dest="overrides",
            help="override one config key (dotted path), repeatable",
        )

    common(sub.add_parser("gen-data", help="write a synthetic feature bundle"))
    common(sub.add_parser("train", help="train and evaluate"))
    p_eval = sub.add_parser("eval", help="evaluate stored parameters")
    common(p_eval)
    p_eval.add_argument("--params", required=True, help="params.npz from train")
    p_abl = sub.add_parser("ablate", help="train every variant of one axis")
    common(p_abl)
    p_abl.add_argument("--axis", required=True, choices=ABLATION_AXES)
    p_gc = sub.add_parser("grad-check", help="finite-difference oracle suite")
    p_gc.add_argument("--out", default=None)
    p_gc.add_argument("--seed", type=int, default=None)
    p_ins = sub.add_parser("inspect", help="dump importance and gate heatmaps")
    common(p_ins)
    p_ins.add_argument("--params", required=True)
    p_ins.add_argument("--count", type=int, default=4, help="number of images to dump")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "grad-check":
            return cmd_grad_check(Path(args.out) if args.out else None, args.seed)
        config = load_config(args.config, args.overrides, args.seed)
        out = Path(args.out)
        if args.command == "gen-data":
            return cmd_gen_data(config, out)
        if args.command == "train":
            return cmd_train(config, out)
        if args.command == "eval":
            return cmd_eval(config, out, args.params)
        if args.command == "ablate":
            return cmd_ablate(config, out, args.axis)
        if args.command == "inspect":
            return cmd_inspect(config, out, args.params, args.count)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, DataFormatError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except (NumericsError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
