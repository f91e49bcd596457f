"""Command-line interface.

Commands: forward, verify, flops, train-toy, visualize. All configuration
rides in JSON files or flags; tensors use the binary .dgt format. Exit
codes: 0 success, 2 config or usage error, 3 data or shape error,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import analysis, io, verify
from .backbone import model_from_config
from .dgmn2 import Dgmn2Config
from .errors import ConfigError, DgmnError, ShapeError, TrainingError
from .tensor import Tensor
from .training import SyntheticTask, build_toy_model, make_dataset, metrics_csv, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_VERIFY = 4


def _load_model(path: str, seed: int):
    with open(path) as fh:
        doc = json.load(fh)
    return model_from_config(doc, seed=seed)


def cmd_forward(args) -> int:
    model = _load_model(args.model, args.seed)
    if args.checkpoint:
        model.load_state_dict(io.load_checkpoint(args.checkpoint))
    x = io.read_tensor(args.input)
    if x.ndim != 4:
        raise ShapeError(f"forward expects a rank-4 NCHW tensor, got rank {x.ndim}")
    feats = model.forward_features(Tensor(x))
    strides = [x.shape[2] // f.shape[2] for f in feats]
    if args.features_only:
        io.write_tensor(args.out, feats[-1].data)
        out_shape = feats[-1].shape
    else:
        from . import tensor as T

        logits = model.head(T.global_average_pool(feats[-1]))
        io.write_tensor(args.out, logits.data)
        out_shape = logits.shape
    print(
        json.dumps(
            {
                "input_shape": list(x.shape),
                "output_shape": list(out_shape),
                "stage_strides": strides,
                "mode": model.spec.mode,
            }
        )
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    names = ["oracles", "grads", "invariants"] if args.suite == "all" else [args.suite]
    for name in names:
        if name not in verify.SUITES:
            raise ConfigError(f"unknown suite {name!r}; expected oracles|grads|invariants|all")
    report = verify.run_suites(names, seed=args.seed, cases=args.cases)
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_flops(args) -> int:
    try:
        h, w = (int(v) for v in args.hw.split(","))
    except ValueError as exc:
        raise ConfigError(f"--hw wants H,W integers, got {args.hw!r}") from exc
    model = _load_model(args.model, args.seed)
    stage1 = model.stages[0].blocks[0].cfg
    attn_cfg = Dgmn2Config(
        dim=stage1.dim, heads=stage1.heads, k=stage1.k, rates=list(stage1.rates),
        ffn_ratio=stage1.ffn_ratio, pos_grid=stage1.pos_grid,
    )
    base = analysis.mac_sampled_attention(attn_cfg, h, w)
    doubled = analysis.mac_sampled_attention(attn_cfg, 2 * h, w)
    report = {
        "model_params": analysis.count_params(model),
        "model_macs": analysis.count_flops(model, h, w),
        "attention_macs": base,
        "attention_macs_hw_doubled": doubled,
        "attention_ratio": doubled / base,
    }
    if args.compare_dense:
        dense = analysis.mac_dense_attention(h * w, attn_cfg.dim, attn_cfg.heads)
        dense2 = analysis.mac_dense_attention(2 * h * w, attn_cfg.dim, attn_cfg.heads)
        report["dense_macs"] = dense
        report["dense_macs_hw_doubled"] = dense2
        report["dense_ratio"] = dense2 / dense
    if args.ledger:
        report["ledger"] = json.loads(analysis.build_ledger(model, h, w).to_json())
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_train_toy(args) -> int:
    task = SyntheticTask(kind=args.task, count=args.samples, size=args.size, classes=args.classes, seed=args.seed)
    model = build_toy_model(task, rate=args.rate, seed=args.seed)
    history = train(model, task, steps=args.steps, lr=args.lr, seed=args.seed, schedule=args.schedule)
    csv = metrics_csv(history)
    if args.out_csv:
        with open(args.out_csv, "w") as fh:
            fh.write(csv)
    last = history[-1]
    print(json.dumps({"steps_run": len(history), "final_loss": last[1], "final_accuracy": last[2]}))
    return EXIT_OK


def cmd_visualize(args) -> int:
    model = _load_model(args.model, args.seed)
    if args.checkpoint:
        model.load_state_dict(io.load_checkpoint(args.checkpoint))
    x = io.read_tensor(args.input)
    if x.ndim != 4:
        raise ShapeError(f"visualize expects a rank-4 NCHW tensor, got rank {x.ndim}")
    try:
        positions = [
            tuple(int(v) for v in chunk.split(",")) for chunk in args.positions.split(";") if chunk
        ]
        if not positions or any(len(p) != 2 for p in positions):
            raise ValueError
    except ValueError as exc:
        raise ConfigError(f"--positions wants 'y,x;y,x', got {args.positions!r}") from exc
    doc = analysis.export_sampled_nodes(model, x, positions, out_json=args.out_json, out_svg=args.out_svg)
    print(json.dumps({"records": len(doc["records"]), "stages": len(model.stages)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dgmn", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    fw = sub.add_parser("forward", help="run a backbone on a tensor file")
    fw.add_argument("--model", required=True)
    fw.add_argument("--input", required=True)
    fw.add_argument("--out", required=True)
    fw.add_argument("--seed", type=int, required=True)
    fw.add_argument("--checkpoint", default=None)
    fw.add_argument("--features-only", action="store_true")
    fw.set_defaults(func=cmd_forward)

    vf = sub.add_parser("verify", help="run property suites")
    vf.add_argument("--suite", required=True)
    vf.add_argument("--seed", type=int, default=0)
    vf.add_argument("--cases", type=int, default=200)
    vf.add_argument("--out", default=None)
    vf.set_defaults(func=cmd_verify)

    fl = sub.add_parser("flops", help="analytic parameter and MAC report")
    fl.add_argument("--model", required=True)
    fl.add_argument("--hw", required=True)
    fl.add_argument("--compare-dense", action="store_true")
    fl.add_argument("--ledger", action="store_true")
    fl.add_argument("--seed", type=int, default=0)
    fl.set_defaults(func=cmd_flops)

    tt = sub.add_parser("train-toy", help="overfit a synthetic task")
    tt.add_argument("--task", default="classify_blobs")
    tt.add_argument("--steps", type=int, required=True)
    tt.add_argument("--seed", type=int, required=True)
    tt.add_argument("--lr", type=float, default=3e-3)
    tt.add_argument("--rate", type=int, default=4)
    tt.add_argument("--samples", type=int, default=16)
    tt.add_argument("--size", type=int, default=32)
    tt.add_argument("--classes", type=int, default=2)
    tt.add_argument("--schedule", default="constant", choices=("constant", "cosine"))
    tt.add_argument("--out-csv", default=None)
    tt.set_defaults(func=cmd_train_toy)

    vz = sub.add_parser("visualize", help="export sampled nodes as JSON and SVG")
    vz.add_argument("--model", required=True)
    vz.add_argument("--input", required=True)
    vz.add_argument("--positions", required=True)
    vz.add_argument("--out-json", default=None)
    vz.add_argument("--out-svg", default=None)
    vz.add_argument("--seed", type=int, required=True)
    vz.add_argument("--checkpoint", default=None)
    vz.set_defaults(func=cmd_visualize)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0,) else 0
    try:
        return args.func(args)
    except (ConfigError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ShapeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DgmnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
