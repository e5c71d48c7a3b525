"""Command-line entry point.

    jointrecon run <config> [--output DIR]
    jointrecon phantom <spec> <out>
    jointrecon metrics <recon> <gt> <seg> <seg_gt>

Exit codes: 0 success, 1 configuration or input error, 2 solver failure.
``JOINTRECON_THREADS`` sets the number of worker processes for sweeps.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .experiment import (
    EXIT_CONFIG,
    EXIT_OK,
    ConfigError,
    config_from_mapping,
    load_config,
    parse_flat,
    run_experiment,
)
from .metrics import evaluate
from .simulate import make_phantom


def _parse_spec(spec: str) -> dict:
    """A spec is a config file path or inline ``key=value,key=value`` pairs."""
    path = Path(spec)
    if path.is_file():
        return parse_flat(path.read_text())
    if "=" not in spec:
        raise ConfigError(f"phantom spec {spec!r} is neither a file nor key=value pairs")
    return parse_flat("\n".join(spec.split(",")))


def _load_array(path) -> np.ndarray:
    """Exact values from a ``.f64`` sidecar (shape from the sibling PGM) or PGM pixels."""
    path = Path(path)
    pgm = path.with_suffix(".pgm")
    raw = path.with_suffix(".f64")
    if not pgm.is_file():
        raise ConfigError(f"{path}: need {pgm.name} for the image shape")
    pixels = fio.read_pgm16(pgm)
    if raw.is_file():
        return fio.read_raw(raw, pixels.shape)
    return pixels.astype(float)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    return run_experiment(cfg, output=args.output)


def cmd_phantom(args) -> int:
    kv = _parse_spec(args.spec)
    cfg = config_from_mapping(kv)
    u, labels, means = make_phantom(cfg.phantom)
    out = Path(args.out)
    if out.parent != Path(""):
        fio.ensure_dir(out.parent)
    img = fio.write_image(out, np.asarray(u))
    lab = fio.write_image(out.with_name(out.name + "_labels"), np.asarray(labels, dtype=float))
    print(f"image = {img['pgm']}")
    print(f"labels = {lab['pgm']}")
    print(f"lo = {img['lo']}")
    print(f"hi = {img['hi']}")
    print("means = " + ", ".join(repr(float(c)) for c in np.asarray(means)))
    return EXIT_OK


def cmd_metrics(args) -> int:
    u = _load_array(args.recon)
    u_gt = _load_array(args.gt)
    seg = np.rint(_load_array(args.seg)).astype(int)
    seg_gt = np.rint(_load_array(args.seg_gt)).astype(int)
    rep = evaluate(u, u_gt, seg, seg_gt)
    for name in ("rre", "psnr_norm", "psnr_standard", "rse"):
        print(f"{name} = {getattr(rep, name)!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointrecon", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config (or a manifest)")
    p.add_argument("config")
    p.add_argument("--output", help="override the output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("phantom", help="write a phantom and its labels")
    p.add_argument("spec", help="config file or inline key=value,key=value")
    p.add_argument("out", help="output path stem")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("metrics", help="compare a reconstruction and segmentation with ground truth")
    for name in ("recon", "gt", "seg", "seg_gt"):
        p.add_argument(name)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, fio.FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
