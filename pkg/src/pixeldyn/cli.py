"""Command line driver: ``pixeldyn simulate | train | evaluate | render-grid``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .experiment import (
    ConfigError,
    ExperimentConfig,
    default_config,
    evaluate,
    load_bundle,
    load_config,
    render_grid,
    save_bundle,
    simulate,
    train,
    with_pca,
    write_cost_trace,
)
from .simulators import load_dataset, save_dataset


def _config(args) -> ExperimentConfig:
    if args.config:
        return load_config(args.config)
    return default_config(args.kind)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = Path(args.out or Path(cfg.output) / "dataset.pxdy")
    out.parent.mkdir(parents=True, exist_ok=True)
    ds = simulate(cfg)
    save_dataset(ds, out)
    print(f"wrote {out}: N={ds.n_frames} M={ds.n_pixels} d_u={ds.control_dim} split={ds.split_index}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    data_path = Path(args.inp or Path(cfg.output) / "dataset.pxdy")
    out = Path(args.out or Path(cfg.output) / "bundle.pxbn")
    out.parent.mkdir(parents=True, exist_ok=True)
    bundle = train(cfg, load_dataset(data_path))
    save_bundle(bundle, out)
    trace = out.with_name(out.stem + "_costs.csv")
    write_cost_trace(bundle.report, trace)
    m = bundle.metrics
    print(f"wrote {out} and {trace}")
    print(f"mode={cfg.mode} iterations={bundle.report.iterations} reason={bundle.report.reason}")
    print(f"train V_P={m['train_V_P']:.4f} V_R={m['train_V_R']:.4f}  "
          f"validation V_P={m['validation_V_P']:.4f} V_R={m['validation_V_R']:.4f}")
    return 0


def _bundle_and_data(args):
    bundle = load_bundle(args.inp)
    dataset = load_dataset(args.data) if args.data else bundle.dataset
    return bundle, with_pca(dataset, bundle.dataset.pca)


def cmd_evaluate(args) -> int:
    bundle, dataset = _bundle_and_data(args)
    out = Path(args.out or Path(bundle.config.output) / "eval")
    ev = evaluate(bundle, dataset, args.max_horizon, out)
    print(f"wrote metrics to {out}")
    print(f"validation V_P={ev.V_P:.4f} V_R={ev.V_R:.4f}")
    print("p   fit     naive")
    for p, (a, b) in enumerate(zip(ev.fit, ev.naive)):
        print(f"{p:<3d} {a:7.3f} {b:7.3f}")
    if ev.annulus is not None:
        print(f"feature annulus ratio (validation) = {ev.annulus:.3f}")
    return 0


def cmd_render_grid(args) -> int:
    bundle, dataset = _bundle_and_data(args)
    out = Path(args.out or Path(bundle.config.output) / "grid")
    ratio = render_grid(bundle, dataset, out)
    print(f"wrote {out / 'feature_grid.pgm'} and {out / 'features.csv'}; annulus ratio {ratio:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pixeldyn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_in: bool):
        p.add_argument("--config", help="INI experiment config")
        p.add_argument("--kind", choices=["pendulum", "tile"], default="pendulum",
                       help="default config to use when --config is absent")
        p.add_argument("--in", dest="inp", required=needs_in)
        p.add_argument("--out")

    p = sub.add_parser("simulate", help="simulate a dataset (PXDY1)")
    common(p, False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a model from a dataset, write a bundle")
    common(p, False)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="FIT curves, cost table, strips and feature grid")
    common(p, True)
    p.add_argument("--data", help="dataset to evaluate on (default: the one in the bundle)")
    p.add_argument("--max-horizon", type=int, default=8)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render-grid", help="decoded feature grid and feature scatter")
    common(p, True)
    p.add_argument("--data")
    p.set_defaults(func=cmd_render_grid)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
