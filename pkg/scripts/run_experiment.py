"""Train joint and separate models on one dataset and print the comparison.

    python scripts/run_experiment.py --kind pendulum --out runs/exp1
    python scripts/run_experiment.py --config configs/tile.ini --modes joint
"""
import argparse
import time

from pixeldyn.experiment import default_config, load_config, run_comparison


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI config; defaults for --kind otherwise")
    parser.add_argument("--kind", choices=["pendulum", "tile"], default="pendulum")
    parser.add_argument("--modes", default="joint,separate")
    parser.add_argument("--out", help="output directory (default: the config's output)")
    parser.add_argument("--max-horizon", type=int, default=8)
    args = parser.parse_args()

    cfg = load_config(args.config) if args.config else default_config(args.kind)
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    out = args.out or cfg.output
    start = time.perf_counter()
    cmp = run_comparison(cfg, out, modes, args.max_horizon)
    elapsed = time.perf_counter() - start

    print(f"{cfg.kind}: {cfg.n_frames} frames, data seed {cfg.data_seed}, output {out}")
    print(f"{'model':10s} {'V_P':>8s} {'V_R':>8s} {'iters':>7s}")
    for mode, ev in cmp.evaluations.items():
        rep = cmp.bundles[mode].report
        print(f"{mode:10s} {ev.V_P:8.3f} {ev.V_R:8.3f} {rep.iterations:7d}")
    print("p  " + " ".join(f"{m:>9s}" for m in modes) + "     naive")
    for p in range(args.max_horizon + 1):
        row = " ".join(f"{cmp.evaluations[m].fit[p]:9.2f}" for m in modes)
        print(f"{p:<2d} {row} {cmp.naive[p]:9.2f}")
    for mode, ev in cmp.evaluations.items():
        if ev.annulus is not None:
            print(f"{mode} validation feature annulus ratio {ev.annulus:.3f}")
    print(f"done in {elapsed:.0f} s")


if __name__ == "__main__":
    main()
