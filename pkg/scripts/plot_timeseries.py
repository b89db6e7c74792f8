"""Plot per-second delay and loss for one application across scheme run directories.

Usage: python3 scripts/plot_timeseries.py RUN_DIR [--app video] [--out plot.png]

RUN_DIR is the --out directory of a railqos run; every subdirectory holding a
timeseries.csv is drawn as one line.
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path: Path, app: str) -> tuple[list[int], list[float], list[float]]:
    seconds, delay, loss = [], [], []
    with path.open(newline="") as f:
        for row in csv.DictReader(f):
            if row["app"] != app:
                continue
            delivered, dropped = int(row["delivered"]), int(row["dropped"])
            seconds.append(int(row["second"]))
            delay.append(float(row["mean_delay_s"]) if row["mean_delay_s"] else float("nan"))
            total = delivered + dropped
            loss.append(dropped / total if total else 0.0)
    return seconds, delay, loss


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir", type=Path)
    ap.add_argument("--app", default="video")
    ap.add_argument("--out", type=Path, default=Path("timeseries.png"))
    args = ap.parse_args()

    runs = sorted(p.parent for p in args.run_dir.glob("*/timeseries.csv"))
    if not runs:
        raise SystemExit(f"no timeseries.csv under {args.run_dir}")
    fig, (ax_delay, ax_loss) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    for run in runs:
        t, delay, loss = load(run / "timeseries.csv", args.app)
        ax_delay.plot(t, delay, label=run.name)
        ax_loss.plot(t, loss, label=run.name)
    ax_delay.set_ylabel("mean delay (s)")
    ax_loss.set_ylabel("loss fraction")
    ax_loss.set_xlabel("simulated second")
    ax_delay.set_title(args.app)
    ax_delay.legend()
    fig.tight_layout()
    fig.savefig(args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
