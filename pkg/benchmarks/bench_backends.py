"""Compare the compiled and numpy backends on the per-frame estimate path.

    python3 benchmarks/bench_backends.py [--iterations 50] [--threads 4]
"""
import argparse

import numpy as np

from trafficgrid import features
from trafficgrid.cli import RunConfig, run_bench
from trafficgrid.imaging import Roi
from trafficgrid.pipeline import SyntheticSceneSpec, generate_synthetic_frame, random_vehicle_cells
from trafficgrid.svm import LinearSvmModel


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=50)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    cfg = RunConfig()
    rows, cols = cfg.grid.rows, cfg.grid.cols
    cells = random_vehicle_cells(rows, cols, 20, np.random.default_rng(0))
    frame, _ = generate_synthetic_frame(SyntheticSceneSpec(vehicle_cells=cells, noise_seed=1))
    roi = Roi(0, 0, *cfg.grid.extent)
    model = LinearSvmModel.constant(features.feature_dim(cfg.grid.cell_width, cfg.grid.cell_height), 1.0)

    prev = features.get_backend()
    medians = {}
    try:
        for name in features.available_backends():
            features.set_backend(name)
            res = run_bench(frame, roi, cfg, model, args.iterations, args.threads)
            for mode, r in res.items():
                medians[(name, mode)] = r["median"]
                print(f"{name:9s} {mode:14s} threads={r['threads']}  median {r['median'] * 1e3:7.2f} ms"
                      f"  min {r['min'] * 1e3:7.2f} ms")
    finally:
        features.set_backend(prev)
    if ("compiled", "single-thread") in medians:
        ratio = medians[("python", "single-thread")] / medians[("compiled", "single-thread")]
        print(f"compiled speedup over python (single-thread): {ratio:.2f}x")


if __name__ == "__main__":
    main()
