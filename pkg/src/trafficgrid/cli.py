"""trafficgrid command line: extract, train, estimate, annotate, synth, bench.

Exit codes: 0 success, 2 I/O error, 3 validation error, 4 model/feature
dimension mismatch.
"""
from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features
from .features import HogParams, LbpParams, feature_dim
from .imaging import GridSpec, Image, Roi, read_netpbm, write_netpbm
from .pipeline import (
    SyntheticSceneSpec, TRAFFIC, annotate, build_dataset, estimate_density,
    generate_synthetic_frame, load_dataset, random_vehicle_cells, read_manifest,
    report_to_json, save_dataset, split_dataset, write_manifest,
)
from .svm import DimensionError, TrainConfig, evaluate, load_model, save_model, train

EXIT_OK = 0
EXIT_IO = 2
EXIT_INVALID = 3
EXIT_DIM = 4

FRAME_SUFFIXES = (".pgm", ".ppm", ".pnm")


class ConfigError(ValueError):
    pass


_PATH_KEYS = ("frames", "manifest", "dataset", "model", "frame", "out")


@dataclass(frozen=True)
class RunConfig:
    roi: Roi | None = None  # None means the whole frame
    grid: GridSpec = GridSpec()
    hog: HogParams = HogParams()
    lbp: LbpParams = LbpParams()
    train: TrainConfig = TrainConfig()
    train_fraction: float = 0.8
    threads: int | None = None
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie strictly between 0 and 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        cw, ch = self.grid.cell_width, self.grid.cell_height
        if ch <= 2 * self.lbp.radius or cw <= 2 * self.lbp.radius:
            raise ConfigError(f"LBP radius {self.lbp.radius} too large for {cw}x{ch} cells")
        if cw < self.hog.sub_cell_size or ch < self.hog.sub_cell_size:
            raise ConfigError("HOG sub-cell larger than the grid cell")
        if self.roi is not None:
            self.grid.check(self.roi.width, self.roi.height)
        unknown = set(self.paths) - set(_PATH_KEYS)
        if unknown:
            raise ConfigError(f"unknown path keys: {sorted(unknown)}")

    def roi_for(self, frame: Image) -> Roi:
        return self.roi if self.roi is not None else Roi.full(frame)

    def to_dict(self) -> dict:
        g = self.grid
        d = {
            "roi": None if self.roi is None else [self.roi.x, self.roi.y, self.roi.width, self.roi.height],
            "grid": [g.rows, g.cols, g.cell_width, g.cell_height],
            "hog_sub_cell": self.hog.sub_cell_size,
            "hog_orientations": self.hog.orientations,
            "lbp_radius": self.lbp.radius,
            "lbp_points": self.lbp.points,
            "lambda": self.train.lam,
            "epochs": self.train.epochs,
            "seed": self.train.seed,
            "mode": self.train.mode,
            "train_fraction": self.train_fraction,
            "threads": self.threads,
        }
        d.update(self.paths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"roi", "grid", "hog_sub_cell", "hog_orientations", "lbp_radius", "lbp_points",
                 "lambda", "epochs", "seed", "mode", "train_fraction", "threads", *_PATH_KEYS}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            roi = d.get("roi")
            grid = d.get("grid")
            return cls(
                roi=None if roi is None else Roi(*_ints(roi, 4, "roi")),
                grid=GridSpec() if grid is None else GridSpec(*_ints(grid, 4, "grid")),
                hog=HogParams(int(d.get("hog_sub_cell", 3)), int(d.get("hog_orientations", 8))),
                lbp=LbpParams(int(d.get("lbp_radius", 8)), int(d.get("lbp_points", 24))),
                train=TrainConfig(float(d.get("lambda", 1e-4)), int(d.get("epochs", 50)),
                                  int(d.get("seed", 0)), str(d.get("mode", "stochastic"))),
                train_fraction=float(d.get("train_fraction", 0.8)),
                threads=None if d.get("threads") is None else int(d["threads"]),
                paths={k: str(d[k]) for k in _PATH_KEYS if k in d},
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None


def _ints(value, n, name):
    if isinstance(value, str):
        value = value.split(",")
    try:
        out = [int(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be {n} integers") from None
    if len(out) != n:
        raise ConfigError(f"{name} must be {n} integers, got {len(out)}")
    return out


def load_config(args) -> RunConfig:
    d = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
    if args.roi:
        d["roi"] = _ints(args.roi, 4, "--roi")
    if args.grid:
        d["grid"] = _ints(args.grid, 4, "--grid")
    if args.seed is not None:
        d["seed"] = args.seed
    if args.threads is not None:
        d["threads"] = args.threads
    return RunConfig.from_dict(d)


def _path(args, cfg, name, required=True):
    value = getattr(args, name, None) or cfg.paths.get(name)
    if value is None and required:
        raise ConfigError(f"missing --{name} (or '{name}' in the config)")
    return value


def _threads(cfg) -> int:
    return cfg.threads or os.cpu_count() or 1


def list_frames(directory) -> list[tuple[str, Path]]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"frames directory {d} not found")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    return [(p.stem, p) for p in files]


# --- commands --------------------------------------------------------------

def cmd_extract(args, cfg) -> int:
    frames_dir = _path(args, cfg, "frames")
    with open(_path(args, cfg, "manifest"), encoding="utf-8", newline="") as fh:
        labels = read_manifest(fh)
    if not labels:
        raise ConfigError("manifest has no labeled cells; refusing to write an empty dataset")
    available = dict(list_frames(frames_dir))
    wanted = dict.fromkeys(lab.frame_id for lab in labels)
    for fid in wanted:
        if fid not in available:
            raise ConfigError(f"manifest references frame {fid!r} not found in {frames_dir}")
    frames = [(fid, read_netpbm(available[fid])) for fid in wanted]
    rois = {cfg.roi_for(img) for _, img in frames}
    if len(rois) != 1:
        raise ConfigError("frames differ in size; set an explicit ROI")
    ds = build_dataset(frames, rois.pop(), cfg.grid, labels, cfg.hog, cfg.lbp, threads=_threads(cfg))
    out = _path(args, cfg, "out")
    Path(out).write_bytes(save_dataset(ds))
    n_traffic = int(np.sum(ds.labels > 0))
    print(f"rows: {len(ds)} traffic: {n_traffic} road: {len(ds) - n_traffic}")
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    ds = load_dataset(Path(_path(args, cfg, "dataset")).read_bytes())
    if not (np.any(ds.labels > 0) and np.any(ds.labels < 0)):
        raise ConfigError("dataset contains a single class; need both traffic and road cells")
    tr, te = split_dataset(ds, cfg.train_fraction, cfg.train.seed)
    model = train(tr.features, tr.labels, cfg.train)
    Path(_path(args, cfg, "out")).write_bytes(save_model(model))
    m = evaluate(model, te.features, te.labels)
    print(f"train rows: {len(tr)} test rows: {len(te)}")
    print(f"tp={m.tp} tn={m.tn} fp={m.fp} fn={m.fn}")
    print(f"accuracy: {m.accuracy:.7f}")
    print(f"precision: {m.precision:.7f}")
    print(f"recall: {m.recall:.7f}")
    print(f"f1: {m.f1:.7f}")
    if m.degenerate:
        print(f"degenerate: {','.join(sorted(m.degenerate))}")
    return EXIT_OK


def _load_for_predict(args, cfg):
    model = load_model(Path(_path(args, cfg, "model")).read_bytes())
    frame_path = Path(_path(args, cfg, "frame"))
    frame = read_netpbm(frame_path)
    dim = feature_dim(cfg.grid.cell_width, cfg.grid.cell_height, cfg.hog, cfg.lbp)
    if dim != model.dim:
        raise DimensionError(f"model expects {model.dim} features, configuration yields {dim}")
    return model, frame_path.stem, frame


def cmd_estimate(args, cfg) -> int:
    model, fid, frame = _load_for_predict(args, cfg)
    rep = estimate_density(frame, cfg.roi_for(frame), cfg.grid, model, cfg.hog, cfg.lbp,
                           frame_id=fid, threads=_threads(cfg))
    Path(_path(args, cfg, "out")).write_text(report_to_json(rep) + "\n", encoding="utf-8")
    print(f"{rep.traffic_cells}/{rep.total_cells} {rep.density:.6f}")
    return EXIT_OK


def cmd_annotate(args, cfg) -> int:
    model, fid, frame = _load_for_predict(args, cfg)
    roi = cfg.roi_for(frame)
    rep = estimate_density(frame, roi, cfg.grid, model, cfg.hog, cfg.lbp, frame_id=fid, threads=_threads(cfg))
    write_netpbm(_path(args, cfg, "out"), annotate(frame, roi, cfg.grid, rep))
    print(f"{rep.traffic_cells}/{rep.total_cells} {rep.density:.6f}")
    return EXIT_OK


def _parse_cells(text):
    cells = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            r, c = tok.split(":")
            cells.append((int(r), int(c)))
        except ValueError:
            raise ConfigError(f"bad vehicle cell {tok!r}, expected row:col") from None
    return cells


def cmd_synth(args, cfg) -> int:
    g = cfg.grid
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    fixed = _parse_cells(args.vehicle_cells) if args.vehicle_cells else None
    if fixed is None and not 0 <= args.vehicles <= g.n_cells:
        raise ConfigError(f"--vehicles must lie in [0, {g.n_cells}]")
    out = Path(_path(args, cfg, "out"))
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.train.seed)
    labels = []
    width = len(str(args.count - 1))
    for i in range(args.count):
        cells = fixed if fixed is not None else random_vehicle_cells(g.rows, g.cols, args.vehicles, rng)
        spec = SyntheticSceneSpec(g.rows, g.cols, g.cell_width, g.cell_height, frozenset(cells),
                                  noise_seed=int(rng.integers(0, 2**63)))
        fid = f"frame_{i:0{max(width, 4)}d}"
        img, labs = generate_synthetic_frame(spec, fid)
        write_netpbm(out / f"{fid}.pgm", img)
        labels.extend(labs)
    with open(out / "manifest.csv", "w", encoding="utf-8", newline="") as fh:
        write_manifest(labels, fh)
    site = RunConfig(roi=Roi(0, 0, *g.extent), grid=g, hog=cfg.hog, lbp=cfg.lbp, train=cfg.train)
    (out / "config.json").write_text(json.dumps(site.to_dict(), indent=2) + "\n", encoding="utf-8")
    n_traffic = sum(lab.label == TRAFFIC for lab in labels)
    print(f"frames: {args.count} cells: {len(labels)} traffic: {n_traffic}")
    return EXIT_OK


def run_bench(frame: Image, roi: Roi, cfg: RunConfig, model, iterations: int, threads: int) -> dict:
    """Per-frame wall times (seconds) of the full estimate path.

    Single-thread and parallel runs alternate so load drift hits both alike.
    """
    modes = (("single-thread", 1), ("parallel", threads))
    times = {mode: [] for mode, _ in modes}
    for _, nthreads in modes:
        estimate_density(frame, roi, cfg.grid, model, cfg.hog, cfg.lbp, threads=nthreads)  # warm-up
    for _ in range(iterations):
        for mode, nthreads in modes:
            t0 = time.perf_counter()
            estimate_density(frame, roi, cfg.grid, model, cfg.hog, cfg.lbp, threads=nthreads)
            times[mode].append(time.perf_counter() - t0)
    return {mode: {"threads": n, "median": statistics.median(times[mode]), "min": min(times[mode]),
                   "times": times[mode]}
            for mode, n in modes}


def cmd_bench(args, cfg) -> int:
    if args.iterations < 1:
        raise ConfigError("--iterations must be >= 1")
    model, _, frame = _load_for_predict(args, cfg)
    roi = cfg.roi_for(frame)
    backends = features.available_backends() if args.backend == "both" else [args.backend]
    previous = features.get_backend()
    try:
        for name in backends:
            features.set_backend(name)
            res = run_bench(frame, roi, cfg, model, args.iterations, _threads(cfg))
            for mode, r in res.items():
                print(f"[{features.get_backend()}] {mode} ({r['threads']} threads): "
                      f"median {r['median'] * 1e3:.2f} ms, min {r['min'] * 1e3:.2f} ms over {args.iterations} runs")
    finally:
        features.set_backend(previous)
    return EXIT_OK


# --- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--roi", help="x,y,w,h")
    common.add_argument("--grid", help="rows,cols,cell_width,cell_height")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker threads (default: CPU count)")

    p = argparse.ArgumentParser(prog="trafficgrid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract", parents=[common], help="build a GSDS dataset from frames + manifest")
    s.add_argument("--frames")
    s.add_argument("--manifest")
    s.add_argument("--out")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", parents=[common], help="train on 80%% of a dataset, report held-out metrics")
    s.add_argument("--dataset")
    s.add_argument("--out", help="model file to write")
    s.set_defaults(func=cmd_train)

    for name, func, what in (("estimate", cmd_estimate, "density report JSON"),
                             ("annotate", cmd_annotate, "P6 overlay image")):
        s = sub.add_parser(name, parents=[common], help=f"classify a frame's cells and write a {what}")
        s.add_argument("--model")
        s.add_argument("--frame")
        s.add_argument("--out")
        s.set_defaults(func=func)

    s = sub.add_parser("synth", parents=[common], help="write synthetic frames and a full manifest")
    s.add_argument("--out")
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--vehicles", type=int, default=10, help="random vehicle cells per frame")
    s.add_argument("--vehicle-cells", help="fixed cells for every frame, e.g. 0:1,3:4")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("bench", parents=[common], help="time the estimate path")
    s.add_argument("--model")
    s.add_argument("--frame")
    s.add_argument("--iterations", type=int, default=20)
    s.add_argument("--backend", choices=["auto", "compiled", "python", "both"], default="auto")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return args.func(args, cfg)
    except DimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIM
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
