"""Image-transport benchmark: Sinkhorn vs Greenkhorn at equal update budgets.

Progress is counted in row/column updates.  A Sinkhorn pass touches every
row (or column), so it counts as n updates; a Greenkhorn step counts as
one.  At each checkpoint the harness records ``dist(A, U(r, c))`` of the
unrounded iterate and, optionally, the cost of its rounding.

Randomness comes from ``numpy.random.default_rng(seed)`` (PCG64).  A
synthetic run draws, for each pair in order, the first image then the
second; each image draws background ``(m, m)``, then the top-left corner
row and column, then the foreground ``(side, side)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import CostMatrix, Marginal, as_cost
from .errors import FormatError, ParameterError
from .greenkhorn import GreenkhornIterator
from .kernel import ScaledKernel, log_gibbs_kernel, realize
from .rounding import round_to_polytope
from .sinkhorn import SinkhornIterator

IDX3_MAGIC = 0x00000803
CSV_HEADER = ("instance_id", "projector", "updates", "dist", "objective", "wall_ms")
SCHEMA_VERSION = 1
BACKGROUND_RANGE = (0.0, 1.0)
FOREGROUND_RANGE = (0.0, 50.0)


@dataclass(frozen=True, eq=False)
class GrayscaleImage:
    width: int
    height: int
    intensities: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.intensities, dtype=np.float64)
        if a.shape != (self.height, self.width):
            raise ParameterError(f"intensities have shape {a.shape}, expected {(self.height, self.width)}")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ParameterError("intensities must be finite and nonnegative")
        object.__setattr__(self, "intensities", a)

    def normalized(self) -> "GrayscaleImage":
        total = self.intensities.sum()
        if not total > 0:
            raise ParameterError("image has no mass")
        return GrayscaleImage(self.width, self.height, self.intensities / total)

    def to_marginal(self) -> Marginal:
        """Row-major pixel masses as a probability vector."""
        return Marginal(self.normalized().intensities.ravel(), normalize=True)


def foreground_side(m: int, fg_fraction: float) -> int:
    return int(min(max(round(m * math.sqrt(fg_fraction)), 1), m))


def synth_image(m: int, fg_fraction: float, seed: Union[int, np.random.Generator]) -> GrayscaleImage:
    """Random-background image with one bright square, normalised to unit mass.

    Background pixels are uniform on [0, 1], foreground pixels uniform on
    [0, 50].  The square covers about ``fg_fraction`` of the area and sits
    uniformly at random among all positions that keep it inside the image.
    """
    if m < 2:
        raise ParameterError(f"image side must be at least 2, got {m}")
    if not 0.0 < fg_fraction <= 1.0:
        raise ParameterError(f"foreground fraction must lie in (0, 1], got {fg_fraction!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    img = rng.uniform(*BACKGROUND_RANGE, size=(m, m))
    side = foreground_side(m, fg_fraction)
    top = int(rng.integers(0, m - side + 1))
    left = int(rng.integers(0, m - side + 1))
    img[top : top + side, left : left + side] = rng.uniform(*FOREGROUND_RANGE, size=(side, side))
    return GrayscaleImage(m, m, img).normalized()


def l1_cost_matrix(m: int) -> CostMatrix:
    """Pairwise l1 distances between pixel positions of an m x m grid (row-major)."""
    if m < 1:
        raise ParameterError(f"image side must be positive, got {m}")
    rows, cols = np.divmod(np.arange(m * m), m)
    C = np.abs(rows[:, None] - rows[None, :]) + np.abs(cols[:, None] - cols[None, :])
    return CostMatrix(C.astype(np.float64))


def load_idx_images(
    path,
    count: Optional[int] = None,
    indices: Optional[Sequence[int]] = None,
    background_noise: Optional[float] = 0.01,
    normalize: bool = True,
) -> List[GrayscaleImage]:
    """Read images from an IDX3 file (MNIST layout).

    Parameters
    ----------
    count : int, optional
        Only the first ``count`` images.
    indices : sequence of int, optional
        Explicit image indices; takes precedence over ``count``.
    background_noise : float or None
        Added to every zero pixel before normalisation.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: file too short for an IDX3 header")
    magic, num, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX3_MAGIC:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX3_MAGIC:08x}")
    need = 16 + num * rows * cols
    if len(raw) < need:
        raise FormatError(f"{path}: truncated, expected {need} bytes, found {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=num * rows * cols, offset=16).reshape(num, rows, cols)
    if indices is not None:
        picked = list(indices)
        bad = [i for i in picked if not 0 <= i < num]
        if bad:
            raise ParameterError(f"image indices out of range [0, {num}): {bad}")
    else:
        picked = range(num if count is None else min(count, num))
    out = []
    for i in picked:
        img = pixels[i].astype(np.float64)
        if background_noise:
            img[img == 0] += background_noise
        im = GrayscaleImage(cols, rows, img)
        out.append(im.normalized() if normalize else im)
    return out


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    num, rows, cols = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX3_MAGIC, num, rows, cols) + images.tobytes())


@dataclass
class BenchRecord:
    instance_id: int
    projector: str
    row_col_updates: int
    dist: float
    rounded_objective: Optional[float] = None
    wall_time: float = 0.0

    def csv_row(self, timing: bool) -> Tuple[str, ...]:
        return (
            str(self.instance_id),
            self.projector,
            str(self.row_col_updates),
            repr(self.dist),
            "" if self.rounded_objective is None else repr(self.rounded_objective),
            f"{self.wall_time * 1e3:.3f}" if timing else "",
        )


def default_checkpoints(n: int, budget: int, count: int = 20) -> List[int]:
    """Checkpoints at whole Sinkhorn passes, roughly evenly spaced up to ``budget``."""
    passes = budget // n
    step = max(1, math.ceil(passes / count))
    points = list(range(0, passes + 1, step))
    if points[-1] != passes:
        points.append(passes)
    return [p * n for p in points]


def _rounded_cost(K: ScaledKernel, r, c, C: np.ndarray) -> float:
    plan = round_to_polytope(realize(K), r, c)
    return float(np.sum(plan.entries * C))


def _run_pair(args) -> List[BenchRecord]:
    instance_id, r, c, log_A, C, budget, checkpoints, round_objective = args
    n = r.size
    records = []
    base = ScaledKernel.from_log(log_A, normalize=True)

    sk = SinkhornIterator(base.copy(), r, c)
    elapsed = 0.0
    for point in checkpoints:
        t0 = time.perf_counter()
        while sk.iteration * n < point:
            sk.step()
        elapsed += time.perf_counter() - t0
        obj = _rounded_cost(sk.K, r, c, C) if round_objective else None
        records.append(BenchRecord(instance_id, "sinkhorn", point, sk.dist, obj, elapsed))

    gk = GreenkhornIterator(base.copy(), r, c)
    elapsed = 0.0
    for point in checkpoints:
        t0 = time.perf_counter()
        if gk.iteration < point:
            gk.run(point - gk.iteration)
        elapsed += time.perf_counter() - t0
        gk.K.refresh()
        obj = _rounded_cost(gk.K, r, c, C) if round_objective else None
        records.append(BenchRecord(instance_id, "greenkhorn", point, gk.dist, obj, elapsed))
    return records


def run_head_to_head(
    pairs: Sequence[Tuple[np.ndarray, np.ndarray]],
    C,
    eta: float,
    update_budget: int,
    checkpoints: Optional[Sequence[int]] = None,
    *,
    round_objective: bool = False,
    workers: int = 1,
) -> List[BenchRecord]:
    """Run both projectors on every ``(r, c)`` pair from the same kernel ``exp(-eta C)``.

    Records are ordered by instance id, then projector, then update count,
    whatever the worker count.
    """
    C = as_cost(C)
    n = C.n
    checkpoints = default_checkpoints(n, update_budget) if checkpoints is None else sorted(set(checkpoints))
    if checkpoints and checkpoints[-1] > update_budget:
        raise ParameterError("checkpoints must not exceed the update budget")
    log_A = log_gibbs_kernel(C, eta)
    jobs = [
        (k, np.asarray(r, dtype=np.float64), np.asarray(c, dtype=np.float64), log_A, C.entries,
         update_budget, checkpoints, round_objective)
        for k, (r, c) in enumerate(pairs)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_pair, jobs))
    else:
        results = [_run_pair(job) for job in jobs]
    return [rec for recs in results for rec in recs]


def competitive_ratios(records: Iterable[BenchRecord]) -> Dict[int, List[float]]:
    """``ln(dist_sinkhorn / dist_greenkhorn)`` per checkpoint, one value per instance."""
    table: Dict[Tuple[int, int], Dict[str, float]] = {}
    for rec in records:
        table.setdefault((rec.row_col_updates, rec.instance_id), {})[rec.projector] = rec.dist
    out: Dict[int, List[float]] = {}
    for (updates, _), d in sorted(table.items()):
        if "sinkhorn" in d and "greenkhorn" in d:
            ratio = math.log(max(d["sinkhorn"], 1e-300) / max(d["greenkhorn"], 1e-300))
            out.setdefault(updates, []).append(ratio)
    return out


def _stats(values: List[float]) -> Dict[str, float]:
    if not values:
        return {"median": None, "min": None, "max": None}
    return {"median": float(np.median(values)), "min": float(min(values)), "max": float(max(values))}


@dataclass
class BenchConfig:
    mode: str = "synthetic"
    m: int = 20
    fg: float = 0.2
    eta: Optional[float] = None
    eps: float = 0.1
    pairs: int = 10
    seed: int = 0
    budget: Optional[int] = None
    checkpoints: Optional[List[int]] = None
    round_objective: bool = False
    mnist_path: Optional[str] = None
    mnist_pairs: Optional[List[Tuple[int, int]]] = None
    noise: float = 0.01

    def resolve(self, n: int) -> Tuple[float, int]:
        eta = self.eta if self.eta is not None else 4.0 * math.log(n) / self.eps
        budget = self.budget if self.budget is not None else n * n
        return eta, budget


def build_pairs(cfg: BenchConfig) -> Tuple[int, List[Tuple[np.ndarray, np.ndarray]]]:
    """Image side and the list of (r, c) marginal pairs for a config."""
    if cfg.mode == "synthetic":
        rng = np.random.default_rng(cfg.seed)
        pairs = []
        for _ in range(cfg.pairs):
            a = synth_image(cfg.m, cfg.fg, rng)
            b = synth_image(cfg.m, cfg.fg, rng)
            pairs.append((a.to_marginal().values, b.to_marginal().values))
        return cfg.m, pairs
    if cfg.mode == "mnist":
        if cfg.mnist_path is None:
            raise ParameterError("mnist mode needs the path of an IDX3 image file")
        index_pairs = list(cfg.mnist_pairs or [])
        if not index_pairs and cfg.pairs:
            header = Path(cfg.mnist_path).read_bytes()[:16]
            if len(header) < 16:
                raise FormatError(f"{cfg.mnist_path}: file too short for an IDX3 header")
            total = struct.unpack(">IIII", header)[1]
            rng = np.random.default_rng(cfg.seed)
            index_pairs = [tuple(int(i) for i in rng.choice(total, 2, replace=False)) for _ in range(cfg.pairs)]
        flat = [i for pair in index_pairs for i in pair]
        images = load_idx_images(cfg.mnist_path, indices=flat, background_noise=cfg.noise)
        if images and images[0].width != images[0].height:
            raise ParameterError("benchmark images must be square")
        m = images[0].width if images else 0
        pairs = [
            (images[2 * k].to_marginal().values, images[2 * k + 1].to_marginal().values)
            for k in range(len(index_pairs))
        ]
        return m, pairs
    raise ParameterError(f"unknown bench mode {cfg.mode!r}")


def run_config(cfg: BenchConfig, workers: int = 1):
    """Run one benchmark configuration; returns (records, summary dict)."""
    m, pairs = build_pairs(cfg)
    if not pairs:
        summary = {"schema": SCHEMA_VERSION, "config": _config_dict(cfg), "n": m * m, "checkpoints": [], "final": None}
        return [], summary
    n = m * m
    eta, budget = cfg.resolve(n)
    C = l1_cost_matrix(m)
    records = run_head_to_head(
        pairs, C, eta, budget, cfg.checkpoints, round_objective=cfg.round_objective, workers=workers
    )
    return records, summarize(records, cfg, n, eta, budget)


def _config_dict(cfg: BenchConfig) -> dict:
    d = asdict(cfg)
    if d["mnist_pairs"] is not None:
        d["mnist_pairs"] = [list(p) for p in d["mnist_pairs"]]
    return d


def summarize(records: List[BenchRecord], cfg: BenchConfig, n: int, eta: float, budget: int) -> dict:
    ratios = competitive_ratios(records)
    mean_dist: Dict[Tuple[int, str], List[float]] = {}
    for rec in records:
        mean_dist.setdefault((rec.row_col_updates, rec.projector), []).append(rec.dist)
    checkpoints = []
    for updates in sorted(ratios):
        checkpoints.append({
            "updates": updates,
            "competitive_ratio": _stats(ratios[updates]),
            "mean_dist": {p: float(np.mean(mean_dist[(updates, p)])) for p in ("sinkhorn", "greenkhorn")},
        })
    final = checkpoints[-1] if checkpoints else None
    return {
        "schema": SCHEMA_VERSION,
        "config": _config_dict(cfg),
        "n": n,
        "eta": eta,
        "budget": budget,
        "checkpoints": checkpoints,
        "final": final,
    }


def records_to_csv(records: Iterable[BenchRecord], timing: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in records:
        writer.writerow(rec.csv_row(timing))
    return buf.getvalue()


def write_outputs(out_dir, records: List[BenchRecord], summary: dict, timing: bool = False) -> Tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "records.csv"
    json_path = out / "summary.json"
    csv_path.write_text(records_to_csv(records, timing), encoding="utf-8")
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path


def default_workers() -> int:
    return os.cpu_count() or 1
