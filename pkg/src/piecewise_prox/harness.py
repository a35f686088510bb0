"""Experiment harness: data ingestion, solver racing, trace export.

The benchmark entry point is :func:`run_experiment`, driven by an
``ExperimentConfig`` (JSON-friendly).  All solvers in one experiment observe
the identical Problem instance and starting point; each writes its own trace
CSV and the combined report is serialized as JSON.  With ``record_timing``
off, artifacts are byte-for-byte reproducible for a fixed config and seed.

Artifact schemas
----------------
Trace CSV: one row per iteration with columns
``k, F, F_surrogate_z, n_transitions_so_far, nce_flag, wall_ms`` (row 0 is the
starting point; ``F_surrogate_z`` is empty there).  Report JSON: a config echo
plus the rate-fit reference objective and one summary record per solver
(final objective, transition count, rate slope, residual, wall time).
Config JSON keys: ``loss``, ``penalty {kind, params}``,
``data {kind, ...}``, ``solvers [{name, s, w0, K}]``, ``output_dir``, ``x0``,
``seed``, ``tail_fraction``, ``record_timing``, ``reference_multiple``.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .harness_util import fit_rate  # re-export  # noqa: F401
from .piecewise import builtin_penalty
from .smooth import Dataset, least_squares, logistic_loss
from .solvers import Problem, Trace, apg_monotone, default_step_size, pgd, ppgd

__all__ = [
    "IdxFormatError",
    "load_idx",
    "write_idx",
    "subsample_binary",
    "load_csv",
    "synth",
    "ExperimentConfig",
    "SolverSpec",
    "Report",
    "build_problem",
    "run_experiment",
    "fit_rate",
]

_SOLVERS = {"ppgd": ppgd, "pgd": pgd, "apg": apg_monotone}

_IMAGES_MAGIC = 2051
_LABELS_MAGIC = 2049


class IdxFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# data ingestion
# ---------------------------------------------------------------------------


def load_idx(images_path, labels_path) -> Dataset:
    """Parse a big-endian IDX image/label pair into a Dataset.

    Images: u32 magic 2051, count, rows, cols, then row-major u8 pixels scaled
    to [0, 1].  Labels: u32 magic 2049, count, then u8 labels.  Rejects magic
    mismatches, image/label count mismatches, and truncated or oversized
    payloads.
    """
    img = Path(images_path).read_bytes()
    lab = Path(labels_path).read_bytes()
    if len(img) < 16:
        raise IdxFormatError("images file truncated before the 16-byte header")
    magic, count, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != _IMAGES_MAGIC:
        raise IdxFormatError(f"images magic {magic} != {_IMAGES_MAGIC}")
    expected = 16 + count * rows * cols
    if len(img) != expected:
        raise IdxFormatError(f"images payload is {len(img)} bytes, expected {expected}")
    if len(lab) < 8:
        raise IdxFormatError("labels file truncated before the 8-byte header")
    lmagic, lcount = struct.unpack(">II", lab[:8])
    if lmagic != _LABELS_MAGIC:
        raise IdxFormatError(f"labels magic {lmagic} != {_LABELS_MAGIC}")
    if len(lab) != 8 + lcount:
        raise IdxFormatError(f"labels payload is {len(lab)} bytes, expected {8 + lcount}")
    if lcount != count:
        raise IdxFormatError(f"image count {count} != label count {lcount}")
    if count == 0 or rows == 0 or cols == 0:
        raise IdxFormatError("empty IDX payload")
    pixels = np.frombuffer(img, dtype=np.uint8, offset=16).reshape(count, rows * cols)
    labels = np.frombuffer(lab, dtype=np.uint8, offset=8)
    return Dataset(pixels.astype(float) / 255.0, labels.astype(float))


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray,
              rows: int, cols: int) -> None:
    """Inverse of load_idx for fixtures: images in [0, 1], shape (n, rows*cols)."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    n = images.shape[0]
    if images.shape != (n, rows * cols):
        raise ValueError("images shape does not match rows * cols")
    pix = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", _IMAGES_MAGIC, n, rows, cols))
        fh.write(pix.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", _LABELS_MAGIC, n))
        fh.write(labels.astype(np.uint8).tobytes())


def subsample_binary(data: Dataset, class_a, class_b, per_class: int,
                     seed: int) -> Dataset:
    """Draw per_class examples of each class and remap labels to +-1.

    class_a maps to +1 and class_b to -1; the draw is deterministic under the
    seed.
    """
    rng = np.random.default_rng(seed)
    parts = []
    for cls, sign in ((class_a, 1.0), (class_b, -1.0)):
        idx = np.flatnonzero(data.labels == cls)
        if idx.size < per_class:
            raise ValueError(f"class {cls} has {idx.size} examples, need {per_class}")
        take = rng.choice(idx, size=per_class, replace=False)
        parts.append((np.sort(take), sign))
    rows = np.concatenate([p[0] for p in parts])
    signs = np.concatenate([np.full(per_class, p[1]) for p in parts])
    order = rng.permutation(rows.size)
    return Dataset(data.features[rows[order]], signs[order])


def load_csv(path) -> Dataset:
    """Numeric CSV with the label in the last column."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                raise ValueError(f"{path}: non-numeric cell on line {lineno}") from None
            if len(rows[-1]) != len(rows[0]):
                raise ValueError(f"{path}: ragged row on line {lineno}")
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    if len(rows[0]) < 2:
        raise ValueError(f"{path}: need at least one feature column plus the label")
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr[:, :-1], arr[:, -1])


def synth(kind: str, n: int, d: int, sparsity: float = 0.2, noise: float = 0.0,
          seed: int = 0, coeff_scale: float = 3.0,
          feature_scale: float = 1.0) -> tuple[Dataset, np.ndarray]:
    """Seeded synthetic data with a sparse ground truth.

    kind ``regression``: y = A x* + noise * eps.  kind ``classification``:
    y = sign(A x* + noise * eps) in {-1, +1}.  ``sparsity`` is the fraction of
    nonzero coefficients (at least one); nonzero magnitudes are uniform on
    [0.5, coeff_scale] with random signs; features are ``feature_scale`` times
    a seeded standard normal.  Returns (dataset, x_star).
    """
    if kind not in ("regression", "classification"):
        raise ValueError(f"unknown synth kind {kind!r}")
    rng = np.random.default_rng(seed)
    A = feature_scale * rng.standard_normal((n, d))
    k = max(1, int(round(sparsity * d)))
    support = rng.choice(d, size=k, replace=False)
    x_star = np.zeros(d)
    x_star[support] = rng.uniform(0.5, coeff_scale, size=k) * rng.choice((-1.0, 1.0), size=k)
    score = A @ x_star + noise * rng.standard_normal(n)
    if kind == "regression":
        return Dataset(A, score), x_star
    y = np.where(score >= 0.0, 1.0, -1.0)
    return Dataset(A, y), x_star


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverSpec:
    name: str
    s: Optional[float] = None
    w0: float = 0.5
    K: int = 100

    def __post_init__(self):
        if self.name not in _SOLVERS:
            raise ValueError(f"unknown solver {self.name!r}; expected one of {sorted(_SOLVERS)}")
        if self.K < 1:
            raise ValueError("K must be at least 1")


@dataclass(frozen=True)
class ExperimentConfig:
    loss: str
    penalty: dict
    data: dict
    solvers: tuple
    output_dir: str
    x0: str = "zeros"
    seed: int = 0
    tail_fraction: float = 0.5
    record_timing: bool = True
    reference_multiple: int = 5

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        solvers = tuple(SolverSpec(**s) for s in doc.get("solvers", ()))
        if not solvers:
            raise ValueError("config needs at least one solver")
        known = {"loss", "penalty", "data", "solvers", "output_dir", "x0",
                 "seed", "tail_fraction", "record_timing", "reference_multiple"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {k: v for k, v in doc.items() if k in known and k != "solvers"}
        return ExperimentConfig(solvers=solvers, **kw)

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        with open(path) as fh:
            return ExperimentConfig.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "penalty": self.penalty,
            "data": self.data,
            "solvers": [
                {"name": s.name, "s": s.s, "w0": s.w0, "K": s.K} for s in self.solvers
            ],
            "output_dir": self.output_dir,
            "x0": self.x0,
            "seed": self.seed,
            "tail_fraction": self.tail_fraction,
            "record_timing": self.record_timing,
            "reference_multiple": self.reference_multiple,
        }


def _load_dataset(cfg: ExperimentConfig) -> Dataset:
    spec = dict(cfg.data)
    kind = spec.pop("kind")
    if kind in ("synth-classification", "synth-regression"):
        data, _ = synth(kind.removeprefix("synth-"),
                        n=spec["n"], d=spec["d"],
                        sparsity=spec.get("sparsity", 0.2),
                        noise=spec.get("noise", 0.0),
                        seed=spec.get("seed", cfg.seed),
                        coeff_scale=spec.get("coeff_scale", 3.0),
                        feature_scale=spec.get("feature_scale", 1.0))
        return data
    if kind == "csv":
        return load_csv(spec["path"])
    if kind == "idx":
        data = load_idx(spec["images"], spec["labels"])
        if "class_a" in spec:
            data = subsample_binary(data, spec["class_a"], spec["class_b"],
                                    spec.get("per_class", 5000),
                                    spec.get("seed", cfg.seed))
        return data
    raise ValueError(f"unknown data kind {kind!r}")


def build_problem(cfg: ExperimentConfig) -> tuple[Problem, np.ndarray]:
    """Construct the shared Problem and starting point for a config."""
    data = _load_dataset(cfg)
    if cfg.loss == "logistic":
        loss = logistic_loss(data)
    elif cfg.loss == "least-squares":
        loss = least_squares(data)
    else:
        raise ValueError(f"unknown loss {cfg.loss!r}")
    penalty = builtin_penalty(cfg.penalty["kind"], **cfg.penalty.get("params", {}))
    problem = Problem(loss, penalty)
    if cfg.x0 == "zeros":
        x0 = np.zeros(problem.d)
    else:
        raise ValueError(f"unknown x0 policy {cfg.x0!r}")
    return problem, x0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class Report:
    config: dict
    reference_objective: float
    solvers: list  # per-solver summary dicts
    traces: dict  # name -> Trace

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "reference_objective": self.reference_objective,
            "solvers": self.solvers,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _max_workers() -> int:
    cap = os.environ.get("PIECEWISE_PROX_THREADS")
    if cap:
        try:
            return max(1, int(cap))
        except ValueError:
            raise ValueError(f"PIECEWISE_PROX_THREADS={cap!r} is not an integer") from None
    return os.cpu_count() or 1


def _run_one(problem: Problem, x0: np.ndarray, spec: SolverSpec,
             record_timing: bool) -> Trace:
    fn = _SOLVERS[spec.name]
    s = spec.s if spec.s is not None else default_step_size(problem)
    if spec.name == "ppgd":
        return fn(problem, x0, s=s, w0=spec.w0, K=spec.K, record_timing=record_timing)
    return fn(problem, x0, s=s, K=spec.K, record_timing=record_timing)


def run_experiment(cfg: ExperimentConfig) -> Report:
    """Run every configured solver on one shared problem and export artifacts.

    Writes ``trace_<solver>.csv`` per solver plus ``report.json`` under the
    config's output directory.  The rate-fit reference objective comes from a
    ``reference_multiple`` x longer run of the first configured solver.
    """
    problem, x0 = build_problem(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    specs = list(cfg.solvers)
    workers = min(_max_workers(), len(specs))
    traces: dict[str, Trace] = {}
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {s.name: pool.submit(_run_one, problem, x0, s, cfg.record_timing)
                       for s in specs}
            for name, fut in futures.items():
                traces[name] = fut.result()
    else:
        for s in specs:
            traces[s.name] = _run_one(problem, x0, s, cfg.record_timing)

    ref_spec = specs[0]
    ref = _run_one(problem, x0,
                   SolverSpec(ref_spec.name, ref_spec.s, ref_spec.w0,
                              ref_spec.K * cfg.reference_multiple),
                   cfg.record_timing)
    f_ref = min(min(float(t.objective.min()) for t in traces.values()),
                float(ref.objective.min()))

    summaries = []
    for spec in specs:
        tr = traces[spec.name]
        slope = fit_rate(tr, cfg.tail_fraction, f_ref)
        row = tr.summary()
        row["rate_slope"] = None if math.isinf(slope) else slope
        summaries.append(row)
        tr.to_csv(out / f"trace_{spec.name}.csv")

    report = Report(cfg.to_dict(), f_ref, summaries, traces)
    (out / "report.json").write_text(report.to_json())
    return report
