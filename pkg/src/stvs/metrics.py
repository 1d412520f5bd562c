"""Saliency evaluation metrics: maximum F-measure, structure measure, MAE.

Conventions (the usual ones for these metrics, spelled out because edge
cases are easy to get wrong):

  * f_max sweeps the 256 uniform thresholds k/255, binarizing pred >= t.
    A threshold whose precision or recall is undefined (empty prediction
    or empty ground truth) contributes F = 0. beta^2 = 0.3.
  * s_measure is alpha * S_object + (1 - alpha) * S_region with alpha 0.5.
    S_object scores foreground and background similarity weighted by the
    ground-truth area fraction; S_region is a 4-quadrant SSIM about the
    ground-truth mass center (the pixel containing it joins the top/left
    quadrants; quadrants are weighted by their pixel-count fraction).
    Variances use the n-1 normalization. Empty ground truth scores
    1 - mean(pred); full-foreground ground truth scores mean(pred).
  * mae is the plain mean absolute difference.

Dataset evaluation averages per-frame metrics within each sequence, then
averages sequences.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import ShapeError

F_BETA_SQ = 0.3
S_ALPHA = 0.5
_EPS = np.finfo(np.float64).eps


def _check_pair(pred: np.ndarray, gt: np.ndarray):
    if pred.shape != gt.shape:
        raise ShapeError(f"pred {pred.shape} and gt {gt.shape} shapes differ")
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if not np.all((gt == 0) | (gt == 1)):
        raise ValueError("ground truth must be binary (0/1 values)")
    return pred, gt


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_pair(pred, gt)
    if pred.min() < 0.0 or pred.max() > 1.0:
        raise ValueError("pred values must lie in [0, 1]")
    return float(np.abs(pred - gt).mean())


def f_max(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_pair(pred, gt)
    thresholds = np.arange(256, dtype=np.float64) / 255.0
    binarized = pred.reshape(1, -1) >= thresholds.reshape(-1, 1)
    gt_flat = gt.reshape(1, -1) > 0.5
    tp = (binarized & gt_flat).sum(axis=1).astype(np.float64)
    pred_pos = binarized.sum(axis=1).astype(np.float64)
    gt_pos = float(gt_flat.sum())
    best = 0.0
    if gt_pos > 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            precision = np.where(pred_pos > 0, tp / pred_pos, 0.0)
            recall = tp / gt_pos
            denom = F_BETA_SQ * precision + recall
            f = np.where((pred_pos > 0) & (denom > 0),
                         (1.0 + F_BETA_SQ) * precision * recall / np.where(denom > 0, denom, 1.0),
                         0.0)
        best = float(f.max())
    return best


def _object_score(values: np.ndarray) -> float:
    x = float(values.mean())
    sigma = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def _s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    fg = gt > 0.5
    o_fg = _object_score(pred[fg])
    o_bg = _object_score((1.0 - pred)[~fg]) if (~fg).any() else 0.0
    u = float(gt.mean())
    return u * o_fg + (1.0 - u) * o_bg


def _region_ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    x = float(pred.mean())
    y = float(gt.mean())
    denom = n - 1 + _EPS
    var_x = float(((pred - x) ** 2).sum() / denom)
    var_y = float(((gt - y) ** 2).sum() / denom)
    cov = float(((pred - x) * (gt - y)).sum() / denom)
    alpha = 4.0 * x * y * cov
    beta = (x * x + y * y) * (var_x + var_y)
    if alpha != 0.0:
        return alpha / (beta + _EPS)
    if beta == 0.0:
        return 1.0
    return 0.0


def _centroid(gt: np.ndarray) -> tuple[int, int]:
    """Quadrant cut indices (row, col) at the ground-truth mass center.

    The pixel row/column containing the mass center joins the top/left
    quadrants (cut = floor(center) + 1), which keeps the region term exact
    under horizontal flips whenever the center does not sit exactly on a
    pixel center. Cuts are clamped so no quadrant is empty.
    """
    h, w = gt.shape
    total = gt.sum()
    if total == 0:
        row, col = h // 2, w // 2
    else:
        rows = np.arange(h, dtype=np.float64)
        cols = np.arange(w, dtype=np.float64)
        row = int(np.floor(float((gt.sum(axis=1) * rows).sum() / total))) + 1
        col = int(np.floor(float((gt.sum(axis=0) * cols).sum() / total))) + 1
    row = min(max(row, 1), h - 1)
    col = min(max(col, 1), w - 1)
    return row, col


def _s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    if h < 2 or w < 2:
        return _region_ssim(pred, gt)
    row, col = _centroid(gt)
    area = float(h * w)
    score = 0.0
    quads = (
        (slice(0, row), slice(0, col)),
        (slice(0, row), slice(col, w)),
        (slice(row, h), slice(0, col)),
        (slice(row, h), slice(col, w)),
    )
    for rs, cs in quads:
        gt_q = gt[rs, cs]
        weight = gt_q.size / area
        score += weight * _region_ssim(pred[rs, cs], gt_q)
    return score


def s_measure(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_pair(pred, gt)
    y = float(gt.mean())
    if y == 0.0:
        return 1.0 - float(pred.mean())
    if y == 1.0:
        return float(pred.mean())
    score = S_ALPHA * _s_object(pred, gt) + (1.0 - S_ALPHA) * _s_region(pred, gt)
    return max(score, 0.0)


@dataclass
class EvalRecord:
    """Dataset-level metric summary with per-sequence breakdown."""

    f_max: float = 0.0
    s_measure: float = 0.0
    mae: float = 0.0
    per_sequence: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    frames: int = 0
    missing: list[str] = field(default_factory=list)

    def rows(self) -> list[tuple[str, float, float, float]]:
        out = [(name, *vals) for name, vals in sorted(self.per_sequence.items())]
        out.append(("overall", self.f_max, self.s_measure, self.mae))
        return out


def _sequence_dirs(root: Path) -> dict[str, Path]:
    """Sequence layout: files at the top level mean one flat sequence;
    otherwise every subdirectory is a sequence."""
    if any(p.is_file() for p in root.iterdir()):
        return {root.name: root}
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if subdirs:
        return {p.name: p for p in subdirs}
    return {root.name: root}


def evaluate_pair_files(pred_path: Path, gt_path: Path) -> tuple[float, float, float]:
    from .media import read_image

    pred = read_image(pred_path)
    gt = read_image(gt_path)
    pred2d = pred.mean(axis=0) if pred.shape[0] > 1 else pred[0]
    gt2d = gt.mean(axis=0) if gt.shape[0] > 1 else gt[0]
    gt_bin = (gt2d >= 0.5).astype(np.float64)
    return f_max(pred2d, gt_bin), s_measure(pred2d, gt_bin), mae(pred2d, gt_bin)


def evaluate_dataset(pred_dir, gt_dir) -> EvalRecord:
    """Match prediction and ground-truth files by stem and aggregate metrics.

    Both directories either contain the same sequence subdirectories or are
    flat (treated as a single sequence). Unmatched stems are reported, not
    silently dropped.
    """
    pred_root = Path(pred_dir)
    gt_root = Path(gt_dir)
    pred_seqs = _sequence_dirs(pred_root)
    gt_seqs = _sequence_dirs(gt_root)
    if len(pred_seqs) == 1 and len(gt_seqs) == 1:
        seq_names = [next(iter(pred_seqs))]
        pairs = {seq_names[0]: (next(iter(pred_seqs.values())), next(iter(gt_seqs.values())))}
    else:
        seq_names = sorted(set(pred_seqs) & set(gt_seqs))
        pairs = {name: (pred_seqs[name], gt_seqs[name]) for name in seq_names}

    record = EvalRecord()
    for name in sorted(set(pred_seqs) ^ set(gt_seqs)):
        record.missing.append(f"sequence {name!r} present on one side only")
    seq_scores = []
    for name in seq_names:
        p_dir, g_dir = pairs[name]
        p_files = {f.stem: f for f in sorted(p_dir.iterdir()) if f.is_file()}
        g_files = {f.stem: f for f in sorted(g_dir.iterdir()) if f.is_file()}
        stems = sorted(set(p_files) & set(g_files))
        for stem in sorted(set(p_files) ^ set(g_files)):
            side = "prediction" if stem in g_files else "ground truth"
            record.missing.append(f"{name}/{stem}: missing {side}")
        if not stems:
            continue
        scores = np.array([evaluate_pair_files(p_files[s], g_files[s]) for s in stems])
        record.per_sequence[name] = tuple(scores.mean(axis=0))
        record.frames += len(stems)
        seq_scores.append(scores.mean(axis=0))
    if not seq_scores:
        raise ValueError("no matching prediction/ground-truth files found")
    overall = np.array(seq_scores).mean(axis=0)
    record.f_max, record.s_measure, record.mae = map(float, overall)
    return record


def write_report_csv(record: EvalRecord, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sequence", "f_max", "s_measure", "mae"])
        for name, fm, sm, m in record.rows():
            writer.writerow([name, f"{fm:.6f}", f"{sm:.6f}", f"{m:.6f}"])


def format_report_table(record: EvalRecord) -> str:
    """Aligned plain-text table (F-max, S-measure, MAE columns)."""
    rows = record.rows()
    name_w = max(len("sequence"), *(len(r[0]) for r in rows))
    lines = [f"{'sequence':<{name_w}}  {'F-max':>8}  {'S-measure':>9}  {'MAE':>8}"]
    lines.append("-" * len(lines[0]))
    for name, fm, sm, m in rows:
        lines.append(f"{name:<{name_w}}  {fm:>8.3f}  {sm:>9.3f}  {m:>8.3f}")
    return "\n".join(lines)
