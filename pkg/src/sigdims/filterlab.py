"""Filter-level pruning experiments: exhaustive search, matching, measurement.

Removing a filter is structural: its output channel disappears and the
next layer (conv or classifier) loses the matching input slice.  An
exhaustive step retrains once per surviving candidate and keeps the one
whose removal hurt accuracy least.  Correlation between the pruned filter
and each survivor (before retraining) is then compared with how much each
survivor actually moved (L2, after retraining) to see whether the most
similar filter "absorbed" the pruned one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import net
from .arch import MAXPOOL
from .errors import DataError, DimensionError, TrainingError


def pearson(f1: np.ndarray, f2: np.ndarray) -> float:
    """Sample Pearson correlation over flattened filter weights."""
    a = np.asarray(f1, dtype=np.float64).ravel()
    b = np.asarray(f2, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"filter shapes differ: {f1.shape} vs {f2.shape}")
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DataError("zero-variance filter has no correlation coefficient")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def l2_change(before: np.ndarray, after: np.ndarray) -> np.ndarray:
    """Per-filter Euclidean distance between two banks of equal shape."""
    before = np.asarray(before, dtype=np.float64)
    after = np.asarray(after, dtype=np.float64)
    if before.shape != after.shape:
        raise DimensionError(f"bank shapes differ: {before.shape} vs {after.shape}")
    diff = (after - before).reshape(before.shape[0], -1)
    return np.linalg.norm(diff, axis=1)


def _conv_token_positions(config) -> list[int]:
    return [i for i, t in enumerate(config.tokens) if t != MAXPOOL]


def remove_filter(params: net.NetParams, layer: int, filter_id: int) -> net.NetParams:
    """Structurally delete one filter: narrower layer, sliced next layer."""
    config = params.config
    positions = _conv_token_positions(config)
    if not 0 <= layer < len(positions):
        raise DimensionError(f"no conv layer {layer} in config")
    width = config.conv_widths[layer]
    if width < 2:
        raise DimensionError(f"layer {layer} has only {width} filter(s) left")
    if not 0 <= filter_id < width:
        raise DimensionError(f"filter {filter_id} out of range for width {width}")

    tokens = list(config.tokens)
    tokens[positions[layer]] = width - 1
    p = params.copy()
    new = net.NetParams(
        config=config.with_tokens(tokens),
        blocks=p.blocks,
        fc_weight=p.fc_weight,
        fc_bias=p.fc_bias,
    )
    keep = np.arange(width) != filter_id
    blk = new.blocks[layer]
    blk.weight = blk.weight[keep]
    blk.bias = blk.bias[keep]
    blk.gamma = blk.gamma[keep]
    blk.beta = blk.beta[keep]
    blk.run_mean = blk.run_mean[keep]
    blk.run_var = blk.run_var[keep]
    if layer + 1 < len(new.blocks):
        nxt = new.blocks[layer + 1]
        nxt.weight = nxt.weight[:, keep, :, :]
    else:
        # Classifier input layout is (h, w, c) with channels fastest.
        flat = new.fc_weight.shape[1]
        mask = np.tile(keep, flat // width)
        new.fc_weight = new.fc_weight[:, mask]
    return new


@dataclass
class PruneStep:
    """Outcome of one exhaustive least-significant-filter search."""

    layer: int
    best_id: int
    accuracy_table: dict        # candidate filter id -> retrained accuracy
    retrained: net.NetParams    # params after removing best_id and retraining


def exhaustive_prune_step(
    params: net.NetParams,
    layer: int,
    dataset,
    hyper: net.Hyper,
    seed: int,
    eval_dataset=None,
) -> PruneStep:
    """Try removing each remaining filter of `layer`, retrain, keep the best.

    Ties break toward the lowest filter id; a diverging retrain scores 0.
    Cost is (remaining filters) x (retrain budget): desk-scale nets only.
    """
    width = params.config.conv_widths[layer]
    if width < 2:
        raise DimensionError(f"layer {layer} needs >= 2 filters to search")
    eval_ds = dataset if eval_dataset is None else eval_dataset
    table = {}
    retrained = {}
    for fid in range(width):
        candidate = remove_filter(params, layer, fid)
        try:
            trained, _ = net.train(candidate, dataset, hyper, seed=seed)
            table[fid] = net.evaluate(trained, eval_ds)
            retrained[fid] = trained
        except TrainingError:
            table[fid] = 0.0
            retrained[fid] = candidate
    best_id = max(table, key=lambda fid: (table[fid], -fid))
    return PruneStep(
        layer=layer,
        best_id=best_id,
        accuracy_table=table,
        retrained=retrained[best_id],
    )


@dataclass
class PruneTrace:
    """Prediction vs outcome for one pruned filter."""

    iteration: int
    layer: int
    pruned_id: int
    pearson_by_filter: dict = field(default_factory=dict)
    l2_by_filter: dict = field(default_factory=dict)
    predicted_id: int = -1
    actual_id: int = -1
    match: bool = False
    accuracy: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "iteration": self.iteration,
                "layer": self.layer,
                "pruned_id": self.pruned_id,
                "pearson": {str(k): v for k, v in self.pearson_by_filter.items()},
                "l2_change": {str(k): v for k, v in self.l2_by_filter.items()},
                "predicted_id": self.predicted_id,
                "actual_id": self.actual_id,
                "match": self.match,
                "accuracy": self.accuracy,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PruneTrace":
        obj = json.loads(text)
        return cls(
            iteration=obj["iteration"],
            layer=obj["layer"],
            pruned_id=obj["pruned_id"],
            pearson_by_filter={int(k): v for k, v in obj["pearson"].items()},
            l2_by_filter={int(k): v for k, v in obj["l2_change"].items()},
            predicted_id=obj["predicted_id"],
            actual_id=obj["actual_id"],
            match=obj["match"],
            accuracy=obj["accuracy"],
        )


def predict_and_verify(
    before_bank: np.ndarray,
    pruned_id: int,
    after_bank: np.ndarray,
    accuracy: float,
    iteration: int = 0,
    layer: int = 0,
) -> PruneTrace:
    """Compare the correlation-predicted absorber with the filter that moved most.

    `before_bank` is the full bank before removal; `after_bank` holds the
    surviving filters after retraining (same order, pruned row gone).
    Remaining filters keep their original ids in the output maps.
    """
    m = before_bank.shape[0]
    if after_bank.shape[0] != m - 1:
        raise DimensionError(
            f"after bank has {after_bank.shape[0]} filters, expected {m - 1}"
        )
    remaining = [i for i in range(m) if i != pruned_id]
    pruned = before_bank[pruned_id]
    coeffs = {i: pearson(pruned, before_bank[i]) for i in remaining}
    moves = l2_change(before_bank[remaining], after_bank)
    l2map = {i: float(v) for i, v in zip(remaining, moves)}
    predicted = max(remaining, key=lambda i: (coeffs[i], -i))
    actual = max(remaining, key=lambda i: (l2map[i], -i))
    return PruneTrace(
        iteration=iteration,
        layer=layer,
        pruned_id=pruned_id,
        pearson_by_filter=coeffs,
        l2_by_filter=l2map,
        predicted_id=predicted,
        actual_id=actual,
        match=predicted == actual,
        accuracy=accuracy,
    )


# ------------------------------------------------------------ visual dumps ---

def dump_filter_bank(bank: np.ndarray, path) -> None:
    """Write a filter bank as a tiled PGM (or PPM for 3-channel filters).

    Each filter is min/max normalized on its own; filters are tiled in a
    near-square grid with 1-pixel separators.
    """
    bank = np.asarray(bank, dtype=np.float64)
    m, c_in, kh, kw = bank.shape
    color = c_in == 3
    cols = int(np.ceil(np.sqrt(m)))
    rows = int(np.ceil(m / cols))
    channels = 3 if color else 1
    grid = np.zeros((rows * (kh + 1) + 1, cols * (kw + 1) + 1, channels))
    for i in range(m):
        f = bank[i].transpose(1, 2, 0) if color else bank[i].mean(axis=0)[..., None]
        lo, hi = f.min(), f.max()
        tile = (f - lo) / (hi - lo) if hi > lo else np.full_like(f, 0.5)
        r, c = divmod(i, cols)
        grid[r * (kh + 1) + 1:r * (kh + 1) + 1 + kh,
             c * (kw + 1) + 1:c * (kw + 1) + 1 + kw] = tile
    pixels = (grid * 255.0).round().astype(np.uint8)
    h, w = pixels.shape[:2]
    magic = b"P6" if color else b"P5"
    header = magic + f"\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + pixels.tobytes())
