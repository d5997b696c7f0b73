"""Analytic cost model: parameters and multiply-accumulates per config.

Conventions: a 3x3 conv with c_in inputs and c_out filters over an HxW
output map costs H*W*c_out*9*c_in MACs and c_out*(9*c_in + 1) weights plus
2*c_out batch-norm scale/shift parameters (running stats are not
learnable).  Max-pool comparisons are not counted.  The classifier is one
dense layer: flat*classes MACs, flat*classes + classes parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .arch import ArchConfig


@dataclass
class CostReport:
    params: int
    macs: int
    per_layer: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "macs": self.macs,
            "per_layer": [dict(row) for row in self.per_layer],
        }


def count(config: ArchConfig) -> CostReport:
    """Exact parameter and MAC totals for one forward pass at the config's input."""
    rows = []
    conv_idx = 0
    for kind, width, h, w, c_in in config.walk():
        if kind == "pool":
            rows.append({"layer": "pool", "params": 0, "macs": 0})
            continue
        params = width * (9 * c_in + 1) + 2 * width
        macs = h * w * width * 9 * c_in
        rows.append({"layer": f"conv{conv_idx}", "params": params, "macs": macs})
        conv_idx += 1
    flat = config.flat_features()
    k = config.classifier_width
    rows.append({"layer": "fc", "params": flat * k + k, "macs": flat * k})
    return CostReport(
        params=sum(r["params"] for r in rows),
        macs=sum(r["macs"] for r in rows),
        per_layer=rows,
    )


def ratio(a: CostReport, b: CostReport) -> tuple[float, float]:
    """(mac ratio, param ratio) of a relative to baseline b."""
    if b.macs == 0 or b.params == 0:
        raise ValueError("baseline report has zero totals")
    return a.macs / b.macs, a.params / b.params
