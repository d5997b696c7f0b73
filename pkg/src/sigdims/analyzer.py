"""Per-layer activation analysis and the width/depth planning rules.

Width: each conv layer's planned filter count is its significant-dimension
count at the chosen variance threshold.  Depth: layers are retained while
those counts keep expanding.  Two depth rules ship:

* strict   -- keep the maximal prefix with strictly increasing counts;
              truncate at the first non-increase.
* tolerant -- scan with a running max; a layer that merely fails to beat
              the running max (a plateau) is dropped and, when it sits
              immediately before a max-pool, the pool slides into its
              place; the scan terminates at the first count strictly
              below the running max (a contraction).

The tolerant rule is the default: it is the one that reproduces the
reference slimmed VGG-16 configuration end to end.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import linalg, profiler
from .arch import MAXPOOL, ArchConfig
from .errors import DeadLayerError, DimensionError
from .ingest import ActivationTensor, flatten

RULE_STRICT = "strict"
RULE_TOLERANT = "tolerant"
SUFFICIENCY_FACTOR = 100  # want d >= 100 * m samples per layer


@dataclass
class LayerAnalysis:
    layer_id: int
    m: int                 # filter count
    d: int                 # samples analyzed
    s: int                 # significant dimensions at the threshold
    curve: np.ndarray      # cumulative explained-variance ratios
    dead: bool
    sufficient: bool
    spectrum: linalg.PcaSpectrum | None = None

    def to_dict(self) -> dict:
        return {
            "layer": int(self.layer_id),
            "m": int(self.m),
            "d": int(self.d),
            "s": int(self.s),
            "dead": bool(self.dead),
            "sufficient": bool(self.sufficient),
            "curve": [float(v) for v in self.curve],
        }


@dataclass
class NetworkAnalysis:
    threshold: float
    layers: list = field(default_factory=list)

    @property
    def s_list(self) -> list[int]:
        return [la.s for la in self.layers]

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "layers": [la.to_dict() for la in self.layers],
        }


def layer_spectrum(captures) -> tuple[linalg.PcaSpectrum, int, int, int]:
    """Accumulate all captures of one layer and eigendecompose.

    Returns (spectrum, layer_id, m, d).  Captures are streamed through the
    covariance accumulator one batch at a time.
    """
    captures = list(captures)
    if not captures:
        raise ValueError("no activation captures given")
    layer_id = captures[0].layer_id
    m = captures[0].channels
    acc = linalg.CovAccumulator(m)
    for cap in captures:
        if cap.layer_id != layer_id:
            raise DimensionError(
                f"mixed layer ids in captures: {layer_id} vs {cap.layer_id}"
            )
        if cap.channels != m:
            raise DimensionError(
                f"layer {layer_id}: mixed channel counts {m} vs {cap.channels}"
            )
        linalg.accumulate(acc, flatten(cap))
    spectrum = linalg.eigendecompose(linalg.finalize(acc))
    return spectrum, layer_id, m, acc.d


def _analysis_from_spectrum(spectrum, layer_id, m, d, threshold) -> LayerAnalysis:
    s = linalg.significant_dimensions(spectrum, threshold)
    return LayerAnalysis(
        layer_id=layer_id,
        m=m,
        d=d,
        s=s,
        curve=spectrum.cumulative,
        dead=spectrum.dead,
        sufficient=d >= SUFFICIENCY_FACTOR * m,
        spectrum=spectrum,
    )


def analyze_layer(captures, threshold: float) -> LayerAnalysis:
    """Flatten, accumulate, and eigendecompose one layer's captures."""
    spectrum, layer_id, m, d = layer_spectrum(captures)
    return _analysis_from_spectrum(spectrum, layer_id, m, d, threshold)


def analyze_network(captures_by_layer, threshold: float) -> NetworkAnalysis:
    """Analyze every layer independently; output in ascending layer order.

    `captures_by_layer` maps layer_id -> list of ActivationTensor.
    """
    if not captures_by_layer:
        raise ValueError("no layers to analyze")
    layers = []
    for layer_id in sorted(captures_by_layer):
        try:
            layers.append(analyze_layer(captures_by_layer[layer_id], threshold))
        except Exception as exc:
            raise type(exc)(f"layer {layer_id}: {exc}") from exc
    return NetworkAnalysis(threshold=threshold, layers=layers)


# ------------------------------------------------------------- depth rules ---

def retained_conv_indices(s_list, rule: str) -> list[int]:
    """Indices of conv layers the depth rule keeps, in network order."""
    if not s_list:
        raise ValueError("empty significant-dimension list")
    if s_list[0] <= 0:
        raise DeadLayerError("first conv layer has zero significant dimensions")
    if rule == RULE_STRICT:
        kept = [0]
        for i in range(1, len(s_list)):
            if s_list[i] > s_list[i - 1]:
                kept.append(i)
            else:
                break
        return kept
    if rule == RULE_TOLERANT:
        kept = [0]
        run_max = s_list[0]
        for i in range(1, len(s_list)):
            if s_list[i] > run_max:
                kept.append(i)
                run_max = s_list[i]
            elif s_list[i] == run_max:
                continue  # plateau: drop the layer, keep scanning
            else:
                break  # contraction: truncate here
        return kept
    raise ValueError(f"unknown depth rule {rule!r}")


def _plan(s_list, config: ArchConfig, rule: str) -> ArchConfig:
    conv_count = len(config.conv_widths)
    if len(s_list) != conv_count:
        raise DimensionError(
            f"{len(s_list)} significant-dimension entries for {conv_count} conv layers"
        )
    kept = set(retained_conv_indices(list(s_list), rule))
    last_kept = max(kept)

    tokens = []
    conv_i = 0
    active = True           # still walking the retained region
    consume_next_pool = False
    pool_after_cut = False
    for pos, tok in enumerate(config.tokens):
        if tok == MAXPOOL:
            if consume_next_pool:
                consume_next_pool = False
            elif active:
                tokens.append(MAXPOOL)  # pool between retained convs stays put
            else:
                pool_after_cut = True
            continue
        if active:
            if conv_i in kept:
                tokens.append(int(s_list[conv_i]))
            else:
                # Dropped plateau layer: a pool sitting right after it
                # slides up into its place.
                nxt = config.tokens[pos + 1] if pos + 1 < len(config.tokens) else None
                if nxt == MAXPOOL and tokens and tokens[-1] != MAXPOOL:
                    tokens.append(MAXPOOL)
                    consume_next_pool = True
            if conv_i == last_kept:
                active = False
        conv_i += 1
    if pool_after_cut and tokens[-1] != MAXPOOL:
        tokens.append(MAXPOOL)
    return config.with_tokens(tokens)


def plan_depth_strict(s_list, config: ArchConfig) -> ArchConfig:
    """Literal prefix rule: keep conv layers while counts strictly increase."""
    return _plan(s_list, config, RULE_STRICT)


def plan_depth_tolerant(s_list, config: ArchConfig) -> ArchConfig:
    """Running-max rule: drop plateaus (relocating adjacent pools), stop at
    the first contraction."""
    return _plan(s_list, config, RULE_TOLERANT)


def plan_depth(s_list, config: ArchConfig, rule: str) -> ArchConfig:
    if rule == RULE_STRICT:
        return plan_depth_strict(s_list, config)
    if rule == RULE_TOLERANT:
        return plan_depth_tolerant(s_list, config)
    raise ValueError(f"unknown depth rule {rule!r}")


# ------------------------------------------------------------------ sweep ---

@dataclass
class SweepPoint:
    threshold: float
    analysis: NetworkAnalysis
    planned: ArchConfig | None
    cost: profiler.CostReport | None
    flags: list = field(default_factory=list)


def sweep(
    captures_by_layer,
    thresholds,
    config: ArchConfig | None = None,
    rule: str = RULE_TOLERANT,
) -> list[SweepPoint]:
    """Evaluate several variance thresholds while eigendecomposing each layer once.

    Thresholds must be strictly descending and in (0, 1].  When a config is
    given, each point also carries the planned architecture and its cost;
    points where any layer reports zero dimensions are flagged rather than
    failed.
    """
    thresholds = list(thresholds)
    if not thresholds:
        raise ValueError("no thresholds given")
    for t in thresholds:
        if not 0.0 < t <= 1.0:
            raise ValueError(f"threshold {t} outside (0, 1]")
    if any(b >= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError(f"thresholds must be strictly descending: {thresholds}")

    spectra = []
    for layer_id in sorted(captures_by_layer):
        try:
            spectra.append(layer_spectrum(captures_by_layer[layer_id]))
        except Exception as exc:
            raise type(exc)(f"layer {layer_id}: {exc}") from exc

    points = []
    for t in thresholds:
        analysis = NetworkAnalysis(
            threshold=t,
            layers=[
                _analysis_from_spectrum(spec, lid, m, d, t)
                for spec, lid, m, d in spectra
            ],
        )
        flags = [f"layer {la.layer_id}: zero dimensions" for la in analysis.layers if la.s == 0]
        planned = cost = None
        if config is not None:
            try:
                planned = plan_depth(analysis.s_list, config, rule)
                cost = profiler.count(planned)
            except DeadLayerError as exc:
                flags.append(str(exc))
        points.append(SweepPoint(t, analysis, planned, cost, flags))
    return points


def sweep_csv(points) -> str:
    """Render sweep output as CSV: one row per (threshold, layer)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold", "layer", "s", "planned_macs", "planned_params", "flag"])
    for pt in points:
        macs = pt.cost.macs if pt.cost else ""
        pars = pt.cost.params if pt.cost else ""
        for la in pt.analysis.layers:
            flag = "zero-dimensions" if la.s == 0 else ""
            writer.writerow([pt.threshold, la.layer_id, la.s, macs, pars, flag])
    return buf.getvalue()
