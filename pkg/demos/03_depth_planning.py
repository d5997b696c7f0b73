"""Replaying the width/depth planning rules on a measured VGG-16 profile.

Input: the per-layer significant-dimension counts measured on a trained
CIFAR-scale VGG-16.  Output: the slimmed architectures the two depth rules
derive, and what they cost relative to the original.
"""

from sigdims import analyzer, profiler
from sigdims.arch import ArchConfig

initial = ArchConfig(
    tokens=(64, 64, "M", 128, 128, "M", 256, 256, 256, "M",
            512, 512, 512, "M", 512, 512, 512),
    classifier_width=10,
    input_shape=(32, 32, 3),
)
# Measured significant dimensions for the 13 conv layers of the net above.
measured = [11, 42, 103, 118, 238, 249, 249, 424, 271, 160, 36, 38, 42]

print("original:", list(initial.tokens))
print("measured widths:", measured)
print()

base_cost = profiler.count(initial)
widths = iter(measured)
width_only = initial.with_tokens(
    [next(widths) if t != "M" else "M" for t in initial.tokens]
)
w_cost = profiler.count(width_only)
mac_r, par_r = profiler.ratio(w_cost, base_cost)
print(f"width-only (keep all layers): macs {mac_r:.2f}x  params {par_r:.2f}x")

for rule in ("strict", "tolerant"):
    planned = analyzer.plan_depth(measured, initial, rule)
    cost = profiler.count(planned)
    mac_r, par_r = profiler.ratio(cost, base_cost)
    print(f"{rule:8s} depth rule -> {list(planned.tokens)}")
    print(f"         macs {mac_r:.2f}x  params {par_r:.2f}x")
