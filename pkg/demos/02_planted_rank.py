"""Recovering a planted channel count from fake layer activations.

A 32-channel activation tensor is constructed so that exactly 8 channels
are independent (each copied four times, plus tiny noise).  The analyzer
must report 8 significant dimensions, and its sample accounting must say
whether enough spatial positions were captured.
"""

import numpy as np

from sigdims import analyzer
from sigdims.ingest import ActivationTensor, required_batches

rng = np.random.default_rng(7)
n, h, w = 4, 32, 32
independent, channels = 8, 32

signals = rng.normal(size=(n * h * w, independent))
copies = np.repeat(np.arange(independent), channels // independent)
data = signals[:, copies] + 1e-4 * rng.normal(size=(n * h * w, channels))
capture = ActivationTensor(layer_id=0, data=data.reshape(n, h, w, channels))

print(f"capture dims: {capture.dims}  (one PCA sample per spatial position)")
print(f"batches required for {channels} channels at this map size:",
      required_batches(channels, h, w, n))

result = analyzer.analyze_layer([capture], threshold=0.999)
print(f"\nchannels (m)            : {result.m}")
print(f"samples analyzed (d)    : {result.d}")
print(f"significant dimensions  : {result.s}")
print(f"sufficient sample count : {result.sufficient}")
print(f"curve knee              : {result.curve[:10].round(6)}")
