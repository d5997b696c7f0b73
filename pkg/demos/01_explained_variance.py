"""How many directions does correlated data really occupy?

Builds a 16-column sample matrix in which only 5 directions carry signal,
streams it through the covariance accumulator in uneven batches, and reads
the answer off the explained-variance curve.
"""

import numpy as np

from sigdims import linalg

rng = np.random.default_rng(0)

# 5 latent signals, mixed into 16 observed columns, plus faint noise.
latent = rng.normal(size=(4000, 5))
mixing = rng.normal(size=(5, 16))
rows = latent @ mixing + 1e-3 * rng.normal(size=(4000, 16))

# Stream the rows in arbitrary batch sizes; the finalized covariance does
# not depend on the batching.
acc = linalg.CovAccumulator(m=16)
for batch in np.split(rows, [100, 700, 2500]):
    linalg.accumulate(acc, batch)
cov = linalg.finalize(acc)

spectrum = linalg.eigendecompose(cov)
print("eigenvalues (descending):")
print(np.array2string(spectrum.eigenvalues, precision=2, suppress_small=True))
print("\ncumulative explained variance:")
for i, v in enumerate(spectrum.cumulative, start=1):
    bar = "#" * int(60 * v)
    print(f"  {i:2d} {v:8.5f} {bar}")

for threshold in (0.9, 0.99, 0.999, 1.0):
    s = linalg.significant_dimensions(spectrum, threshold)
    print(f"dimensions needed for {threshold:.3f} of the variance: {s}")
