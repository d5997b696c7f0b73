"""Why filter-level significance is slippery: duplicates absorb each other.

Trains a small net, forces filters 0 and 1 of the first layer to be exact
duplicates (function preserved), then:

  * exhaustively prunes each candidate filter and retrains briefly,
  * predicts which survivor should absorb a pruned duplicate (highest
    correlation) and checks which filter actually moved the most,
  * writes the bank before/after as PGM images, plus the variance-ranked
    eigenfilter mix of the bank.
"""

from pathlib import Path

import numpy as np

from sigdims import filterlab, linalg, net
from sigdims.arch import ArchConfig
from sigdims.data import Dataset

rng = np.random.default_rng(0)
out = Path("demo_out")
out.mkdir(exist_ok=True)

# Oriented-grating classes under heavy noise: each learned filter matters.
side, classes, width = 8, 8, 4
yy, xx = np.mgrid[0:side, 0:side] / side
templates = np.stack([
    np.sin(2 * np.pi * (np.cos(np.pi * k / classes) * xx
                        + np.sin(np.pi * k / classes) * yy) * (1 + k % 3))
    for k in range(classes)
])[..., None]

def make(n, seed):
    r = np.random.default_rng(seed)
    labels = r.integers(0, classes, size=n)
    images = templates[labels] + 0.6 * r.normal(size=(n, side, side, 1))
    return Dataset(images=images, labels=labels)

train_ds, test_ds = make(300, 1), make(600, 2)
cfg = ArchConfig(tokens=(width,), classifier_width=classes, input_shape=(side, side, 1))
params = net.build(cfg, seed=0)
params, _ = net.train(params, train_ds, net.Hyper(epochs=10, lr=0.05, batch_size=32), seed=1)
print("trained parent, held-out accuracy:", net.evaluate(params, test_ds))

# Make filters 0 and 1 exact duplicates without changing the function.
blk = params.blocks[0]
for name in ("weight", "bias", "gamma", "beta", "run_mean", "run_var"):
    getattr(blk, name)[1] = getattr(blk, name)[0]
flat = params.fc_weight.shape[1]
sel0, sel1 = (np.arange(flat) % width == 0), (np.arange(flat) % width == 1)
merged = (params.fc_weight[:, sel0] + params.fc_weight[:, sel1]) / 2.0
params.fc_weight[:, sel0] = params.fc_weight[:, sel1] = merged
print("after duplication, held-out accuracy:", net.evaluate(params, test_ds))

filterlab.dump_filter_bank(params.filter_bank(0), out / "lab_bank_before.pgm")

step = filterlab.exhaustive_prune_step(
    params, 0, train_ds, net.Hyper(epochs=1, lr=0.02, batch_size=64),
    seed=3, eval_dataset=test_ds,
)
print("\nexhaustive search accuracy per pruned candidate:")
for fid, acc in step.accuracy_table.items():
    mark = " <- duplicate" if fid in (0, 1) else ""
    print(f"  filter {fid}: {acc:.4f}{mark}")
print("least significant filter:", step.best_id)

trace = filterlab.predict_and_verify(
    before_bank=params.filter_bank(0),
    pruned_id=step.best_id,
    after_bank=step.retrained.filter_bank(0),
    accuracy=step.accuracy_table[step.best_id],
)
print(f"\npredicted absorber {trace.predicted_id} "
      f"(r={trace.pearson_by_filter[trace.predicted_id]:.3f}), "
      f"moved most: {trace.actual_id}, match={trace.match}")
(out / "lab_trace.json").write_text(trace.to_json() + "\n")

filterlab.dump_filter_bank(step.retrained.filter_bank(0), out / "lab_bank_after.pgm")

# Variance-ranked mixes of the surviving filters, for visual inspection.
_, taps = net.forward_with_taps(step.retrained, train_ds.images[:128])
spectrum = linalg.eigendecompose(
    linalg.finalize(
        linalg.accumulate(
            linalg.CovAccumulator(taps[0].channels),
            taps[0].data.reshape(-1, taps[0].channels),
        )
    )
)
eigenbank = linalg.project_filters(step.retrained.filter_bank(0), spectrum)
filterlab.dump_filter_bank(eigenbank, out / "lab_eigenfilters.pgm")
print("\nwrote lab_bank_before.pgm, lab_bank_after.pgm, lab_eigenfilters.pgm")
