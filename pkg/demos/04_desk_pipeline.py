"""The whole loop at desk scale: train, capture, analyze, plan, retrain.

Uses the bundled synthetic 10-class image generator (written in the
standard 3073-byte binary record format), a small 2-conv net, and the CLI
entry points, so this is exactly what `sigdims pipeline` does in
production, just smaller.  Also runs a threshold sweep over the captured
activations.  Everything lands in ./demo_out/.
"""

import json
from pathlib import Path

from sigdims.cli import main
from sigdims.data import write_synthetic_cifar

out = Path("demo_out")
out.mkdir(exist_ok=True)

arch = out / "arch.json"
arch.write_text(json.dumps(
    {"input": [32, 32, 3], "layers": [16, "M", 16], "classes": 10}
))
hyper = out / "hyper.json"
hyper.write_text(json.dumps(
    {"epochs": 2, "lr": 0.05, "momentum": 0.9, "batch_size": 64}
))
write_synthetic_cifar(out / "train.bin", n=600, seed=0)
write_synthetic_cifar(out / "test.bin", n=200, seed=1)

print("== pipeline ==")
rc = main([
    "pipeline", "--config", str(arch),
    "--data", str(out / "train.bin"), "--test-data", str(out / "test.bin"),
    "--seed", "7", "--hyper", str(hyper), "--out", str(out / "run"),
])
assert rc == 0

report = json.loads((out / "run" / "report.json").read_text())
print("\nmeasured widths:", {la["layer"]: la["s"] for la in report["layers"]})
print("planned (tolerant):", report["planned"]["tolerant"]["layers"])
print("cost ratios:", report["ratios"]["tolerant"])

print("\n== sweep over thresholds ==")
rc = main([
    "sweep", str(out / "run" / "acts"),
    "--threshold", "0.999", "--threshold", "0.99", "--threshold", "0.95",
    "--config", str(arch), "--out", str(out / "sweep"),
])
assert rc == 0
print((out / "sweep" / "sweep.csv").read_text())
