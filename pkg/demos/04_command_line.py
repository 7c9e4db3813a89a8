"""
The same pipeline through the command-line entry point.

Equivalent shell calls are ``csgan-eeg <command> ...`` or
``python -m csgan_eeg <command> ...``. Every command leaves a
run_manifest.json next to its outputs.
"""
from pathlib import Path

import numpy as np

from csgan_eeg.cli import main

root = Path("demo_out/cli")

# %% Raw arrays -> epoch containers; sample 0 is trial onset, 7 s per trial
root.mkdir(parents=True, exist_ok=True)
for i in range(3):
    rng = np.random.default_rng(i)
    npz = root / f"raw{i}.npz"
    np.savez(npz, X=rng.standard_normal((30, 3, 1750)).astype(np.float32),
             y=np.resize([1, 2], 30), ch_names=np.array(["C3", "Cz", "C4"]))
    main(["convert", "--npz", str(npz), "--subject", f"B0{i + 1}",
          "--out", str(root / "data" / f"B0{i + 1}" / "T")])

# %% One class model per class of subject B01, then 10 samples from each
for k in (0, 1):
    main(["train-gan", "--data", str(root / "data"), "--subject", "B01", "--class", str(k),
          "--montage", "2b", "--gan-count", "12", "--stratified", "--iterations", "5",
          "--critic-steps", "1", "--out", str(root / f"gan{k}")])
main(["generate", "--checkpoint", str(root / "gan0"), str(root / "gan1"), "--n", "10",
      "--montage", "2b", "--raw-units", "--out", str(root / "fake")])

# %% A leave-one-subject-out run and a quality report
code = main(["experiment", "--protocol", "loo", "--data", str(root / "data"),
             "--montage", "2b", "--gan-count", "12", "--epochs", "2",
             "--out", str(root / "loo")])
print("exit code", code, "->", (root / "loo" / "report.csv").read_text())
main(["quality", "--real", str(root / "data" / "B01" / "T"), "--fake", str(root / "fake"),
      "--montage", "2b", "--class", "0", "--out", str(root / "quality")])
