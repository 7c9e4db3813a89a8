"""
Training one class model and inspecting what it produces.

A 3-electrode, 2-class subject keeps this quick on a CPU; the 22-electrode
case runs the same code with a different generator geometry. Reports land
in ./demo_out/quality.
"""
from pathlib import Path

import numpy as np

from csgan_eeg.csgan import GanTrainConfig, sample, train_csgan
from csgan_eeg.preprocess import bandpass, zscore_apply, zscore_fit
from csgan_eeg.quality import channel_overlay, covariance_heatmap, spectrogram_report
from csgan_eeg.spatial import build_filter_bank, covariances
from csgan_eeg.synthetic import make_subject

out = Path("demo_out")

# %% Band-pass, standardize and fit the bank on 50 trials, as a target subject would supply
es = bandpass(make_subject(n_trials=50, n_channels=3, n_classes=2, seed=1))
st = zscore_fit(es)
pool = zscore_apply(es, st)
bank = build_filter_bank(pool, m=3)

# %% Train the class-0 model; iterations count generator updates
cfg = GanTrainConfig(iterations=60, critic_steps=2, seed=0)
ckpt = train_csgan(pool.of_class(0), bank, 0, cfg)
hist = ckpt.history
print("cov-loss first/last:", round(hist["cov"][0], 3), round(hist["cov"][-1], 3))
print("ev-loss first/last:", round(hist["ev"][0], 3), round(hist["ev"][-1], 3))
ckpt.save(out / "gan_class0")

# %% Draw samples and compare their covariance with the class mean R1
fake = sample(ckpt, 100, noise_seed=0)
R1 = bank.per_class[0].R1
d = np.linalg.norm(covariances(fake.epochs) - R1, axis=(1, 2))
print(f"generated distance to R1: {d.mean():.4f} (real: {bank.per_class[0].dis_mean:.4f})")

# %% Time, frequency and spatial reports (CSV + PNG)
real0 = pool.of_class(0)
channel_overlay(real0, fake, out_dir=out / "quality")
spectrogram_report(real0, fake, out_dir=out / "quality")
heat = covariance_heatmap(real0, fake, out_dir=out / "quality")
print("heat-map difference (min-max scaled):", np.abs(heat.real_norm - heat.fake_norm).max())
