"""
Leave-one-subject-out versus adaptive training.

Subjects share the class structure but each mixes its sources differently.
Training on the other subjects alone transfers poorly; mixing in data of
the target subject (real, or generated from a few real trials) helps the
spatial filters and the classifier adapt. Sizes are kept tiny, so numbers
are noisy; the acceptance suite runs the larger version.
"""
import dataclasses

from csgan_eeg.experiments import ExperimentSpec, run_adaptive, run_loo
from csgan_eeg.synthetic import make_cross_subject

# White sources: the classes differ only spatially, so short GAN runs that
# match covariance but not yet the temporal texture still transfer.
data = make_cross_subject(n_subjects=4, n_trials=40, n_channels=3, n_classes=2, shift=1.5,
                          ar=0.0)

spec = ExperimentSpec(protocol="adapt_fake", dataset="2b", gan_count=20, adapt_count=200,
                      apply_bandpass=False, gan={"iterations": 20, "critic_steps": 2},
                      classifier={"epochs": 5})

# %% Reference: no target trials in training
loo = run_loo(data, spec)
print(f"LOO: {loo.mean:.3f} +- {loo.std:.3f}", dict(zip(loo.subjects, loo.accuracy)))

# %% The same 20 target trials, used directly
real = run_adaptive(data, dataclasses.replace(spec, adapt_count=20), source="real")
print(f"adapt 20 real: {real.mean:.3f}")

# %% 200 generated trials (100 per class) from per-class models trained on those 20
fake = run_adaptive(data, spec, source="fake")
print(f"adapt 200 fake: {fake.mean:.3f}")

# %% Paired comparison; with 4 subjects this is illustrative only
fake.compare_to(loo)
print(f"t = {fake.t_stat:.2f}, p = {fake.p_value:.3f}")
fake.write("demo_out/cross_subject")
