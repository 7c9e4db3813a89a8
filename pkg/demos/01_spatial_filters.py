"""
One-versus-rest spatial filters on synthetic motor-imagery data.

Each class raises the power of its own group of latent sources. The filter
bank recovers, for every class, the directions in which that class's
variance dominates the rest, and stacks them into a single projection W.
"""
import numpy as np

from csgan_eeg.spatial import build_filter_bank, covariances, project_set
from csgan_eeg.synthetic import make_subject, mixing_matrix

# %% A 4-class, 22-electrode subject with a random source-to-channel rotation
rng = np.random.default_rng(0)
es = make_subject(n_trials=160, n_channels=22, n_classes=4, seed=0,
                  mixing=mixing_matrix(22, 1.0, rng))
print(es.epochs.shape, np.bincount(es.labels))

# %% Every epoch covariance is trace-normalized
covs = covariances(es.epochs)
print("max |trace - 1|:", np.abs(np.trace(covs, axis1=1, axis2=2) - 1).max())

# %% Fit m=4 filters per class
bank = build_filter_bank(es, m=4)
print("W:", bank.W.shape)
for k, art in enumerate(bank.per_class):
    # lambda_S close to 0 means "almost all of this direction's variance is class k"
    print(f"class {k}: lambda_S[:4] = {np.round(art.lambda_S[:4], 3)}, "
          f"distance to R1 = {art.dis_mean:.4f} +- {art.dis_std:.4f}")

# %% The whitening/diagonalization identities hold to machine precision
art = bank.per_class[0]
T = art.B.T @ art.P
print("whitening error:", np.abs(T @ (art.R1 + art.R2) @ T.T - np.eye(22)).max())
print("lambda' + lambda - 1:", np.abs(np.diag(T @ art.R1 @ T.T) + art.lambda_S - 1).max())

# %% Projecting the epochs gives the 16-row input of the classifier and the CS critic head
proj = project_set(es, bank)
power = (proj.epochs.astype(float) ** 2).mean(axis=2)
for k in range(4):
    rows = slice(4 * k, 4 * k + 4)
    own = power[es.labels == k][:, rows].mean()
    other = power[es.labels != k][:, rows].mean()
    print(f"class {k} block: own power {own:.3f} vs other classes {other:.3f}")
