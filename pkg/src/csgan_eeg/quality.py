"""Time, frequency and spatial comparisons of real and generated epochs.

Every report writes CSV payloads (``#``-prefixed metadata header, values at
9 significant digits) and a PNG rendering.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .dataset import AugmentationSet, EpochSet
from .errors import MontageError, ShapeError
from .spatial import class_mean_cov

__all__ = [
    "OverlayResult", "SpectrogramResult", "HeatmapResult", "channel_overlay",
    "spectrogram_report", "covariance_heatmap", "power_db", "write_csv", "read_csv",
]

STFT_WINDOW_S = 1.0
STFT_OVERLAP = 0.9


def _epochs(s):
    if isinstance(s, (EpochSet, AugmentationSet)):
        return np.asarray(s.epochs, dtype=np.float64)
    return np.asarray(s, dtype=np.float64)


def _nonempty(x, what):
    if x.ndim != 3 or x.shape[0] == 0:
        raise ShapeError(f"{what} must be a non-empty (n, C, T) set")
    return x


def write_csv(path, header, rows, meta=None) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(rows):
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
    return path


def read_csv(path):
    """Return ``(meta, header, values)`` for a file written by :func:`write_csv`."""
    meta, header, rows = {}, None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                k, _, v = line[2:].partition(": ")
                meta[k] = v
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append([float(v) for v in line.split(",")])
    return meta, header, np.array(rows)


def _figure():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


@dataclass(frozen=True)
class OverlayResult:
    channels: tuple
    t: np.ndarray
    real_mean: np.ndarray
    fake_mean: np.ndarray
    files: tuple = ()


def channel_overlay(real: EpochSet, fake, channels=("C3", "Cz", "C4"), out_dir=None,
                    rate_hz=None) -> OverlayResult:
    """Trial-averaged waveform of selected electrodes for both sets.

    Channels are looked up by name in ``real``'s montage; ``fake`` is assumed
    to share it.
    """
    try:
        idx = [real.channel_names.index(c) for c in channels]
    except ValueError as err:
        raise MontageError(f"channel not in montage: {err}") from None
    xr = _nonempty(_epochs(real), "real")
    xf = _nonempty(_epochs(fake), "fake")
    if xf.shape[1:] != xr.shape[1:]:
        raise ShapeError(f"real {xr.shape[1:]} vs fake {xf.shape[1:]}")
    rate = rate_hz or real.rate_hz
    t = np.arange(xr.shape[2]) / rate
    rm, fm = xr[:, idx].mean(axis=0), xf[:, idx].mean(axis=0)
    files = []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        meta = {"report": "channel_overlay", "rate_hz": rate, "n_real": xr.shape[0],
                "n_fake": xf.shape[0]}
        for j, c in enumerate(channels):
            files.append(write_csv(out / f"overlay_{c}.csv", ["t", "real_mean", "fake_mean"],
                                   np.column_stack([t, rm[j], fm[j]]), {**meta, "channel": c}))
        plt = _figure()
        fig, axes = plt.subplots(len(channels), 1, figsize=(8, 2.2 * len(channels)), sharex=True,
                                 squeeze=False)
        for j, c in enumerate(channels):
            ax = axes[j, 0]
            ax.plot(t, rm[j], color="tab:orange", label="real")
            ax.plot(t, fm[j], color="tab:blue", label="fake")
            ax.set_ylabel(c)
        axes[0, 0].legend(loc="upper right")
        axes[-1, 0].set_xlabel("time (s)")
        fig.tight_layout()
        fig.savefig(out / "overlay.png", dpi=100)
        plt.close(fig)
        files.append(out / "overlay.png")
    return OverlayResult(tuple(channels), t, rm, fm, tuple(files))


def power_db(x, rate_hz, window_s=STFT_WINDOW_S, overlap=STFT_OVERLAP):
    """Trial-averaged short-time power (dB) of the channel-averaged signal.

    Returns ``(freqs, times, db)`` with ``db`` shaped ``(n_freqs, n_times)``.
    """
    x = _nonempty(_epochs(x), "set")
    mono = x.mean(axis=1)
    nper = int(round(window_s * rate_hz))
    nover = int(round(overlap * nper))
    f, t, S = signal.spectrogram(mono, fs=rate_hz, window="hann", nperseg=nper,
                                 noverlap=nover, scaling="density", mode="psd", axis=-1)
    power = S.mean(axis=0)
    return f, t, 10.0 * np.log10(np.maximum(power, np.finfo(float).tiny))


@dataclass(frozen=True)
class SpectrogramResult:
    freqs: np.ndarray
    times: np.ndarray
    real_db: np.ndarray
    fake_db: np.ndarray
    files: tuple = ()


def spectrogram_report(real, fake, rate_hz=None, band=(4.0, 40.0), out_dir=None,
                       window_s=STFT_WINDOW_S, overlap=STFT_OVERLAP) -> SpectrogramResult:
    """Spectrograms of both sets restricted to ``band`` (Hann window, dB power)."""
    rate = rate_hz or getattr(real, "rate_hz", None) or 250.0
    f, t, rdb = power_db(real, rate, window_s, overlap)
    _, _, fdb = power_db(fake, rate, window_s, overlap)
    keep = (f >= band[0]) & (f <= band[1])
    f, rdb, fdb = f[keep], rdb[keep], fdb[keep]
    files = []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        meta = {"report": "spectrogram", "rate_hz": rate, "window": f"hann {window_s} s",
                "overlap": overlap, "band_hz": f"{band[0]}-{band[1]}", "units": "dB",
                "rows": "frequency", "columns": "time"}
        header = ["freq_hz"] + [f"t={v:.9g}" for v in t]
        for tag, m in (("real", rdb), ("fake", fdb)):
            files.append(write_csv(out / f"spectrogram_{tag}.csv", header,
                                   np.column_stack([f, m]), meta))
        plt = _figure()
        fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
        vmin, vmax = min(rdb.min(), fdb.min()), max(rdb.max(), fdb.max())
        for ax, m, title in ((axes[0], rdb, "real"), (axes[1], fdb, "fake")):
            mesh = ax.pcolormesh(t, f, m, shading="auto", vmin=vmin, vmax=vmax)
            ax.set_ylabel("Hz")
            ax.set_title(title)
            fig.colorbar(mesh, ax=ax, label="dB")
        axes[1].set_xlabel("time (s)")
        fig.tight_layout()
        fig.savefig(out / "spectrogram.png", dpi=100)
        plt.close(fig)
        files.append(out / "spectrogram.png")
    return SpectrogramResult(f, t, rdb, fdb, tuple(files))


@dataclass(frozen=True)
class HeatmapResult:
    real_cov: np.ndarray
    fake_cov: np.ndarray
    real_norm: np.ndarray
    fake_norm: np.ndarray
    files: tuple = ()


def _minmax(M):
    lo, hi = M.min(), M.max()
    return np.zeros_like(M) if hi == lo else (M - lo) / (hi - lo)


def covariance_heatmap(real, fake, out_dir=None) -> HeatmapResult:
    """Class-mean trace-normalized covariance of both sets, min-max scaled to [0, 1]."""
    rc = class_mean_cov(_nonempty(_epochs(real), "real"))
    fc = class_mean_cov(_nonempty(_epochs(fake), "fake"))
    rc, fc = (rc + rc.T) / 2, (fc + fc.T) / 2
    rn, fn = _minmax(rc), _minmax(fc)
    files = []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        C = rc.shape[0]
        header = [f"ch{i + 1}" for i in range(C)]
        meta = {"report": "covariance_heatmap", "normalization": "per-matrix min-max"}
        for tag, raw, norm in (("real", rc, rn), ("fake", fc, fn)):
            files.append(write_csv(out / f"cov_{tag}.csv", header, raw, {**meta, "scaled": "no"}))
            files.append(write_csv(out / f"cov_{tag}_norm.csv", header, norm,
                                   {**meta, "scaled": "yes"}))
        plt = _figure()
        fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
        for ax, m, title in ((axes[0], rn, "real"), (axes[1], fn, "fake")):
            im = ax.imshow(m, vmin=0, vmax=1, cmap="viridis")
            ax.set_title(title)
        fig.colorbar(im, ax=list(axes))
        fig.savefig(out / "covariance.png", dpi=100)
        plt.close(fig)
        files.append(out / "covariance.png")
    return HeatmapResult(rc, fc, rn, fn, tuple(files))
