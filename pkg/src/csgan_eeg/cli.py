"""Command-line entry point.

Exit codes: 0 success, 1 runtime error, 2 usage error. Every command writes
``run_manifest.json`` (argv, resolved configuration, seeds, git revision and
timestamps) into its output directory; the name keeps it apart from an epoch
container's own ``manifest.json``.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import logging
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (MONTAGES, AugmentationSet, EpochSet, SplitSpec, convert_arrays, load_dataset, load_session,
                      save_session, split_cross_subject)
from .errors import CSGanError, ConfigError

log = logging.getLogger("csgan_eeg")

RUN_MANIFEST = "run_manifest.json"


def _git_revision():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat()


def _write_manifest(out_dir, argv, command, config, seed, started):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command, "argv": list(argv), "config": config, "seed": seed,
        "version": __version__, "git": _git_revision(),
        "started": started, "finished": _now(),
    }
    (out / RUN_MANIFEST).write_text(json.dumps(manifest, indent=1, default=str))


def _load_config(path):
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None


# --------------------------------------------------------------------------
# commands


def cmd_convert(args):
    data = np.load(args.npz, allow_pickle=False)
    missing = [k for k in ("X", "y", "ch_names") if k not in data]
    if missing:
        raise ConfigError(f"{args.npz} lacks arrays {missing}")
    rate = float(data["rate_hz"]) if "rate_hz" in data else args.rate_hz
    tmin = float(data["tmin_s"]) if "tmin_s" in data else args.tmin_s
    convert_arrays(data["X"], data["y"], [str(c) for c in data["ch_names"]], args.subject,
                   args.session, args.out, rate_hz=rate, tmin_s=tmin)
    return {"npz": str(args.npz), "rate_hz": rate, "tmin_s": tmin}, None


def cmd_preprocess(args):
    from .preprocess import bandpass, zscore_apply, zscore_fit

    es = load_session(args.input, args.montage)
    es = bandpass(es, args.low, args.high)
    cfg = {"low_hz": args.low, "high_hz": args.high, "zscore": args.zscore}
    if args.zscore:
        st = zscore_fit(es)
        es = zscore_apply(es, st)
        cfg["stats"] = st.to_dict()
    save_session(es, args.out)
    return cfg, None


def cmd_fit_spatial(args):
    from .preprocess import bandpass
    from .spatial import build_filter_bank, save_bank

    sets = [load_session(p, args.montage) for p in args.input]
    if not args.no_bandpass:
        sets = [bandpass(s) for s in sets]
    es = EpochSet.concat(sets)
    bank = build_filter_bank(es, args.m)
    save_bank(bank, args.out)
    return {"inputs": [str(p) for p in args.input], "m": bank.m,
            "bandpass": not args.no_bandpass}, None


def _gan_config(args):
    from .csgan import GanTrainConfig

    cfg = _load_config(args.config)
    for key in ("iterations", "critic_steps", "batch_size"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    cfg["seed"] = args.seed
    return GanTrainConfig(**cfg)


def cmd_train_gan(args):
    from .csgan import train_csgan
    from .experiments import derive_seed
    from .preprocess import bandpass, zscore_apply, zscore_fit
    from .spatial import build_filter_bank, save_bank

    data = load_dataset(args.data, args.montage)
    if not args.no_bandpass:
        data = {s: bandpass(es) for s, es in data.items()}
    split = SplitSpec("cross_subject_loo", args.subject, args.gan_count,
                      derive_seed(args.seed, "split", args.subject), args.stratified)
    _, pool, _ = split_cross_subject(list(data.values()), split)
    st = zscore_fit(pool)
    pool = zscore_apply(pool, st)
    bank = build_filter_bank(pool, args.m)
    cfg = _gan_config(args)
    ckpt = train_csgan(pool.of_class(args.class_id), bank, args.class_id, cfg,
                       subject=args.subject, log_every=args.log_every)
    out = Path(args.out)
    ckpt.save(out)
    save_bank(bank, out / "bank")
    (out / "stats.json").write_text(json.dumps(st.to_dict()))
    (out / "gan_pool.json").write_text(json.dumps(
        {"subject": args.subject, "trial_ids": pool.trial_ids.tolist()}))
    return {"train": cfg.to_dict(), "subject": args.subject, "class_id": args.class_id,
            "gan_count": args.gan_count}, args.seed


def cmd_generate(args):
    from .csgan import GanCheckpoint, sample
    from .preprocess import StandardizationStats, zscore_invert

    parts = []
    for i, path in enumerate(args.checkpoint):
        ckpt = GanCheckpoint.load(path)
        aug = sample(ckpt, args.n, noise_seed=args.seed + i, bn_mode=args.bn_mode)
        stats_path = Path(path) / "stats.json"
        if args.raw_units:
            if not stats_path.exists():
                raise ConfigError(f"--raw-units needs {stats_path}")
            st = StandardizationStats.from_dict(json.loads(stats_path.read_text()))
            aug = dataclasses.replace(aug, epochs=zscore_invert(aug.epochs, st))
        parts.append(aug)
    aug = AugmentationSet.concat(parts)
    montage = MONTAGES[args.montage]
    names = montage["channels"] if len(montage["channels"]) == aug.epochs.shape[1] else []
    es = EpochSet(epochs=aug.epochs, labels=aug.labels,
                  subject=str(aug.provenance[0].get("subject") or "G"), session="G",
                  channel_names=names,
                  n_classes=max(int(aug.labels.max()) + 1, montage["n_classes"]),
                  trial_ids=-1 - np.arange(len(aug)))
    save_session(es, args.out, extra={"provenance": aug.provenance})
    return {"checkpoints": [str(p) for p in args.checkpoint], "n": args.n,
            "raw_units": args.raw_units, "n_total": len(aug)}, args.seed


def _key_values(pairs):
    out = {}
    for item in pairs:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"expected KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _experiment_spec(args):
    from .experiments import ExperimentSpec

    cfg = _load_config(args.config)
    protocol = args.protocol or cfg.get("protocol", "loo")
    if protocol == "adapt":
        protocol = "adapt_fake" if args.adapt_source == "fake" else "adapt_real"
    cfg["protocol"] = protocol
    overrides = {
        "dataset": args.montage, "adapt_count": args.adapt_count, "gan_count": args.gan_count,
        "augmentation_method": args.method, "m": args.m, "seed": args.seed,
        "noise_sigma": args.noise_sigma, "n_segments": args.n_segments,
        "low_hz": args.low_hz, "high_hz": args.high_hz,
        "stratified_gan_pool": args.stratified_gan_pool,
        "clf_stats_scope": args.clf_stats_scope, "gan_stats_scope": args.gan_stats_scope,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if args.targets:
        cfg["target_subjects"] = args.targets
    if args.ablation:
        cfg["ablation_flags"] = args.ablation
    if args.counts:
        cfg["sweep"] = args.counts
    if args.no_bandpass:
        cfg["apply_bandpass"] = False
    gan = dict(cfg.get("gan", {}))
    gan.update(_key_values(args.gan_param))
    for key in ("iterations", "critic_steps"):
        v = getattr(args, key)
        if v is not None:
            gan[key] = v
    cfg["gan"] = gan
    clf = dict(cfg.get("classifier", {}))
    clf.update(_key_values(args.classifier_param))
    if args.epochs is not None:
        clf["epochs"] = args.epochs
    cfg["classifier"] = clf
    return ExperimentSpec(**cfg)


def cmd_experiment(args):
    from .experiments import run_experiment

    spec = _experiment_spec(args)
    data = load_dataset(args.data, spec.dataset)
    reports = run_experiment(data, spec, n_jobs=args.jobs)
    out = Path(args.out)
    for r in reports:
        r.write(out, stem="report" if r is reports[-1] else _stem(r.name))
    return spec.resolved().to_dict(), spec.seed


def _stem(name):
    return "report_" + "".join(c if c.isalnum() else "_" for c in name)


def cmd_quality(args):
    from .quality import channel_overlay, covariance_heatmap, spectrogram_report

    real = load_session(args.real, args.montage, crop=not args.no_crop)
    fake = load_session(args.fake, args.montage, crop=False)
    if args.class_id is not None:
        real, fake = real.of_class(args.class_id), fake.of_class(args.class_id)
    out = Path(args.out)
    channel_overlay(real, fake, args.channels, out_dir=out)
    spectrogram_report(real, fake, out_dir=out)
    covariance_heatmap(real, fake, out_dir=out)
    return {"real": str(args.real), "fake": str(args.fake), "class_id": args.class_id,
            "channels": args.channels}, None


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csgan-eeg", description="Cross-subject EEG augmentation with spatially constrained GANs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="arrays (.npz with X, y, ch_names) -> epoch container")
    c.add_argument("--npz", required=True, type=Path)
    c.add_argument("--subject", required=True)
    c.add_argument("--session", default="T")
    c.add_argument("--rate-hz", type=float, default=250.0)
    c.add_argument("--tmin-s", type=float, default=0.0,
                   help="time of the first sample relative to trial onset")
    c.add_argument("--out", required=True, type=Path)
    c.set_defaults(func=cmd_convert)

    c = sub.add_parser("preprocess", help="band-pass (and optionally z-score) a session")
    c.add_argument("--input", required=True, type=Path)
    c.add_argument("--montage", choices=("2a", "2b"), default="2a")
    c.add_argument("--low", type=float, default=4.0)
    c.add_argument("--high", type=float, default=40.0)
    c.add_argument("--zscore", action="store_true")
    c.add_argument("--out", required=True, type=Path)
    c.set_defaults(func=cmd_preprocess)

    c = sub.add_parser("fit-spatial", help="fit the one-versus-rest filter bank")
    c.add_argument("--input", required=True, type=Path, nargs="+")
    c.add_argument("--montage", choices=("2a", "2b"), default="2a")
    c.add_argument("--m", type=int, default=None)
    c.add_argument("--no-bandpass", action="store_true")
    c.add_argument("--out", required=True, type=Path)
    c.set_defaults(func=cmd_fit_spatial)

    c = sub.add_parser("train-gan", help="train the CS-GAN of one (subject, class)")
    c.add_argument("--data", required=True, type=Path, help="root with <subject>/T/ containers")
    c.add_argument("--subject", required=True)
    c.add_argument("--class", dest="class_id", required=True, type=int)
    c.add_argument("--montage", choices=("2a", "2b"), default="2a")
    c.add_argument("--config", type=Path)
    c.add_argument("--gan-count", type=int, default=100)
    c.add_argument("--stratified", action="store_true")
    c.add_argument("--m", type=int, default=None)
    c.add_argument("--iterations", type=int)
    c.add_argument("--critic-steps", type=int)
    c.add_argument("--batch-size", type=int)
    c.add_argument("--no-bandpass", action="store_true")
    c.add_argument("--log-every", type=int, default=0)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True, type=Path)
    c.set_defaults(func=cmd_train_gan)

    c = sub.add_parser("generate", help="sample trained checkpoints into an epoch container")
    c.add_argument("--checkpoint", required=True, type=Path, nargs="+")
    c.add_argument("--n", required=True, type=int, help="samples per checkpoint")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--montage", choices=("2a", "2b"), default="2a")
    c.add_argument("--bn-mode", choices=("running", "batch"), default=None)
    c.add_argument("--raw-units", action="store_true",
                   help="undo the GAN pool standardization")
    c.add_argument("--out", required=True, type=Path)
    c.set_defaults(func=cmd_generate)

    c = sub.add_parser("experiment", help="run a cross-subject protocol")
    c.add_argument("--protocol", choices=("loo", "adapt", "sweep", "ablation"))
    c.add_argument("--adapt-source", choices=("real", "fake"), default="fake")
    c.add_argument("--data", required=True, type=Path)
    c.add_argument("--montage", "--dataset", dest="montage", choices=("2a", "2b"), default=None)
    c.add_argument("--config", type=Path)
    c.add_argument("--targets", nargs="+")
    c.add_argument("--adapt-count", type=int)
    c.add_argument("--gan-count", type=int)
    c.add_argument("--counts", type=int, nargs="+")
    c.add_argument("--method", choices=("csgan", "noise", "snr"))
    c.add_argument("--ablation", nargs="+",
                   choices=("no_cs_module", "no_cov_loss", "no_ev_loss", "ablate_all"))
    c.add_argument("--m", type=int)
    c.add_argument("--noise-sigma", type=float)
    c.add_argument("--n-segments", type=int)
    c.add_argument("--iterations", type=int)
    c.add_argument("--critic-steps", type=int)
    c.add_argument("--epochs", type=int)
    c.add_argument("--no-bandpass", action="store_true")
    c.add_argument("--low-hz", type=float)
    c.add_argument("--high-hz", type=float)
    c.add_argument("--stratified-gan-pool", action=argparse.BooleanOptionalAction, default=None)
    c.add_argument("--clf-stats-scope", choices=("mixture", "train"))
    c.add_argument("--gan-stats-scope", choices=("gan_pool", "train"))
    c.add_argument("--gan-param", action="append", default=[], metavar="KEY=VALUE",
                   help="GAN training field (JSON value), repeatable")
    c.add_argument("--classifier-param", action="append", default=[], metavar="KEY=VALUE",
                   help="classifier field (JSON value), repeatable")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--seed", type=int)
    c.add_argument("--out", required=True, type=Path)
    c.set_defaults(func=cmd_experiment)

    c = sub.add_parser("quality", help="time/frequency/spatial comparison report")
    c.add_argument("--real", required=True, type=Path)
    c.add_argument("--fake", required=True, type=Path)
    c.add_argument("--montage", choices=("2a", "2b"), default="2a")
    c.add_argument("--class", dest="class_id", type=int)
    c.add_argument("--channels", nargs="+", default=["C3", "Cz", "C4"])
    c.add_argument("--no-crop", action="store_true",
                   help="real container is already cut to the cue window")
    c.add_argument("--out", required=True, type=Path)
    c.set_defaults(func=cmd_quality)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    started = _now()
    try:
        config, seed = args.func(args)
    except (CSGanError, OSError, TypeError, KeyError) as err:
        print(f"csgan-eeg {args.command}: error: {err}", file=sys.stderr)
        return 1
    _write_manifest(args.out, argv, args.command, config, seed, started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
