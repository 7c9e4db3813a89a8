"""Cross-subject protocols: leave-one-subject-out, adaptive augmentation,
augmentation-count sweeps and ablations, with paired statistics."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .baselines import gaussian_noise_augment, segment_recombine
from .classifier import ClassifierConfig, evaluate, train_classifier
from .csgan import GanTrainConfig, sample, train_csgan
from .dataset import AugmentationSet, EpochSet, SplitSpec, split_cross_subject
from .errors import ConfigError, DegenerateTestError, LeakageError, SplitError, SubjectError
from .preprocess import bandpass, zscore_apply, zscore_fit, zscore_invert
from .spatial import build_filter_bank, project_set

__all__ = [
    "ExperimentSpec", "ExperimentReport", "derive_seed", "paired_t_test", "prepare",
    "run_loo", "run_adaptive", "run_ablation", "sweep_counts", "run_experiment",
    "train_subject_gans", "ablation_config",
]

log = logging.getLogger(__name__)

PROTOCOLS = ("loo", "adapt_real", "adapt_fake", "sweep", "ablation")
METHODS = ("csgan", "noise", "snr")
ABLATIONS = ("no_cs_module", "no_cov_loss", "no_ev_loss", "ablate_all")
CLF_STATS_SCOPES = ("mixture", "train")
GAN_STATS_SCOPES = ("gan_pool", "train")

_PRESETS = {
    "2a": {"gan_count": 100, "stratified_gan_pool": False, "adapt_count": 3000, "m": 4},
    "2b": {"gan_count": 50, "stratified_gan_pool": True, "adapt_count": 1000, "m": 3},
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines an experiment's outcome.

    ``None`` fields take the dataset preset (``2a``: 100 GAN trials, 3000
    generated, m=4; ``2b``: 50 stratified GAN trials, 1000 generated, m=3).
    ``gan`` and ``classifier`` hold overrides of :class:`GanTrainConfig` and
    :class:`ClassifierConfig` fields. ``clf_stats_scope`` selects the trials
    the classifier's standardization is fit on (the training mixture, or the
    other subjects only); ``gan_stats_scope`` does the same for the GAN pool.
    """

    protocol: str = "loo"
    dataset: str = "2a"
    target_subjects: tuple = ()
    gan_count: int | None = None
    stratified_gan_pool: bool | None = None
    adapt_count: int | None = None
    sweep: tuple = (0, 100, 500, 1000, 2000, 3000, 4000, 5000)
    augmentation_method: str = "csgan"
    ablation_flags: tuple = ()
    m: int | None = None
    apply_bandpass: bool = True
    low_hz: float = 4.0
    high_hz: float = 40.0
    noise_sigma: float = 0.2
    n_segments: int = 8
    clf_stats_scope: str = "mixture"
    gan_stats_scope: str = "gan_pool"
    gan: dict = field(default_factory=dict)
    classifier: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}")
        if self.dataset not in _PRESETS:
            raise ConfigError(f"dataset must be one of {tuple(_PRESETS)}")
        if self.augmentation_method not in METHODS:
            raise ConfigError(f"augmentation_method must be one of {METHODS}")
        bad = set(self.ablation_flags) - set(ABLATIONS)
        if bad:
            raise ConfigError(f"unknown ablation flags {sorted(bad)}")
        if self.clf_stats_scope not in CLF_STATS_SCOPES:
            raise ConfigError(f"clf_stats_scope must be one of {CLF_STATS_SCOPES}")
        if self.gan_stats_scope not in GAN_STATS_SCOPES:
            raise ConfigError(f"gan_stats_scope must be one of {GAN_STATS_SCOPES}")
        if self.ablation_flags and self.augmentation_method != "csgan":
            raise ConfigError("ablation flags require augmentation_method='csgan'")
        for name in ("target_subjects", "sweep", "ablation_flags"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "gan", dict(self.gan))
        object.__setattr__(self, "classifier", dict(self.classifier))

    def resolved(self) -> "ExperimentSpec":
        preset = _PRESETS[self.dataset]
        kw = {k: v for k, v in preset.items() if getattr(self, k) is None}
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved().to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def gan_config(self, seed=0) -> GanTrainConfig:
        cfg = ablation_config(GanTrainConfig(**self.gan), self.ablation_flags)
        return dataclasses.replace(cfg, seed=seed)

    def classifier_config(self, n_classes, m, seed=0) -> ClassifierConfig:
        return ClassifierConfig(**{**self.classifier, "n_classes": n_classes, "m": m,
                                   "seed": seed})


def ablation_config(cfg: GanTrainConfig, flags) -> GanTrainConfig:
    """Remove the mechanisms named in ``flags`` from a GAN configuration."""
    flags = set(flags)
    if "ablate_all" in flags:
        flags |= {"no_cs_module", "no_cov_loss", "no_ev_loss"}
    kw = {}
    if "no_cs_module" in flags:
        kw.update(use_cs=False, lambda_cs=0.0)
    if "no_cov_loss" in flags:
        kw["lambda_cov"] = 0.0
    if "no_ev_loss" in flags:
        kw["lambda_ev"] = 0.0
    return dataclasses.replace(cfg, **kw)


@dataclass
class ExperimentReport:
    name: str
    spec: dict
    subjects: list
    accuracy: list
    kappa: list
    details: list = field(default_factory=list)
    lambdas: dict = field(default_factory=dict)
    reference: str | None = None
    t_stat: float | None = None
    p_value: float | None = None
    config_hash: str = ""
    wall_clock_s: float = 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracy))

    @property
    def std(self) -> float:
        """Sample standard deviation across subjects."""
        return float(np.std(self.accuracy, ddof=1)) if len(self.accuracy) > 1 else 0.0

    def compare_to(self, reference: "ExperimentReport"):
        """Attach a paired t-test of per-subject accuracy against ``reference``."""
        if reference.subjects != self.subjects:
            raise ConfigError("reports cover different subjects")
        self.reference = reference.name
        self.t_stat, self.p_value = paired_t_test(self.accuracy, reference.accuracy)
        return self

    def to_dict(self, timing=True):
        d = {
            "name": self.name, "spec": self.spec, "config_hash": self.config_hash,
            "lambdas": self.lambdas,
            "per_subject": [
                {"subject": s, "accuracy": a, "kappa": k, **det}
                for s, a, k, det in zip(self.subjects, self.accuracy, self.kappa,
                                        self.details or [{}] * len(self.subjects))],
            "mean_accuracy": self.mean, "std_accuracy": self.std,
            "mean_kappa": float(np.mean(self.kappa)),
            "reference": self.reference, "t_stat": self.t_stat, "p_value": self.p_value,
        }
        if timing:
            d["wall_clock_s"] = self.wall_clock_s
        return d

    def write(self, out_dir, stem="report") -> Path:
        """Write ``<stem>.json`` and ``<stem>.csv`` via temp file + rename."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _atomic_write(out_dir / f"{stem}.json", json.dumps(self.to_dict(), indent=1))
        lines = ["subject,accuracy,kappa"]
        lines += [f"{s},{a:.9g},{k:.9g}" for s, a, k in
                  zip(self.subjects, self.accuracy, self.kappa)]
        _atomic_write(out_dir / f"{stem}.csv", "\n".join(lines) + "\n")
        return out_dir / f"{stem}.json"


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def derive_seed(master: int, *keys) -> int:
    """Order-independent child seed for a named component."""
    words = [int(master) & 0xFFFFFFFF]
    for k in keys:
        words.append(zlib.crc32(str(k).encode()) if not isinstance(k, int) else k & 0xFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def paired_t_test(a, b):
    """Two-sided paired t-test; returns ``(t, p)`` with ``n - 1`` degrees of freedom."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise DegenerateTestError("need two equal-length vectors of at least 2 scores")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0.0:
        raise DegenerateTestError("differences have zero variance")
    t = d.mean() / (sd / np.sqrt(d.size))
    p = 2.0 * stats.t.sf(abs(t), df=d.size - 1)
    return float(t), float(p)


# --------------------------------------------------------------------------
# pipeline pieces


def prepare(data: dict, spec: ExperimentSpec) -> dict:
    """Band-pass every subject (per-trial, so no information crosses trials)."""
    if not spec.apply_bandpass:
        return dict(data)
    return {s: bandpass(es, spec.low_hz, spec.high_hz) for s, es in data.items()}


def _split(data, target, spec):
    seed = derive_seed(spec.seed, "split", target)
    split = SplitSpec("cross_subject_loo", target, spec.gan_count, seed,
                      bool(spec.stratified_gan_pool))
    return split_cross_subject(list(data.values()), split)


def _train_one(args):
    pool_k, bank, k, cfg, subject = args
    return train_csgan(pool_k, bank, k, cfg, subject=subject)


def _gan_stats(gan_pool, train, spec):
    return zscore_fit(train if spec.gan_stats_scope == "train" else gan_pool)


def train_subject_gans(gan_pool: EpochSet, spec: ExperimentSpec, n_jobs: int = 1,
                       train: EpochSet | None = None):
    """Standardize the subject-specific pool, fit its filter bank and train one GAN per class.

    ``train`` (the other subjects' trials) is only read when
    ``spec.gan_stats_scope`` is ``'train'``. Returns ``(checkpoints, stats,
    bank)``; checkpoints are ordered by class.
    """
    stats_ = _gan_stats(gan_pool, train, spec)
    pool = zscore_apply(gan_pool, stats_)
    bank = build_filter_bank(pool, spec.m)
    jobs = [(pool.of_class(k), bank, k,
             spec.gan_config(derive_seed(spec.seed, "gan", gan_pool.subject, k)),
             gan_pool.subject)
            for k in range(gan_pool.n_classes)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            ckpts = list(ex.map(_train_one, jobs))
    else:
        ckpts = [_train_one(j) for j in jobs]
    return ckpts, stats_, bank


def _per_class_counts(total, n_classes):
    if total % n_classes:
        raise ConfigError(f"{total} generated trials cannot be split evenly over {n_classes} classes")
    return total // n_classes


def _generate(gan_pool, spec, count, gan_state=None, train=None):
    """Synthetic adaptation trials in the raw (band-passed) units of ``gan_pool``."""
    K = gan_pool.n_classes
    per = _per_class_counts(count, K)
    if spec.augmentation_method == "csgan":
        ckpts, st, _ = gan_state
        parts = [sample(ck, per, noise_seed=derive_seed(spec.seed, "sample", gan_pool.subject,
                                                         ck.class_id))
                 for ck in ckpts]
    else:
        st = _gan_stats(gan_pool, train, spec)
        pool = zscore_apply(gan_pool, st)
        parts = []
        for k in range(K):
            seed = derive_seed(spec.seed, spec.augmentation_method, gan_pool.subject, k)
            if spec.augmentation_method == "noise":
                parts.append(gaussian_noise_augment(pool.of_class(k), per, spec.noise_sigma, seed))
            else:
                parts.append(segment_recombine(pool.of_class(k), per, spec.n_segments, seed))
    aug = AugmentationSet.concat(parts)
    raw = zscore_invert(aug.epochs, st)
    return dataclasses.replace(aug, epochs=raw)


def _check_leakage(test, gan_pool, adapt_ids):
    if np.intersect1d(test.trial_ids, gan_pool.trial_ids).size:
        raise LeakageError("test trials overlap the GAN pool")
    real_adapt = adapt_ids[adapt_ids >= 0]
    if np.intersect1d(real_adapt, test.trial_ids).size:
        raise LeakageError("test trials reached the adaptation set")


def _fit_and_score(train, adapt, test, spec, target):
    mixture = train if adapt is None else EpochSet.concat([train, adapt], subject="mixture")
    adapt_ids = np.empty(0, dtype=np.int64) if adapt is None else adapt.trial_ids
    st = zscore_fit(train if spec.clf_stats_scope == "train" else mixture)
    mix = zscore_apply(mixture, st)
    bank = build_filter_bank(mix, spec.m)
    cfg = spec.classifier_config(train.n_classes, bank.m,
                                 derive_seed(spec.seed, "classifier", target))
    model = train_classifier(project_set(mix, bank), cfg)
    res = evaluate(model, project_set(zscore_apply(test, st), bank))
    detail = {"n_train": int(mixture.n_trials), "n_adapt": int(adapt_ids.size),
              "n_test": int(test.n_trials), "confusion": res.confusion.tolist()}
    return res.accuracy, res.kappa, detail


def _targets(data, spec):
    if len(data) < 2:
        raise SubjectError("cross-subject protocols need at least two subjects")
    targets = list(spec.target_subjects) or list(data)
    missing = [t for t in targets if t not in data]
    if missing:
        raise SubjectError(f"subjects {missing} absent")
    return targets


def _lambdas(spec):
    cfg = spec.gan_config()
    return {"lambda_gp": cfg.lambda_gp, "lambda_cs": cfg.lambda_cs,
            "lambda_cov": cfg.lambda_cov, "lambda_ev": cfg.lambda_ev, "use_cs": cfg.use_cs}


def _report(name, spec, rows, t0, with_lambdas=False):
    return ExperimentReport(
        name=name, spec=spec.to_dict(), subjects=[r[0] for r in rows],
        accuracy=[r[1] for r in rows], kappa=[r[2] for r in rows],
        details=[r[3] for r in rows], lambdas=_lambdas(spec) if with_lambdas else {},
        config_hash=spec.config_hash(), wall_clock_s=time.perf_counter() - t0)


def _gan_key(spec, target):
    # GAN training depends on neither the count nor the protocol
    neutral = dataclasses.replace(spec, adapt_count=0, sweep=(), protocol="adapt_fake",
                                  target_subjects=(), classifier={}, clf_stats_scope="mixture")
    return target, neutral.config_hash()


def _adapt_set(source, gan_pool, spec, target, gan_state, count, train=None):
    if count == 0:
        return None
    if source == "real":
        if count > gan_pool.n_trials:
            raise SplitError(f"adapt_count={count} exceeds {gan_pool.n_trials} real trials")
        rng = np.random.default_rng(derive_seed(spec.seed, "adapt_real", target))
        return gan_pool.subset(np.sort(rng.choice(gan_pool.n_trials, count, replace=False)))
    aug = _generate(gan_pool, spec, count, gan_state, train)
    return aug.to_epoch_set(gan_pool)


# --------------------------------------------------------------------------
# protocols


def run_adaptive(data: dict, spec: ExperimentSpec, source: str = "fake",
                 n_jobs: int = 1, name: str | None = None, prepared: bool = False,
                 gan_cache: dict | None = None) -> ExperimentReport:
    """Train on the other subjects' trials mixed with ``adapt_count`` target trials.

    The adaptation trials are either real (drawn from the target's GAN pool)
    or synthetic (``spec.augmentation_method``). ``adapt_count=0`` is plain
    leave-one-subject-out. The target's remaining trials form the test set.
    """
    spec = spec.resolved()
    if spec.adapt_count < 0:
        raise ConfigError("adapt_count must be >= 0")
    t0 = time.perf_counter()
    data = data if prepared else prepare(data, spec)
    rows = []
    for target in _targets(data, spec):
        train, gan_pool, test = _split(data, target, spec)
        gan_state = None
        if source == "fake" and spec.adapt_count and spec.augmentation_method == "csgan":
            key = _gan_key(spec, target)
            if gan_cache is not None and key in gan_cache:
                gan_state = gan_cache[key]
            else:
                gan_state = train_subject_gans(gan_pool, spec, n_jobs, train)
                if gan_cache is not None:
                    gan_cache[key] = gan_state
        adapt = _adapt_set(source, gan_pool, spec, target, gan_state, spec.adapt_count, train)
        _check_leakage(test, gan_pool, np.empty(0, int) if adapt is None else adapt.trial_ids)
        acc, kap, det = _fit_and_score(train, adapt, test, spec, target)
        log.info("%s: target %s accuracy %.4f", spec.protocol, target, acc)
        rows.append((target, acc, kap, det))
    label = name or (f"adapt {spec.adapt_count} {source}" if spec.adapt_count else "loo")
    return _report(label, spec, rows, t0, with_lambdas=source == "fake")


def run_loo(data: dict, spec: ExperimentSpec, **kw) -> ExperimentReport:
    """Leave-one-subject-out: no target trials enter training."""
    spec = dataclasses.replace(spec.resolved(), adapt_count=0)
    kw.setdefault("name", "loo")
    return run_adaptive(data, spec, source="real", **kw)


def run_ablation(data: dict, spec: ExperimentSpec, **kw) -> ExperimentReport:
    """Adaptive training with samples from a CS-GAN whose named mechanisms are removed."""
    if spec.augmentation_method != "csgan":
        raise ConfigError("ablation requires augmentation_method='csgan'")
    name = "ablation " + ("+".join(spec.ablation_flags) or "none")
    kw.setdefault("name", name)
    return run_adaptive(data, spec, source="fake", **kw)


def sweep_counts(data: dict, spec: ExperimentSpec, counts=None, n_jobs: int = 1):
    """One adaptive report per augmentation count; GANs are trained once per target."""
    spec = spec.resolved()
    counts = list(spec.sweep if counts is None else counts)
    data = prepare(data, spec)
    cache = {}
    return [run_adaptive(data, dataclasses.replace(spec, adapt_count=c), source="fake",
                         n_jobs=n_jobs, prepared=True, gan_cache=cache, name=f"sweep {c}")
            for c in counts]


def run_experiment(data: dict, spec: ExperimentSpec, n_jobs: int = 1):
    """Dispatch on ``spec.protocol``; returns a list of reports.

    Adaptive and ablation runs are paired against a leave-one-subject-out
    reference computed with the same seeds.
    """
    spec = spec.resolved()
    if spec.protocol == "loo":
        return [run_loo(data, spec)]
    loo = run_loo(data, spec)
    if spec.protocol == "adapt_real":
        reps = [run_adaptive(data, spec, source="real")]
    elif spec.protocol == "adapt_fake":
        reps = [run_adaptive(data, spec, source="fake", n_jobs=n_jobs)]
    elif spec.protocol == "ablation":
        reps = [run_ablation(data, spec, n_jobs=n_jobs)]
    else:
        reps = sweep_counts(data, spec, n_jobs=n_jobs)
    for r in reps:
        try:
            r.compare_to(loo)
        except DegenerateTestError:
            log.warning("%s: paired test undefined against loo", r.name)
    return [loo] + reps
