"""Adversarial training of one class model, checkpoints and sampling."""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np
import torch

from ..dataset import AugmentationSet, EpochSet
from ..errors import ConfigError, InsufficientDataError, TrainingDivergedError, FormatError
from ..tensorio import load_state, save_state
from .losses import LossWeights, SpatialTensors, discriminator_loss, generator_loss
from .networks import Discriminator, DiscriminatorConfig, Generator, GeneratorConfig

__all__ = ["GanTrainConfig", "GanCheckpoint", "train_csgan", "sample"]

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("iteration", "w_eeg", "w_cs", "gp_eeg", "gp_cs", "cov", "ev",
                   "g_total", "d_total")


@dataclass(frozen=True)
class GanTrainConfig:
    lr: float = 1e-4
    adam_beta1: float = 0.1
    adam_beta2: float = 0.999
    batch_size: int = 5
    lambda_gp: float = 10.0
    lambda_cs: float = 0.1
    lambda_cov: float = 3.0
    lambda_ev: float = 10.0
    critic_steps: int = 5
    iterations: int = 4000
    use_cs: bool = True
    seed: int = 0
    bn_mode: str = "running"
    snapshot_every: int = 50

    def __post_init__(self):
        if self.batch_size < 1 or self.critic_steps < 1 or self.iterations < 0:
            raise ConfigError("batch_size, critic_steps must be >= 1 and iterations >= 0")
        if self.bn_mode not in ("running", "batch"):
            raise ConfigError(f"bn_mode must be 'running' or 'batch', got {self.bn_mode!r}")
        self.weights  # validates lambdas

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_gp, self.lambda_cs, self.lambda_cov, self.lambda_ev)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class GanCheckpoint:
    generator_state: dict
    discriminator_state: dict
    config: GanTrainConfig
    generator_config: GeneratorConfig
    discriminator_config: DiscriminatorConfig
    subject: str = ""
    class_id: int = 0
    history: dict = field(default_factory=lambda: {c: [] for c in HISTORY_COLUMNS})
    rng_state: bytes = b""
    iterations_done: int = 0

    @property
    def name(self):
        return f"{self.subject}_class{self.class_id}_seed{self.config.seed}"

    def build_generator(self) -> Generator:
        with torch.random.fork_rng(devices=[]):
            g = Generator(self.generator_config)
        g.load_state_dict(self.generator_state)
        return g

    def build_discriminator(self) -> Discriminator:
        with torch.random.fork_rng(devices=[]):
            d = Discriminator(self.discriminator_config)
        d.load_state_dict(self.discriminator_state)
        return d

    def save(self, path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        meta = {
            "subject": self.subject, "class_id": self.class_id,
            "iterations_done": self.iterations_done,
            "train": self.config.to_dict(),
            "generator": self.generator_config.to_dict(),
            "discriminator": self.discriminator_config.to_dict(),
        }
        (path / "config.json").write_text(json.dumps(meta, indent=1))
        state = {f"G.{k}": v for k, v in self.generator_state.items()}
        state.update({f"D.{k}": v for k, v in self.discriminator_state.items()})
        save_state(state, path, "params")
        with open(path / "loss_history.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_COLUMNS)
            for row in zip(*(self.history[c] for c in HISTORY_COLUMNS)):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        (path / "rng_state.bin").write_bytes(self.rng_state)
        return path

    @classmethod
    def load(cls, path) -> "GanCheckpoint":
        path = Path(path)
        try:
            meta = json.loads((path / "config.json").read_text())
        except FileNotFoundError:
            raise FormatError(f"no config.json in {path}") from None
        state = load_state(path, "params")
        gstate = {k[2:]: v for k, v in state.items() if k.startswith("G.")}
        dstate = {k[2:]: v for k, v in state.items() if k.startswith("D.")}
        history = {c: [] for c in HISTORY_COLUMNS}
        with open(path / "loss_history.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                history["iteration"].append(int(row["iteration"]))
                for c in HISTORY_COLUMNS[1:]:
                    history[c].append(float(row[c]))
        return cls(
            generator_state=gstate, discriminator_state=dstate,
            config=GanTrainConfig.from_dict(meta["train"]),
            generator_config=GeneratorConfig.from_dict(meta["generator"]),
            discriminator_config=DiscriminatorConfig.from_dict(meta["discriminator"]),
            subject=meta["subject"], class_id=meta["class_id"], history=history,
            rng_state=(path / "rng_state.bin").read_bytes(),
            iterations_done=meta["iterations_done"])


def _snapshot(G, D, config, gcfg, dcfg, subject, class_id, history, gen, it):
    return GanCheckpoint(
        generator_state=copy.deepcopy(G.state_dict()),
        discriminator_state=copy.deepcopy(D.state_dict()),
        config=config, generator_config=gcfg, discriminator_config=dcfg,
        subject=subject, class_id=class_id,
        history={k: list(v) for k, v in history.items()},
        rng_state=bytes(gen.get_state().numpy().tobytes()), iterations_done=it)


def train_csgan(class_epochs: EpochSet, bank, class_id: int,
                config: GanTrainConfig = GanTrainConfig(), subject: str | None = None,
                log_every: int = 0) -> GanCheckpoint:
    """Train the generator/critic pair for one (subject, class).

    Parameters
    ----------
    class_epochs : EpochSet
        Standardized trials of the single class being modelled.
    bank : SpatialFilterBank
        Filters fitted on the same subject's standardized trials; supplies
        ``W`` for the CS head and the class artifacts for the constraints.
    class_id : int
        Index of the class inside ``bank``.
    config : GanTrainConfig
        ``iterations`` counts generator updates; each is preceded by
        ``critic_steps`` critic updates.

    Raises
    ------
    TrainingDivergedError
        On a non-finite loss; ``.checkpoint`` holds the latest snapshot.
    """
    x_all = np.asarray(class_epochs.epochs, dtype=np.float32)
    n, C, T = x_all.shape
    if n < config.batch_size:
        raise InsufficientDataError(f"{n} trials, batch_size={config.batch_size}")
    subject = class_epochs.subject if subject is None else subject
    gcfg = GeneratorConfig.for_montage(C, T)
    dcfg = DiscriminatorConfig(n_channels=C, n_samples=T, n_classes=bank.n_classes,
                               m=bank.m, use_cs=config.use_cs)
    st = SpatialTensors.from_bank(bank, class_id, torch.float32)
    weights = config.weights

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        G = Generator(gcfg)
        D = Discriminator(dcfg)
    gen = torch.Generator().manual_seed(config.seed)
    real_all = torch.from_numpy(x_all).unsqueeze(1)
    betas = (config.adam_beta1, config.adam_beta2)
    opt_g = torch.optim.Adam(G.parameters(), lr=config.lr, betas=betas)
    opt_d = torch.optim.Adam(D.parameters(), lr=config.lr, betas=betas)
    history = {c: [] for c in HISTORY_COLUMNS}
    bs = config.batch_size
    snap = _snapshot(G, D, config, gcfg, dcfg, subject, class_id, history, gen, 0)

    def noise():
        return torch.randn(bs, gcfg.noise_len, generator=gen)

    G.train()
    D.train()
    for it in range(1, config.iterations + 1):
        for _ in range(config.critic_steps):
            idx = torch.randperm(n, generator=gen)[:bs]
            with torch.no_grad():
                fake = G(noise())
            d_loss, d_parts = discriminator_loss(real_all[idx], fake, D, st, weights,
                                                 generator=gen)
            opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            opt_d.step()
        for p in D.parameters():
            p.requires_grad_(False)
        g_loss, g_parts = generator_loss(G(noise()), D, st, weights)
        opt_g.zero_grad(set_to_none=True)
        g_loss.backward()
        opt_g.step()
        for p in D.parameters():
            p.requires_grad_(True)

        row = {"iteration": it, "w_cs": 0.0, "gp_cs": 0.0, "cov": 0.0, "ev": 0.0}
        row.update({k: v for k, v in d_parts.items() if k in HISTORY_COLUMNS})
        row.update({k: v for k, v in g_parts.items() if k in HISTORY_COLUMNS})
        if not all(math.isfinite(row[c]) for c in HISTORY_COLUMNS[1:]):
            raise TrainingDivergedError(f"non-finite loss at iteration {it}", checkpoint=snap)
        for c in HISTORY_COLUMNS:
            history[c].append(row[c])
        if log_every and it % log_every == 0:
            log.info("%s class %d it %d: D %.4f G %.4f cov %.4f ev %.4f", subject, class_id,
                     it, row["d_total"], row["g_total"], row["cov"], row["ev"])
        if config.snapshot_every and it % config.snapshot_every == 0:
            snap = _snapshot(G, D, config, gcfg, dcfg, subject, class_id, history, gen, it)

    return _snapshot(G, D, config, gcfg, dcfg, subject, class_id, history, gen,
                     config.iterations)


def sample(checkpoint: GanCheckpoint, n: int, noise_seed: int = 0, batch_size: int = 50,
           bn_mode: str | None = None) -> AugmentationSet:
    """Draw ``n`` epochs from a trained generator.

    ``bn_mode`` 'running' (default from the checkpoint config) uses the
    batch-norm running statistics; 'batch' normalizes with each sampling
    batch's own statistics.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    bn_mode = bn_mode or checkpoint.config.bn_mode
    G = checkpoint.build_generator()
    G.train(bn_mode == "batch")
    gen = torch.Generator().manual_seed(noise_seed)
    z = torch.randn(n, checkpoint.generator_config.noise_len, generator=gen)
    out = []
    with torch.no_grad():
        for i in range(0, n, batch_size):
            out.append(G(z[i:i + batch_size])[:, 0].numpy())
    epochs = np.concatenate(out).astype(np.float32)
    labels = np.full(n, checkpoint.class_id, dtype=np.int64)
    prov = [{"method": "csgan", "checkpoint": checkpoint.name, "subject": checkpoint.subject,
             "class_id": checkpoint.class_id, "noise_seed": noise_seed, "n": n,
             "bn_mode": bn_mode}]
    return AugmentationSet(epochs=epochs, labels=labels, provenance=prov)
