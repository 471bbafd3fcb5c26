"""Training loop and gradient verification.

Training is plain Adam on the mean per-batch loss.  Every source of
randomness (parameter init, epoch shuffles, per-token noise draws) comes
from one seeded generator, so a fixed seed reproduces the parameter
trajectory bitwise on a single thread.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import torch

from .checkpoint import save_checkpoint
from .corpus import Corpus, DocumentRecord
from .errors import DivergedLoss, EmptyCorpus
from .model import ModelConfig, TopicModel, batched_loss_parts, loss_parts, total_loss


@dataclass
class TrainConfig:
    batch_size: int = 8
    learning_rate: float = 2e-5
    epochs: int = 30
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_every: int = 0          # epochs between snapshots; 0 = final only
    restarts: int = 1                  # independent runs, best final loss wins
    normalize_doc_embeddings: bool = False
    plateau_patience: Optional[int] = None
    plateau_tol: float = 1e-6

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class EpochStats:
    epoch: int
    total: float
    rec: float
    ent: float
    kl: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    wall_time_s: float = 0.0
    final_checkpoint: Optional[str] = None
    selected_seed: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "epochs": [e.__dict__ for e in self.epochs],
            "wall_time_s": self.wall_time_s,
            "final_checkpoint": self.final_checkpoint,
            "selected_seed": self.selected_seed,
        }

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def train(
    corpus: Union[Corpus, Sequence[DocumentRecord]],
    model_config: ModelConfig,
    train_config: TrainConfig,
    checkpoint_dir: Optional[Path | str] = None,
) -> tuple[TopicModel, TrainReport]:
    """Optimize a fresh model over the corpus; returns (model, report).

    Documents are shuffled per epoch and per-token noise is redrawn on every
    visit, both from the run's seeded generator.  The last partial batch is
    kept; losses are means over the batch so scale is unaffected.

    With ``restarts > 1``, that many independent runs start from seeds
    ``seed, seed+1, ...`` and the one with the lowest final-epoch mean loss
    wins (ties go to the earliest seed).  The topic-corner assignment is a
    matching problem with bad local optima, exactly like k-means centroid
    init, and restart selection by loss is the standard label-free remedy.
    """
    torch.set_num_threads(1)  # determinism contract: single-threaded reductions
    records = list(corpus)
    if not records:
        raise EmptyCorpus("training corpus contains no documents")
    docs = []
    for r in records:
        H = torch.from_numpy(r.H.astype("float32", copy=True))
        e_d = torch.from_numpy(r.e_d.astype("float32", copy=True))
        if train_config.normalize_doc_embeddings:
            e_d = e_d / e_d.norm().clamp_min(1e-12)
        docs.append((r.doc_id, H, e_d))

    start = time.perf_counter()
    best = None
    for restart in range(train_config.restarts):
        run_seed = train_config.seed + restart
        # per-epoch snapshots only make sense for a single run
        snapshot_dir = checkpoint_dir if train_config.restarts == 1 else None
        model, report = _run_training(docs, model_config, train_config, run_seed, snapshot_dir)
        final = report.epochs[-1].total if report.epochs else float("inf")
        if best is None or final < best[0]:
            best = (final, model, report, run_seed)
    _, model, report, run_seed = best
    report.selected_seed = run_seed
    report.wall_time_s = time.perf_counter() - start
    if checkpoint_dir is not None:
        final_path = Path(checkpoint_dir) / "checkpoint_final.cemp"
        save_checkpoint(model, final_path)
        report.final_checkpoint = str(final_path)
    return model, report


def _run_training(
    docs: list,
    model_config: ModelConfig,
    train_config: TrainConfig,
    seed: int,
    snapshot_dir: Optional[Path | str],
) -> tuple[TopicModel, TrainReport]:
    gen = torch.Generator()
    gen.manual_seed(seed)
    model = TopicModel(model_config, seed=seed)
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=train_config.learning_rate,
        betas=(train_config.adam_beta1, train_config.adam_beta2),
        eps=train_config.adam_eps,
    )

    report = TrainReport()
    best_total = float("inf")
    stale_epochs = 0

    for epoch in range(train_config.epochs):
        order = torch.randperm(len(docs), generator=gen).tolist()
        sums = {"total": 0.0, "rec": 0.0, "ent": 0.0, "kl": 0.0}
        for batch_start in range(0, len(order), train_config.batch_size):
            batch = order[batch_start : batch_start + train_config.batch_size]
            # noise is drawn per document in shuffle order, independent of
            # how documents get grouped for the stacked forward below
            noises = {idx: torch.randn(docs[idx][1].shape[0], generator=gen) for idx in batch}
            by_len: dict[int, list[int]] = {}
            for idx in batch:
                by_len.setdefault(docs[idx][1].shape[0], []).append(idx)

            optimizer.zero_grad()
            rec_parts, ent_parts, kl_parts = [], [], []
            for n_tokens in sorted(by_len):
                members = by_len[n_tokens]
                H = torch.stack([docs[i][1] for i in members])
                e_d = torch.stack([docs[i][2] for i in members])
                noise = torch.stack([noises[i] for i in members])
                rec, ent, kl = batched_loss_parts(model, H, e_d, noise)
                rec_parts.append(rec)
                ent_parts.append(ent)
                kl_parts.append(kl)
            rec_mean = torch.cat(rec_parts).mean()
            ent_mean = torch.cat(ent_parts).mean()
            kl_mean = torch.cat(kl_parts).mean()
            loss = total_loss(rec_mean, ent_mean, kl_mean, model_config)
            if not torch.isfinite(loss):
                ids = [docs[i][0] for i in batch]
                raise DivergedLoss(
                    f"non-finite loss at epoch {epoch}, batch docs {ids}"
                )
            loss.backward()
            optimizer.step()
            sums["total"] += loss.item() * len(batch)
            sums["rec"] += rec_mean.item() * len(batch)
            sums["ent"] += ent_mean.item() * len(batch)
            sums["kl"] += kl_mean.item() * len(batch)

        n = len(docs)
        stats = EpochStats(
            epoch=epoch,
            total=sums["total"] / n,
            rec=sums["rec"] / n,
            ent=sums["ent"] / n,
            kl=sums["kl"] / n,
        )
        report.epochs.append(stats)

        if snapshot_dir and train_config.checkpoint_every > 0:
            if (epoch + 1) % train_config.checkpoint_every == 0:
                save_checkpoint(model, Path(snapshot_dir) / f"checkpoint_epoch{epoch:04d}.cemp")

        if train_config.plateau_patience is not None:
            if stats.total < best_total - train_config.plateau_tol:
                best_total = stats.total
                stale_epochs = 0
            else:
                stale_epochs += 1
                if stale_epochs >= train_config.plateau_patience:
                    break

    return model, report


# gradient verification ------------------------------------------------------

def _random_small_config(rng: torch.Generator) -> ModelConfig:
    def pick(options):
        i = int(torch.randint(len(options), (1,), generator=rng))
        return options[i]

    heads = pick([1, 2, 4])
    return ModelConfig(
        D=pick([2, 4, 6, 8]),
        K=pick([2, 3, 4]),
        encoder_hidden=pick([3, 4, 6]),
        imp_model_dim=heads * pick([1, 2]),
        imp_layers=pick([1, 2]),
        imp_heads=heads,
        lambda_ent=0.05,
        lambda_kl=0.1,
        entropy_sign_follows_prose=bool(pick([True, False])),
    )


def gradient_check(
    model_config: Optional[ModelConfig] = None,
    trial_count: int = 20,
    seed: int = 0,
    step: float = 1e-4,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Each trial builds a small model with fully random parameters, a random
    document (H, e_d) and a fixed noise vector, then compares the backward
    gradient of the total loss against (f(p+h) - f(p-h)) / 2h for every
    coordinate of every parameter block, all in float64.  A config of None
    draws a fresh small config per trial.
    """
    rng = torch.Generator()
    rng.manual_seed(seed)
    worst = 0.0
    for _ in range(trial_count):
        cfg = model_config or _random_small_config(rng)
        model = TopicModel(cfg).double()
        with torch.no_grad():
            for p in model.parameters():
                p.copy_(torch.rand(p.shape, generator=rng, dtype=torch.float64) - 0.5)
        n = int(torch.randint(1, 7, (1,), generator=rng))
        H = torch.randn(n, cfg.D, generator=rng, dtype=torch.float64)
        e_d = torch.randn(cfg.D, generator=rng, dtype=torch.float64)
        noise = torch.randn(n, generator=rng, dtype=torch.float64)

        def objective() -> torch.Tensor:
            rec, ent, kl = loss_parts(model, H, e_d, noise)
            return total_loss(rec, ent, kl, cfg)

        model.zero_grad()
        objective().backward()
        analytic = {name: p.grad.detach().clone() for name, p in model.named_parameters()}

        with torch.no_grad():
            for name, p in model.named_parameters():
                flat = p.view(-1)
                fd = torch.empty_like(flat)
                for i in range(flat.numel()):
                    orig = flat[i].item()
                    flat[i] = orig + step
                    hi = objective().item()
                    flat[i] = orig - step
                    lo = objective().item()
                    flat[i] = orig
                    fd[i] = (hi - lo) / (2 * step)
                a = analytic[name].view(-1)
                scale = max(a.abs().max().item(), fd.abs().max().item(), 1e-6)
                err = (a - fd).abs().max().item() / scale
                worst = max(worst, err)
    return worst
