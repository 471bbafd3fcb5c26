"""Forward computation of the topic model.

Per document with token embeddings H (N x D) and reference embedding e_d:

* each token gets a soft topic distribution ``t_i = softmax(encoder(h_i))``
  from a two-layer MLP encoder;
* an importance network (input projection, transformer encoder without
  positional encoding, Gaussian head) emits per-token ``(mu_i, sigma_i)``;
  sampled scores ``alpha_i = mu_i + sigma_i * eps_i`` are softmax-normalized
  into importance weights ``beta``;
* the document topic vector is ``theta = softmax(sum_i beta_i * t_i)`` and is
  decoded back into embedding space as ``theta @ W_d``.

Losses: mean-squared reconstruction against e_d, an entropy regularizer on
beta, and the KL of each N(mu_i, sigma_i^2) against N(0, 1), combined as
``L = L_rec + lambda_ent * L_ent + lambda_kl * L_kl``.

All forward math runs in float32; verification code may clone the model to
float64.  Parameters are immutable during forward passes, so concurrent
inference over shared params is safe.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from .corpus import DocumentRecord
from .errors import NonFiniteValue, NonPositiveSigma, ShapeMismatch


@dataclass
class ModelConfig:
    D: int
    K: int
    encoder_hidden: int = 512
    imp_model_dim: int = 256
    imp_layers: int = 2
    imp_heads: int = 4
    lambda_ent: float = 0.05
    lambda_kl: float = 0.1
    entropy_sign_follows_prose: bool = True

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if self.K < 2:
            raise ValueError("K must be >= 2")
        for name in ("encoder_hidden", "imp_model_dim", "imp_layers", "imp_heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.imp_model_dim % self.imp_heads != 0:
            raise ValueError(
                f"imp_model_dim ({self.imp_model_dim}) must be divisible by "
                f"imp_heads ({self.imp_heads})"
            )
        if self.lambda_ent < 0 or self.lambda_kl < 0:
            raise ValueError("loss weights must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


def stable_softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Softmax with max-subtraction; shift-invariant and overflow-safe."""
    z = x - x.amax(dim=dim, keepdim=True)
    e = z.exp()
    return e / e.sum(dim=dim, keepdim=True)


class TransformerBlock(nn.Module):
    """Post-norm encoder block: self-attention then feed-forward, no dropout."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ValueError("dim must be divisible by heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.o = nn.Linear(dim, dim)
        self.ff1 = nn.Linear(dim, 4 * dim)
        self.ff2 = nn.Linear(4 * dim, dim)
        self.ln1 = nn.LayerNorm(dim)
        self.ln2 = nn.LayerNorm(dim)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (..., N, dim); any number of leading batch dims
        n, dim = x.shape[-2], x.shape[-1]
        lead = x.shape[:-2]

        def split(t):  # (..., N, dim) -> (..., heads, N, head_dim)
            return t.reshape(*lead, n, self.heads, self.head_dim).transpose(-3, -2)

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        attn = stable_softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(-3, -2).reshape(*lead, n, dim)
        x = self.ln1(x + self.o(ctx))
        x = self.ln2(x + self.ff2(self.act(self.ff1(x))))
        return x


class ImportanceNetwork(nn.Module):
    """Projection -> transformer encoder -> Gaussian head over tokens.

    No positional encoding: the input embeddings are already contextual, so
    the network is permutation-equivariant by construction.  The head emits
    (mu, log-variance); sigma = exp(0.5 * logvar) is positive by design.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.proj = nn.Linear(config.D, config.imp_model_dim)
        self.blocks = nn.ModuleList(
            TransformerBlock(config.imp_model_dim, config.imp_heads)
            for _ in range(config.imp_layers)
        )
        self.head = nn.Linear(config.imp_model_dim, 2)

    def forward(self, H: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self.proj(H)
        for block in self.blocks:
            x = block(x)
        out = self.head(x)
        mu = out[..., 0]
        sigma = torch.exp(0.5 * out[..., 1])
        return mu, sigma


class TopicModel(nn.Module):
    """Encoder, importance network, and decoder as one parameter set."""

    def __init__(self, config: ModelConfig, seed: Optional[int] = None):
        super().__init__()
        self.config = config
        self.encoder = nn.Sequential(
            nn.Linear(config.D, config.encoder_hidden),
            nn.GELU(),
            nn.Linear(config.encoder_hidden, config.K),
        )
        self.importance = ImportanceNetwork(config)
        self.decoder = nn.Parameter(torch.empty(config.K, config.D))
        self.reset_parameters(seed)

    def reset_parameters(self, seed: Optional[int] = None) -> None:
        """Xavier-uniform weights, zero biases, unit layer-norm gains.

        The zero log-variance bias puts sigma near 1 at the start, so the
        initial KL stays close to zero while the Gaussian head's small
        random weights keep the per-token scores from being exactly
        symmetric (an exact tie is a stationary point of the entropy term).
        """
        gen = torch.Generator()
        if seed is not None:
            gen.manual_seed(seed)
        with torch.no_grad():
            for name, param in sorted(self.named_parameters(), key=lambda p: p[0]):
                if name.endswith("ln1.weight") or name.endswith("ln2.weight"):
                    param.fill_(1.0)
                elif param.ndim >= 2:
                    fan_out, fan_in = param.shape[0], param.shape[1]
                    bound = math.sqrt(6.0 / (fan_in + fan_out))
                    param.copy_(
                        (torch.rand(param.shape, generator=gen, dtype=torch.float64) * 2 - 1)
                        .mul(bound)
                        .to(param.dtype)
                    )
                else:
                    param.zero_()

    def token_topics(self, H: torch.Tensor) -> torch.Tensor:
        return stable_softmax(self.encoder(H), dim=-1)

    def forward(self, H: torch.Tensor, noise: Optional[torch.Tensor] = None) -> "ForwardTrace":
        return forward_trace(self, H, noise)


@dataclass
class ForwardTrace:
    """Everything one forward pass produces, kept for losses and extraction."""

    t: torch.Tensor        # (N, K) token topic distributions
    mu: torch.Tensor       # (N,)
    sigma: torch.Tensor    # (N,), positive
    alpha: torch.Tensor    # (N,) sampled (or deterministic) scores
    beta: torch.Tensor     # (N,) importance weights, sums to 1
    theta: torch.Tensor    # (K,) document topic vector, sums to 1
    e_recon: torch.Tensor  # (D,) decoded document embedding


# spec-level operations ------------------------------------------------------

def encode_token_topics(H: torch.Tensor, model: TopicModel) -> torch.Tensor:
    """Per-token topic distributions: softmax over the encoder MLP output."""
    _check_input(H, model)
    return model.token_topics(H)


def importance_forward(H: torch.Tensor, model: TopicModel) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-token Gaussian parameters (mu, sigma) from the importance network."""
    _check_input(H, model)
    return model.importance(H)


def sample_importance(mu: torch.Tensor, sigma: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    """Reparameterized draw alpha = mu + sigma * eps; noise comes from the caller."""
    if mu.shape != sigma.shape or mu.shape != noise.shape:
        raise ShapeMismatch(
            f"mu {tuple(mu.shape)}, sigma {tuple(sigma.shape)}, noise {tuple(noise.shape)}"
        )
    if (sigma <= 0).any():
        raise NonPositiveSigma("sigma must be positive elementwise")
    return mu + sigma * noise


def normalize_importance(alpha: torch.Tensor) -> torch.Tensor:
    """Importance weights beta = softmax(alpha) over the document's tokens."""
    if not torch.isfinite(alpha).all():
        raise NonFiniteValue("alpha contains non-finite values")
    return stable_softmax(alpha, dim=-1)


def document_topic(t: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    """theta = softmax(sum_i beta_i t_i); the outer softmax is intentional."""
    if t.ndim != beta.ndim + 1 or t.shape[-2] != beta.shape[-1] or t.shape[:-2] != beta.shape[:-1]:
        raise ShapeMismatch(f"t {tuple(t.shape)} vs beta {tuple(beta.shape)}")
    mixed = (beta.unsqueeze(-2) @ t).squeeze(-2)
    return stable_softmax(mixed, dim=-1)


def decode(theta: torch.Tensor, W_d: torch.Tensor) -> torch.Tensor:
    """Predicted document embedding theta @ W_d."""
    if W_d.ndim != 2 or theta.shape[-1] != W_d.shape[0]:
        raise ShapeMismatch(f"theta {tuple(theta.shape)} vs W_d {tuple(W_d.shape)}")
    return theta @ W_d


def loss_rec(e_recon: torch.Tensor, e_d: torch.Tensor) -> torch.Tensor:
    """Mean squared error over the embedding coordinates."""
    if e_recon.shape != e_d.shape:
        raise ShapeMismatch(f"{tuple(e_recon.shape)} vs {tuple(e_d.shape)}")
    return ((e_recon - e_d) ** 2).mean()


def loss_ent(beta: torch.Tensor, sign_follows_prose: bool = True) -> torch.Tensor:
    """Entropy regularizer on the importance weights.

    With ``sign_follows_prose`` this is the entropy H(beta) = -sum beta log beta,
    so minimizing the total loss penalizes uniform importance.  With the flag
    off it is the literal sum beta log beta (= -H).  0 * log 0 counts as 0.
    """
    s = torch.xlogy(beta, beta).sum()
    return -s if sign_follows_prose else s


def loss_kl(mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """KL of N(mu_i, sigma_i^2) against N(0,1), summed over the document's tokens."""
    if mu.shape != sigma.shape:
        raise ShapeMismatch(f"mu {tuple(mu.shape)} vs sigma {tuple(sigma.shape)}")
    if (sigma <= 0).any():
        raise NonPositiveSigma("sigma must be positive elementwise")
    return (-torch.log(sigma) + (sigma**2 + mu**2 - 1) / 2).sum()


def total_loss(
    rec: torch.Tensor, ent: torch.Tensor, kl: torch.Tensor, config: ModelConfig
) -> torch.Tensor:
    return rec + config.lambda_ent * ent + config.lambda_kl * kl


def forward_trace(
    model: TopicModel, H: torch.Tensor, noise: Optional[torch.Tensor] = None
) -> ForwardTrace:
    """Full forward pass; with ``noise=None`` the scores are deterministic (alpha = mu)."""
    _check_input(H, model)
    t = model.token_topics(H)
    mu, sigma = model.importance(H)
    alpha = mu if noise is None else sample_importance(mu, sigma, noise)
    beta = normalize_importance(alpha)
    theta = document_topic(t, beta)
    e_recon = decode(theta, model.decoder)
    return ForwardTrace(t=t, mu=mu, sigma=sigma, alpha=alpha, beta=beta, theta=theta, e_recon=e_recon)


def loss_parts(
    model: TopicModel,
    H: torch.Tensor,
    e_d: torch.Tensor,
    noise: Optional[torch.Tensor] = None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(rec, ent, kl) for one document; shared by the trainer and verification."""
    trace = forward_trace(model, H, noise)
    rec = loss_rec(trace.e_recon, e_d)
    ent = loss_ent(trace.beta, model.config.entropy_sign_follows_prose)
    kl = loss_kl(trace.mu, trace.sigma)
    return rec, ent, kl


def batched_loss_parts(
    model: TopicModel,
    H: torch.Tensor,
    e_d: torch.Tensor,
    noise: Optional[torch.Tensor] = None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-document (rec, ent, kl) for a stack of equal-length documents.

    H is (B, N, D), e_d (B, D), noise (B, N) or None for the deterministic
    path.  Same formulas as the single-document route, vectorized over B;
    each returned tensor has shape (B,).
    """
    if H.ndim != 3 or H.shape[-1] != model.config.D:
        raise ShapeMismatch(f"H has shape {tuple(H.shape)}, expected (B, N, {model.config.D})")
    if e_d.shape != (H.shape[0], H.shape[2]):
        raise ShapeMismatch(f"e_d has shape {tuple(e_d.shape)}, expected {(H.shape[0], H.shape[2])}")
    t = model.token_topics(H)
    mu, sigma = model.importance(H)
    alpha = mu if noise is None else sample_importance(mu, sigma, noise)
    beta = normalize_importance(alpha)
    theta = document_topic(t, beta)
    e_recon = decode(theta, model.decoder)
    rec = ((e_recon - e_d) ** 2).mean(dim=-1)
    s = torch.xlogy(beta, beta).sum(dim=-1)
    ent = -s if model.config.entropy_sign_follows_prose else s
    kl = (-torch.log(sigma) + (sigma**2 + mu**2 - 1) / 2).sum(dim=-1)
    return rec, ent, kl


def infer_theta(
    record: DocumentRecord,
    model: TopicModel,
    deterministic: bool = True,
    noise: Optional[torch.Tensor] = None,
) -> ForwardTrace:
    """Forward pass over a stored document.

    ``deterministic=True`` uses alpha = mu (the inference-time convention);
    otherwise the caller must supply the noise vector.
    """
    if record.dim != model.config.D:
        raise ShapeMismatch(
            f"document {record.doc_id!r} has D={record.dim}, model expects {model.config.D}"
        )
    H = torch.from_numpy(np.ascontiguousarray(record.H, dtype=np.float32))
    H = H.to(next(model.parameters()).dtype)
    if deterministic:
        noise = None
    elif noise is None:
        raise ValueError("non-deterministic inference requires a noise vector")
    with torch.no_grad():
        return forward_trace(model, H, noise)


def _check_input(H: torch.Tensor, model: TopicModel) -> None:
    if H.ndim != 2 or H.shape[1] != model.config.D:
        raise ShapeMismatch(
            f"H has shape {tuple(H.shape)}, expected (N, {model.config.D})"
        )
    if H.shape[0] < 1:
        raise ShapeMismatch("H must contain at least one token")
