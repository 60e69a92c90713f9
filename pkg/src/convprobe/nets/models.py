"""Generator / Discriminator / Q-network graphs and their checkpoints.

The three networks share one convolutional skeleton: the critic and the
classifier stride down the waveform with ``n_layers`` 1-D convolutions
(Leaky ReLU after each, optional phase shuffle after all but the last),
then map the flattened activations through a dense layer to one score (D)
or to the code logits (Q).  The Generator mirrors this with transposed
convolutions from a dense projection of the latent vector, tanh on the
final layer.

The Q-network's per-layer activations can be captured after Leaky ReLU and
before phase shuffle; extraction always runs with shuffling disabled.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from .. import container
from ..errors import DimensionError, UserInputError
from .kernels import (
    as_tensor3,
    check_finite,
    conv1d,
    conv1d_transposed,
    dense,
    leaky_relu,
    phase_shuffle,
    same_pad,
)

CODE_KINDS = ("categorical", "binary")


@dataclass(frozen=True)
class NetConfig:
    """Shared architecture hyperparameters."""

    input_len: int = 16384
    n_layers: int = 5
    base_channels: int = 64
    kernel_width: int = 25
    stride: int = 4
    leaky_slope: float = 0.2
    phase_shuffle_n: int = 2
    latent_z_dim: int = 100
    code_kind: str = "categorical"
    code_dim: int = 8

    def __post_init__(self):
        if self.stride < 2:
            raise UserInputError(f"stride must be >= 2, got {self.stride}")
        if self.phase_shuffle_n < 0:
            raise UserInputError("phase_shuffle_n must be >= 0")
        if self.input_len % self.stride**self.n_layers != 0:
            raise UserInputError(
                f"input_len {self.input_len} not divisible by stride^n_layers "
                f"{self.stride}^{self.n_layers}"
            )
        if self.code_kind not in CODE_KINDS:
            raise UserInputError(f"code_kind must be one of {CODE_KINDS}")
        same_pad(self.kernel_width, self.stride)

    @property
    def pad(self) -> int:
        return same_pad(self.kernel_width, self.stride)

    @property
    def latent_dim(self) -> int:
        return self.latent_z_dim + self.code_dim

    @property
    def base_len(self) -> int:
        """Time extent at the bottom of the stack."""
        return self.input_len // self.stride**self.n_layers

    def conv_channels(self) -> list[int]:
        """Channel counts after each downsampling conv: base, 2*base, ..."""
        return [self.base_channels * 2**i for i in range(self.n_layers)]

    def layer_len(self, layer: int) -> int:
        """Time extent after 0-based conv layer ``layer``."""
        return self.input_len // self.stride ** (layer + 1)

    @staticmethod
    def full_scale(code_kind: str = "categorical", code_dim: int = 8) -> "NetConfig":
        return NetConfig(code_kind=code_kind, code_dim=code_dim)

    @staticmethod
    def desk(code_kind: str = "categorical", code_dim: int = 4) -> "NetConfig":
        return NetConfig(
            input_len=4096,
            n_layers=4,
            base_channels=16,
            code_kind=code_kind,
            code_dim=code_dim,
        )


@dataclass
class QNetOutput:
    logits: torch.Tensor
    layer_activations: list[torch.Tensor] = field(default_factory=list)


def init_params(cfg: NetConfig, role: str, rng: np.random.Generator, dtype=torch.float32) -> dict[str, torch.Tensor]:
    """Fresh parameters for role 'G', 'D' or 'Q' (normal(0, 0.02) weights, zero bias)."""

    def w(*shape):
        return torch.as_tensor(0.02 * rng.standard_normal(shape), dtype=dtype)

    def b(n):
        return torch.zeros(n, dtype=dtype)

    ch = cfg.conv_channels()
    k = cfg.kernel_width
    params: dict[str, torch.Tensor] = {}
    if role in ("D", "Q"):
        ins = [1] + ch[:-1]
        for i, (ci, co) in enumerate(zip(ins, ch)):
            params[f"conv{i}.w"] = w(co, ci, k)
            params[f"conv{i}.b"] = b(co)
        flat = ch[-1] * cfg.base_len
        out_dim = 1 if role == "D" else cfg.code_dim
        params["out.w"] = w(out_dim, flat)
        params["out.b"] = b(out_dim)
    elif role == "G":
        c0 = ch[-1]
        params["dense.w"] = w(c0 * cfg.base_len, cfg.latent_dim)
        params["dense.b"] = b(c0 * cfg.base_len)
        outs = ch[-2::-1] + [1]  # e.g. 128 -> 64 -> 32 -> 16 -> 1
        cin = c0
        for i, co in enumerate(outs):
            params[f"tconv{i}.w"] = w(cin, co, k)
            params[f"tconv{i}.b"] = b(co)
            cin = co
    else:
        raise UserInputError(f"unknown network role {role!r}")
    return params


def _conv_stack(
    x: torch.Tensor,
    params: dict,
    cfg: NetConfig,
    shuffle_enabled: bool,
    rng: np.random.Generator | None,
    capture: bool,
) -> tuple[torch.Tensor, list[torch.Tensor]]:
    if shuffle_enabled and cfg.phase_shuffle_n > 0 and rng is None:
        raise UserInputError("phase shuffle enabled but no rng supplied")
    h = x
    captured: list[torch.Tensor] = []
    for i in range(cfg.n_layers):
        h = conv1d(h, params[f"conv{i}.w"], params[f"conv{i}.b"], cfg.stride, cfg.pad)
        h = leaky_relu(h, cfg.leaky_slope)
        check_finite(h, f"conv{i}")
        if h.shape[2] != cfg.layer_len(i):
            raise DimensionError(
                f"conv{i}: expected T={cfg.layer_len(i)}, got {h.shape[2]}"
            )
        if capture:
            captured.append(h)
        # phase shuffle after every layer except the last, as in the critic
        if shuffle_enabled and cfg.phase_shuffle_n > 0 and i < cfg.n_layers - 1:
            h = phase_shuffle(h, cfg.phase_shuffle_n, rng)
    return h, captured


def q_network_forward(
    x,
    params: dict,
    cfg: NetConfig,
    capture: bool = False,
    shuffle_enabled: bool = False,
    rng: np.random.Generator | None = None,
) -> QNetOutput:
    """Classifier forward pass; optionally captures shuffle-free activations."""
    x = as_tensor3(x, dtype=params["conv0.w"].dtype)
    if x.shape[2] != cfg.input_len:
        raise DimensionError(f"expected T={cfg.input_len}, got {x.shape[2]}")
    h, captured = _conv_stack(x, params, cfg, shuffle_enabled, rng, capture)
    flat = h.reshape(h.shape[0], -1)
    logits = dense(flat, params["out.w"], params["out.b"])
    check_finite(logits, "logits")
    return QNetOutput(logits=logits, layer_activations=captured)


def discriminator_forward(
    x,
    params: dict,
    cfg: NetConfig,
    shuffle_enabled: bool = True,
    rng: np.random.Generator | None = None,
) -> torch.Tensor:
    """Critic scores, one per batch item."""
    x = as_tensor3(x, dtype=params["conv0.w"].dtype)
    h, _ = _conv_stack(x, params, cfg, shuffle_enabled, rng, capture=False)
    flat = h.reshape(h.shape[0], -1)
    return dense(flat, params["out.w"], params["out.b"]).squeeze(-1)


def generator_forward(z, params: dict, cfg: NetConfig) -> torch.Tensor:
    """Map latent vectors (B, latent_z_dim + code_dim) to (B, 1, input_len) audio."""
    z = torch.as_tensor(z).to(params["dense.w"].dtype)
    if z.dim() == 1:
        z = z.unsqueeze(0)
    if z.shape[1] != cfg.latent_dim:
        raise DimensionError(
            f"latent vector must have {cfg.latent_dim} entries, got {z.shape[1]}"
        )
    h = dense(z, params["dense.w"], params["dense.b"])
    c0 = cfg.conv_channels()[-1]
    h = h.reshape(h.shape[0], c0, cfg.base_len)
    t = cfg.base_len
    for i in range(cfg.n_layers):
        t = t * cfg.stride
        h = conv1d_transposed(
            h, params[f"tconv{i}.w"], params[f"tconv{i}.b"], cfg.stride, cfg.pad, out_len=t
        )
        h = torch.tanh(h) if i == cfg.n_layers - 1 else leaky_relu(h, cfg.leaky_slope)
        check_finite(h, f"tconv{i}")
    if h.shape[2] != cfg.input_len:
        raise DimensionError(f"generator produced T={h.shape[2]}, expected {cfg.input_len}")
    return h


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, param_sets: dict[str, dict[str, torch.Tensor]], cfg: NetConfig, meta: dict | None = None) -> None:
    """Write parameter sets (e.g. {'G': ..., 'D': ..., 'Q': ...}) as float32."""
    tensors = {}
    for role, params in param_sets.items():
        for name, t in params.items():
            tensors[f"{role}/{name}"] = t.detach().cpu().numpy().astype(np.float32)
    doc = {"kind": "checkpoint", "config": asdict(cfg)}
    if meta:
        doc.update(meta)
    container.save(path, tensors, doc)


def load_checkpoint(path) -> tuple[dict[str, dict[str, torch.Tensor]], NetConfig, dict]:
    tensors, meta = container.load(path)
    if meta.get("kind") != "checkpoint":
        raise UserInputError(f"{path}: not a checkpoint container")
    cfg = NetConfig(**meta["config"])
    param_sets: dict[str, dict[str, torch.Tensor]] = {}
    for full_name, arr in tensors.items():
        role, _, name = full_name.partition("/")
        param_sets.setdefault(role, {})[name] = torch.as_tensor(arr)
    return param_sets, cfg, meta
