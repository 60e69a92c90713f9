"""WGAN-GP training with an auxiliary code-recovery (Q) objective.

The critic estimates a Wasserstein distance between real and generated
audio under a gradient penalty; the Generator additionally tries to make
its latent code recoverable by the Q-network (categorical cross-entropy
for one-hot codes, per-bit binary cross-entropy for bit codes).  The
Q-network trains exclusively on generated audio; it touches real tokens
only at evaluation time, and the loop counts batches per source so this
can be asserted.

Checkpoints capture parameters, Adam moments, the RNG state and the loss
ring buffer, so a reloaded run continues bit-identically on CPU.
"""

from __future__ import annotations

import csv
import io
import json
import time
from collections import deque
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

from . import container
from .audio import AudioToken, CorpusSplit
from .errors import DimensionError, NumericError, UserInputError
from .nets.models import (
    NetConfig,
    discriminator_forward,
    generator_forward,
    init_params,
    q_network_forward,
)

ADAM_EPS = 1e-8


@dataclass
class LatentCode:
    """Uniform(-1,1) noise plus a categorical one-hot or binary bit code."""

    z: np.ndarray
    code: np.ndarray
    kind: str

    def __post_init__(self):
        self.z = np.atleast_2d(np.asarray(self.z, dtype=np.float64))
        self.code = np.atleast_2d(np.asarray(self.code, dtype=np.float64))
        if self.kind == "categorical":
            ok = np.all(np.isin(self.code, (0.0, 1.0))) and np.all(self.code.sum(axis=1) == 1.0)
            if not ok:
                raise UserInputError("categorical code must be one-hot")
        elif self.kind == "binary":
            if not np.all(np.isin(self.code, (0.0, 1.0))):
                raise UserInputError("binary code entries must be 0/1")
        else:
            raise UserInputError(f"unknown code kind {self.kind!r}")

    def vector(self, dtype=torch.float32) -> torch.Tensor:
        return torch.as_tensor(np.concatenate([self.z, self.code], axis=1), dtype=dtype)


def sample_latent(cfg: NetConfig, batch: int, rng: np.random.Generator) -> LatentCode:
    """Uniform z; codes uniform over classes (categorical) or iid Bernoulli(1/2)."""
    z = rng.uniform(-1.0, 1.0, size=(batch, cfg.latent_z_dim))
    if cfg.code_kind == "categorical":
        idx = rng.integers(0, cfg.code_dim, size=batch)
        code = np.zeros((batch, cfg.code_dim))
        code[np.arange(batch), idx] = 1.0
    else:
        code = rng.integers(0, 2, size=(batch, cfg.code_dim)).astype(np.float64)
    return LatentCode(z=z, code=code, kind=cfg.code_kind)


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 16
    n_critic: int = 5
    lambda_gp: float = 10.0
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    lr_q: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    q_weight: float = 1.0
    checkpoint_interval: int = 500
    eval_interval: int = 100
    seed: int = 0
    collapse_floor: float = 0.01
    early_stop_accuracy: float | None = None
    loss_history_len: int = 2000

    @staticmethod
    def from_file(path) -> "TrainConfig":
        """Read JSON or key=value lines."""
        with open(path) as fh:
            text = fh.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = {}
            for line in text.splitlines():
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UserInputError(f"{path}: expected key=value, got {line!r}")
                key, _, val = line.partition("=")
                data[key.strip()] = val.strip()
        known = {f: t for f, t in TrainConfig.__annotations__.items()}
        kwargs = {}
        for key, val in data.items():
            if key not in known:
                raise UserInputError(f"{path}: unknown training option {key!r}")
            cur = getattr(TrainConfig(), key)
            if isinstance(val, str):
                val = None if val.lower() == "none" else val
            if val is None:
                kwargs[key] = None
            elif isinstance(cur, bool):
                kwargs[key] = str(val).lower() in ("1", "true", "yes")
            elif isinstance(cur, int) and not isinstance(val, float):
                kwargs[key] = int(val)
            else:
                kwargs[key] = float(val)
        return TrainConfig(**kwargs)


@dataclass
class TrainState:
    step: int
    params_g: dict[str, torch.Tensor]
    params_d: dict[str, torch.Tensor]
    params_q: dict[str, torch.Tensor]
    moments: dict[str, dict[str, torch.Tensor]]
    rng: np.random.Generator
    loss_history: deque = field(default_factory=lambda: deque(maxlen=2000))
    counters: dict[str, int] = field(default_factory=dict)


@dataclass
class TrainResult:
    state: TrainState
    status: str  # ok | early_stop | collapsed | diverged
    best_accuracy: float | None
    best_params_q: dict[str, torch.Tensor] | None
    history: list[tuple[int, float, float, float]]
    eval_trace: list[tuple[int, float]]


def _adam_init(params: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    out = {}
    for name, p in params.items():
        out[f"{name}.m"] = torch.zeros_like(p)
        out[f"{name}.v"] = torch.zeros_like(p)
    return out


def _adam_step(params, grads, moments, lr, beta1, beta2, t):
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name]
        m = moments[f"{name}.m"]
        v = moments[f"{name}.v"]
        m.mul_(beta1).add_(g, alpha=1.0 - beta1)
        v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
        p.sub_((lr / c1) * m / ((v / c2).sqrt() + ADAM_EPS))


def _leaves(params):
    return {k: v.detach().clone().requires_grad_(True) for k, v in params.items()}


def d_loss_wgan_gp(real, fake, params_d, critic_apply, lambda_gp, rng: np.random.Generator):
    """Critic loss with gradient penalty; returns (loss tensor, gradient dict).

    ``critic_apply(params, x)`` must return one score per batch item built
    from differentiable kernels.  Interpolates use one uniform epsilon per
    real/fake pair.
    """
    real = torch.as_tensor(real)
    fake = torch.as_tensor(fake)
    if real.shape != fake.shape:
        raise DimensionError(f"real {tuple(real.shape)} and fake {tuple(fake.shape)} differ")
    leaves = _leaves(params_d)
    d_real = critic_apply(leaves, real)
    d_fake = critic_apply(leaves, fake)
    eps = torch.as_tensor(
        rng.uniform(size=(real.shape[0],) + (1,) * (real.dim() - 1))
    ).to(real.dtype)
    x_hat = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
    d_hat = critic_apply(leaves, x_hat)
    (g,) = torch.autograd.grad(d_hat.sum(), x_hat, create_graph=True)
    norms = g.reshape(g.shape[0], -1).norm(dim=1)
    penalty = ((norms - 1.0) ** 2).mean()
    loss = d_fake.mean() - d_real.mean() + lambda_gp * penalty
    if not torch.isfinite(loss):
        raise NumericError("non-finite critic loss")
    gs = torch.autograd.grad(loss, list(leaves.values()), allow_unused=True)
    grads = {
        name: (torch.zeros_like(p) if g is None else g.detach())
        for (name, p), g in zip(leaves.items(), gs)
    }
    return loss.detach(), grads


def q_code_loss(q_logits: torch.Tensor, code: LatentCode) -> torch.Tensor:
    """Cross-entropy of recovered codes: categorical CE or per-bit BCE sum."""
    target = torch.as_tensor(code.code).to(q_logits.dtype)
    if q_logits.shape != target.shape:
        raise DimensionError(
            f"q logits {tuple(q_logits.shape)} vs code {tuple(target.shape)}"
        )
    if code.kind == "categorical":
        logp = torch.log_softmax(q_logits, dim=1)
        return -(target * logp).sum(dim=1).mean()
    per_bit = torch.nn.functional.binary_cross_entropy_with_logits(
        q_logits, target, reduction="none"
    )
    return per_bit.sum(dim=1).mean()


def g_q_loss(fake_logits_d: torch.Tensor, q_logits: torch.Tensor, code: LatentCode, code_kind: str, q_weight: float = 1.0) -> torch.Tensor:
    """Generator objective: -mean critic score plus the code-recovery term."""
    if code_kind != code.kind:
        raise UserInputError(f"code kind mismatch: {code_kind} vs {code.kind}")
    return -torch.as_tensor(fake_logits_d).mean() + q_weight * q_code_loss(q_logits, code)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows = true class (sorted words), cols = observed codes
    words: list[str]
    codes: list[int]
    assignment: dict[str, int]


def _predict_codes(tokens, params_q, cfg, batch=32) -> np.ndarray:
    preds = []
    for i in range(0, len(tokens), batch):
        chunk = tokens[i : i + batch]
        x = np.stack([t.samples for t in chunk])[:, None, :]
        out = q_network_forward(x, params_q, cfg, capture=False, shuffle_enabled=False)
        logits = out.logits.detach().numpy()
        if cfg.code_kind == "categorical":
            preds.append(np.argmax(logits, axis=1))
        else:
            bits = (logits > 0.0).astype(np.int64)
            preds.append(bits @ (2 ** np.arange(cfg.code_dim)))
    return np.concatenate(preds)


def eval_q_accuracy(test: list[AudioToken], params_q, cfg: NetConfig) -> EvalResult:
    """Hungarian-matched agreement between emergent codes and word labels."""
    if not test:
        raise UserInputError("empty evaluation set")
    words = sorted({t.word for t in test})
    word_idx = {w: i for i, w in enumerate(words)}
    preds = _predict_codes(test, params_q, cfg)
    codes = sorted(set(preds.tolist()))
    code_idx = {c: j for j, c in enumerate(codes)}
    counts = np.zeros((len(words), len(codes)), dtype=np.int64)
    for tok, c in zip(test, preds):
        counts[word_idx[tok.word], code_idx[c]] += 1
    rows, cols = linear_sum_assignment(-counts)
    matched = counts[rows, cols].sum()
    assignment = {words[r]: codes[c] for r, c in zip(rows, cols)}
    return EvalResult(
        accuracy=float(matched) / len(test),
        confusion=counts,
        words=words,
        codes=codes,
        assignment=assignment,
    )


def generation_diversity(params_g, cfg, rng, probes: int = 16) -> float:
    """Mean pairwise per-sample RMS distance between generated probes."""
    code = sample_latent(cfg, probes, rng)
    with torch.no_grad():
        x = generator_forward(code.vector(), params_g, cfg).reshape(probes, -1).numpy()
    d = 0.0
    n = 0
    for i in range(probes):
        for j in range(i + 1, probes):
            d += float(np.sqrt(np.mean((x[i] - x[j]) ** 2)))
            n += 1
    return d / max(n, 1)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def init_train_state(cfg: NetConfig, tcfg: TrainConfig) -> TrainState:
    rng = np.random.default_rng(tcfg.seed)
    params_g = init_params(cfg, "G", rng)
    params_d = init_params(cfg, "D", rng)
    params_q = init_params(cfg, "Q", rng)
    moments = {
        "G": _adam_init(params_g),
        "D": _adam_init(params_d),
        "Q": _adam_init(params_q),
    }
    return TrainState(
        step=0,
        params_g=params_g,
        params_d=params_d,
        params_q=params_q,
        moments=moments,
        rng=rng,
        loss_history=deque(maxlen=tcfg.loss_history_len),
        counters={"q_real_batches": 0, "q_fake_batches": 0},
    )


def _batch_real(train_tokens, batch, rng) -> torch.Tensor:
    idx = rng.integers(0, len(train_tokens), size=batch)
    x = np.stack([train_tokens[i].samples for i in idx])[:, None, :]
    return torch.as_tensor(x, dtype=torch.float32)


def train(
    corpus: CorpusSplit,
    cfg: NetConfig,
    tcfg: TrainConfig,
    checkpoint_path=None,
    loss_csv_path=None,
    state: TrainState | None = None,
    quiet: bool = True,
) -> TrainResult:
    """Run the alternating critic / generator+classifier loop.

    Per step: ``n_critic`` critic updates on (real, generated) batches, then
    one joint update in which the Generator descends the critic score plus
    the code loss and the Q-network descends the code loss alone, on the
    same generated batch.  Q never receives real audio.
    """
    if not corpus.train:
        raise UserInputError("training set is empty")
    if state is None:
        state = init_train_state(cfg, tcfg)
    rng = state.rng

    def critic_apply(p, x):
        return discriminator_forward(x, p, cfg, shuffle_enabled=True, rng=rng)

    history: list[tuple[int, float, float, float]] = []
    eval_trace: list[tuple[int, float]] = []
    best_acc = None
    best_params_q = None
    status = "ok"
    start_step = state.step
    t0 = time.monotonic()

    def snapshot_q():
        return {k: v.detach().clone() for k, v in state.params_q.items()}

    last_good = None
    try:
        while state.step < tcfg.steps:
            state.step += 1
            t = state.step
            d_loss_val = 0.0
            for _ in range(tcfg.n_critic):
                real = _batch_real(corpus.train, tcfg.batch_size, rng)
                lat = sample_latent(cfg, tcfg.batch_size, rng)
                with torch.no_grad():
                    fake = generator_forward(lat.vector(), state.params_g, cfg)
                d_loss, grads_d = d_loss_wgan_gp(
                    real, fake, state.params_d, critic_apply, tcfg.lambda_gp, rng
                )
                _adam_step(
                    state.params_d, grads_d, state.moments["D"],
                    tcfg.lr_d, tcfg.beta1, tcfg.beta2, t,
                )
                d_loss_val = float(d_loss)

            lat = sample_latent(cfg, tcfg.batch_size, rng)
            leaves_g = _leaves(state.params_g)
            leaves_q = _leaves(state.params_q)
            fake = generator_forward(lat.vector(), leaves_g, cfg)
            d_fake = discriminator_forward(fake, state.params_d, cfg, shuffle_enabled=True, rng=rng)
            q_out = q_network_forward(fake, leaves_q, cfg, shuffle_enabled=True, rng=rng)
            state.counters["q_fake_batches"] += 1
            q_term = q_code_loss(q_out.logits, lat)
            g_loss = -d_fake.mean() + tcfg.q_weight * q_term
            if not (torch.isfinite(g_loss) and np.isfinite(d_loss_val)):
                raise NumericError("non-finite loss")
            gs_g = torch.autograd.grad(g_loss, list(leaves_g.values()), retain_graph=True)
            gs_q = torch.autograd.grad(q_term, list(leaves_q.values()))
            _adam_step(
                state.params_g,
                dict(zip(leaves_g.keys(), (g.detach() for g in gs_g))),
                state.moments["G"], tcfg.lr_g, tcfg.beta1, tcfg.beta2, t,
            )
            _adam_step(
                state.params_q,
                dict(zip(leaves_q.keys(), (g.detach() for g in gs_q))),
                state.moments["Q"], tcfg.lr_q, tcfg.beta1, tcfg.beta2, t,
            )

            g_loss_val = float(g_loss)
            q_loss_val = float(q_term)
            state.loss_history.append((t, d_loss_val, g_loss_val, q_loss_val))
            history.append((t, d_loss_val, g_loss_val, q_loss_val))

            if tcfg.eval_interval and t % tcfg.eval_interval == 0:
                if corpus.test:
                    acc = eval_q_accuracy(corpus.test, state.params_q, cfg).accuracy
                    eval_trace.append((t, acc))
                    if best_acc is None or acc > best_acc:
                        best_acc = acc
                        best_params_q = snapshot_q()
                    if not quiet:
                        el = time.monotonic() - t0
                        print(f"step {t}: d={d_loss_val:.3f} q={q_loss_val:.3f} "
                              f"acc={acc:.3f} ({el:.0f}s)", flush=True)
                    if (
                        tcfg.early_stop_accuracy is not None
                        and acc >= tcfg.early_stop_accuracy
                    ):
                        status = "early_stop"
                        break
                div = generation_diversity(state.params_g, cfg, rng)
                if div < tcfg.collapse_floor:
                    status = "collapsed"
                    break

            if checkpoint_path and tcfg.checkpoint_interval and t % tcfg.checkpoint_interval == 0:
                save_train_state(checkpoint_path, state, cfg, tcfg)
                last_good = t
    except NumericError:
        status = "diverged"
        if checkpoint_path and last_good is None:
            # no checkpoint yet: keep the freshest finite parameters
            save_train_state(checkpoint_path, state, cfg, tcfg)

    if checkpoint_path and status != "diverged":
        save_train_state(checkpoint_path, state, cfg, tcfg)
    if loss_csv_path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "d_loss", "g_loss", "q_loss"])
        for row in history:
            w.writerow([row[0]] + [f"{v:.9g}" for v in row[1:]])
        container.atomic_write_text(loss_csv_path, buf.getvalue())
    return TrainResult(
        state=state,
        status=status,
        best_accuracy=best_acc,
        best_params_q=best_params_q,
        history=history,
        eval_trace=eval_trace,
    )


# ---------------------------------------------------------------------------
# Checkpoint round trip (parameters + moments + RNG + loss ring buffer)
# ---------------------------------------------------------------------------


def save_train_state(path, state: TrainState, cfg: NetConfig, tcfg: TrainConfig) -> None:
    tensors: dict[str, np.ndarray] = {}
    for role, params in (("G", state.params_g), ("D", state.params_d), ("Q", state.params_q)):
        for name, t in params.items():
            tensors[f"{role}/{name}"] = t.detach().numpy().astype(np.float32)
        for name, t in state.moments[role].items():
            tensors[f"adam{role}/{name}"] = t.detach().numpy().astype(np.float32)
    meta = {
        "kind": "checkpoint",
        "config": asdict(cfg),
        "train_config": asdict(tcfg),
        "step": state.step,
        "rng_state": json.loads(json.dumps(state.rng.bit_generator.state)),
        "loss_history": [list(row) for row in state.loss_history],
        "counters": state.counters,
    }
    container.save(path, tensors, meta)


def load_train_state(path) -> tuple[TrainState, NetConfig, TrainConfig]:
    tensors, meta = container.load(path)
    if meta.get("kind") != "checkpoint":
        raise UserInputError(f"{path}: not a training checkpoint")
    cfg = NetConfig(**meta["config"])
    tc_raw = dict(meta["train_config"])
    tcfg = TrainConfig(**tc_raw)
    sets: dict[str, dict[str, torch.Tensor]] = {"G": {}, "D": {}, "Q": {}}
    moments: dict[str, dict[str, torch.Tensor]] = {"G": {}, "D": {}, "Q": {}}
    for full, arr in tensors.items():
        group, _, name = full.partition("/")
        t = torch.as_tensor(arr)
        if group.startswith("adam"):
            moments[group[4:]][name] = t
        else:
            sets[group][name] = t
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    state = TrainState(
        step=meta["step"],
        params_g=sets["G"],
        params_d=sets["D"],
        params_q=sets["Q"],
        moments=moments,
        rng=rng,
        loss_history=deque(
            [tuple(r) for r in meta["loss_history"]],
            maxlen=tcfg.loss_history_len,
        ),
        counters=dict(meta["counters"]),
    )
    return state, cfg, tcfg
