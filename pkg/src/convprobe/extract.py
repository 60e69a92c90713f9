"""Averaged feature-map time series from the classifier's conv layers.

Each convolutional layer's activations (taken after Leaky ReLU, with phase
shuffle disabled) are averaged across channels into one series per token
and layer.  Interval slicing maps an annotated sample range into each
layer's native resolution; statistical analyses consume these native
series, while linear upsampling exists purely for display against the
waveform.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import torch

from . import container
from .audio import AudioToken, PhoneInterval
from .errors import DimensionError, IntervalError, UserInputError
from .nets.models import NetConfig, q_network_forward


@dataclass
class LayerSeries:
    token_id: str
    word: str
    layer_index: int  # 1-based: Conv1..ConvN
    values: np.ndarray
    upsampled: np.ndarray | None = None


@dataclass
class IntervalSeries:
    token_id: str
    word: str
    phone: str
    layer_index: int
    values: np.ndarray
    norm_time: np.ndarray
    start_index: int  # native-resolution offsets of the slice
    end_index: int


def average_feature_maps(act) -> np.ndarray:
    """Mean over channels of a single-token (1, C, T) activation tensor."""
    if isinstance(act, torch.Tensor):
        act = act.detach().numpy()
    act = np.asarray(act, dtype=np.float64)
    if act.ndim != 3 or act.shape[0] != 1:
        raise DimensionError(f"expected a (1, C, T) tensor, got shape {act.shape}")
    if act.shape[1] == 0:
        raise DimensionError("no channels to average")
    return act[0].mean(axis=0)


def upsample_linear(series, target_len: int) -> np.ndarray:
    """Piecewise-linear resampling to ``target_len`` points spanning [0, L-1]."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1 or len(series) < 2:
        raise UserInputError("upsampling needs a 1-D series of at least 2 points")
    if target_len < len(series):
        raise UserInputError(
            f"target length {target_len} shorter than series ({len(series)})"
        )
    pos = np.linspace(0.0, len(series) - 1.0, target_len)
    return np.interp(pos, np.arange(len(series)), series)


def extract_all_layers(
    token: AudioToken, params_q: dict, cfg: NetConfig, upsample: bool = False
) -> tuple[list[LayerSeries], np.ndarray]:
    """Averaged series for every conv layer of one token, plus final logits."""
    if len(token.samples) != cfg.input_len:
        raise DimensionError(
            f"{token.token_id}: padded length {len(token.samples)} != input_len {cfg.input_len}"
        )
    x = token.samples[None, None, :]
    out = q_network_forward(x, params_q, cfg, capture=True, shuffle_enabled=False)
    series = []
    for i, act in enumerate(out.layer_activations):
        vals = average_feature_maps(act)
        up = upsample_linear(vals, cfg.input_len) if upsample else None
        series.append(
            LayerSeries(
                token_id=token.token_id,
                word=token.word,
                layer_index=i + 1,
                values=vals,
                upsampled=up,
            )
        )
    return series, out.logits.detach().numpy()[0]


def slice_to_interval(ls: LayerSeries, iv: PhoneInterval, stride: int) -> IntervalSeries:
    """Map a padded-waveform interval onto the layer's native series.

    Native indices [floor(start / stride^layer), ceil(end / stride^layer))
    cover the interval's acoustic content; norm_time maps them linearly onto
    [0, 1].  Intervals that land on fewer than two native points cannot
    carry a normalized time axis and raise.
    """
    factor = stride**ls.layer_index
    i0 = iv.start_sample // factor
    i1 = -(-iv.end_sample // factor)  # ceil
    i1 = min(i1, len(ls.values))
    if i1 - i0 < 2:
        raise IntervalError(
            f"interval [{iv.start_sample}, {iv.end_sample}) maps to "
            f"{max(i1 - i0, 0)} point(s) at Conv{ls.layer_index}; too short"
        )
    vals = ls.values[i0:i1]
    norm_time = (np.arange(i1 - i0)) / float(i1 - i0 - 1)
    return IntervalSeries(
        token_id=ls.token_id,
        word=ls.word,
        phone=iv.phone,
        layer_index=ls.layer_index,
        values=vals,
        norm_time=norm_time,
        start_index=i0,
        end_index=i1,
    )


def export_table(series: list, path) -> None:
    """Long-format CSV: one row per series point.

    Columns: token_id, word, phone (interval slices only), layer,
    sample_index, norm_time (interval slices only), value.  Values carry 9
    significant digits.
    """
    if not series:
        raise UserInputError("nothing to export")
    kinds = {type(s) for s in series}
    if len(kinds) > 1:
        raise UserInputError("export_table needs a homogeneous list")
    interval = kinds.pop() is IntervalSeries
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if interval:
        w.writerow(["token_id", "word", "phone", "layer", "sample_index", "norm_time", "value"])
        for s in series:
            for j, (t, v) in enumerate(zip(s.norm_time, s.values)):
                w.writerow(
                    [s.token_id, s.word, s.phone, s.layer_index, s.start_index + j,
                     f"{t:.9g}", f"{v:.9g}"]
                )
    else:
        w.writerow(["token_id", "word", "layer", "sample_index", "value"])
        for s in series:
            for j, v in enumerate(s.values):
                w.writerow([s.token_id, s.word, s.layer_index, j, f"{v:.9g}"])
    container.atomic_write_text(path, buf.getvalue())
