"""Multilingual multi-speaker acoustic model.

One encoder per language (phoneme embedding table plus a convolutional
prenet) produces a context matrix per utterance. The decoder keeps a
fixed-size working-memory buffer: each output frame, a monotonic mixture
attention addressed from the flattened buffer pools the context, a shallow
update network writes one new buffer row (shifting the rest down), a
two-layer LSTM recurrency carries long-term state, and a shallow output
network maps buffer plus recurrency state to one mel frame and a stop
logit.

Speaker identity enters as a learned embedding concatenated into the
buffer-update input. Only the addressed language's encoder parameters ever
touch a batch, so gradients to all other encoders are exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import UtterancePart
from .tensor import Tensor
from .weighting import SampleWeights

ATTENTION_FLOOR = 1e-30


class ModelError(ValueError):
    pass


class NonFiniteLossError(RuntimeError):
    """Loss became NaN/Inf; carries the offending sample ids."""


@dataclass(frozen=True)
class ModelConfig:
    """Every dimension of the acoustic model.

    ``languages`` maps language code to phoneset size; ``speakers`` is the
    ordered speaker inventory. ``language_embedding_dim`` switches to the
    single-shared-encoder comparison variant when positive: one embedding
    table and prenet are shared across languages and a learned language
    vector is added to every phoneme embedding.
    """

    languages: dict[str, int]
    speakers: tuple[str, ...]
    embedding_dim: int = 256
    prenet_layers: int = 3
    prenet_kernel: int = 5
    buffer_size: int = 100
    buffer_dim: int = 0            # 0 means: use embedding_dim
    recurrency_layers: int = 2
    recurrency_width: int = 512
    mel_bins: int = 80
    attention_components: int = 1
    attention_hidden: int = 256
    attention_step_scale: float = 0.1
    speaker_dim: int = 32
    update_hidden: int = 256
    output_hidden: int = 256
    stop_loss_weight: float = 1.0
    language_embedding_dim: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if not self.languages:
            raise ModelError("at least one language required")
        if not self.speakers:
            raise ModelError("at least one speaker required")
        for lang, size in self.languages.items():
            if size < 1:
                raise ModelError(f"language {lang!r} has empty phoneset")
        for name in ("embedding_dim", "prenet_layers", "prenet_kernel", "buffer_size",
                     "recurrency_layers", "recurrency_width", "mel_bins",
                     "attention_components", "attention_hidden", "speaker_dim",
                     "update_hidden", "output_hidden"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be positive")
        if self.prenet_kernel % 2 == 0:
            raise ModelError(f"prenet_kernel must be odd, got {self.prenet_kernel}")
        if self.dtype not in ("float32", "float64"):
            raise ModelError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def buffer_width(self) -> int:
        return self.buffer_dim if self.buffer_dim > 0 else self.embedding_dim

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        return {
            "languages": dict(self.languages),
            "speakers": list(self.speakers),
            "embedding_dim": self.embedding_dim,
            "prenet_layers": self.prenet_layers,
            "prenet_kernel": self.prenet_kernel,
            "buffer_size": self.buffer_size,
            "buffer_dim": self.buffer_dim,
            "recurrency_layers": self.recurrency_layers,
            "recurrency_width": self.recurrency_width,
            "mel_bins": self.mel_bins,
            "attention_components": self.attention_components,
            "attention_hidden": self.attention_hidden,
            "attention_step_scale": self.attention_step_scale,
            "speaker_dim": self.speaker_dim,
            "update_hidden": self.update_hidden,
            "output_hidden": self.output_hidden,
            "stop_loss_weight": self.stop_loss_weight,
            "language_embedding_dim": self.language_embedding_dim,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise ModelError(f"unknown model config fields: {sorted(extra)}")
        data = dict(raw)
        data["languages"] = {str(k): int(v) for k, v in raw["languages"].items()}
        data["speakers"] = tuple(raw["speakers"])
        return cls(**data)


def _parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[tuple[int, ...], int]]:
    """Ordered map name -> (shape, fan_in). Pure function of the config."""
    shapes: dict[str, tuple[tuple[int, ...], int]] = {}
    emb = cfg.embedding_dim
    k = cfg.prenet_kernel

    def prenet(prefix: str):
        for i in range(cfg.prenet_layers):
            shapes[f"{prefix}.prenet{i}.w"] = ((k, emb, emb), k * emb)
            shapes[f"{prefix}.prenet{i}.b"] = ((emb,), k * emb)

    if cfg.language_embedding_dim > 0:
        vocab = max(cfg.languages.values())
        shapes["enc.shared.embed"] = ((vocab, emb), 1)
        shapes["enc.shared.lang_embed"] = ((len(cfg.languages), emb), 1)
        prenet("enc.shared")
    else:
        for lang in sorted(cfg.languages):
            shapes[f"enc.{lang}.embed"] = ((cfg.languages[lang], emb), 1)
            prenet(f"enc.{lang}")

    shapes["spk.embed"] = ((len(cfg.speakers), cfg.speaker_dim), 1)

    buf_flat = cfg.buffer_size * cfg.buffer_width
    m = cfg.attention_components
    shapes["attn.w1"] = ((buf_flat, cfg.attention_hidden), buf_flat)
    shapes["attn.b1"] = ((cfg.attention_hidden,), buf_flat)
    shapes["attn.w2"] = ((cfg.attention_hidden, 3 * m), cfg.attention_hidden)
    shapes["attn.b2"] = ((3 * m,), cfg.attention_hidden)

    upd_in = buf_flat + emb + cfg.speaker_dim + cfg.mel_bins
    shapes["upd.w1"] = ((upd_in, cfg.update_hidden), upd_in)
    shapes["upd.b1"] = ((cfg.update_hidden,), upd_in)
    shapes["upd.w2"] = ((cfg.update_hidden, cfg.buffer_width), cfg.update_hidden)
    shapes["upd.b2"] = ((cfg.buffer_width,), cfg.update_hidden)

    h = cfg.recurrency_width
    lstm_in = emb + cfg.buffer_width
    for layer in range(cfg.recurrency_layers):
        d_in = lstm_in if layer == 0 else h
        shapes[f"rnn{layer}.wx"] = ((d_in, 4 * h), d_in)
        shapes[f"rnn{layer}.wh"] = ((h, 4 * h), h)
        shapes[f"rnn{layer}.b"] = ((4 * h,), d_in + h)

    out_in = buf_flat + h
    shapes["out.w1"] = ((out_in, cfg.output_hidden), out_in)
    shapes["out.b1"] = ((cfg.output_hidden,), out_in)
    shapes["out.w2"] = ((cfg.output_hidden, cfg.mel_bins + 1), cfg.output_hidden)
    shapes["out.b2"] = ((cfg.mel_bins + 1,), cfg.output_hidden)
    return shapes


def parameter_count(cfg: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for shape, _ in _parameter_shapes(cfg).values())


@dataclass
class DecoderState:
    """Mutable per-utterance decoder state: buffer, recurrency, attention."""

    buffer: Tensor                  # (buffer_size, buffer_width)
    hidden: list[Tensor]            # per recurrency layer, (width,)
    cell: list[Tensor]
    kappa: Tensor                   # (attention_components,) monotonic positions


class AcousticModel:
    def __init__(self, config: ModelConfig, params: dict[str, Tensor] | None = None,
                 seed: int = 0):
        self.config = config
        expected = _parameter_shapes(config)
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            for name, (shape, fan_in) in expected.items():
                params[name] = T.uniform_init(rng, shape, fan_in,
                                              dtype=config.np_dtype, name=name)
        else:
            for name, (shape, _) in expected.items():
                if name not in params:
                    raise ModelError(f"checkpoint missing parameter {name!r}")
                if tuple(params[name].shape) != shape:
                    raise ModelError(
                        f"parameter {name!r}: shape {params[name].shape}, config expects {shape}")
            extra = set(params) - set(expected)
            if extra:
                raise ModelError(f"checkpoint has unexpected parameters: {sorted(extra)}")
        self.params = {name: params[name] for name in expected}
        self._speaker_index = {s: i for i, s in enumerate(config.speakers)}
        self._language_index = {l: i for i, l in enumerate(sorted(config.languages))}

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.params)

    @classmethod
    def load(cls, path: str | Path, config: ModelConfig) -> "AcousticModel":
        params = load_checkpoint(path)
        for name, tensor in params.items():
            if tensor.dtype != config.np_dtype:
                raise ModelError(
                    f"parameter {name!r} has dtype {tensor.dtype}, config says {config.dtype}")
        return cls(config, params=params)

    # ----- encoder ---------------------------------------------------------

    def encode(self, phonemes: np.ndarray, language: str) -> Tensor:
        """Phoneme indices -> context matrix (seq_len, embedding_dim)."""
        cfg = self.config
        if language not in cfg.languages:
            raise ModelError(f"unknown language {language!r}")
        idx = np.asarray(phonemes, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise ModelError("phoneme sequence must be a non-empty 1-D index array")
        vocab = cfg.languages[language]
        if idx.min() < 0 or idx.max() >= vocab:
            raise ModelError(
                f"phoneme index out of range for language {language!r} (phoneset size {vocab})")
        if cfg.language_embedding_dim > 0:
            prefix = "enc.shared"
            x = T.gather_rows(self.params["enc.shared.embed"], idx)
            lang_row = T.gather_rows(self.params["enc.shared.lang_embed"],
                                     np.array([self._language_index[language]]))
            x = x + lang_row
        else:
            prefix = f"enc.{language}"
            x = T.gather_rows(self.params[f"{prefix}.embed"], idx)
        pad = (cfg.prenet_kernel - 1) // 2
        for i in range(cfg.prenet_layers):
            x = T.conv1d(x, self.params[f"{prefix}.prenet{i}.w"], padding=pad)
            x = T.tanh(x + self.params[f"{prefix}.prenet{i}.b"])
        return x

    # ----- decoder ---------------------------------------------------------

    def initial_state(self) -> DecoderState:
        cfg = self.config
        dt = cfg.np_dtype
        return DecoderState(
            buffer=T.zeros((cfg.buffer_size, cfg.buffer_width), dtype=dt),
            hidden=[T.zeros(cfg.recurrency_width, dtype=dt) for _ in range(cfg.recurrency_layers)],
            cell=[T.zeros(cfg.recurrency_width, dtype=dt) for _ in range(cfg.recurrency_layers)],
            kappa=T.zeros(cfg.attention_components, dtype=dt),
        )

    def speaker_vector(self, speaker: str) -> Tensor:
        idx = self._speaker_index.get(speaker)
        if idx is None:
            raise ModelError(f"unknown speaker {speaker!r}")
        row = T.gather_rows(self.params["spk.embed"], np.array([idx]))
        return T.reshape(row, (self.config.speaker_dim,))

    def _attend(self, buffer_flat: Tensor, kappa: Tensor,
                positions: Tensor) -> tuple[Tensor, Tensor]:
        """Monotonic mixture attention; returns (weights, new kappa)."""
        cfg = self.config
        m = cfg.attention_components
        hidden = T.tanh(buffer_flat @ self.params["attn.w1"] + self.params["attn.b1"])
        raw = hidden @ self.params["attn.w2"] + self.params["attn.b2"]
        gamma = T.softmax(raw[0:m])
        beta = T.exp(raw[m:2 * m])
        step = T.softplus(raw[2 * m:3 * m]) * cfg.attention_step_scale
        kappa_new = kappa + step
        phi = None
        for c in range(m):
            diff = kappa_new[c:c + 1] - positions
            term = gamma[c:c + 1] * T.exp(-(beta[c:c + 1] * (diff * diff)))
            phi = term if phi is None else phi + term
        phi = phi + Tensor(np.full(1, ATTENTION_FLOOR, dtype=cfg.np_dtype))
        weights = phi / T.sum_(phi)
        return weights, kappa_new

    def decode_step(self, state: DecoderState, context: Tensor, speaker_vec: Tensor,
                    prev_frame: Tensor,
                    positions: Tensor) -> tuple[Tensor, Tensor, DecoderState, Tensor]:
        """One output frame: returns (mel, stop logit, new state, attention)."""
        cfg = self.config
        buf_flat = T.reshape(state.buffer, (cfg.buffer_size * cfg.buffer_width,))
        weights, kappa_new = self._attend(buf_flat, state.kappa, positions)
        pooled = weights @ context                                  # (embedding_dim,)

        upd_in = T.concat([buf_flat, pooled, speaker_vec, prev_frame])
        upd_hidden = T.tanh(upd_in @ self.params["upd.w1"] + self.params["upd.b1"])
        new_row = upd_hidden @ self.params["upd.w2"] + self.params["upd.b2"]
        new_buffer = T.concat([T.reshape(new_row, (1, cfg.buffer_width)),
                               state.buffer[:cfg.buffer_size - 1, :]], axis=0)

        x = T.concat([pooled, new_row])
        h_states, c_states = [], []
        w = cfg.recurrency_width
        for layer in range(cfg.recurrency_layers):
            gates = (x @ self.params[f"rnn{layer}.wx"]
                     + state.hidden[layer] @ self.params[f"rnn{layer}.wh"]
                     + self.params[f"rnn{layer}.b"])
            i_g = T.sigmoid(gates[0:w])
            f_g = T.sigmoid(gates[w:2 * w])
            g_g = T.tanh(gates[2 * w:3 * w])
            o_g = T.sigmoid(gates[3 * w:4 * w])
            c_new = f_g * state.cell[layer] + i_g * g_g
            h_new = o_g * T.tanh(c_new)
            h_states.append(h_new)
            c_states.append(c_new)
            x = h_new

        out_in = T.concat([T.reshape(new_buffer, (cfg.buffer_size * cfg.buffer_width,)), x])
        out_hidden = T.tanh(out_in @ self.params["out.w1"] + self.params["out.b1"])
        out = out_hidden @ self.params["out.w2"] + self.params["out.b2"]
        mel = out[0:cfg.mel_bins]
        stop_logit = out[cfg.mel_bins]
        new_state = DecoderState(buffer=new_buffer, hidden=h_states, cell=c_states,
                                 kappa=kappa_new)
        return mel, stop_logit, new_state, weights

    def step(self, state: DecoderState, context: Tensor, speaker: str,
             prev_frame: np.ndarray) -> tuple[Tensor, Tensor, DecoderState, Tensor]:
        """``decode_step`` convenience from a speaker id and raw frame."""
        dt = self.config.np_dtype
        positions = Tensor(np.arange(context.shape[0], dtype=dt))
        return self.decode_step(state, context, self.speaker_vector(speaker),
                                Tensor(np.asarray(prev_frame, dtype=dt)), positions)

    # ----- training losses -------------------------------------------------

    def sample_loss(self, part: UtterancePart) -> Tensor:
        """Teacher-forced loss for one utterance part.

        Mean absolute mel error plus stop-logit cross-entropy, both averaged
        over the part's frames. The decoder is teacher-forced with the true
        previous frame; the stop target is 1 only on the utterance-final
        frame.
        """
        cfg = self.config
        dt = cfg.np_dtype
        if part.mel.shape[1] != cfg.mel_bins:
            raise ModelError(
                f"utterance {part.utterance_id!r}: {part.mel.shape[1]} mel bins, model has {cfg.mel_bins}")
        context = self.encode(part.phonemes, part.language)
        positions = Tensor(np.arange(len(part.phonemes), dtype=dt))
        speaker_vec = self.speaker_vector(part.speaker)
        state = self.initial_state()
        frames = part.frames
        mel_terms: list[Tensor] = []
        stop_terms: list[Tensor] = []
        for t in range(frames):
            prev = part.prev_frame if t == 0 else part.mel[t - 1]
            prev_t = Tensor(np.asarray(prev, dtype=dt))
            mel_pred, stop_logit, state, _ = self.decode_step(
                state, context, speaker_vec, prev_t, positions)
            target = Tensor(np.asarray(part.mel[t], dtype=dt))
            mel_terms.append(T.mean(T.abs_(mel_pred - target)))
            is_stop = part.is_final and t == frames - 1
            # bce(logit, y) = softplus(logit) - y * logit
            bce = T.softplus(stop_logit)
            if is_stop:
                bce = bce - stop_logit
            stop_terms.append(bce)
        inv = Tensor(np.asarray(1.0 / frames, dtype=dt))
        mel_loss = _accumulate(mel_terms) * inv
        stop_loss = _accumulate(stop_terms) * inv
        return mel_loss + stop_loss * Tensor(np.asarray(cfg.stop_loss_weight, dtype=dt))

    def teacher_forced_loss(self, batch: list[UtterancePart],
                            weights: SampleWeights | None = None
                            ) -> tuple[Tensor, dict]:
        """Weighted batch loss: sum_i w_i * loss_i / sum_i w_i.

        Also returns per-sample diagnostics (speaker, language, weight,
        loss value) for logging. NaN/Inf losses abort with the sample ids.
        """
        if not batch:
            raise ModelError("empty batch")
        dt = self.config.np_dtype
        weighted: list[Tensor] = []
        total_w = 0.0
        diags = []
        for part in batch:
            loss = self.sample_loss(part)
            value = float(loss.data)
            diags.append({"id": part.utterance_id, "speaker": part.speaker,
                          "language": part.language, "loss": value})
            w = 1.0 if weights is None else weights.for_sample(part.speaker, part.language)
            diags[-1]["weight"] = w
            weighted.append(loss * Tensor(np.asarray(w, dtype=dt)))
            total_w += w
        total = _accumulate(weighted) * Tensor(np.asarray(1.0 / total_w, dtype=dt))
        if not np.isfinite(total.data):
            bad = [d["id"] for d in diags if not np.isfinite(d["loss"])]
            raise NonFiniteLossError(
                f"non-finite loss (samples: {bad or [d['id'] for d in diags]})")
        return total, {"samples": diags}

    # ----- inference -------------------------------------------------------

    def synthesize(self, phonemes: np.ndarray, language: str, speaker: str,
                   max_frames: int = 2000) -> tuple[np.ndarray, bool]:
        """Free-running synthesis; stops when the stop gate fires.

        Returns (mel matrix, truncated flag). The flag is set when
        ``max_frames`` was reached before the stop gate opened.
        """
        cfg = self.config
        dt = cfg.np_dtype
        context = self.encode(phonemes, language)
        positions = Tensor(np.arange(len(phonemes), dtype=dt))
        speaker_vec = self.speaker_vector(speaker)
        state = self.initial_state()
        prev = Tensor(np.zeros(cfg.mel_bins, dtype=dt))
        frames: list[np.ndarray] = []
        for _ in range(max_frames):
            mel_pred, stop_logit, state, _ = self.decode_step(
                state, context, speaker_vec, prev, positions)
            frames.append(np.asarray(mel_pred.data, dtype=np.float32))
            if float(stop_logit.data) > 0.0:      # sigmoid(logit) > 0.5
                mel = np.stack(frames) if frames else np.zeros((0, cfg.mel_bins), np.float32)
                return mel, False
            prev = mel_pred
        mel = np.stack(frames) if frames else np.zeros((0, cfg.mel_bins), np.float32)
        return mel, True


def _accumulate(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def micro_config(languages: dict[str, int], speakers: tuple[str, ...],
                 mel_bins: int = 4, dtype: str = "float64") -> ModelConfig:
    """Tiny configuration for gradient checks and fast tests."""
    return ModelConfig(
        languages=languages,
        speakers=speakers,
        embedding_dim=8,
        prenet_layers=1,
        prenet_kernel=3,
        buffer_size=8,
        buffer_dim=8,
        recurrency_layers=2,
        recurrency_width=16,
        mel_bins=mel_bins,
        attention_components=1,
        attention_hidden=8,
        speaker_dim=4,
        update_hidden=8,
        output_hidden=8,
        dtype=dtype,
    )
