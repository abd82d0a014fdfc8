"""Bidirectional masked-denoising transformer, its training loop, and a raw
binary checkpoint format (JSON header line + little-endian f32 payload).

Training objective per sequence: (1/t) * sum of cross-entropy over masked
response positions, averaged over the batch, with t drawn uniformly per
sequence and floored to keep the weight bounded.
"""

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .tokenization import MASK_ID, PAD_ID


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    ff_dim: int = 512
    max_len: int = 256

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads:
            raise ValueError("d_model must divide evenly into heads")


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.n_heads = cfg.n_heads
        self.head_dim = cfg.d_model // cfg.n_heads
        self.ln_attn = nn.LayerNorm(cfg.d_model)
        self.ln_ff = nn.LayerNorm(cfg.d_model)
        self.qkv = nn.Linear(cfg.d_model, 3 * cfg.d_model)
        self.attn_out = nn.Linear(cfg.d_model, cfg.d_model)
        self.ff_up = nn.Linear(cfg.d_model, cfg.ff_dim)
        self.ff_down = nn.Linear(cfg.ff_dim, cfg.d_model)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor | None) -> torch.Tensor:
        b, t, d = x.shape
        h = self.ln_attn(x)
        q, k, v = self.qkv(h).chunk(3, dim=-1)
        q = q.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        att = scores.softmax(dim=-1)
        y = (att @ v).transpose(1, 2).reshape(b, t, d)
        x = x + self.attn_out(y)
        x = x + self.ff_down(F.gelu(self.ff_up(self.ln_ff(x))))
        return x


class MaskedDiffusionModel(nn.Module):
    """Pre-norm encoder over the full sequence, no causal mask, tied output head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.emb = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos = nn.Embedding(cfg.max_len, cfg.d_model)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))
        self.ln_final = nn.LayerNorm(cfg.d_model)
        self.forward_calls = 0
        self.apply(self._init)

    @staticmethod
    def _init(module: nn.Module) -> None:
        if isinstance(module, (nn.Linear, nn.Embedding)):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
            if isinstance(module, nn.Linear) and module.bias is not None:
                nn.init.zeros_(module.bias)

    def forward(self, ids: torch.Tensor, key_mask: torch.Tensor | None = None) -> torch.Tensor:
        if ids.dim() != 2:
            raise ValueError("expected a (batch, length) id tensor")
        if ids.shape[1] > self.cfg.max_len:
            raise ValueError(f"sequence length {ids.shape[1]} exceeds max_len {self.cfg.max_len}")
        self.forward_calls += 1
        x = self.emb(ids) + self.pos(torch.arange(ids.shape[1], device=ids.device))[None, :, :]
        for layer in self.layers:
            x = layer(x, key_mask)
        h = self.ln_final(x)
        return F.linear(h, self.emb.weight)


def build_model(cfg: ModelConfig, seed: int) -> MaskedDiffusionModel:
    torch.manual_seed(seed)
    return MaskedDiffusionModel(cfg)


@dataclass
class MaskedRow:
    input_ids: torch.Tensor  # response positions masked iid with prob t
    target_ids: torch.Tensor
    mask_flags: torch.Tensor  # bool, True where input was replaced by MASK
    t: float
    prompt_len: int


def mask_forward(ids: list[int] | torch.Tensor, prompt_len: int, t: float, generator: torch.Generator | None = None) -> MaskedRow:
    """Mask each response token iid with probability t; the prompt is untouched."""
    if not 0.0 < t <= 1.0:
        raise ValueError(f"masking level t must lie in (0, 1], got {t}")
    target = torch.as_tensor(ids, dtype=torch.long).clone()
    if not 0 <= prompt_len < target.numel():
        raise ValueError(f"prompt_len {prompt_len} out of range for sequence of length {target.numel()}")
    flags = torch.zeros(target.numel(), dtype=torch.bool)
    draws = torch.rand(target.numel() - prompt_len, generator=generator)
    flags[prompt_len:] = draws < t
    inputs = target.clone()
    inputs[flags] = MASK_ID
    return MaskedRow(inputs, target, flags, t, prompt_len)


@dataclass
class MaskedBatch:
    inputs: torch.Tensor
    targets: torch.Tensor
    mask_flags: torch.Tensor
    t: torch.Tensor
    key_mask: torch.Tensor


def collate(rows: list[MaskedRow]) -> MaskedBatch:
    width = max(r.input_ids.numel() for r in rows)
    b = len(rows)
    inputs = torch.full((b, width), PAD_ID, dtype=torch.long)
    targets = torch.full((b, width), PAD_ID, dtype=torch.long)
    flags = torch.zeros((b, width), dtype=torch.bool)
    key_mask = torch.zeros((b, width), dtype=torch.bool)
    for i, row in enumerate(rows):
        n = row.input_ids.numel()
        inputs[i, :n] = row.input_ids
        targets[i, :n] = row.target_ids
        flags[i, :n] = row.mask_flags
        key_mask[i, :n] = True
    t = torch.tensor([r.t for r in rows], dtype=torch.float64)
    return MaskedBatch(inputs, targets, flags, t, key_mask)


def mdm_loss(logits: torch.Tensor, batch: MaskedBatch) -> torch.Tensor:
    """Per sequence (1/t) * summed masked cross-entropy, mean over the batch.
    Sequences with nothing masked contribute zero."""
    b, width, v = logits.shape
    ce = F.cross_entropy(logits.reshape(-1, v), batch.targets.reshape(-1), reduction="none").reshape(b, width)
    per_seq = (ce * batch.mask_flags).sum(dim=1) / batch.t.to(ce.dtype)
    return per_seq.mean()


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 64
    lr: float = 3e-4
    warmup_steps: int = 100
    t_floor: float = 0.01
    seed: int = 1


@dataclass
class EncodedExample:
    ids: list[int]
    prompt_len: int


def train(
    model: MaskedDiffusionModel,
    rows: list[EncodedExample],
    cfg: TrainConfig,
    optimizer: torch.optim.Optimizer | None = None,
    start_step: int = 0,
    trace_path: str | None = None,
    log_every: int = 0,
) -> list[tuple[int, float]]:
    """Adam with linear warmup; loss trace rows are (step, loss). Aborts on a
    non-finite loss, naming the step. Returns the trace for this session."""
    if not rows:
        raise ValueError("no training examples")
    if optimizer is None:
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    g = torch.Generator().manual_seed(cfg.seed + start_step)
    trace: list[tuple[int, float]] = []
    model.train()
    for step in range(start_step + 1, cfg.steps + 1):
        lr = cfg.lr * min(1.0, step / max(1, cfg.warmup_steps))
        for group in optimizer.param_groups:
            group["lr"] = lr
        idx = torch.randint(0, len(rows), (cfg.batch_size,), generator=g)
        t_draws = (1.0 - torch.rand(cfg.batch_size, generator=g)).clamp(min=cfg.t_floor)
        masked = [mask_forward(rows[i].ids, rows[i].prompt_len, float(t_draws[j]), g) for j, i in enumerate(idx.tolist())]
        batch = collate(masked)
        logits = model(batch.inputs, batch.key_mask)
        loss = mdm_loss(logits, batch)
        if not torch.isfinite(loss):
            raise RuntimeError(f"training diverged at step {step}: loss is not finite")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        trace.append((step, float(loss.detach())))
        if log_every and step % log_every == 0:
            window = [v for _, v in trace[-100:]]
            print(f"step {step} loss {sum(window) / len(window):.4f}", flush=True)
    if trace_path is not None:
        fresh = start_step == 0 or not os.path.exists(trace_path)
        with open(trace_path, "a" if not fresh else "w", encoding="utf-8") as f:
            if fresh:
                f.write("step,loss\n")
            for step, value in trace:
                f.write(f"{step},{value}\n")
    return trace


def moving_average(trace: list[tuple[int, float]], at_step: int, window: int = 100) -> float:
    values = [v for s, v in trace if at_step - window < s <= at_step]
    if not values:
        raise ValueError(f"no trace rows in window ending at step {at_step}")
    return sum(values) / len(values)


def read_trace(path: str) -> list[tuple[int, float]]:
    out = []
    with open(path, encoding="utf-8") as f:
        next(f)
        for line in f:
            step, value = line.strip().split(",")
            out.append((int(step), float(value)))
    return out


def save_checkpoint(path: str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Single file: one JSON header line, then the concatenated little-endian
    f32 payload. Offsets are relative to the payload start."""
    names = sorted(arrays)
    blobs = []
    tensors = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        blob = arr.tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": "f32", "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    payload = b"".join(blobs)
    header = {"meta": meta, "tensors": tensors, "payload_sha256": hashlib.sha256(payload).hexdigest()}
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(payload)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        blob = f.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise ValueError("checkpoint has no header line")
    header = json.loads(blob[:nl].decode("utf-8"))
    payload = blob[nl + 1 :]
    for spec in header["tensors"]:
        if spec["offset"] + spec["nbytes"] > len(payload):
            raise ValueError(f"checkpoint truncated while reading tensor {spec['name']!r}")
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise ValueError("checkpoint payload hash mismatch")
    arrays: dict[str, np.ndarray] = {}
    for spec in header["tensors"]:
        if spec["dtype"] != "f32":
            raise ValueError(f"checkpoint tensor {spec['name']!r} has unsupported dtype {spec['dtype']!r}")
        lo, hi = spec["offset"], spec["offset"] + spec["nbytes"]
        arrays[spec["name"]] = np.frombuffer(payload[lo:hi], dtype="<f4").reshape(spec["shape"]).copy()
    return arrays, header["meta"]


OPTIM_PREFIX = "optim."


def save_training_checkpoint(
    path: str,
    model: MaskedDiffusionModel,
    step: int,
    optimizer: torch.optim.Optimizer | None = None,
    extra_meta: dict | None = None,
) -> None:
    arrays = {name: p.detach().cpu().numpy() for name, p in model.state_dict().items()}
    if optimizer is not None:
        name_by_param = {p: n for n, p in model.named_parameters()}
        for param, state in optimizer.state.items():
            name = name_by_param[param]
            arrays[f"{OPTIM_PREFIX}{name}.exp_avg"] = state["exp_avg"].detach().cpu().numpy()
            arrays[f"{OPTIM_PREFIX}{name}.exp_avg_sq"] = state["exp_avg_sq"].detach().cpu().numpy()
    meta = {"step": step, "model": asdict(model.cfg)}
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, arrays, meta)


def load_model_arrays(model: MaskedDiffusionModel, arrays: dict[str, np.ndarray]) -> None:
    state = model.state_dict()
    tensors = {}
    for name, current in state.items():
        if name not in arrays:
            raise ValueError(f"checkpoint is missing tensor {name!r}")
        arr = arrays[name]
        if tuple(arr.shape) != tuple(current.shape):
            raise ValueError(
                f"checkpoint tensor {name!r} has shape {tuple(arr.shape)}, model expects {tuple(current.shape)}"
            )
        tensors[name] = torch.from_numpy(arr).to(current.dtype)
    model.load_state_dict(tensors)


def load_training_checkpoint(path: str, model: MaskedDiffusionModel, optimizer: torch.optim.Optimizer | None = None) -> dict:
    arrays, meta = load_checkpoint(path)
    load_model_arrays(model, {k: v for k, v in arrays.items() if not k.startswith(OPTIM_PREFIX)})
    if optimizer is not None:
        step = int(meta["step"])
        for name, param in model.named_parameters():
            avg_key = f"{OPTIM_PREFIX}{name}.exp_avg"
            sq_key = f"{OPTIM_PREFIX}{name}.exp_avg_sq"
            if avg_key not in arrays:
                continue
            optimizer.state[param] = {
                "step": torch.tensor(float(step)),
                "exp_avg": torch.from_numpy(arrays[avg_key]).to(param.dtype),
                "exp_avg_sq": torch.from_numpy(arrays[sq_key]).to(param.dtype),
            }
    return meta
