"""A small byte-level causal transformer with low-rank adapters.

The desk-scale base models are built deterministically from a preset id
("tiny:<layers>x<width>"), so any two processes constructing the same id get
bit-identical base weights. Adapters follow the usual low-rank scheme: the
base weight stays frozen and a rank-r update scaled by alpha/r is learned;
B starts at zero so a fresh adapter leaves the base model unchanged.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass

import torch
from torch import nn

BOS_ID = 256
EOS_ID = 257
VOCAB_SIZE = 258

_BASE_INIT_SEED = 0x5EED
_PRESET_RE = re.compile(r"^tiny:(\d+)x(\d+)$")

DEFAULT_BASE_MODEL = "tiny:2x64"


@dataclass(frozen=True)
class ModelSpec:
    n_layers: int
    d_model: int
    n_heads: int
    max_len: int = 512

    @classmethod
    def from_id(cls, base_model_id: str) -> "ModelSpec":
        match = _PRESET_RE.match(base_model_id)
        if not match:
            raise ValueError(
                f"unsupported base model id {base_model_id!r}; desk-scale ids look like "
                f"'tiny:2x64' (layers x width). Hub-scale checkpoints need an external "
                "training stack and are outside this adapter."
            )
        layers, width = int(match.group(1)), int(match.group(2))
        if width % 4 != 0:
            raise ValueError(f"model width must be a multiple of 4, got {width}")
        return cls(n_layers=layers, d_model=width, n_heads=4)


def encode_text(text: str) -> list[int]:
    return list(text.encode("utf-8"))


def decode_ids(ids: list[int]) -> str:
    return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


class CausalSelfAttention(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.n_heads = spec.n_heads
        self.head_dim = spec.d_model // spec.n_heads
        self.q_proj = nn.Linear(spec.d_model, spec.d_model)
        self.k_proj = nn.Linear(spec.d_model, spec.d_model)
        self.v_proj = nn.Linear(spec.d_model, spec.d_model)
        self.out_proj = nn.Linear(spec.d_model, spec.d_model)

    def forward(self, x):
        batch, length, _ = x.shape

        def split(proj):
            return proj(x).view(batch, length, self.n_heads, self.head_dim).transpose(1, 2)

        attended = nn.functional.scaled_dot_product_attention(
            split(self.q_proj), split(self.k_proj), split(self.v_proj), is_causal=True
        )
        attended = attended.transpose(1, 2).reshape(batch, length, -1)
        return self.out_proj(attended)


class Block(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.ln1 = nn.LayerNorm(spec.d_model)
        self.attn = CausalSelfAttention(spec)
        self.ln2 = nn.LayerNorm(spec.d_model)
        self.mlp = nn.Sequential(
            nn.Linear(spec.d_model, 4 * spec.d_model),
            nn.GELU(),
            nn.Linear(4 * spec.d_model, spec.d_model),
        )

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.mlp(self.ln2(x))


class TinyCausalLM(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.tok_emb = nn.Embedding(VOCAB_SIZE, spec.d_model)
        self.pos_emb = nn.Embedding(spec.max_len, spec.d_model)
        self.blocks = nn.ModuleList(Block(spec) for _ in range(spec.n_layers))
        self.ln_f = nn.LayerNorm(spec.d_model)
        self.head = nn.Linear(spec.d_model, VOCAB_SIZE, bias=False)

    def forward(self, input_ids: torch.Tensor) -> torch.Tensor:
        batch, length = input_ids.shape
        if length > self.spec.max_len:
            raise ValueError(f"sequence length {length} exceeds max_len {self.spec.max_len}")
        positions = torch.arange(length, device=input_ids.device)
        x = self.tok_emb(input_ids) + self.pos_emb(positions)[None, :, :]
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_f(x))


def build_base_model(base_model_id: str) -> TinyCausalLM:
    """Construct the frozen base model with init deterministic in the id."""
    spec = ModelSpec.from_id(base_model_id)
    generator_state = torch.random.get_rng_state()
    try:
        torch.manual_seed(_BASE_INIT_SEED + hash_id(base_model_id))
        model = TinyCausalLM(spec)
    finally:
        torch.random.set_rng_state(generator_state)
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model


def hash_id(text: str) -> int:
    # stable across processes, unlike builtin hash()
    value = 0
    for byte in text.encode("utf-8"):
        value = (value * 131 + byte) % (2**31)
    return value


class LoraLinear(nn.Module):
    """A frozen linear layer plus a trainable rank-r update."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float):
        super().__init__()
        self.base = base
        self.rank = rank
        self.alpha = alpha
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.normal_(self.lora_a, std=0.02)

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def forward(self, x):
        return self.base(x) + (x @ self.lora_a.T @ self.lora_b.T) * self.scaling

    def merged_weight(self) -> torch.Tensor:
        return self.base.weight + (self.lora_b @ self.lora_a) * self.scaling


def _wrap_linears(module: nn.Module, rank: int, alpha: float) -> None:
    for name, child in module.named_children():
        if isinstance(child, nn.Linear):
            setattr(module, name, LoraLinear(child, rank, alpha))
        else:
            _wrap_linears(child, rank, alpha)


def attach_adapters(model: TinyCausalLM, rank: int, alpha: float, seed: int = 0) -> TinyCausalLM:
    """Wrap every linear projection (attention q/k/v/out, MLP, output head)
    with adapters. Adapter init is seeded so training runs are reproducible."""
    generator_state = torch.random.get_rng_state()
    try:
        torch.manual_seed(seed)
        _wrap_linears(model, rank, alpha)
    finally:
        torch.random.set_rng_state(generator_state)
    return model


def adapter_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    return {
        name: tensor.detach().clone()
        for name, tensor in model.state_dict().items()
        if "lora_a" in name or "lora_b" in name
    }


def load_adapter_state(model: nn.Module, adapters: dict[str, torch.Tensor]) -> None:
    missing = model.load_state_dict(adapters, strict=False)
    unexpected = [k for k in missing.unexpected_keys]
    if unexpected:
        raise ValueError(f"adapter state does not fit this model: {unexpected[:3]}")


def adapter_parameters(model: nn.Module):
    for name, param in model.named_parameters():
        if "lora_a" in name or "lora_b" in name:
            yield param


def merge_adapters(model: TinyCausalLM) -> TinyCausalLM:
    """Fold every adapter into its base weight, returning a plain model."""
    merged = TinyCausalLM(model.spec)
    state = {}
    for name, tensor in model.state_dict().items():
        if "lora_a" in name or "lora_b" in name:
            continue
        state[name.replace(".base.", ".")] = tensor.clone()

    def fold(module: nn.Module, prefix: str):
        for name, child in module.named_children():
            path = f"{prefix}{name}"
            if isinstance(child, LoraLinear):
                state[f"{path}.weight"] = child.merged_weight().detach().clone()
            else:
                fold(child, f"{path}.")

    fold(model, "")
    merged.load_state_dict(state)
    merged.eval()
    return merged


@torch.no_grad()
def greedy_generate(model: TinyCausalLM, prompt: str, max_new_tokens: int = 128,
                    temperature: float = 0.0) -> str:
    """Autoregressive decoding from a text prompt; temperature 0 is argmax."""
    model.eval()
    ids = [BOS_ID] + encode_text(prompt)
    ids = ids[-model.spec.max_len :]
    out: list[int] = []
    for _ in range(max_new_tokens):
        window = torch.tensor([ids[-model.spec.max_len :]], dtype=torch.long)
        logits = model(window)[0, -1]
        if temperature > 0:
            probs = torch.softmax(logits / temperature, dim=-1)
            next_id = int(torch.multinomial(probs, 1).item())
        else:
            next_id = int(torch.argmax(logits).item())
        if next_id == EOS_ID:
            break
        ids.append(next_id)
        out.append(next_id)
    return decode_ids(out)


def spec_to_dict(spec: ModelSpec) -> dict:
    return asdict(spec)
