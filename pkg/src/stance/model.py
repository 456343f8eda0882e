"""Stance model: shared encoder, domain experts, label-embedding output.

A shared pre-trained encoder produces token representations for the input
``[CLS] context [SEP] target``.  On top of it sit one transformer layer per
source domain plus one global layer; each layer's output at the sequence
start is scored against a single shared label-embedding matrix and turned
into a distribution over the global label index under a dataset mask.  The
combined prediction is the arithmetic mean of the per-expert distributions
and the global one.  A domain classifier fed through a gradient-reversal
layer pushes the global representation toward domain confusion.
"""

from __future__ import annotations

import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .embeddings import CONTEXTUAL_ENCODER, EmbeddingTable
from .errors import StanceError
from .labelspace import LabelSpace

PAD_ID = 0
CLS_ID = 1
SEP_ID = 2


# =========================================================================
# Pair encoding
# =========================================================================


def truncate_pair_lengths(n_context: int, n_target: int, budget: int) -> tuple[int, int]:
    """Shrink the pair to ``budget`` tokens, one token at a time.

    Each step removes one token from the currently longer member (the
    context on ties), so a long context is cut down before a short target
    loses anything.
    """
    if budget < 0:
        raise StanceError("token budget for the pair is negative")
    while n_context + n_target > budget:
        if n_target > n_context:
            n_target -= 1
        else:
            n_context -= 1
    return n_context, n_target


class EncoderBase(nn.Module, ABC):
    """Contract every encoder must satisfy.

    ``encode_pair`` turns a context/target pair into ids including special
    tokens, truncated to ``max_length``; ``encode_single`` does the same for
    one piece of text (used to embed label names).  ``forward`` maps a
    padded id batch to per-token representations of size ``hidden_size``.
    """

    hidden_size: int
    max_length: int
    pad_id: int = PAD_ID

    @abstractmethod
    def encode_pair(self, context: str, target: str) -> list[int]: ...

    @abstractmethod
    def encode_single(self, text: str) -> list[int]: ...

    @abstractmethod
    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor: ...


class HashEncoder(EncoderBase):
    """Small trainable transformer with a hashing word tokenizer.

    Words are lowercased, split on whitespace and mapped to fixed buckets
    with crc32, so tokenization needs no vocabulary file and is stable
    across runs and platforms.  Meant for tests, synthetic corpora and as a
    reference implementation of the encoder contract.
    """

    def __init__(
        self,
        hidden_size: int = 32,
        num_layers: int = 2,
        num_heads: int = 4,
        vocab_size: int = 4096,
        max_length: int = 64,
    ) -> None:
        super().__init__()
        self.hidden_size = hidden_size
        self.max_length = max_length
        self.vocab_size = vocab_size
        self.token_embedding = nn.Embedding(vocab_size, hidden_size, padding_idx=PAD_ID)
        self.position_embedding = nn.Embedding(max_length, hidden_size)
        self.layers = nn.ModuleList(
            ExpertLayer(hidden_size, num_heads=num_heads, init_std=0.02) for _ in range(num_layers)
        )
        self.output_norm = nn.LayerNorm(hidden_size)

    def _bucket(self, word: str) -> int:
        return 3 + zlib.crc32(word.lower().encode("utf-8")) % (self.vocab_size - 3)

    def encode_pair(self, context: str, target: str) -> list[int]:
        context_ids = [self._bucket(w) for w in context.split()]
        target_ids = [self._bucket(w) for w in target.split()]
        budget = self.max_length - 3
        n_context, n_target = truncate_pair_lengths(len(context_ids), len(target_ids), budget)
        return [CLS_ID] + context_ids[:n_context] + [SEP_ID] + target_ids[:n_target] + [SEP_ID]

    def encode_single(self, text: str) -> list[int]:
        ids = [self._bucket(w) for w in text.split()][: self.max_length - 2]
        return [CLS_ID] + ids + [SEP_ID]

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(input_ids.shape[1], device=input_ids.device)
        x = self.token_embedding(input_ids) + self.position_embedding(positions)
        key_padding_mask = ~attention_mask.bool()
        for layer in self.layers:
            x = layer(x, key_padding_mask=key_padding_mask)
        return self.output_norm(x)


class PretrainedEncoder(EncoderBase):
    """Wrapper putting a HuggingFace masked-LM encoder behind the contract.

    Imported lazily; only needed when training with a real pre-trained
    encoder such as ``roberta-base``.
    """

    def __init__(self, model_id: str, max_length: int = 100) -> None:
        super().__init__()
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise StanceError(
                "loading a pre-trained encoder requires the 'transformers' extra"
            ) from exc
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.encoder = AutoModel.from_pretrained(model_id)
        self.hidden_size = self.encoder.config.hidden_size
        self.max_length = max_length
        self.pad_id = self.tokenizer.pad_token_id

    def encode_pair(self, context: str, target: str) -> list[int]:
        context_ids = self.tokenizer.encode(context, add_special_tokens=False)
        target_ids = self.tokenizer.encode(target, add_special_tokens=False)
        budget = self.max_length - self.tokenizer.num_special_tokens_to_add(pair=True)
        n_context, n_target = truncate_pair_lengths(len(context_ids), len(target_ids), budget)
        return self.tokenizer.build_inputs_with_special_tokens(
            context_ids[:n_context], target_ids[:n_target]
        )

    def encode_single(self, text: str) -> list[int]:
        return self.tokenizer.encode(text, add_special_tokens=True, truncation=True, max_length=self.max_length)

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        return self.encoder(input_ids=input_ids, attention_mask=attention_mask).last_hidden_state


def collate_ids(id_lists: Sequence[list[int]], pad_id: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Pad variable-length id lists into a batch with its attention mask."""
    if not id_lists:
        raise StanceError("cannot collate an empty batch")
    width = max(len(ids) for ids in id_lists)
    input_ids = torch.full((len(id_lists), width), pad_id, dtype=torch.long)
    attention_mask = torch.zeros((len(id_lists), width), dtype=torch.bool)
    for row, ids in enumerate(id_lists):
        input_ids[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        attention_mask[row, : len(ids)] = True
    return input_ids, attention_mask


# =========================================================================
# Building blocks
# =========================================================================


class GradientReversal(torch.autograd.Function):
    """Identity in the forward pass, negated (scaled) gradient backwards."""

    @staticmethod
    def forward(ctx, x, scale):
        ctx.scale = scale
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output.neg() * ctx.scale, None


def reverse_gradient(x: torch.Tensor, scale: float = 1.0) -> torch.Tensor:
    return GradientReversal.apply(x, scale)


class ExpertLayer(nn.Module):
    """Pre-norm transformer layer whose update starts near zero.

    Both residual branches end in a projection initialised with standard
    deviation ``init_std``; with ``init_std=0`` the layer is exactly the
    identity, so a freshly added expert reproduces the encoder output and
    the expert average starts out stable.
    """

    def __init__(self, hidden_size: int, num_heads: int = 4, ffn_size: int | None = None, init_std: float = 0.02) -> None:
        super().__init__()
        ffn_size = ffn_size or 4 * hidden_size
        self.attention_norm = nn.LayerNorm(hidden_size)
        self.attention = nn.MultiheadAttention(hidden_size, num_heads, batch_first=True)
        self.ffn_norm = nn.LayerNorm(hidden_size)
        self.ffn_in = nn.Linear(hidden_size, ffn_size)
        self.ffn_out = nn.Linear(ffn_size, hidden_size)
        self.activation = nn.GELU()
        for module in (self.attention.out_proj, self.ffn_out):
            if init_std > 0:
                nn.init.normal_(module.weight, std=init_std)
            else:
                nn.init.zeros_(module.weight)
            nn.init.zeros_(module.bias)

    def forward(self, x: torch.Tensor, key_padding_mask: torch.Tensor | None = None) -> torch.Tensor:
        normed = self.attention_norm(x)
        attended, _ = self.attention(
            normed, normed, normed, key_padding_mask=key_padding_mask, need_weights=False
        )
        x = x + attended
        x = x + self.ffn_out(self.activation(self.ffn_in(self.ffn_norm(x))))
        return x


def _as_bool_tensor(mask: np.ndarray | torch.Tensor, device: torch.device) -> torch.Tensor:
    if isinstance(mask, np.ndarray):
        mask = torch.from_numpy(mask)
    return mask.to(device=device, dtype=torch.bool)


def label_distribution(
    pooled: torch.Tensor, label_matrix: torch.Tensor, mask: np.ndarray | torch.Tensor
) -> torch.Tensor:
    """Masked softmax over label-embedding scores.

    Probabilities outside the mask are exactly zero; the unmasked ones sum
    to one.  An all-false mask is rejected.
    """
    mask_t = _as_bool_tensor(mask, pooled.device)
    if not bool(mask_t.any()):
        raise StanceError("label mask admits no label")
    logits = pooled @ label_matrix.T
    logits = logits.masked_fill(~mask_t, float("-inf"))
    return torch.softmax(logits, dim=-1)


def combine_moe(expert_probs: Sequence, global_probs):
    """Arithmetic mean of the chosen expert distributions and the global one."""
    total = global_probs
    count = 1
    for probs in expert_probs:
        total = total + probs
        count += 1
    return total / count


# =========================================================================
# Full model
# =========================================================================


@dataclass
class MoleForward:
    """Everything one forward pass produces for a single-dataset batch."""

    expert_pooled: torch.Tensor  # [batch, experts, hidden]
    global_pooled: torch.Tensor  # [batch, hidden]
    expert_probs: torch.Tensor  # [batch, experts, labels]
    global_probs: torch.Tensor  # [batch, labels]
    combined_probs: torch.Tensor  # [batch, labels]
    domain_logits: torch.Tensor  # [batch, adversary classes]
    expert_ids: tuple[int, ...]


class StanceMoLE(nn.Module):
    """Domain experts over a shared encoder with a label-embedding output."""

    def __init__(
        self,
        encoder: EncoderBase,
        space: LabelSpace,
        num_heads: int = 4,
        expert_init_std: float = 0.02,
    ) -> None:
        super().__init__()
        self.encoder = encoder
        self.space = space
        self.space_version = space.version
        domains: list[str] = []
        for desc in space.descriptors:
            if desc.source_group not in domains:
                domains.append(desc.source_group)
        self.domains = tuple(domains)
        self.domain_index = {desc.name: domains.index(desc.source_group) for desc in space.descriptors}
        self.adversary_index = {name: i for i, name in enumerate(space.datasets)}
        hidden = encoder.hidden_size
        self.experts = nn.ModuleList(
            ExpertLayer(hidden, num_heads=num_heads, init_std=expert_init_std)
            for _ in range(len(domains))
        )
        self.global_expert = ExpertLayer(hidden, num_heads=num_heads, init_std=expert_init_std)
        self.label_matrix = nn.Parameter(torch.empty(space.size, hidden))
        nn.init.normal_(self.label_matrix, std=0.02)
        self.domain_head = nn.Linear(hidden, len(space.datasets))

    @property
    def num_experts(self) -> int:
        return len(self.experts)

    def expert_forward(
        self,
        token_reps: torch.Tensor,
        expert_id: int | None,
        key_padding_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Sequence-start output of one domain expert (``None`` for global)."""
        layer = self.global_expert if expert_id is None else self.experts[expert_id]
        return layer(token_reps, key_padding_mask=key_padding_mask)[:, 0]

    def forward(
        self,
        input_ids: torch.Tensor,
        attention_mask: torch.Tensor,
        label_mask: np.ndarray | torch.Tensor,
        expert_subset: Sequence[int] | None = None,
        grl_scale: float = 1.0,
    ) -> MoleForward:
        token_reps = self.encoder(input_ids, attention_mask)
        key_padding_mask = ~attention_mask.bool()
        expert_ids = tuple(expert_subset) if expert_subset is not None else tuple(range(self.num_experts))
        if not expert_ids:
            raise StanceError("at least one domain expert must take part in the combination")
        expert_pooled = torch.stack(
            [self.expert_forward(token_reps, k, key_padding_mask) for k in expert_ids], dim=1
        )
        global_pooled = self.expert_forward(token_reps, None, key_padding_mask)
        expert_probs = torch.stack(
            [
                label_distribution(expert_pooled[:, i], self.label_matrix, label_mask)
                for i in range(len(expert_ids))
            ],
            dim=1,
        )
        global_probs = label_distribution(global_pooled, self.label_matrix, label_mask)
        combined = combine_moe(expert_probs.unbind(dim=1), global_probs)
        domain_logits = self.domain_head(reverse_gradient(global_pooled, grl_scale))
        return MoleForward(
            expert_pooled=expert_pooled,
            global_pooled=global_pooled,
            expert_probs=expert_probs,
            global_probs=global_probs,
            combined_probs=combined,
            domain_logits=domain_logits,
            expert_ids=expert_ids,
        )

    def encode_batch(self, pairs: Sequence[tuple[str, str]]) -> tuple[torch.Tensor, torch.Tensor]:
        """Tokenize (context, target) pairs and pad them into a batch."""
        ids = [self.encoder.encode_pair(context, target) for context, target in pairs]
        return collate_ids(ids, self.encoder.pad_id)


def pooled_text_embedding(encoder: EncoderBase, text: str) -> np.ndarray:
    """Sequence-start representation of one piece of text, as numpy."""
    ids, mask = collate_ids([encoder.encode_single(text)], encoder.pad_id)
    with torch.no_grad():
        reps = encoder(ids, mask)
    return reps[0, 0].double().numpy()


def label_table_from_encoder(encoder: EncoderBase) -> EmbeddingTable:
    """An embedding table that encodes label names with ``encoder``."""
    return EmbeddingTable(
        kind=CONTEXTUAL_ENCODER,
        dim=encoder.hidden_size,
        encode=lambda name: pooled_text_embedding(encoder, name),
    )
