"""Deterministic frozen-encoder wrapper around a pretrained transformer.

The model runs in eval mode, under no_grad, in float32, on a single torch
thread, so repeated runs over identical inputs produce bit-identical
vectors. Entity-boundary markers are added as special tokens; if the
checkpoint does not know them, the new embedding rows are initialized from
a fixed seed so the expansion is reproducible too.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from .errors import EncoderError

E1_OPEN, E1_CLOSE = "[E1]", "[/E1]"
E2_OPEN, E2_CLOSE = "[E2]", "[/E2]"
MARKERS = (E1_OPEN, E1_CLOSE, E2_OPEN, E2_CLOSE)

POOLING_MODES = ("cls_token", "mean_tokens")

_SENTINEL_MAX_LENGTH = 1_000_000
_MARKER_INIT_SEED = 0
_MARKER_INIT_STD = 0.02


class TextEncoder:
    """Load once, encode many; all outputs are float32 numpy arrays."""

    def __init__(self, model_id: str, device: str = "cpu"):
        from transformers import AutoModel, AutoTokenizer

        torch.set_num_threads(1)
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderError(f"cannot load encoder {model_id!r}: {exc}") from exc
        self.model_id = model_id
        self.model.float().to(device).eval()
        self.device = device
        self._add_markers()
        self.hidden_size = int(self.model.config.hidden_size)
        self.max_length = self._usable_max_length()

    def _add_markers(self) -> None:
        known = set(self.tokenizer.get_vocab())
        missing = [m for m in MARKERS if m not in known]
        if not missing:
            return
        self.tokenizer.add_special_tokens(
            {"additional_special_tokens": missing})
        embeddings = self.model.get_input_embeddings()
        old_rows = embeddings.weight.shape[0]
        self.model.resize_token_embeddings(len(self.tokenizer))
        embeddings = self.model.get_input_embeddings()
        new_rows = embeddings.weight.shape[0]
        if new_rows > old_rows:
            generator = torch.Generator().manual_seed(_MARKER_INIT_SEED)
            fresh = torch.empty(new_rows - old_rows, embeddings.weight.shape[1])
            fresh.normal_(mean=0.0, std=_MARKER_INIT_STD, generator=generator)
            with torch.no_grad():
                embeddings.weight[old_rows:] = fresh

    def _usable_max_length(self) -> int:
        limits = []
        tok_max = getattr(self.tokenizer, "model_max_length", None)
        if isinstance(tok_max, int) and 0 < tok_max < _SENTINEL_MAX_LENGTH:
            limits.append(tok_max)
        pos_max = getattr(self.model.config, "max_position_embeddings", None)
        if isinstance(pos_max, int) and pos_max > 0:
            limits.append(pos_max)
        if not limits:
            raise EncoderError(
                f"encoder {self.model_id!r} declares no usable maximum length"
            )
        return min(limits)

    def _forward(self, texts: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
        encoded = self.tokenizer(list(texts), padding=True, truncation=True,
                                 max_length=self.max_length,
                                 return_tensors="pt").to(self.device)
        with torch.no_grad():
            hidden = self.model(**encoded).last_hidden_state
        return hidden, encoded["input_ids"]

    def _overflowed(self, texts: Sequence[str]) -> list[bool]:
        full = self.tokenizer(list(texts), truncation=False)["input_ids"]
        return [len(ids) > self.max_length for ids in full]

    def encode(self, texts: Sequence[str], pooling: str
               ) -> tuple[np.ndarray, list[bool]]:
        """Pool one vector per text; also reports which texts overflowed."""
        if pooling not in POOLING_MODES:
            raise EncoderError(f"pooling {pooling!r} not one of {POOLING_MODES}")
        if not texts:
            return np.empty((0, self.hidden_size), dtype=np.float32), []
        hidden, input_ids = self._forward(texts)
        if pooling == "cls_token":
            pooled = hidden[:, 0, :]
        else:
            mask = (input_ids != self.tokenizer.pad_token_id)
            mask = mask.unsqueeze(-1).to(hidden.dtype)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1)
        return (pooled.cpu().numpy().astype(np.float32),
                self._overflowed(texts))

    def encode_marked(self, texts: Sequence[str]
                      ) -> tuple[np.ndarray, list[bool]]:
        """Concatenate the hidden states at the [E1] and [E2] markers.

        Every text must contain both opening markers within the usable
        length; a marker pushed out by truncation is an error because the
        vector would silently describe the wrong span.
        """
        if not texts:
            return np.empty((0, 2 * self.hidden_size), dtype=np.float32), []
        e1_id = self.tokenizer.convert_tokens_to_ids(E1_OPEN)
        e2_id = self.tokenizer.convert_tokens_to_ids(E2_OPEN)
        hidden, input_ids = self._forward(texts)
        rows = []
        for row, ids in enumerate(input_ids):
            positions = {}
            for token_id, name in ((e1_id, E1_OPEN), (e2_id, E2_OPEN)):
                hits = (ids == token_id).nonzero(as_tuple=True)[0]
                if hits.numel() == 0:
                    raise EncoderError(
                        f"marker {name} missing after tokenization (input "
                        f"{row}); the text likely overflowed the encoder's "
                        f"maximum length of {self.max_length} tokens"
                    )
                positions[name] = int(hits[0])
            rows.append(torch.cat([hidden[row, positions[E1_OPEN]],
                                   hidden[row, positions[E2_OPEN]]]))
        return (torch.stack(rows).cpu().numpy().astype(np.float32),
                self._overflowed(texts))


def insert_markers(sentence: str, e1: tuple[int, int],
                   e2: tuple[int, int]) -> str:
    """Wrap the two entity spans in boundary markers.

    Spans are half-open character offsets and must not overlap; insertion
    order is by position so the text between markers is untouched.
    """
    spans = sorted([(e1, E1_OPEN, E1_CLOSE), (e2, E2_OPEN, E2_CLOSE)],
                   key=lambda item: item[0])
    (first, f_open, f_close), (second, s_open, s_close) = spans
    if first[1] > second[0]:
        raise EncoderError(
            f"entity spans {e1} and {e2} overlap; marker insertion would "
            f"scramble the sentence"
        )
    return (sentence[:first[0]] + f_open + sentence[first[0]:first[1]]
            + f_close + sentence[first[1]:second[0]] + s_open
            + sentence[second[0]:second[1]] + s_close
            + sentence[second[1]:])
