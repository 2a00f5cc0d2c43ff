"""Optional adapter: HuggingFace Marian translation models.

Experimental and exercised only by the integration-scale suite (needs model
downloads). Importing this module registers the ``marian`` adapter; it is
imported lazily by ``resolve_model``.

The handle operates on raw rows of the shared embedding table; scaling by
sqrt(d_model) and the source end-of-sentence marker are applied inside
``translate_with_logits`` so the attack only ever perturbs content tokens.
"""
from __future__ import annotations

from typing import Optional, Sequence

import torch

from .errors import ModelError
from .gateway import NmtModel, register_adapter
from .vocab import TokenIds, Vocabulary


class MarianModelHandle(NmtModel):
    def __init__(self, model_id: str, device: str = "cpu", decode_limit: int = 64):
        try:
            from transformers import MarianMTModel, MarianTokenizer
        except ImportError as exc:
            raise ModelError("the marian adapter requires transformers (pip install kwforge[hf])") from exc
        try:
            self._tokenizer = MarianTokenizer.from_pretrained(model_id)
            self._model = MarianMTModel.from_pretrained(model_id).to(device).eval()
        except Exception as exc:
            raise ModelError(f"cannot load Marian model {model_id!r}: {exc}") from exc
        self._device = device
        self.decode_limit = decode_limit

        tok = self._tokenizer
        tokens = tuple(tok.convert_ids_to_tokens(i) for i in range(tok.vocab_size))
        unk = tok.unk_token_id if tok.unk_token_id is not None else tok.pad_token_id
        self.vocabulary = Vocabulary(
            tokens=tokens,
            pad_id=tok.pad_token_id,
            bos_id=tok.pad_token_id,  # Marian has no bos; decoding starts from pad
            eos_id=tok.eos_token_id,
            unk_id=unk,
        )
        self.embed_table = self._model.get_input_embeddings().weight.detach()
        self._embed_scale = float(getattr(self._model.model.encoder, "embed_scale", 1.0))

    # subword tokenization comes from the sentencepiece model, not whitespace
    def tokenize(self, text: str) -> TokenIds:
        if not text.strip():
            raise ValueError("cannot tokenize empty input")
        ids = self._tokenizer(text, add_special_tokens=False)["input_ids"]
        return tuple(int(i) for i in ids)

    def detokenize(self, ids: Sequence[int]) -> str:
        if len(ids) == 0:
            raise ValueError("cannot detokenize an empty sequence")
        self.vocabulary.validate_ids(ids)
        return self._tokenizer.decode(list(ids), skip_special_tokens=True)

    def translate_with_logits(
        self, e: torch.Tensor, forced_prefix: Optional[Sequence[int]] = None
    ) -> tuple[TokenIds, torch.Tensor]:
        if not torch.isfinite(e).all():
            raise ModelError("non-finite source embeddings")
        vocab = self.vocabulary
        eos_row = self.embed_table[vocab.eos_id].unsqueeze(0)
        src = torch.cat([e, eos_row.to(e.dtype)], dim=0) * self._embed_scale
        src = src.unsqueeze(0).to(self._device)
        encoder_out = self._model.model.encoder(inputs_embeds=src)

        forced = None if forced_prefix is None else vocab.validate_ids(forced_prefix)
        limit = len(forced) if forced is not None else self.decode_limit
        start = self._model.config.decoder_start_token_id

        decoded: list[int] = []
        rows: list[torch.Tensor] = []
        prev_ids = [start]
        for j in range(limit):
            dec_in = torch.tensor([prev_ids], dtype=torch.long, device=self._device)
            out = self._model.model.decoder(
                input_ids=dec_in, encoder_hidden_states=encoder_out.last_hidden_state)
            logits = self._model.lm_head(out.last_hidden_state[0, -1])
            bias = getattr(self._model, "final_logits_bias", None)
            if bias is not None:
                logits = logits + bias.flatten().to(logits.dtype)
            rows.append(logits)
            if forced is not None:
                prev_ids.append(forced[j])
                continue
            choice = logits.detach().clone()
            choice[vocab.pad_id] = float("-inf")
            if j == 0:
                choice[vocab.eos_id] = float("-inf")
            nxt = int(choice.argmax())
            if nxt == vocab.eos_id:
                break
            decoded.append(nxt)
            prev_ids.append(nxt)

        if forced is not None:
            return forced, torch.stack(rows)
        return tuple(decoded), torch.stack(rows[: len(decoded)])


register_adapter("marian", lambda model_id, device: MarianModelHandle(model_id, device))
