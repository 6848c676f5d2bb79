"""Full model state (encoder + CRF + vocabulary) and its checkpoint format.

Checkpoint layout: the 8-byte magic ``KFCKPT01``, a little-endian u32 JSON
header length, the JSON header, then the raw little-endian float64 payload.
The header maps each tensor name to dtype/shape/offset/length and records
the vocabulary (tokens and sha256), dimensions, and the label-index map.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import LABEL_INDEX, Vocabulary
from .crf import CrfParams, crf_tensors
from .encoder import EncoderDims, EncoderParams, LstmWeights, encoder_tensors, init_params
from .errors import DataError

CHECKPOINT_MAGIC = b"KFCKPT01"

TENSOR_ORDER = (
    "embed",
    "lstm_fwd.Wx", "lstm_fwd.Wh", "lstm_fwd.b",
    "lstm_bwd.Wx", "lstm_bwd.Wh", "lstm_bwd.b",
    "proj.W", "proj.b",
    "crf.trans", "crf.start", "crf.end",
)


@dataclass
class Model:
    """The complete learnable state bound to one vocabulary."""

    encoder: EncoderParams
    crf: CrfParams
    vocab: Vocabulary

    @property
    def dims(self) -> EncoderDims:
        return self.encoder.dims

    def copy(self) -> "Model":
        return Model(encoder=self.encoder.copy(), crf=self.crf.copy(), vocab=self.vocab)


def init_model(vocab: Vocabulary, embed_dim: int, hidden_dim: int, seed) -> Model:
    """Fresh model: randomly initialized encoder, all-zero CRF scores."""
    dims = EncoderDims(vocab_size=len(vocab), embed_dim=embed_dim, hidden_dim=hidden_dim)
    return Model(encoder=init_params(dims, seed), crf=CrfParams.zeros(), vocab=vocab)


def model_tensors(model: Model) -> dict:
    """Canonical name -> array view over all trainable tensors."""
    tensors = {**encoder_tensors(model.encoder), **crf_tensors(model.crf)}
    return {name: tensors[name] for name in TENSOR_ORDER}


def checkpoint_bytes(model: Model) -> bytes:
    tensors = model_tensors(model)
    entries = {}
    offset = 0
    chunks = []
    for name in TENSOR_ORDER:
        raw = np.ascontiguousarray(tensors[name], dtype="<f8").tobytes()
        entries[name] = {
            "dtype": "f64",
            "shape": list(tensors[name].shape),
            "offset": offset,
            "length": len(raw),
        }
        chunks.append(raw)
        offset += len(raw)
    dims = model.dims
    header = {
        "tensors": entries,
        "vocab_sha256": model.vocab.sha256,
        "vocab_tokens": list(model.vocab.itos),
        "vocab_min_count": model.vocab.min_count,
        "dims": {
            "vocab_size": dims.vocab_size,
            "embed_dim": dims.embed_dim,
            "hidden_dim": dims.hidden_dim,
            "num_labels": dims.num_labels,
        },
        "labels": LABEL_INDEX,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return CHECKPOINT_MAGIC + struct.pack("<I", len(head)) + head + b"".join(chunks)


def save_checkpoint(model: Model, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_checkpoint(path) -> Model:
    blob = Path(path).read_bytes()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    (head_len,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12 : 12 + head_len].decode("utf-8"))
    payload = blob[12 + head_len :]

    vocab = Vocabulary(
        itos=tuple(header["vocab_tokens"]), min_count=header.get("vocab_min_count", 1)
    )
    if vocab.sha256 != header["vocab_sha256"]:
        raise DataError(f"{path}: vocabulary hash mismatch")
    if header["labels"] != LABEL_INDEX:
        raise DataError(f"{path}: incompatible label-index map {header['labels']}")

    def tensor(name: str) -> np.ndarray:
        meta = header["tensors"][name]
        if meta["dtype"] != "f64":
            raise DataError(f"{path}: tensor {name} has unsupported dtype {meta['dtype']}")
        raw = payload[meta["offset"] : meta["offset"] + meta["length"]]
        return np.frombuffer(raw, dtype="<f8").reshape(meta["shape"]).astype(np.float64)

    encoder = EncoderParams(
        embed=tensor("embed"),
        fwd=LstmWeights(tensor("lstm_fwd.Wx"), tensor("lstm_fwd.Wh"), tensor("lstm_fwd.b")),
        bwd=LstmWeights(tensor("lstm_bwd.Wx"), tensor("lstm_bwd.Wh"), tensor("lstm_bwd.b")),
        proj_W=tensor("proj.W"),
        proj_b=tensor("proj.b"),
    )
    crf = CrfParams(trans=tensor("crf.trans"), start=tensor("crf.start"), end=tensor("crf.end"))
    return Model(encoder=encoder, crf=crf, vocab=vocab)
