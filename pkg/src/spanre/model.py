"""Model configuration, parameter store and input featurization."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .tensor import Tensor

PAD, UNK = "<pad>", "<unk>"


class Vocab:
    """Token to id map with ``<pad>`` = 0 and ``<unk>`` = 1."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [PAD, UNK]
        self.stoi: dict[str, int] = {PAD: 0, UNK: 1}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        idx = self.stoi.get(token)
        if idx is None:
            idx = self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return idx

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, 1)

    def lookup_all(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.stoi.get(t, 1) for t in tokens], dtype=np.int64)

    @classmethod
    def from_list(cls, itos: Sequence[str]) -> "Vocab":
        if list(itos[:2]) != [PAD, UNK]:
            raise ValueError("vocabulary must start with <pad>, <unk>")
        return cls(itos[2:])


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    Defaults follow the published settings where they exist; ``char_out``
    and ``hidden`` are stand-ins for values the GRN encoder leaves implicit.
    """

    word_dim: int = 300
    char_dim: int = 300
    char_out: int = 50
    char_kernels: tuple = (1, 2, 3)
    single_char_kernel: int = 3
    context_kernels: tuple = (1, 3, 5)
    hidden: int = 300
    sample_len: int = 4
    att_hidden: int = 256
    max_len: int = 120
    dropout: float = 0.25
    threshold: float = 0.5
    subject_mlp_hidden: bool = True
    vector_gate: bool = True
    multi_scale_chars: bool = True
    entity_attention: bool = True
    lowercase: bool = False
    init_scale: float = 0.1

    def __post_init__(self):
        self.char_kernels = tuple(self.char_kernels)
        self.context_kernels = tuple(self.context_kernels)
        if self.hidden % 2:
            raise ValueError("hidden must be even: the subject BiLSTM uses hidden/2 per direction")
        if self.sample_len < 1:
            raise ValueError("sample_len must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        for name in ("word_dim", "char_dim", "char_out", "hidden", "att_hidden", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def active_char_kernels(self) -> tuple:
        return self.char_kernels if self.multi_scale_chars else (self.single_char_kernel,)

    @property
    def char_feature_dim(self) -> int:
        return self.char_out * len(self.active_char_kernels)

    @property
    def fused_dim(self) -> int:
        return (3 if self.entity_attention else 2) * self.hidden

    def to_dict(self) -> dict:
        d = asdict(self)
        d["char_kernels"] = list(self.char_kernels)
        d["context_kernels"] = list(self.context_kernels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ModelParams:
    """All learnable tensors keyed by name, plus what is needed to featurize input."""

    config: ModelConfig
    vocab: Vocab
    chars: Vocab
    relations: list
    tensors: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[tuple]:
        return iter(self.tensors.items())

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def parameters(self) -> list:
        return list(self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def num_weights(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=ModelConfig.from_dict(self.config.to_dict()),
            vocab=Vocab.from_list(self.vocab.itos),
            chars=Vocab.from_list(self.chars.itos),
            relations=list(self.relations),
            tensors={k: Tensor(v.data, requires_grad=v.requires_grad) for k, v in self.tensors.items()},
        )

    def fingerprint(self) -> str:
        """Stable digest of config, vocabularies and weights."""
        import hashlib

        h = hashlib.sha256()
        h.update(json.dumps(self.config.to_dict(), sort_keys=True).encode())
        h.update("\x00".join(self.vocab.itos).encode())
        h.update("\x00".join(self.chars.itos).encode())
        h.update("\x00".join(self.relations).encode())
        for name in sorted(self.tensors):
            h.update(name.encode())
            h.update(self.tensors[name].data.tobytes())
        return h.hexdigest()


# Names of embedding tables whose <pad> row stays at zero.
PADDED_TABLES = ("word_emb", "char_emb")


def _uniform(rng, shape, scale):
    return rng.uniform(-scale, scale, size=shape)


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(config: ModelConfig, vocab: Vocab, chars: Vocab, relations: Sequence[str],
                rng: np.random.Generator, word_vectors: Optional[dict] = None) -> ModelParams:
    """Randomly initialize every tensor for the given configuration.

    ``word_vectors`` maps tokens to pretrained rows; tokens without a vector
    keep their random initialization.
    """
    if len(relations) < 1:
        raise ValueError("at least one relation is required")
    c = config
    t: dict = {}

    def param(name, arr):
        t[name] = Tensor(arr, requires_grad=True)

    word = _uniform(rng, (len(vocab), c.word_dim), c.init_scale)
    if word_vectors:
        for tok, vec in word_vectors.items():
            if tok in vocab:
                word[vocab.lookup(tok)] = vec
    word[0] = 0.0
    param("word_emb", word)
    char = _uniform(rng, (len(chars), c.char_dim), c.init_scale)
    char[0] = 0.0
    param("char_emb", char)
    for k in c.active_char_kernels:
        param(f"char_conv.k{k}.kernel", _glorot(rng, (k, c.char_dim, c.char_out), k * c.char_dim, c.char_out))
        param(f"char_conv.k{k}.bias", np.zeros(c.char_out))

    d_z = c.char_feature_dim + c.word_dim
    d = c.hidden
    for k in c.context_kernels:
        param(f"ctx.k{k}.kernel", _glorot(rng, (k, d_z, d), k * d_z, d))
        param(f"ctx.k{k}.bias", np.zeros(d))
    gw = d if c.vector_gate else 1
    param("grl.weight", _glorot(rng, (2 * d, gw), 2 * d, gw))
    param("grl.bias", np.zeros(gw))

    d_h = d // 2
    for direction in ("fwd", "bwd"):
        param(f"subj_lstm.{direction}.weight", _glorot(rng, (d + d_h, 4 * d_h), d + d_h, 4 * d_h))
        param(f"subj_lstm.{direction}.bias", np.zeros(4 * d_h))
    param("relpos", _uniform(rng, (2 * c.max_len + 1, d), c.init_scale))
    if c.entity_attention:
        param("att.U", _glorot(rng, (c.att_hidden, d), d, c.att_hidden))
        param("att.V", _glorot(rng, (c.att_hidden, d), d, c.att_hidden))

    for head in ("sub_start", "sub_end"):
        if c.subject_mlp_hidden:
            param(f"{head}.hidden.weight", _glorot(rng, (d, d), d, d))
            param(f"{head}.hidden.bias", np.zeros(d))
        param(f"{head}.out.weight", _glorot(rng, (d, 1), d, 1))
        param(f"{head}.out.bias", np.zeros(1))
    R = len(relations)
    for head in ("obj_start", "obj_end"):
        param(f"{head}.weight", _glorot(rng, (c.fused_dim, R), c.fused_dim, R))
        param(f"{head}.bias", np.zeros(R))
    return ModelParams(config=c, vocab=vocab, chars=chars, relations=list(relations), tensors=t)


@dataclass
class SentenceInput:
    """Token and character ids for one sentence."""

    tokens: list
    word_ids: np.ndarray
    char_ids: list

    def __len__(self) -> int:
        return len(self.tokens)


def featurize(tokens: Sequence[str], params: ModelParams) -> SentenceInput:
    if not tokens:
        raise ValueError("cannot featurize an empty sentence")
    lower = params.config.lowercase
    words = [tok.lower() if lower else tok for tok in tokens]
    char_ids = [params.chars.lookup_all(list(w)) if w else np.array([0], dtype=np.int64) for w in tokens]
    return SentenceInput(tokens=list(tokens), word_ids=params.vocab.lookup_all(words), char_ids=char_ids)


def build_vocabs(sentences: Iterable[Sequence[str]], lowercase: bool = False,
                 extra_words: Iterable[str] = ()) -> tuple:
    """Word and character vocabularies in first-seen order (deterministic)."""
    vocab, chars = Vocab(), Vocab()
    for tokens in sentences:
        for tok in tokens:
            vocab.add(tok.lower() if lowercase else tok)
            for ch in tok:
                chars.add(ch)
    for w in extra_words:
        vocab.add(w.lower() if lowercase else w)
    return vocab, chars
