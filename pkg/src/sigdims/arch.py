"""Architecture configs in compact vector notation.

A config is an ordered token list: integers are conv widths (3x3, stride 1,
pad 1), the string 'M' is a 2x2/stride-2 max-pool.  Example:

    [64, 64, 'M', 128, 128, 'M', 256, 256, 256]

JSON form: {"input": [H, W, C], "layers": [64, 64, "M", ...], "classes": 10}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Sequence

from .errors import DimensionError

MAXPOOL = "M"


@dataclass(frozen=True)
class ArchConfig:
    tokens: tuple
    classifier_width: int
    input_shape: tuple[int, int, int]  # (H, W, C)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        toks = self.tokens
        if not any(isinstance(t, int) for t in toks):
            raise DimensionError("config needs at least one conv token")
        if toks and toks[0] == MAXPOOL:
            raise DimensionError("config must not start with a max-pool")
        for t in toks:
            if isinstance(t, int):
                if t < 1:
                    raise DimensionError(f"conv width must be >= 1, got {t}")
            elif t != MAXPOOL:
                raise DimensionError(f"unknown token {t!r}")
        if self.classifier_width < 1:
            raise DimensionError("classifier width must be >= 1")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise DimensionError(f"bad input shape {self.input_shape}")

    @property
    def conv_widths(self) -> list[int]:
        return [t for t in self.tokens if isinstance(t, int)]

    def walk(self) -> Iterator[tuple[str, int, int, int, int]]:
        """Yield (kind, width, h, w, c_in) per token; pools yield width 0.

        h, w, c_in are the shapes *entering* the token.  Raises if a pool
        collapses the spatial size to zero.
        """
        h, w, c = self.input_shape
        for t in self.tokens:
            if t == MAXPOOL:
                yield ("pool", 0, h, w, c)
                h, w = h // 2, w // 2
                if h < 1 or w < 1:
                    raise DimensionError(
                        "spatial size collapsed to zero at a max-pool"
                    )
            else:
                yield ("conv", t, h, w, c)
                c = t

    def flat_features(self) -> int:
        """Flattened size feeding the classifier."""
        h, w, c = self.input_shape
        for t in self.tokens:
            if t == MAXPOOL:
                h, w = h // 2, w // 2
                if h < 1 or w < 1:
                    raise DimensionError("spatial size collapsed to zero at a max-pool")
            else:
                c = t
        return h * w * c

    def to_json(self) -> str:
        return json.dumps(
            {
                "input": list(self.input_shape),
                "layers": list(self.tokens),
                "classes": self.classifier_width,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ArchConfig":
        obj = json.loads(text)
        return cls.from_dict(obj)

    @classmethod
    def from_dict(cls, obj: dict) -> "ArchConfig":
        try:
            tokens = tuple(
                t if t == MAXPOOL else int(t) for t in obj["layers"]
            )
            input_shape = tuple(int(x) for x in obj["input"])
            classes = int(obj["classes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DimensionError(f"malformed config object: {exc}") from exc
        return cls(tokens=tokens, classifier_width=classes, input_shape=input_shape)

    def with_tokens(self, tokens: Sequence) -> "ArchConfig":
        return ArchConfig(
            tokens=tuple(tokens),
            classifier_width=self.classifier_width,
            input_shape=self.input_shape,
        )
