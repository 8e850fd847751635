"""Structured caption templating from detected scene instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class InstanceList:
    """Object/background instances of one image: (class_name, count) pairs."""

    entries: tuple[tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "entries", tuple((str(n), int(c)) for n, c in self.entries)
        )
        if not self.entries:
            raise ConfigError("instance list must not be empty")
        for name, count in self.entries:
            if not name:
                raise ConfigError("instance class names must be nonempty")
            if count < 1:
                raise ConfigError(f"instance count must be >= 1, got {count}")

    def __len__(self):
        return len(self.entries)


def render_structured_caption(instances: InstanceList) -> str:
    """'An image with {n1} {c1}, {n2} {c2}, ...' with a trailing period."""
    body = ", ".join(f"{count} {name}" for name, count in instances.entries)
    return f"An image with {body}."


def caption_variants(instances: InstanceList, n: int = 5,
                     seed: int = 0) -> list[str]:
    """n captions with seeded-random instance orderings (reproducible)."""
    if n < 1:
        raise ConfigError(f"need at least one variant, got {n}")
    rng = np.random.default_rng(seed)
    variants = []
    for _ in range(n):
        order = rng.permutation(len(instances.entries))
        shuffled = InstanceList(tuple(instances.entries[i] for i in order))
        variants.append(render_structured_caption(shuffled))
    return variants
