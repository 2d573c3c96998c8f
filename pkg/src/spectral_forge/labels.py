"""Class-label registries for semantic masks.

The registry is data, not code: the default 19-class surgical set (background
plus 18 tissue classes) ships as a JSON resource and any other contiguous
label set can be loaded the same way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import DataError

# Sentinel a mask may carry when an augmentation relabels blacked-out pixels.
# Deliberately outside every label set; masks only accept it when constructed
# with allow_ignore=True.
IGNORE_LABEL = 255


@dataclass(frozen=True)
class LabelSet:
    """Ordered, contiguous class-id registry with a designated background."""

    entries: tuple[tuple[int, str], ...]
    background_id: int = 0

    def __post_init__(self):
        ids = [cid for cid, _ in self.entries]
        names = [name for _, name in self.entries]
        if ids != list(range(len(ids))) or not ids:
            raise DataError(f"class ids must be contiguous from 0, got {ids}")
        if len(set(names)) != len(names):
            raise DataError("class names must be unique")
        if self.background_id not in ids:
            raise DataError(f"background_id {self.background_id} not a member")
        if any(cid >= IGNORE_LABEL for cid in ids):
            raise DataError(f"class ids must be < {IGNORE_LABEL}")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, class_id: int) -> bool:
        return 0 <= class_id < len(self.entries)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(cid for cid, _ in self.entries)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for _, name in self.entries)

    def tissue_ids(self) -> tuple[int, ...]:
        """All class ids except the background."""
        return tuple(cid for cid in self.ids if cid != self.background_id)

    def name_of(self, class_id: int) -> str:
        if class_id not in self:
            raise DataError(f"unknown class id {class_id}")
        return self.entries[class_id][1]

    def id_of(self, name: str) -> int:
        for cid, n in self.entries:
            if n == name:
                return cid
        raise DataError(f"unknown class name {name!r}")

    @classmethod
    def from_names(cls, names, background: str = "background") -> "LabelSet":
        entries = tuple((i, n) for i, n in enumerate(names))
        bg = [i for i, n in enumerate(names) if n == background]
        if not bg:
            raise DataError(f"background class {background!r} missing from names")
        return cls(entries=entries, background_id=bg[0])

    @classmethod
    def from_dict(cls, payload: dict) -> "LabelSet":
        entries = tuple(
            (int(c["id"]), str(c["name"]))
            for c in sorted(payload["classes"], key=lambda c: int(c["id"]))
        )
        return cls(entries=entries, background_id=int(payload["background_id"]))

    @classmethod
    def from_json(cls, path: str | Path) -> "LabelSet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "background_id": self.background_id,
            "classes": [{"id": cid, "name": name} for cid, name in self.entries],
        }


def surgical_label_set() -> LabelSet:
    """The default registry: background + 18 tissue classes."""
    payload = json.loads(
        resources.files("spectral_forge.data")
        .joinpath("surgical_labels.json")
        .read_text(encoding="utf-8")
    )
    return LabelSet.from_dict(payload)
