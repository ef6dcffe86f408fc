"""Category definitions and the default Cityscapes panoptic class set."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import FormatError, ValidationError


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    isthing: bool
    color: tuple[int, int, int] = (0, 0, 0)


class ClassSet:
    """Ordered, id-keyed collection of categories."""

    def __init__(self, categories: Iterable[Category]):
        self._by_id: dict[int, Category] = {}
        for cat in categories:
            if cat.id in self._by_id:
                raise ValidationError(f"duplicate category id {cat.id}")
            self._by_id[cat.id] = cat

    def __contains__(self, category_id) -> bool:
        return category_id in self._by_id

    def __getitem__(self, category_id: int) -> Category:
        return self._by_id[category_id]

    def __iter__(self) -> Iterator[Category]:
        return iter(self._by_id.values())

    def __len__(self) -> int:
        return len(self._by_id)

    @property
    def ids(self) -> list[int]:
        return list(self._by_id)

    @property
    def things(self) -> list[Category]:
        return [c for c in self if c.isthing]

    @property
    def stuff(self) -> list[Category]:
        return [c for c in self if not c.isthing]

    def to_json(self) -> list[dict]:
        return [
            {"id": c.id, "name": c.name, "isthing": int(c.isthing), "color": list(c.color)}
            for c in self
        ]

    @classmethod
    def from_json(cls, doc) -> "ClassSet":
        if not isinstance(doc, list):
            raise FormatError("classes document must be a JSON list")
        cats = []
        for entry in doc:
            try:
                cats.append(
                    Category(
                        id=int(entry["id"]),
                        name=str(entry.get("name", entry["id"])),
                        isthing=bool(entry["isthing"]),
                        color=tuple(int(v) for v in entry.get("color", (0, 0, 0))),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad category entry {entry!r}: {exc}") from exc
        return cls(cats)


def load_classes(path) -> ClassSet:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return ClassSet.from_json(doc)


# Cityscapes label ids and colors for the 19 evaluated classes (11 stuff, 8 things).
_CITYSCAPES = [
    (7, "road", False, (128, 64, 128)),
    (8, "sidewalk", False, (244, 35, 232)),
    (11, "building", False, (70, 70, 70)),
    (12, "wall", False, (102, 102, 156)),
    (13, "fence", False, (190, 153, 153)),
    (17, "pole", False, (153, 153, 153)),
    (19, "traffic light", False, (250, 170, 30)),
    (20, "traffic sign", False, (220, 220, 0)),
    (21, "vegetation", False, (107, 142, 35)),
    (22, "terrain", False, (152, 251, 152)),
    (23, "sky", False, (70, 130, 180)),
    (24, "person", True, (220, 20, 60)),
    (25, "rider", True, (255, 0, 0)),
    (26, "car", True, (0, 0, 142)),
    (27, "truck", True, (0, 0, 70)),
    (28, "bus", True, (0, 60, 100)),
    (31, "train", True, (0, 80, 100)),
    (32, "motorcycle", True, (0, 0, 230)),
    (33, "bicycle", True, (119, 11, 32)),
]

CITYSCAPES = ClassSet(Category(*row) for row in _CITYSCAPES)
