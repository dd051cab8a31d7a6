"""The 60-category xView label table.

Every category belongs to exactly one size group (small / medium / large)
and one rarity class (common / rare). Category ids are assigned here in
list order: small objects take 1-19, medium 20-46, large 47-60. The
partition is re-checked at import time so a typo in the tables can never
ship.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class SizeGroup(Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


class Rarity(Enum):
    COMMON = "common"
    RARE = "rare"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


_SMALL = (
    "passenger-vehicle",
    "small-car",
    "bus",
    "pickup-truck",
    "utility-truck",
    "truck",
    "cargo-truck",
    "truck-tractor",
    "trailer",
    "truck-tractor-w-flatbed-trailer",
    "crane-truck",
    "motorboat",
    "dump-truck",
    "scraper-tractor",
    "front-loader-bulldozer",
    "excavator",
    "cement-mixer",
    "ground-grader",
    "shipping-container",
)

_MEDIUM = (
    "fixed-wing-aircraft",
    "small-aircraft",
    "helicopter",
    "truck-tractor-w-box-trailer",
    "truck-tractor-w-liquid-tank",
    "railway-vehicle",
    "passenger-car",
    "cargo-container-car",
    "flat-car",
    "tank-car",
    "locomotive",
    "sailboat",
    "tugboat",
    "fishing-vessel",
    "yacht",
    "engineering-vehicle",
    "reach-stacker",
    "mobile-crane",
    "haul-truck",
    "hut-tent",
    "shed",
    "building",
    "damaged-building",
    "helipad",
    "storage-tank",
    "pylon",
    "tower",
)

_LARGE = (
    "passenger-cargo-plane",
    "maritime-vessel",
    "barge",
    "ferry",
    "container-ship",
    "oil-tanker",
    "tower-crane",
    "container-crane",
    "straddle-carrier",
    "aircraft-hangar",
    "facility",
    "construction-site",
    "vehicle-lot",
    "shipping-container-lot",
)

_RARE = frozenset(
    {
        "fixed-wing-aircraft",
        "small-aircraft",
        "helicopter",
        "truck-tractor-w-liquid-tank",
        "crane-truck",
        "railway-vehicle",
        "flat-car",
        "tank-car",
        "locomotive",
        "maritime-vessel",
        "sailboat",
        "tugboat",
        "barge",
        "ferry",
        "yacht",
        "container-ship",
        "oil-tanker",
        "engineering-vehicle",
        "tower-crane",
        "container-crane",
        "reach-stacker",
        "straddle-carrier",
        "mobile-crane",
        "haul-truck",
        "scraper-tractor",
        "cement-mixer",
        "ground-grader",
        "aircraft-hangar",
        "helipad",
        "pylon",
        "tower",
    }
)

_COMMON = frozenset(
    {
        "passenger-cargo-plane",
        "passenger-vehicle",
        "small-car",
        "bus",
        "pickup-truck",
        "utility-truck",
        "truck",
        "cargo-truck",
        "truck-tractor-w-box-trailer",
        "truck-tractor",
        "trailer",
        "truck-tractor-w-flatbed-trailer",
        "passenger-car",
        "cargo-container-car",
        "motorboat",
        "fishing-vessel",
        "dump-truck",
        "front-loader-bulldozer",
        "excavator",
        "hut-tent",
        "shed",
        "building",
        "damaged-building",
        "facility",
        "construction-site",
        "vehicle-lot",
        "storage-tank",
        "shipping-container-lot",
        "shipping-container",
    }
)


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    size_group: SizeGroup
    rarity: Rarity


def _build_table() -> dict[int, Category]:
    table: dict[int, Category] = {}
    next_id = 1
    for group, names in (
        (SizeGroup.SMALL, _SMALL),
        (SizeGroup.MEDIUM, _MEDIUM),
        (SizeGroup.LARGE, _LARGE),
    ):
        for name in names:
            rarity = Rarity.RARE if name in _RARE else Rarity.COMMON
            table[next_id] = Category(next_id, name, group, rarity)
            next_id += 1
    return table


def _check_partition(table: dict[int, Category]) -> None:
    names = [c.name for c in table.values()]
    if len(names) != 60 or len(set(names)) != 60:
        raise AssertionError(f"category table must hold 60 distinct names, got {len(names)}")
    size_union = set(_SMALL) | set(_MEDIUM) | set(_LARGE)
    if len(_SMALL) + len(_MEDIUM) + len(_LARGE) != len(size_union):
        raise AssertionError("size-group lists overlap")
    if _RARE & _COMMON:
        raise AssertionError(f"rarity lists overlap: {sorted(_RARE & _COMMON)}")
    if size_union != (_RARE | _COMMON):
        missing = size_union.symmetric_difference(_RARE | _COMMON)
        raise AssertionError(f"rarity lists do not partition the categories: {sorted(missing)}")


CATEGORIES: dict[int, Category] = _build_table()
_check_partition(CATEGORIES)

NUM_CATEGORIES = len(CATEGORIES)
_NAME_TO_ID = {c.name: c.id for c in CATEGORIES.values()}


def category(cat_id: int) -> Category:
    try:
        return CATEGORIES[cat_id]
    except KeyError:
        raise KeyError(f"unknown category id: {cat_id}") from None


def size_group_of(cat_id: int) -> SizeGroup:
    return category(cat_id).size_group


def rarity_of(cat_id: int) -> Rarity:
    return category(cat_id).rarity


def name_of(cat_id: int) -> str:
    return category(cat_id).name


def id_of(name: str) -> int:
    try:
        return _NAME_TO_ID[name]
    except KeyError:
        raise KeyError(f"unknown category name: {name!r}") from None


def ids_in_size_group(group: SizeGroup) -> list[int]:
    return [c.id for c in CATEGORIES.values() if c.size_group is group]


def ids_in_rarity(rarity: Rarity) -> list[int]:
    return [c.id for c in CATEGORIES.values() if c.rarity is rarity]
