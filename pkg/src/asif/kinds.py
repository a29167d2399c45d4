"""Shared enums and catalogue constants."""

from __future__ import annotations

import enum

BLOCK_HEIGHT = 0.7
BLOCK_WIDTHS = (0.7, 2.1, 3.5)
SMALL, MEDIUM, LARGE = BLOCK_WIDTHS
SCENE_SIZE = 16.0
MAX_STEPS = 14
N_OFFSETS = 15
N_ADD_OFFSETS = 7
# Geometric tolerance for "same level" and boundary-contact tests.
EPS = 1e-9


class ObjectKind(enum.IntEnum):
    FLOOR = 0
    OBSTACLE = 1
    TARGET = 2
    PLACED = 3
    AVAILABLE = 4


class TaskKind(enum.Enum):
    EDIT_PRETRAIN_CONNECT = "EditPretrainConnect"
    EDIT_PRETRAIN_COVER = "EditPretrainCover"
    EDIT_TRANSFER = "EditTransfer"
    DELETE_PRETRAIN = "DeletePretrain"
    DELETE_TRANSFER = "DeleteTransfer"
    ADD_PRETRAIN = "AddPretrain"
    ADD_TRANSFER = "AddTransfer"
    COMBINED_PRETRAIN = "CombinedPretrain"
    COMBINED_TRANSFER = "CombinedTransfer"

    @property
    def family(self) -> str:
        return _FAMILY[self]

    @property
    def is_combined(self) -> bool:
        return _FAMILY[self] == "combined"

    @property
    def is_pretrain(self) -> bool:
        return "Pretrain" in self.value

    @classmethod
    def parse(cls, name: str) -> "TaskKind":
        for kind in cls:
            if name in (kind.value, kind.name) or name.lower() == kind.value.lower():
                return kind
        raise ValueError(f"unknown task {name!r}")


_FAMILY = {
    TaskKind.EDIT_PRETRAIN_CONNECT: "edit",
    TaskKind.EDIT_PRETRAIN_COVER: "edit",
    TaskKind.EDIT_TRANSFER: "edit",
    TaskKind.DELETE_PRETRAIN: "delete",
    TaskKind.DELETE_TRANSFER: "delete",
    TaskKind.ADD_PRETRAIN: "add",
    TaskKind.ADD_TRANSFER: "add",
    TaskKind.COMBINED_PRETRAIN: "combined",
    TaskKind.COMBINED_TRANSFER: "combined",
}
