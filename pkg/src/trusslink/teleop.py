"""Operator keyboard grammar: chords of simultaneously pressed keys map to
selection, servo choice and an action.

The same grammar drives the terminal interface, the command server and the
browser panel; a shared fixture corpus keeps the implementations aligned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

# canonical key names; aliases cover browser KeyboardEvent.key values
_ALIASES = {
    "arrowup": "up",
    "arrowdown": "down",
    "arrowleft": "left",
    "arrowright": "right",
    "↑": "up",
    "↓": "down",
    "←": "left",
    "→": "right",
    "-": "minus",
    "_": "minus",
    "+": "plus",
    "=": "plus",
    "/": "slash",
    "*": "star",
    "numlock": "numlock",
}

_PRESETS = {
    "c": ("triangle crawl", 0),
    "v": ("tetrahedron crawl", 0),
    "b": ("diamond crawl", 0),
    "d": ("ratchet crawl", 0),
    "f": ("ratchet crawl", 1),
    "g": ("ratchet crawl", 2),
    "t": ("topple", 0),
    "y": ("topple", 1),
    "u": ("topple", 2),
    "o": ("rotate ccw", 0),
    "p": ("rotate cw", 0),
}


def normalize_key(key: str) -> str:
    k = key.lower()
    return _ALIASES.get(k, k)


@dataclass(frozen=True)
class TeleopCommand:
    """One parsed key chord."""

    selection: frozenset[int] = frozenset()
    servo_select: str = "both"  # "A" | "B" | "both"
    action: str = "none"
    preset: Optional[str] = None
    variant: int = 0
    direction: Optional[int] = None  # crawl direction: 0 = servo A, 1 = servo B

    def to_dict(self) -> dict:
        return {
            "selection": sorted(self.selection),
            "servo_select": self.servo_select,
            "action": self.action,
            "preset": self.preset,
            "variant": self.variant,
            "direction": self.direction,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TeleopCommand":
        return cls(
            selection=frozenset(data.get("selection", [])),
            servo_select=data.get("servo_select", "both"),
            action=data.get("action", "none"),
            preset=data.get("preset"),
            variant=data.get("variant", 0),
            direction=data.get("direction"),
        )


def parse_teleop(keys, crawl_mode: bool = False) -> TeleopCommand:
    """Parse one chord of pressed keys; unknown keys are ignored.

    Digits select link ordinals (0 aliases the lowest ordinal); left/right
    pick servo A/B (both when both or neither are pressed).  In crawl mode,
    digits toggle per-link crawling instead of selecting.
    """
    chord = {normalize_key(k) for k in keys}

    selection = set()
    for key in chord:
        if len(key) == 1 and key in "0123456789":
            ordinal = int(key)
            selection.add(1 if ordinal == 0 else ordinal)

    left, right = "left" in chord, "right" in chord
    if left and not right:
        servo_select = "A"
    elif right and not left:
        servo_select = "B"
    else:
        servo_select = "both"

    base = dict(selection=frozenset(selection), servo_select=servo_select)

    if "s" in chord:
        return TeleopCommand(action="stop", **base)
    if "numlock" in chord:
        return TeleopCommand(action="crawl_mode_toggle", **base)
    if crawl_mode:
        if "slash" in chord:
            return TeleopCommand(action="crawl_direction", direction=0, **base)
        if "star" in chord:
            return TeleopCommand(action="crawl_direction", direction=1, **base)
        if selection:
            return TeleopCommand(action="crawl_toggle", **base)
        return TeleopCommand(action="none", **base)
    for key, (preset, variant) in _PRESETS.items():
        if key in chord:
            return TeleopCommand(
                action="preset", preset=preset, variant=variant, **base
            )
    if "r" in chord:
        return TeleopCommand(action="ratchet_reset", **base)
    if "minus" in chord:
        return TeleopCommand(action="full_contract_all", **base)
    if "plus" in chord:
        return TeleopCommand(action="full_expand_all", **base)
    if "up" in chord:
        return TeleopCommand(action="expand", **base)
    if "down" in chord:
        return TeleopCommand(action="contract", **base)
    return TeleopCommand(action="none", **base)
