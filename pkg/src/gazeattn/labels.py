"""Gesture vocabulary for the suturing task.

Ten gesture classes, G1 through G11 with G7 absent from the vocabulary.
Labels are carried around as small ints (the gesture number); UNLABELED (-1)
marks frames outside any annotated segment and is never a training target.
"""

from .errors import ParseError

GESTURE_IDS = (1, 2, 3, 4, 5, 6, 8, 9, 10, 11)
UNLABELED = -1

GESTURE_DESCRIPTIONS = {
    1: "Reaching for needle with right hand",
    2: "Positioning needle",
    3: "Pushing needle through tissue",
    4: "Transferring needle from left to right",
    5: "Moving to center with needle in grip",
    6: "Pulling suture with left hand",
    8: "Orienting needle",
    9: "Using right hand to help tighten suture",
    10: "Loosening more suture",
    11: "Dropping suture at end and moving to end points",
}


def gesture_name(gid: int) -> str:
    if gid == UNLABELED:
        return "UNLABELED"
    return f"G{gid}"


def parse_gesture(token: str, line: int | None = None) -> int:
    """Parse a 'Gk' token into a gesture id, rejecting ids outside the vocabulary."""
    if not token.startswith("G"):
        raise ParseError(f"expected gesture token 'Gk', got {token!r}", line)
    try:
        gid = int(token[1:])
    except ValueError:
        raise ParseError(f"malformed gesture token {token!r}", line) from None
    if gid not in GESTURE_IDS:
        raise ParseError(f"unknown gesture {token!r} (valid: G1-G6, G8-G11)", line)
    return gid


def class_list(num_classes: int) -> list[int]:
    """The first num_classes gesture ids, used by the synthetic dataset."""
    if not 1 <= num_classes <= len(GESTURE_IDS):
        raise ValueError(f"num_classes must be in [1, {len(GESTURE_IDS)}]")
    return list(GESTURE_IDS[:num_classes])
