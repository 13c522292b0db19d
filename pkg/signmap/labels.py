"""Placard label grammar: room numbers, restrooms and stairs."""
import re
from collections import Counter
from typing import NamedTuple

ROOM     = "Room"
RESTROOM = "Restroom"
STAIR    = "Stair"

RESTROOMS = ("MEN", "WOMEN", "GENDER INCLUSIVE")

# floor digit, the often unreadable decimal point, three digit room number
VALID_ROOM = re.compile(r"^([0-9])\.?([0-9]{3})$")
VALID_RESTROOM = re.compile(r"^(MEN|WOMEN|GENDER INCLUSIVE)$")
VALID_STAIR = re.compile(r"^STAIR([0-9]?)$")

class CanonicalLabel(NamedTuple):
    kind: str
    text: str


def validate_label(s):
    """Canonical label for a transcribed string, or None"""
    if s is None:
        return None
    s = s.strip()

    m = VALID_ROOM.match(s)
    if m:
        return CanonicalLabel(ROOM, "{}.{}".format(m.group(1), m.group(2)))
    if VALID_RESTROOM.match(s):
        return CanonicalLabel(RESTROOM, s)
    m = VALID_STAIR.match(s)
    if m:
        return CanonicalLabel(STAIR, "STAIR" + m.group(1))
    return None

def line_proposals(lines):
    """Every contiguous run of transcribed lines joined by one space"""
    proposals = []
    for i in range(len(lines)):
        for j in range(i + 1, len(lines) + 1):
            text = " ".join(x.strip() for x in lines[i:j] if x.strip())
            if text:
                proposals.append(text)
    return proposals

def vote(proposals):
    """Most frequent validated label among (threshold, text) proposals.

    Proposals are scanned in order of threshold; among equally frequent
    labels the one first proposed at the lowest threshold wins. Returns ""
    when nothing validates.
    """
    counts = Counter()
    first_seen = {}
    for threshold, text in sorted(proposals, key=lambda p: p[0]):
        label = validate_label(text)
        if label is None:
            continue
        counts[label.text] += 1
        first_seen.setdefault(label.text, threshold)

    if not counts:
        return ""
    return min(counts, key=lambda x: (-counts[x], first_seen[x], x))
