"""Closed instruction vocabulary, paraphrase templates and verb/noun parsing."""
from __future__ import annotations

import re

from .errors import VocabularyError

VERBS = ("move", "reach", "grasp", "release", "pull", "push", "press", "lift", "slide", "rotate")
NOUNS = ("handle", "drawer", "lid", "button", "lever", "block", "cup", "target", "knob", "item")
COLORS = ("red", "blue", "green", "yellow")

# surface tokens that count as an occurrence of each canonical verb
VERB_FAMILIES: dict[str, tuple[str, ...]] = {
    "move": ("move", "go", "shift", "travel", "hover", "head", "position"),
    "reach": ("reach", "approach"),
    "grasp": ("grasp", "grab", "grip", "seize", "clutch", "hold"),
    "release": ("release", "drop", "let", "deposit", "unclamp"),
    "pull": ("pull", "drag", "tug", "yank", "draw"),
    "push": ("push", "shove", "nudge", "drive", "thrust"),
    "press": ("press", "depress", "hit", "tap", "punch"),
    "lift": ("lift", "raise", "hoist", "elevate", "pick"),
    "slide": ("slide", "glide", "scoot", "skid", "slip"),
    "rotate": ("rotate", "turn", "twist", "spin", "swivel"),
}

TEMPLATES: dict[str, tuple[str, ...]] = {
    "move": (
        "move above the {obj}",
        "go to the {obj}",
        "shift the gripper over the {obj}",
        "travel toward the {obj}",
        "hover over the {obj}",
        "move the gripper above the {obj}",
        "go right above the {obj}",
        "now move over the {obj}",
        "position the fingers above the {obj}",
        "head over to the {obj}",
        "move into place near the {obj}",
    ),
    "reach": (
        "reach the {obj}",
        "reach for the {obj}",
        "approach the {obj}",
        "reach toward the {obj}",
        "approach the {obj} carefully",
        "reach out to the {obj}",
        "now reach the {obj}",
        "slowly approach the {obj}",
        "reach over to the {obj}",
        "approach close to the {obj}",
    ),
    "grasp": (
        "grasp the {obj}",
        "grab the {obj}",
        "grip the {obj}",
        "seize the {obj}",
        "clutch the {obj}",
        "take hold of the {obj}",
        "close the fingers to grip the {obj}",
        "firmly grasp the {obj}",
        "grab onto the {obj} now",
        "grip the {obj} tightly",
    ),
    "release": (
        "release the {obj}",
        "drop the {obj}",
        "let the {obj} fall",
        "deposit the {obj}",
        "unclamp the {obj}",
        "open the fingers to release the {obj}",
        "gently drop the {obj}",
        "release the {obj} now",
        "let the {obj} down",
        "carefully deposit the {obj}",
    ),
    "pull": (
        "pull the {obj}",
        "drag the {obj}",
        "tug the {obj}",
        "yank the {obj}",
        "draw the {obj} toward you",
        "pull the {obj} open",
        "drag the {obj} back",
        "tug on the {obj}",
        "pull the {obj} toward the robot",
        "firmly pull the {obj}",
    ),
    "push": (
        "push the {obj}",
        "shove the {obj}",
        "nudge the {obj}",
        "drive the {obj} forward",
        "thrust toward the {obj}",
        "push toward the {obj}",
        "shove it onto the {obj}",
        "nudge it over to the {obj}",
        "push it onto the {obj}",
        "gently push the {obj}",
    ),
    "press": (
        "press the {obj}",
        "depress the {obj}",
        "hit the {obj}",
        "tap the {obj}",
        "punch the {obj}",
        "press down on the {obj}",
        "firmly press the {obj}",
        "tap on the {obj}",
        "depress the {obj} fully",
        "press the {obj} down",
    ),
    "lift": (
        "lift the {obj}",
        "raise the {obj}",
        "hoist the {obj}",
        "elevate the {obj}",
        "pick up the {obj}",
        "lift the {obj} up",
        "raise the {obj} higher",
        "hoist the {obj} into the air",
        "lift up the {obj}",
        "raise the {obj} off the table",
    ),
    "slide": (
        "slide the {obj}",
        "glide the {obj} across",
        "scoot the {obj} over",
        "skid the {obj} sideways",
        "slip the {obj} along",
        "slide the {obj} shut",
        "slide the {obj} along its track",
        "glide the {obj} smoothly",
        "slide the {obj} across",
        "scoot the {obj} along",
    ),
    "rotate": (
        "rotate the {obj}",
        "turn the {obj}",
        "twist the {obj}",
        "spin the {obj}",
        "swivel the {obj}",
        "rotate the {obj} slowly",
        "turn the {obj} around",
        "twist the {obj} firmly",
        "spin the {obj} halfway",
        "swivel the {obj} into place",
    ),
}

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_VERB_LOOKUP = {tok: verb for verb, toks in VERB_FAMILIES.items() for tok in toks}


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return _TOKEN_RE.findall(text.lower())


def parse_verb_noun(text: str) -> tuple[str, str]:
    """Recover the single (verb, noun) pair of a fine-grained instruction."""
    toks = tokenize(text)
    verbs = [_VERB_LOOKUP[t] for t in toks if t in _VERB_LOOKUP]
    nouns = [t for t in toks if t in NOUNS]
    if len(verbs) != 1 or len(nouns) != 1:
        raise VocabularyError(f"instruction {text!r} does not name exactly one verb and one noun")
    return verbs[0], nouns[0]


def check_verb_noun(verb: str, noun: str) -> None:
    if verb not in VERBS:
        raise VocabularyError(f"verb {verb!r} not in vocabulary")
    if noun not in NOUNS:
        raise VocabularyError(f"noun {noun!r} not in vocabulary")


def lexicon(extra_texts=()) -> list[str]:
    """Sorted word list covering every template, noun, color and the given texts."""
    words = set(NOUNS) | set(COLORS)
    for toks in VERB_FAMILIES.values():
        words.update(toks)
    for templates in TEMPLATES.values():
        for t in templates:
            words.update(tokenize(t.replace("{obj}", "")))
    for text in extra_texts:
        words.update(tokenize(text))
    return sorted(words)
