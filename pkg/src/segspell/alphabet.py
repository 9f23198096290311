"""Label alphabets and the linguistic handshape feature tables.

The letter alphabet is A-Z plus the two boundary symbols ``<s>`` (begin
silence) and ``</s>`` (end silence), 28 classes in total.  Doubled-letter
tokens (e.g. ``ZZ``) are off by default and can be enabled per experiment.

Two feature tables ship as editable JSON under ``segspell/data``:

* phonological: six contrastive handshape features with 4+7+5+3+4+3 = 26
  values in total; per-letter assignments are intentionally partial.
* phonetic: 27 rows (a-z plus zz) of joint angles, spread flag, thumb
  parameters and palm orientation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

BEGIN_SILENCE = "<s>"
END_SILENCE = "</s>"
LETTERS = tuple("ABCDEFGHIJKLMNOPQRSTUVWXYZ")

PHONOLOGICAL_FEATURES = ("SF POR", "SF joints", "SF quantity",
                         "SF thumb", "SF handpart", "UF")


class UnknownSymbolError(KeyError):
    """Raised when a symbol is not part of the alphabet or a table."""


def _load_data(name):
    with resources.files("segspell.data").joinpath(name).open("r", encoding="utf-8") as f:
        return json.load(f)


class LetterAlphabet:
    """Ordered symbol set: A-Z, optional doubled tokens, then <s> and </s>.

    Letter indices are fixed (A=0 .. Z=25); boundary symbols always take the
    last two indices so that serialized models keep stable class ids.
    """

    def __init__(self, doubled=()):
        for tok in doubled:
            if not (len(tok) == 2 and tok[0] == tok[1] and tok[0] in LETTERS):
                raise ValueError("doubled token must repeat one letter: %r" % (tok,))
        self.letters = LETTERS
        self.doubled = tuple(doubled)
        self.symbols = self.letters + self.doubled + (BEGIN_SILENCE, END_SILENCE)
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate symbols in alphabet")
        self._index = {s: i for i, s in enumerate(self.symbols)}

    @property
    def class_count(self):
        return len(self.symbols)

    @property
    def silences(self):
        return (BEGIN_SILENCE, END_SILENCE)

    def letter_index(self, symbol):
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownSymbolError("unknown symbol: %r" % (symbol,)) from None

    def symbol(self, index):
        if not 0 <= index < len(self.symbols):
            raise UnknownSymbolError("index out of range: %d" % index)
        return self.symbols[index]

    def is_silence(self, symbol):
        return symbol in (BEGIN_SILENCE, END_SILENCE)

    def tokenize(self, word):
        """Split a word into letter tokens, greedily matching doubled tokens."""
        tokens = []
        i = 0
        while i < len(word):
            pair = word[i:i + 2]
            if pair in self.doubled:
                tokens.append(pair)
                i += 2
                continue
            ch = word[i]
            if ch not in self._index or self.is_silence(ch):
                raise UnknownSymbolError(
                    "word %r has out-of-alphabet character %r at position %d"
                    % (word, ch, i))
            tokens.append(ch)
            i += 1
        return tokens


class PhonologicalFeatureTable:
    """Six-feature table; per-letter assignments may be partial."""

    def __init__(self, data=None):
        if data is None:
            data = _load_data("phonological_features.json")
        self.features = {name: tuple(spec["values"])
                         for name, spec in data["features"].items()}
        if tuple(self.features) != PHONOLOGICAL_FEATURES:
            raise ValueError("feature table must declare the six features in order")
        self.assignments = {}
        for letter, vals in data.get("assignments", {}).items():
            if letter not in LETTERS:
                raise UnknownSymbolError("assignment for non-letter %r" % (letter,))
            for feat, val in vals.items():
                if feat not in self.features:
                    raise ValueError("unknown feature %r for letter %r" % (feat, letter))
                if val not in self.features[feat]:
                    raise ValueError("value %r not declared for feature %r" % (val, feat))
            self.assignments[letter] = dict(vals)

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls(json.load(f))

    @property
    def total_value_count(self):
        return sum(len(v) for v in self.features.values())

    def value_count(self, feature):
        return len(self.features[feature])

    def value_index(self, feature, value):
        return self.features[feature].index(value)

    def phonological_values(self, letter):
        """Stored assignments for one letter; unassigned features map to None."""
        if letter not in LETTERS:
            raise UnknownSymbolError("unknown letter: %r" % (letter,))
        stored = self.assignments.get(letter, {})
        return {feat: stored.get(feat) for feat in self.features}

    def default_value(self, feature):
        """First declared value (SIL or N/A), used for silence frames and
        as a fallback target for letters the table leaves unassigned."""
        return self.features[feature][0]


@dataclass(frozen=True)
class PhoneticRow:
    index_mcp: float
    index_pip: float
    middle_mcp: float
    middle_pip: float
    ring_mcp: float
    ring_pip: float
    pinky_mcp: float
    pinky_pip: float
    spread: float
    thumb_y: float
    thumb_z: float
    thumb_pip: float
    thumb_touch: float
    touch_finger: str
    palm: str

    def finger_angles(self):
        return (self.index_mcp, self.index_pip, self.middle_mcp, self.middle_pip,
                self.ring_mcp, self.ring_pip, self.pinky_mcp, self.pinky_pip)


class PhoneticFeatureTable:
    """27-row table of numeric handshape descriptions (a-z plus zz)."""

    ANGLE_VALUES = frozenset({0, 45, 90, 135, 180, -45, -1, 1})

    def __init__(self, data=None):
        if data is None:
            data = _load_data("phonetic_features.json")
        rows = data["rows"]
        if len(rows) != 27:
            raise ValueError("phonetic table must have 27 rows, got %d" % len(rows))
        self.rows = {}
        for letter, r in rows.items():
            row = PhoneticRow(
                index_mcp=r["index"][0], index_pip=r["index"][1],
                middle_mcp=r["middle"][0], middle_pip=r["middle"][1],
                ring_mcp=r["ring"][0], ring_pip=r["ring"][1],
                pinky_mcp=r["pinky"][0], pinky_pip=r["pinky"][1],
                spread=r["spread"],
                thumb_y=r["thumb"]["y"], thumb_z=r["thumb"]["z"],
                thumb_pip=r["thumb"]["pip"], thumb_touch=r["thumb"]["touch"],
                touch_finger=r["touch_finger"], palm=r["palm"])
            for v in row.finger_angles() + (row.spread, row.thumb_y, row.thumb_z,
                                            row.thumb_pip, row.thumb_touch):
                if v not in self.ANGLE_VALUES:
                    raise ValueError("row %r has out-of-table value %r" % (letter, v))
            self.rows[letter] = row

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls(json.load(f))

    def phonetic_values(self, letter):
        key = letter.lower()
        if key not in self.rows:
            raise UnknownSymbolError("unknown letter: %r" % (letter,))
        return self.rows[key]
