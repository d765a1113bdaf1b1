"""Porter (1980) suffix-stripping stemmer, original rule set.

Within each step only the rule with the longest matching suffix is
considered; if its condition fails the step leaves the word alone.
"""

VOWELS = frozenset("aeiou")


def _consonant_flags(word: str) -> list[bool]:
    flags = []
    for i, ch in enumerate(word):
        if ch in VOWELS:
            flags.append(False)
        elif ch == "y":
            # y after a consonant acts as a vowel
            flags.append(True if i == 0 else not flags[i - 1])
        else:
            flags.append(True)
    return flags


def measure(stem: str) -> int:
    """m in [C](VC)^m[V]."""
    flags = _consonant_flags(stem)
    return sum(1 for a, b in zip(flags, flags[1:]) if not a and b)


def _has_vowel(stem):
    return not all(_consonant_flags(stem))


def _ends_double_consonant(word):
    return len(word) >= 2 and word[-1] == word[-2] and _consonant_flags(word)[-1]


def _ends_cvc(word):
    if len(word) < 3:
        return False
    f = _consonant_flags(word)
    return f[-3] and not f[-2] and f[-1] and word[-1] not in "wxy"


def _m_gt0(stem):
    return measure(stem) > 0


def _m_gt1(stem):
    return measure(stem) > 1


def _apply(word, rules):
    """First rule whose suffix matches decides; rules are ordered longest-first."""
    for suffix, repl, cond in rules:
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if cond is None or cond(stem):
                return stem + repl, True
            return word, False
    return word, False


STEP1A = [("sses", "ss", None), ("ies", "i", None), ("ss", "ss", None), ("s", "", None)]

STEP2 = [
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"), ("eli", "e"),
    ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"), ("ator", "ate"),
    ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"), ("ousness", "ous"),
    ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
]

STEP3 = [
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
]

STEP4 = [
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent",
    "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
]


def _longest_first(rules):
    return sorted(rules, key=lambda r: -len(r[0]))


_STEP2 = _longest_first([(s, r, _m_gt0) for s, r in STEP2])
_STEP3 = _longest_first([(s, r, _m_gt0) for s, r in STEP3])
_STEP4 = _longest_first([
    (s, "", (lambda st: _m_gt1(st) and st[-1:] in ("s", "t")) if s == "ion" else _m_gt1)
    for s in STEP4
])


def _step1b(word):
    if word.endswith("eed"):
        stem = word[:-3]
        return stem + "ee" if measure(stem) > 0 else word
    for suffix in ("ed", "ing"):
        if word.endswith(suffix) and _has_vowel(word[: -len(suffix)]):
            stem = word[: -len(suffix)]
            break
    else:
        return word
    for suf, repl in (("at", "ate"), ("bl", "ble"), ("iz", "ize")):
        if stem.endswith(suf):
            return stem[: -len(suf)] + repl
    if _ends_double_consonant(stem):
        return stem[:-1] if stem[-1] not in "lsz" else stem
    if measure(stem) == 1 and _ends_cvc(stem):
        return stem + "e"
    return stem


def _step1c(word):
    if word.endswith("y") and _has_vowel(word[:-1]):
        return word[:-1] + "i"
    return word


def _step5a(word):
    if word.endswith("e"):
        stem = word[:-1]
        m = measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            return stem
    return word


def _step5b(word):
    if word.endswith("ll") and measure(word[:-1]) > 1:
        return word[:-1]
    return word


def porter_stem(word: str) -> str:
    """Stem a lowercase ASCII word. Anything else is returned unchanged."""
    if not word or not word.isascii() or not word.isalpha() or not word.islower():
        return word
    w, _ = _apply(word, STEP1A)
    w = _step1b(w)
    w = _step1c(w)
    w, _ = _apply(w, _STEP2)
    w, _ = _apply(w, _STEP3)
    w, _ = _apply(w, _STEP4)
    w = _step5a(w)
    w = _step5b(w)
    return w
