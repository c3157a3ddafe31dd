"""Author name normalization and blocking keys.

Blocking groups author records by the full last name plus the first
initial of the given name (LN-FI).  Normalization casefolds, strips
diacritics and drops non-alphanumeric characters, so "Müller"/"Jörg"
and "MULLER"/"Jorg" land in the same block.
"""

from __future__ import annotations

import unicodedata


def strip_diacritics(text: str) -> str:
    """Remove combining marks: 'Müller' -> 'Muller'."""
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def normalize_name_part(part: str) -> str:
    """Casefold, strip diacritics, keep alphanumerics only."""
    folded = strip_diacritics(part).casefold()
    return "".join(ch for ch in folded if ch.isalnum())


def first_initial(given_name: str) -> str:
    """First alphabetic character of the normalized given name, or ''."""
    folded = strip_diacritics(given_name).casefold()
    for ch in folded:
        if ch.isalpha():
            return ch
    return ""


def ln_fi_key(family_name: str, given_name: str) -> str:
    """Blocking key: normalized family name + '_' + first initial.

    The initial suffix is empty when the given name has no alphabetic
    character.  Records with an empty family name must be filtered out
    before blocking.
    """
    if not family_name:
        raise ValueError("family name must be non-empty for blocking")
    return f"{normalize_name_part(family_name)}_{first_initial(given_name)}"


def full_name_key(family_name: str, given_name: str) -> str:
    """Normalized full-name key used by the post-blocking filter."""
    return f"{normalize_name_part(family_name)} {normalize_name_part(given_name)}"


def has_full_given_name(given_name: str) -> bool:
    """True when the given name is more than a bare initial."""
    letters = [ch for ch in normalize_name_part(given_name) if ch.isalpha()]
    return len(letters) >= 2
