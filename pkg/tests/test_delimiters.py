import json
import random

import pytest

from corpusforge.normalize.delimiters import (
    convert_math_delimiters,
    normalize_equation_delimiters,
)
from delimiter_oracle import oracle_convert


def load_cases(fixtures_dir):
    data = json.loads((fixtures_dir / "delimiter_cases.json").read_text("utf-8"))
    return data["cases"]


def test_inline_conversion():
    assert normalize_equation_delimiters(r"\(E=mc^2\)") == "$E=mc^2$"


def test_display_conversion():
    assert normalize_equation_delimiters(r"\[x\]") == "$$x$$"


def test_mixed_prose():
    got = normalize_equation_delimiters(r"Energy \(E\) obeys \[E = h\nu\] always.")
    assert got == r"Energy $E$ obeys $$E = h\nu$$ always."


def test_escaped_dollar_is_literal():
    text = r"a \$5 fee \(x\)"
    assert normalize_equation_delimiters(text) == r"a \$5 fee $x$"


def test_linebreak_with_spacing_arg_is_not_display_math():
    text = r"first\\[0.5em]second"
    assert normalize_equation_delimiters(text) == text


def test_existing_dollar_spans_untouched():
    text = r"$a+b$ and $$\sum x$$"
    result = convert_math_delimiters(text)
    assert result.text == text
    assert not result.changed


def test_unbalanced_opener_returns_input_with_offset():
    text = "abc \\(x never closes"
    result = convert_math_delimiters(text)
    assert result.text == text
    assert result.warning_offset == 4


def test_unbalanced_offset_counts_bytes():
    # two-byte character before the opener
    text = "é\\[x"
    result = convert_math_delimiters(text)
    assert result.text == text
    assert result.warning_offset == 2


def test_lone_dollar_is_literal():
    assert normalize_equation_delimiters("price $ rises") == "price $ rises"


def test_frozen_fixture_agreement(fixtures_dir):
    for case in load_cases(fixtures_dir):
        result = convert_math_delimiters(case["input"])
        assert result.text == case["expected"], repr(case["input"])
        assert result.warning_offset == case["warning_offset"], repr(case["input"])


def test_oracle_still_matches_fixture(fixtures_dir):
    # guards against silent edits to the frozen file
    for case in load_cases(fixtures_dir):
        text, offset = oracle_convert(case["input"])
        assert text == case["expected"]
        assert offset == case["warning_offset"]


def test_idempotent_on_fixture(fixtures_dir):
    for case in load_cases(fixtures_dir):
        once = normalize_equation_delimiters(case["input"])
        assert normalize_equation_delimiters(once) == once


ATOMS = [
    "\\(", "\\)", "\\[", "\\]", "$", "$$", "\\$", "\\\\",
    "x", " ", "E=mc^2", "\\alpha", "(", ")", "[", "]", "\n", "α",
]


def test_idempotent_and_oracle_agreement_on_random_inputs():
    rng = random.Random(8351)
    for _ in range(2000):
        text = "".join(rng.choice(ATOMS) for _ in range(rng.randrange(0, 14)))
        result = convert_math_delimiters(text)
        again = convert_math_delimiters(result.text)
        assert again.text == result.text, repr(text)
        oracle_text, oracle_offset = oracle_convert(text)
        assert result.text == oracle_text, repr(text)
        assert result.warning_offset == oracle_offset, repr(text)
