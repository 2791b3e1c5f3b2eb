"""Tests for prompt template loading and slot filling."""

from __future__ import annotations

import pytest

from parareview.prompting import PromptLibrary, PromptTemplate, fill_slots

PACKAGED_TEMPLATES = ("planner", "controller", "qa", "reviewer", "crosscheck",
                      "plan_struct", "plan_unstruct")


def test_fill_slots_substitutes_named_slots():
    assert fill_slots("A {x} and {long name}.", {"x": "1", "long name": "2"}) == \
        "A 1 and 2."


def test_fill_slots_rejects_unfilled():
    with pytest.raises(KeyError, match="unfilled prompt slots"):
        fill_slots("needs {a} and {b}", {"a": "1"})


def test_fill_slots_does_not_rescan_substituted_values():
    # braces arriving inside values must never be treated as new slots
    assert fill_slots("{x}", {"x": "{y}"}) == "{y}"


def test_fill_slots_ignores_json_braces():
    text = 'Reply as {"label": "..."} using {slot}.'
    assert fill_slots(text, {"slot": "this"}) == 'Reply as {"label": "..."} using this.'


def test_extra_mapping_keys_are_allowed():
    assert fill_slots("{a}", {"a": "1", "unused": "2"}) == "1"


def test_packaged_library_loads_every_template():
    library = PromptLibrary()
    for name in PACKAGED_TEMPLATES:
        template = library.load(name)
        assert template.user
        assert isinstance(template, PromptTemplate)


def test_library_missing_template():
    with pytest.raises(FileNotFoundError):
        PromptLibrary().load("does_not_exist")


def test_library_loads_from_custom_directory(tmp_path):
    (tmp_path / "greet.user.txt").write_text("Hello {name}", encoding="utf-8")
    (tmp_path / "greet.system.txt").write_text("Be nice.", encoding="utf-8")
    template = PromptLibrary(tmp_path).load("greet")
    assert template.system == "Be nice."
    assert template.fill_user({"name": "all"}) == "Hello all"


def test_system_file_is_optional(tmp_path):
    (tmp_path / "bare.user.txt").write_text("Just {x}", encoding="utf-8")
    template = PromptLibrary(tmp_path).load("bare")
    assert template.system == ""
