from __future__ import annotations

import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def reference_run_dir() -> Path:
    return FIXTURES / "reference_run"


@pytest.fixture(scope="session")
def reference_paragraph(reference_run_dir: Path) -> str:
    return (reference_run_dir / "paragraph.txt").read_text(encoding="utf-8").strip()


@pytest.fixture(scope="session")
def reference_plan_text(reference_run_dir: Path) -> str:
    payload = json.loads((reference_run_dir / "mock_script.json").read_text(encoding="utf-8"))
    planner_rules = [r for r in payload["rules"] if r.get("tag") == "planner"]
    return planner_rules[0]["response"]


@pytest.fixture(scope="session")
def search_fixtures(reference_run_dir: Path) -> dict:
    return json.loads((reference_run_dir / "search_fixtures.json").read_text(encoding="utf-8"))
