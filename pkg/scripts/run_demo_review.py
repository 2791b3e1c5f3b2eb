"""Run the bundled scripted review end to end and print the result.

Every backend is a deterministic mock driven by fixtures/reference_run, so the
demo needs no network or API keys and produces byte-identical output on rerun.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from parareview.backends import MockScript
from parareview.investigator import load_corpus
from parareview.pipeline import PipelineBackends, PipelineSettings, run_review
from parareview.plans import render_step


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--fixtures", default=None,
                        help="reference run directory (default: bundled fixtures)")
    parser.add_argument("--out", default="",
                        help="write the full run result JSON here")
    args = parser.parse_args()

    root = Path(args.fixtures) if args.fixtures else \
        Path(__file__).resolve().parent.parent / "fixtures" / "reference_run"

    import json
    backends = PipelineBackends.from_mocks(
        MockScript.from_file(root / "mock_script.json"),
        search_fixtures=json.loads((root / "search_fixtures.json").read_text(encoding="utf-8")))
    paragraph = (root / "paragraph.txt").read_text(encoding="utf-8").strip()
    documents = load_corpus(root / "corpus.json")

    result = run_review(paragraph, documents, backends, PipelineSettings())

    print("plan:")
    for step in result.plan.steps:
        print(f"  {render_step(step)}")
    print(f"\ncontext pairs: {[p.source for p in result.context.pairs]}")
    print(f"label: {result.review.label.value}")
    print(f"review: {result.review.review_text}")
    print(f"trace: {result.trace_ref}")

    if args.out:
        Path(args.out).write_text(result.to_json(), encoding="utf-8")
        print(f"\nwrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
