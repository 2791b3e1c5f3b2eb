"""Write a small annotation session definition and print the serve command.

The definition pairs two review styles over a few paragraphs; loading it with
`parareview annotate serve` exposes the blind comparison API (and the web UI
when --ui-dir points at a built frontend).
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

PARAGRAPHS = [
    ("Our planner reduces wall-clock latency by 40% on every workload we "
     "measured, which proves the scheduling policy is optimal."),
    ("We fine-tune the encoder with a batch size of 4096 on a single consumer "
     "GPU and observe stable convergence in all runs."),
    ("The ablation removes the retrieval module entirely, and accuracy drops "
     "by 0.2 points, demonstrating that retrieval is the main driver of the "
     "gains reported in the abstract."),
]

FOCUSED = [
    ("The paragraph states, 'proves the scheduling policy is optimal' but a "
     "40% latency reduction on measured workloads does not establish "
     "optimality; no optimality bound or adversarial workload is analyzed."),
    ("The paragraph states, 'batch size of 4096 on a single consumer GPU' "
     "which is implausible without gradient accumulation; the text should "
     "state the accumulation steps and effective memory footprint."),
    ("The paragraph states, 'accuracy drops by 0.2 points, demonstrating that "
     "retrieval is the main driver' but a 0.2 point drop undercuts rather "
     "than supports the claim; the conclusion contradicts the evidence."),
]

GENERIC = [
    ("The paragraph makes strong claims about performance. Consider softening "
     "the language and adding more experiments."),
    ("The training setup could be described in more detail. More information "
     "would help reproducibility."),
    ("The ablation section is interesting but could be expanded. Consider "
     "adding more ablations."),
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_session.json")
    parser.add_argument("--annotator", default="demo")
    parser.add_argument("--seed", type=int, default=3)
    args = parser.parse_args()

    definition = {
        "session_id": "demo",
        "systems": ["ours", "gpt4"],
        "annotators": [args.annotator],
        "double_fraction": 0.0,
        "seed": args.seed,
        "examples": [
            {
                "example_id": f"ex-{i + 1:03d}",
                "paragraph": paragraph,
                "paper_link": f"https://papers.example/ex-{i + 1:03d}",
                "reviews": {"ours": focused, "gpt4": generic},
            }
            for i, (paragraph, focused, generic)
            in enumerate(zip(PARAGRAPHS, FOCUSED, GENERIC))
        ],
    }

    out = Path(args.out)
    out.write_text(json.dumps(definition, indent=1) + "\n", encoding="utf-8")
    n_tasks = len(definition["examples"]) * 3  # one pair x three criteria each
    print(f"wrote {out} ({n_tasks} tasks for annotator {args.annotator!r})")
    print(f"serve with:\n  python3 -m parareview annotate serve "
          f"--session-file {out} --journal {out.with_suffix('.journal.jsonl')}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
