"""Train the plan scorer on a synthetic corpus and report recall@1.

The separable corpus pairs a well-formed optimal plan against three degraded
foils per paragraph, so a linear model over the plan features should reach
near-perfect recall; the balanced corpus is a sanity baseline where a random
model lands near 0.25.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from parareview.reranker import TrainConfig, recall_at_1, train
from parareview.synthetic import make_separable_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=250,
                        help="total quadruples; last fifth is held out")
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--learning-rate", type=float, default=1e-2)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--save", default="", help="write the trained model JSON here")
    args = parser.parse_args()

    corpus = make_separable_corpus(args.size, seed=args.seed)
    split = args.size - max(1, args.size // 5)
    train_set, test_set = corpus[:split], corpus[split:]

    config = TrainConfig(learning_rate=args.learning_rate,
                         max_epochs=args.epochs, seed=args.seed)
    model = train(train_set, config)

    report = model.report
    if report:
        for epoch, (loss, recall) in enumerate(
                zip(report.epoch_losses, report.holdout_recall), start=1):
            marker = " *" if epoch == report.best_epoch else ""
            print(f"epoch {epoch:2d}  loss {loss:9.4f}  holdout recall@1 {recall:.3f}{marker}")

    print(f"\ntrain quadruples: {len(train_set)}  test quadruples: {len(test_set)}")
    print(f"test recall@1: {recall_at_1(model, test_set):.3f}")

    if args.save:
        model.save(args.save)
        print(f"wrote {args.save}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
