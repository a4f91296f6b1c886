"""Entry point: python -m cashworker --dataset sklearn:wine --space clf8.json --seed 0"""

import argparse
import sys

from .worker import ProtocolViolation, Worker


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cash-eval-worker")
    parser.add_argument("--dataset", required=True,
                        help="CSV path or sklearn:<iris|wine|breast_cancer|digits|diabetes>")
    parser.add_argument("--space", required=True, help="search-space JSON path")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--target", default=None, help="CSV target column (default: last)")
    parser.add_argument("--no-proba", action="store_true",
                        help="omit per-sample predictions from aux")
    args = parser.parse_args(argv)

    worker = Worker(args.dataset, args.space, args.seed,
                    target_column=args.target, send_proba=not args.no_proba)
    try:
        worker.serve()
    except ProtocolViolation as exc:
        print(f"protocol violation: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
