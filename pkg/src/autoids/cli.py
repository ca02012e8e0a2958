"""Command-line entry point: ``autoids train|evaluate|predict|inspect|make-fixture``.

Exit codes: 0 success, 2 config error, 3 data error, 4 training error,
5 persistence error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import AutoIdsError

log = logging.getLogger("autoids")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="autoids", description="AutoML intrusion-detection engine")
    p.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a stacked ensemble and write model + report")
    t.add_argument("--config", required=True, help="JSON pipeline config")
    t.add_argument("--data", help="CSV flow table (overrides the config's data path)")
    t.add_argument("--model-out", required=True)
    t.add_argument("--report-out", required=True)

    e = sub.add_parser("evaluate", help="score a model on a labeled CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report-out", required=True)
    e.add_argument("--label-column", default="Label")

    pr = sub.add_parser("predict", help="write predicted labels and class confidences")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", required=True)
    pr.add_argument("--output", required=True)

    i = sub.add_parser("inspect", help="print families, hyperparameters and selected features")
    i.add_argument("--model", required=True)

    f = sub.add_parser("make-fixture", help="write the synthetic 20k-row benchmark table")
    f.add_argument("--output", required=True)
    f.add_argument("--seed", type=int, default=2023)
    f.add_argument("--config-out", help="also write the matching desk-scale train config here")
    return p


def _run(args) -> None:
    from . import pipeline
    from .persistence import load_model
    from .report import write_report

    if args.command == "train":
        cfg = pipeline.PipelineConfig.from_json(args.config, data=args.data)
        _, report = pipeline.train_and_save(cfg, args.model_out, args.report_out)
        print(f"weighted F1 {report['evaluation']['weighted_f1']:.6f} on {report['data']['n_test']} holdout rows")
    elif args.command == "evaluate":
        report = pipeline.evaluate(load_model(args.model), args.data, args.label_column)
        write_report(report, args.report_out)
        print(f"weighted F1 {report['evaluation']['weighted_f1']:.6f}")
    elif args.command == "predict":
        n = pipeline.predict_file(load_model(args.model), args.input, args.output)
        print(f"wrote {n} predictions to {args.output}")
    elif args.command == "inspect":
        print(json.dumps(pipeline.describe(load_model(args.model)), indent=2))
    elif args.command == "make-fixture":
        from .fixtures import fixture_config, write_fixture

        print(write_fixture(args.output, args.seed))
        if args.config_out:
            cfg = dict(fixture_config(), data=str(args.output))
            with open(args.config_out, "w", encoding="utf-8") as fh:
                json.dump(cfg, fh, indent=2)
            print(args.config_out)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        _run(args)
    except AutoIdsError as exc:
        print(f"autoids: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
