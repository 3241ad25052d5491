#!/usr/bin/env python3
import logging
import sys

from src.common.errors import HLCEError
from src.harness.cli import build_parser, run

logger = logging.getLogger("hlce")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except HLCEError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    except Exception:
        logger.exception("Unexpected failure")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
