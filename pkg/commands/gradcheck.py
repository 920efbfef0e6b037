# commands/gradcheck.py
from __future__ import annotations

import logging
import os
from typing import List, TextIO

from models import RunConfig
from services.errors import CheckFailed
from services.gradcheck import TOLERANCE, TensorCheck, run_gradcheck

log = logging.getLogger("ecga.gradcheck")

REPORT = "gradcheck.txt"


def cmd_gradcheck(config: RunConfig, out: TextIO) -> List[TensorCheck]:
    results = run_gradcheck(config)
    lines = [r.line() for r in results]
    for line in lines:
        out.write(line + "\n")
    os.makedirs(config.out_dir, exist_ok=True)
    with open(os.path.join(config.out_dir, REPORT), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise CheckFailed(f"gradient check failed for {len(failed)} tensor(s): {', '.join(failed)}")
    log.info("all %d tensors within relative error %.0e", len(results), TOLERANCE)
    return results
