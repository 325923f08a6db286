"""Collects one summary line per acceptance criterion for the terminal report."""

import sys

RESULTS = {}


def record(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS[number] = line
    print(line, file=sys.__stdout__, flush=True)
    return ok
