"""Collects one verdict line per acceptance criterion for the run summary."""

RESULTS = []


def record(number, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    line = f"criterion {number:2d} {name}: {status}{suffix}"
    RESULTS.append(line)
    print(line)
    return ok
