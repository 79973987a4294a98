"""Smoke test for the ehcoop extension module."""

import csv
import io

import ehcoop


def main():
    r = ehcoop.solve("S3", "B", "sum")
    assert r["status"] == "converged", r
    assert r["kkt_residual"] <= 1e-6
    assert r["max_constraint_violation"] <= 0.0

    q = ehcoop.solve("S3", "B", "sum", solver="quad")
    assert abs(q["objective_bits"] - r["objective_bits"]) <= 1e-4 * abs(r["objective_bits"])

    s = ehcoop.screen_rho("B", "sum", config={"x1": 25.0})
    assert s["rho_star"] == 0.7, s["rho_star"]

    best = ehcoop.select("common")
    assert (best["scenario"], best["case"]) == ("S1", "A"), best

    text = ehcoop.sweep("x1", start=100.0, stop=150.0, step=50.0)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 2 * 2 * 8, len(rows)

    try:
        ehcoop.solve("S5", "A")
    except ValueError:
        pass
    else:
        raise AssertionError("bad scenario accepted")

    print("ok", r["objective_bits"], s["rho_star"], best["scenario"] + "-" + best["case"])


if __name__ == "__main__":
    main()
