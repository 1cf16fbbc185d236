"""Smoke test for the predeval_py extension module.

Build first:
    cargo build -p predeval-python --release --features extension-module
    cp target/release/libpredeval_py.so python/predeval_py.so
"""

import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import predeval_py as pe


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    run = pe.PredictionRun("P", [10.0, 100.0], [100.0, 10.0])
    assert len(run) == 2
    assert close(run.mar(), 90.0)
    assert close(run.mmre(), 495.0)
    assert close(run.pred(0.25), 0.0)

    assert close(pe.standardised_accuracy(5.0, 10.0), 50.0)
    delta = pe.glass_delta(4.0, 10.0, 3.0)
    assert close(delta["delta"], -2.0) and delta["category"] == "large"

    mean, sd = pe.exact_expected_mar([1.0, 2.0, 4.0])
    assert close(mean, 2.0)

    test = pe.mann_whitney_u([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert test["method"] == "exact"
    assert close(test["p_value"], 0.1)

    try:
        pe.PredictionRun("bad", [1.0], [1.0, 2.0])
    except pe.PredevalError:
        pass
    else:
        raise AssertionError("mismatched lengths accepted")

    rows = [[float(i), float(i * 7 % 5)] for i in range(1, 25)]
    ys = [20.0 + 12.0 * r[0] + 3.0 * r[1] for r in rows]
    data = pe.Dataset(rows, ys, name="toy")
    eba, report, baseline = pe.evaluate(data, "eba", "loocv", runs=500, seed=1)
    assert len(eba) == 24 and baseline.runs == 500
    assert report["sa"] > 50.0, report
    swr, _, _ = pe.evaluate(data, "stepwise", "loocv", runs=500, seed=1)

    ranking = pe.rank([eba, swr], baseline)
    assert ranking["minimal"] == ["P0"], ranking
    assert "rankdir=BT" in ranking["dot"]
    verdicts = pe.compare([eba, swr], baseline)
    assert len(verdicts) == 3

    text = pe.render_report([eba, swr], baseline, title="toy", format="json")
    parsed = json.loads(text)
    assert parsed["systems"] == ["EBA", "SWR"]

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "preds.csv")
        with open(path, "w") as f:
            f.write("case_id,actual,A,B\n1,10,12,30\n2,20,19,5\n3,30,33,60\n")
        runs = pe.load_predictions(path)
        assert [r.system_id for r in runs] == ["A", "B"]

    print("smoke test passed")


if __name__ == "__main__":
    main()
