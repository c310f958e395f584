import json
import logging

import numpy as np
import pandas as pd
import pytest

from utils.evaluator import ContractEvaluator
from utils.tables import file_digest, table_digests, write_table


@pytest.fixture
def evaluator():
    return ContractEvaluator("lyapunov", "abc123", 7, 1, "0.1.0", logger=logging.getLogger("tests.evaluator"))


def test_logger_is_required():
    with pytest.raises(ValueError):
        ContractEvaluator("lyapunov", "abc123", 7, 1, "0.1.0")


def test_checks_and_estimates(evaluator):
    evaluator.check("lyapunov_mc", "fraction positive", np.float64(0.97), 0.95, np.bool_(True))
    evaluator.estimate("quantiles", np.array([0.1, 0.2, 0.3]))
    evaluator.estimate("k0", float("nan"))
    summary = evaluator.get_results_summary()
    assert summary["passed"]
    assert summary["passed_checks"] == summary["total_checks"] == 1
    assert summary["checks"][0]["estimate"] == 0.97
    assert summary["estimates"]["quantiles"] == [0.1, 0.2, 0.3]
    assert summary["estimates"]["k0"] == "nan"

    evaluator.check("check_trapping", "no escapes", 3, 0, False, note="1000 steps")
    summary = evaluator.get_results_summary()
    assert not summary["passed"]
    assert summary["failed"] == ["check_trapping"]


def test_extend_prefixes_operations(evaluator):
    other = ContractEvaluator("density", "abc123", 7, 1, "0.1.0", logger=logging.getLogger("tests.evaluator"))
    other.check("invariant_density", "marginal", 0.01, 0.05, True)
    other.estimate("bins", 40)
    other.add_table("/tmp/out/density.csv")
    evaluator.extend(other, "density")
    summary = evaluator.get_results_summary()
    assert summary["checks"][0]["operation"] == "density.invariant_density"
    assert summary["estimates"] == {"density.bins": 40}
    assert summary["tables"] == ["density.csv"]


def test_save_results_embeds_config(evaluator, tmp_path):
    evaluator.check("lyapunov_mc", "fraction positive", 1.0, 0.95, True)
    path = evaluator.save_results(str(tmp_path / "nested" / "lyapunov_summary.json"), {"run": {"seed": 7}})
    saved = json.loads(open(path, encoding="utf-8").read())
    assert saved["config"] == {"run": {"seed": 7}}
    assert saved["config_hash"] == "abc123"
    assert saved["experiment"] == "lyapunov"


def test_tables_are_reproducible_bytes(tmp_path):
    frame = pd.DataFrame({"sample": [0, 1], "fiber": [0.1, 1.0 / 3.0]})
    first = write_table(frame, str(tmp_path / "a"), "lyapunov")
    second = write_table(frame, str(tmp_path / "b"), "lyapunov")
    text = open(first, encoding="utf-8", newline="").read()
    assert text.startswith("sample,fiber\n")
    assert "\r" not in text
    assert float(text.splitlines()[2].split(",")[1]) == 1.0 / 3.0
    assert file_digest(first) == file_digest(second)
    assert table_digests([first]) == {"lyapunov.csv": file_digest(first)}
