import copy
import json
import logging

import pytest

import viana_lab
from config import BaseConfig, get_global_config, shipped_configs
from config.schema import check_subcommand, config_hash, load_settings
from dynamics.errors import ConfigError
from utils.tables import table_digests


def tiny_config(tmp_path, **sections) -> dict:
    data = copy.deepcopy(BaseConfig("reference.json").data)
    data["curves"].update(curves=2, nodes=2000, strip_triples=4, max_j=2, local_nodes=128, max_cylinders=32)
    data["statistics"].update(n=200, samples=40, burn_in=50)
    data["run"].update(chunk_size=16)
    data["paths"] = {"log_dir": str(tmp_path / "logs"), "output_dir": str(tmp_path / "out")}
    for section, values in sections.items():
        data[section].update(values)
    return data


def write_config(tmp_path, data) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


@pytest.mark.parametrize("name", ["reference.json", "verify_fast.json", "verify_full.json"])
def test_shipped_configs_validate(name):
    settings = load_settings(BaseConfig(name))
    assert settings.skew.alpha > 0.0
    if name.startswith("verify"):
        assert settings.run.suite == name[len("verify_"):-len(".json")]


def test_unknown_key_is_rejected(tmp_path):
    data = tiny_config(tmp_path)
    data["skew"]["colour"] = "blue"
    with pytest.raises(ConfigError):
        load_settings(BaseConfig(data=data))


def test_schema_version_is_checked(tmp_path):
    data = tiny_config(tmp_path)
    data["version"] = "999"
    with pytest.raises(ConfigError):
        load_settings(BaseConfig(data=data))


def test_overrides_skip_missing_values(tmp_path):
    settings = load_settings(BaseConfig(data=tiny_config(tmp_path)), {"run.seed": 11, "run.workers": None})
    assert settings.run.seed == 11
    assert settings.run.workers == 1


def test_config_hash_tracks_contents(tmp_path):
    cfg = BaseConfig(data=tiny_config(tmp_path))
    first = config_hash(load_settings(cfg))
    assert first == config_hash(load_settings(cfg))
    assert len(first) == 16
    assert first != config_hash(load_settings(cfg, {"run.seed": 8}))


def test_alpha_zero_needs_positive_alpha_subcommand(tmp_path):
    settings = load_settings(BaseConfig(data=tiny_config(tmp_path, skew={"alpha": 0.0})))
    check_subcommand(settings, "lyapunov")
    with pytest.raises(ConfigError):
        check_subcommand(settings, "curves")


def test_config_error_writes_nothing(tmp_path):
    path = write_config(tmp_path, tiny_config(tmp_path, skew={"alpha": 0.0}))
    assert viana_lab.main(["recurrence", "--config", path]) == viana_lab.EXIT_CONFIG
    assert not (tmp_path / "out").exists()
    assert not (tmp_path / "logs").exists()


def test_missing_config_file(tmp_path):
    missing = str(tmp_path / "nope.json")
    assert viana_lab.main(["curves", "--config", missing]) == viana_lab.EXIT_CONFIG


def test_unknown_suite_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        viana_lab.main(["verify", "--suite", "huge"])
    assert info.value.code == 2


def test_output_dir_precedence(monkeypatch, tmp_path):
    monkeypatch.setenv("VIANA_OUTPUT_DIR", str(tmp_path / "env"))
    parser = viana_lab.build_parser()
    assert viana_lab._overrides(parser.parse_args(["lyapunov"]))["paths.output_dir"] == str(tmp_path / "env")
    args = parser.parse_args(["lyapunov", "--out", str(tmp_path / "flag")])
    assert viana_lab._overrides(args)["paths.output_dir"] == str(tmp_path / "flag")
    args = parser.parse_args(["recurrence", "--samples", "12", "--alpha-ladder", "0.01", "0.001"])
    overrides = viana_lab._overrides(args)
    assert overrides["recurrence.samples"] == 12
    assert overrides["recurrence.alpha_ladder"] == [0.01, 0.001]


def test_curves_run_writes_tables_and_summary(tmp_path):
    data = tiny_config(tmp_path)
    code = viana_lab.main(["curves", "--config", write_config(tmp_path, data)])
    assert code in (viana_lab.EXIT_OK, viana_lab.EXIT_CONTRACT)

    out = tmp_path / "out"
    assert (out / "curves.csv").read_text(encoding="utf-8").startswith("curve,")
    assert (out / "strips.csv").exists()
    summary = json.loads((out / "curves_summary.json").read_text(encoding="utf-8"))
    assert summary["config_hash"] == config_hash(load_settings(BaseConfig(data=data)))
    assert summary["config"]["curves"]["curves"] == 2
    assert summary["passed"] == (code == viana_lab.EXIT_OK)
    assert summary["total_checks"] > 0
    log_file = next((tmp_path / "logs").iterdir())
    assert "[curves seed=7]" in log_file.read_text(encoding="utf-8")
    assert get_global_config().data["curves"]["curves"] == 2


def test_config_hash_ignores_execution_knobs(tmp_path):
    cfg = BaseConfig(data=tiny_config(tmp_path))
    reference = config_hash(load_settings(cfg))
    assert config_hash(load_settings(cfg, {"run.workers": 8})) == reference
    assert config_hash(load_settings(cfg, {"run.progress": True})) == reference
    assert config_hash(load_settings(cfg, {"run.chunk_size": 32})) != reference


@pytest.mark.slow
def test_battery_tables_do_not_depend_on_workers(tmp_path):
    settings = load_settings(BaseConfig(data=tiny_config(tmp_path)))
    logger = logging.getLogger("tests.determinism")
    names = ["curves", "lyapunov", "density"]
    evaluators, digests = viana_lab.battery(settings, logger, str(tmp_path / "main"), names)
    assert list(evaluators) == names
    assert {"curves/curves.csv", "lyapunov/lyapunov.csv"} <= set(digests)

    assert viana_lab.replay_mismatches(settings, logger, str(tmp_path), digests, names) == {}
    replayed = tmp_path / "determinism" / "workers_8"
    assert table_digests([str(replayed / "lyapunov" / "lyapunov.csv")]) == {"lyapunov.csv": digests["lyapunov/lyapunov.csv"]}
    assert not (tmp_path / "determinism" / "workers_1").exists()


def test_replay_reports_differing_tables(tmp_path):
    settings = load_settings(BaseConfig(data=tiny_config(tmp_path)))
    logger = logging.getLogger("tests.determinism")
    _, digests = viana_lab.battery(settings, logger, str(tmp_path / "main"), ["lyapunov"])
    tampered = {table: "0" * 16 for table in digests}
    mismatches = viana_lab.replay_mismatches(settings, logger, str(tmp_path), tampered, ["lyapunov"])
    assert mismatches == {table: [8] for table in digests}


def test_suite_flag_must_match_config(tmp_path):
    data = tiny_config(tmp_path)
    assert data["run"]["suite"] == "full"
    path = write_config(tmp_path, data)
    assert viana_lab.main(["verify", "--config", path, "--suite", "fast"]) == viana_lab.EXIT_CONFIG
    assert not (tmp_path / "out").exists()
    assert not (tmp_path / "logs").exists()


def test_shipped_configs_are_listed():
    assert shipped_configs() == ["reference.json", "verify_fast.json", "verify_full.json"]
    cfg = BaseConfig("reference.json")
    assert cfg.path.name == "reference.json"
    assert cfg.skew["alpha"] == 0.01
    with pytest.raises(AttributeError):
        cfg.skew = {}
    with pytest.raises(AttributeError):
        cfg.missing_section
