import pytest

from eegkit.config import (ConfigError, StudyConfig, config_from_dict, config_to_dict,
                           dump_config, load_config, parse_config)


def test_empty_is_default():
    assert parse_config("") == StudyConfig()
    assert load_config(None) == StudyConfig()


def test_dump_parse_roundtrip():
    assert parse_config(dump_config()) == StudyConfig()
    cfg = parse_config("[study]\nn_subjects = 4\nseed = 9\n[stats]\nn_permutations = 50\n")
    assert parse_config(dump_config(cfg)) == cfg


def test_defaults():
    cfg = StudyConfig()
    assert cfg.study.n_subjects == 10 and cfg.study.tasks == ("eyes", "auditory", "visual")
    assert cfg.synth.artifacts.bad_channels == ("TP8",) and cfg.synth.artifacts.blink_rate > 0
    assert cfg.stats.n_permutations == 1000 and cfg.stats.point_alpha == 0.05
    assert (cfg.pipeline.filter.low_hz, cfg.pipeline.filter.high_hz) == (0.3, 30.0)


def test_nested_overrides():
    cfg = parse_config("""
[synth.auditory]
n_trials = 80
[synth.alpha.channel_gains]
T7 = 0.5
[pipeline]
interval_threshold_uv = false
""")
    assert cfg.synth.auditory.n_trials == 80
    assert cfg.synth.alpha.channel_gains == {"T7": 0.5}
    assert cfg.pipeline.interval_threshold_uv is None


def test_syntax_error_has_position():
    with pytest.raises(ConfigError, match=r"study.toml: .*line 2"):
        parse_config("[study]\nn_subjects = = 3\n", "study.toml")


@pytest.mark.parametrize("text,needle", [
    ("[study]\nn_subject = 3\n", "unknown field study.n_subject"),
    ("[study]\nn_subjects = 'ten'\n", "study.n_subjects: expected integer, got string"),
    ("[stats]\npoint_alpha = true\n", "stats.point_alpha: expected number, got boolean"),
    ("study = 3\n", "study: expected a table"),
    ("[study]\ntasks = ['eyes', 'sleep']\n", "tasks"),
    ("[stats]\ncluster_alpha = 1.5\n", "cluster_alpha"),
    ("[synth.auditory]\nn_trials = 361\n", r"\[synth.auditory\]"),
    ("[synth.artifacts]\nbad_channels = ['O1']\n", "unknown channel O1"),
    ("[pipeline.filter]\nhigh_hz = 300.0\n", r"\[pipeline.filter\]"),
    ("[study]\njobs = 0\n", "jobs"),
])
def test_field_diagnostics(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_int_accepted_for_float():
    assert parse_config("[synth.noise]\nsigma = 5\n").synth.noise.sigma == 5.0


def test_dict_api_and_file(tmp_path):
    d = config_to_dict(StudyConfig())
    assert config_from_dict(d) == StudyConfig()
    p = tmp_path / "c.toml"
    p.write_text("[study]\nseed = 3\n")
    assert load_config(p).study.seed == 3
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
