import pytest

from drq.config import ABLATIONS, AgentConfig, desk_scale, from_mapping, load_config, with_ablation
from drq.errors import ConfigError

TABLE_DEFAULTS = {
    "gamma": 0.99, "buffer_size": 1_000_000, "batch_size": 256, "target_update_freq": 250,
    "replay_ratio": 1, "exploration_steps": 10_000, "alpha": 0.4, "decay_eps": 1e-4, "eps_low": 0.1,
    "lambda_d": 1.0, "lambda_r": 0.1, "lambda_m": 0.1, "enc_horizon": 5, "q_horizon": 3,
    "encoder_lr": 3e-4, "actor_lr": 3e-4, "critic_lr": 3e-4, "encoder_weight_decay": 0.01,
    "tau": 0.1, "num_bins": 65, "exploration_noise": 0.2, "target_noise": 0.2, "noise_clip": 0.3,
    "zs_dim": 512, "za_dim": 256, "zsa_dim": 512, "enc_hidden_dim": 750,
}


@pytest.mark.parametrize("key,value", sorted(TABLE_DEFAULTS.items()))
def test_defaults(key, value):
    assert getattr(AgentConfig(), key) == value


def test_yaml_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("decay_eps: 1e-3\nbatch_size: 64\nprioritized: false\nadam_betas: [0.8, 0.99]\n")
    cfg = load_config(path)
    assert cfg.decay_eps == 1e-3 and cfg.batch_size == 64 and cfg.prioritized is False
    assert cfg.adam_betas == (0.8, 0.99)
    assert cfg.gamma == 0.99


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("gama: 0.9\n")
    with pytest.raises(ConfigError, match="gama"):
        load_config(path)


def test_non_mapping_rejected(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize("bad", [{"batch_size": 0}, {"gamma": 1.5}, {"decay_eps": 1.0}, {"tau": 0.0},
                                 {"batch_size": 2.5}, {"prioritized": "yes"}, {"alpha": "x"}])
def test_validation(bad):
    with pytest.raises(ConfigError):
        from_mapping(bad)


def test_ablation_switches():
    base = AgentConfig()
    assert with_ablation(base, "no_infonce").lambda_m == 0.0
    assert with_ablation(base, "lap_only").decay_eps == 0.0
    assert with_ablation(base, "forget_only").prioritized is False
    assert with_ablation(base, "no_dyn_loss").lambda_d == 0.0
    mrq = with_ablation(base, "mrq_baseline")
    assert mrq.lambda_m == 0.0 and mrq.decay_eps == 0.0 and mrq.prioritized
    for name in ABLATIONS:
        changed = {k for k, v in with_ablation(base, name).to_dict().items() if v != base.to_dict()[k]}
        assert changed <= {"ablation", "lambda_m", "decay_eps", "prioritized", "lambda_d"}


def test_unknown_ablation():
    with pytest.raises(ConfigError):
        with_ablation(AgentConfig(), "no_critic")
    with pytest.raises(ConfigError):
        from_mapping({"ablation": "nope"})


def test_ablation_from_file_applies_switch():
    assert from_mapping({"ablation": "no_infonce"}).lambda_m == 0.0


def test_desk_scale():
    cfg = desk_scale(AgentConfig())
    assert cfg.buffer_size == 100_000 and cfg.exploration_steps == 1_000
    assert cfg.replace(buffer_size=1_000_000, exploration_steps=10_000) == AgentConfig()
