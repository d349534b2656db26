import pytest

from app import config, constants


def test_missing_file_is_created_with_defaults(tmp_config):
    cfg = config.load_config(tmp_config)
    assert tmp_config.is_file()
    assert cfg.sensor.rate == constants.SCAN_RATE
    assert cfg.mapping.voting_threshold == constants.VOTING_THRESHOLD
    assert cfg.executor.approach_radius == constants.APPROACH_RADIUS
    assert config.CONFIG is cfg


def test_saved_values_are_read_back(tmp_config):
    cfg = config.Config(log_level='INFO')
    cfg.sensor = config.SensorConfig(rate=20.0, update_every=2)
    cfg.interaction = config.InteractionConfig(node_budget=1000, retry_half_arc=False)
    assert cfg.save(tmp_config)

    loaded = config.load_config(tmp_config)
    assert loaded.sensor.rate == 20.0
    assert loaded.sensor.update_every == 2
    assert loaded.interaction.node_budget == 1000
    assert not loaded.interaction.retry_half_arc
    assert loaded.log_level == 'INFO'


def test_missing_keys_fall_back_to_defaults(tmp_config):
    tmp_config.write_text('[Executor]\nReplanCap = 7\n', encoding='UTF-8')
    cfg = config.load_config(tmp_config)
    assert cfg.executor.replan_cap == 7
    assert cfg.executor.goal_tolerance == constants.GOAL_TOLERANCE
    assert cfg.mapping == config.MappingConfig()


@pytest.mark.parametrize('section, key, value', [
    ('Sensor', 'RateHz', 'fast'),
    ('Mapping', 'Resolution', '-0.1'),
    ('Interaction', 'RetryHalfArc', 'maybe'),
    ('Executor', 'ApproachRadius', '0.1'),
    ('Logging', 'Level', 'CHATTY'),
])
def test_illegal_values_raise(tmp_config, section, key, value):
    tmp_config.write_text(f'[{section}]\n{key} = {value}\n', encoding='UTF-8')
    with pytest.raises(config.ConfigError):
        config.load_config(tmp_config)


def test_executor_rejects_approach_inside_robot():
    with pytest.raises(config.ConfigError):
        config.ExecutorConfig(approach_radius=0.2, robot_radius=0.3)


def test_for_robot_propagates_radius():
    cfg = config.Config().for_robot(radius=0.25, max_speed=0.5, max_yaw_rate=1.0, max_push_force=20.0,
                                    contact_width=0.2)
    assert cfg.mapping.robot_radius == cfg.interaction.robot_radius == cfg.executor.robot_radius == 0.25
    assert cfg.executor.max_push_force == 20.0
    assert cfg.interaction.contact_width == 0.2


def test_grid_cells_round_exactly():
    assert config.MappingConfig(local_size=60.0, resolution=0.15).cells == 400
