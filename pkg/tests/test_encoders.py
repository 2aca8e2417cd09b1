import numpy as np
import pytest

from dvfslab.encoders import (
    EncoderConfig,
    EncoderError,
    UNSET,
    initial_tegm_state,
    initial_tem_state,
    tegm_network_inputs,
    tegm_tail_length,
    tegm_update,
    tem_input_length,
    tem_network_inputs,
    tem_update,
)
from dvfslab.simcore import SimConfig, run_episode
from dvfslab.taskmodel import builtin_taskset

from helpers import constant_governor, make_obs

RL = (0.6e9, 1.5e9)


def cfg_for(n_tasks=3, t_norm=1.2):
    return EncoderConfig(n_tasks=n_tasks, rl_freqs=RL, t_norm=t_norm)


class TestConfig:
    def test_combo_count(self):
        cfg = cfg_for()
        assert cfg.n_intervals == 2
        assert cfg.n_combos == 4

    def test_boundary_tie_goes_low(self):
        cfg = cfg_for()
        assert cfg.interval_index(0.60) == 0
        assert cfg.interval_index(0.600001) == 1
        assert cfg.interval_index(0.0) == 0
        assert cfg.interval_index(1.0) == 1

    def test_combo_layout_is_frequency_major(self):
        cfg = cfg_for()
        assert cfg.combo_index(RL[0], 0.3) == 0
        assert cfg.combo_index(RL[0], 0.9) == 1
        assert cfg.combo_index(RL[1], 0.3) == 2
        assert cfg.combo_index(RL[1], 0.9) == 3

    def test_non_candidate_frequency_rejected(self):
        with pytest.raises(EncoderError, match="candidate"):
            cfg_for().combo_index(0.9e9, 0.5)

    def test_boundaries_validated(self):
        with pytest.raises(EncoderError):
            EncoderConfig(n_tasks=1, rl_freqs=RL, t_norm=1.0, load_boundaries=(0.0,))
        with pytest.raises(EncoderError):
            EncoderConfig(n_tasks=1, rl_freqs=RL, t_norm=1.0, load_boundaries=(60.0, 50.0))


class TestTegmUpdate:
    def test_golden_low_freq_high_load_record(self):
        cfg = cfg_for()
        obs = make_obs(freq=RL[0], util_max=0.75, util_avg=0.5, duration=0.05, labels=(1, 0, 0))
        state = tegm_update(initial_tegm_state(cfg), obs.labels, obs, cfg)
        assert state.p1_history[-1] == (0.0, 0.05, 0.0, 0.0)

    def test_utilized_time_accumulation(self):
        cfg = cfg_for()
        s = initial_tegm_state(cfg)
        s = tegm_update(s, (1, 0, 0), make_obs(freq=RL[0], util_avg=0.8, duration=0.05), cfg)
        assert s.u == pytest.approx(0.04)
        s = tegm_update(s, (1, 0, 0), make_obs(freq=RL[0], util_avg=0.5, duration=0.05), cfg)
        assert s.u == pytest.approx(0.065)
        assert s.c == pytest.approx(0.10)

    def test_start_latched_on_first_in_progress(self):
        cfg = cfg_for()
        s = initial_tegm_state(cfg)
        s = tegm_update(s, (0, 0, 0), make_obs(labels=(0, 0, 0), freq=RL[0]), cfg)
        s = tegm_update(s, (0, 0, 0), make_obs(labels=(0, 0, 0), freq=RL[0]), cfg)
        assert s.c == pytest.approx(0.10)
        s = tegm_update(s, (1, 0, 0), make_obs(labels=(1, 0, 0), freq=RL[0]), cfg)
        assert s.p2[0] == (pytest.approx(0.10), UNSET)
        # start stays latched afterwards
        s = tegm_update(s, (1, 0, 0), make_obs(labels=(1, 0, 0), freq=RL[0]), cfg)
        assert s.p2[0][0] == pytest.approx(0.10)

    def test_finish_latched_once(self):
        cfg = cfg_for()
        s = initial_tegm_state(cfg)
        s = tegm_update(s, (1, 0, 0), make_obs(freq=RL[0]), cfg)
        s = tegm_update(s, (2, 0, 0), make_obs(freq=RL[0]), cfg)
        assert s.p2[0][1] == pytest.approx(0.05)
        s = tegm_update(s, (2, 0, 0), make_obs(freq=RL[0]), cfg)
        assert s.p2[0][1] == pytest.approx(0.05)

    def test_label_regression_rejected(self):
        cfg = cfg_for()
        s = initial_tegm_state(cfg)
        s = tegm_update(s, (2, 1, 0), make_obs(freq=RL[0], labels=(2, 1, 0)), cfg)
        with pytest.raises(EncoderError, match="regressed"):
            tegm_update(s, (1, 1, 0), make_obs(freq=RL[0]), cfg)
        with pytest.raises(EncoderError, match="regressed"):
            tegm_update(s, (2, 0, 0), make_obs(freq=RL[0]), cfg)

    def test_history_grows_one_record_per_update(self):
        cfg = cfg_for()
        s = initial_tegm_state(cfg)
        for k in range(6):
            assert len(s.p1_history) == k
            s = tegm_update(s, (1, 0, 0), make_obs(freq=RL[1]), cfg)
        for record in s.p1_history:
            assert sum(1 for v in record if v != 0.0) == 1

    def test_purity(self):
        cfg = cfg_for()
        s0 = initial_tegm_state(cfg)
        obs = make_obs(freq=RL[0], labels=(1, 0, 0))
        a = tegm_update(s0, obs.labels, obs, cfg)
        b = tegm_update(s0, obs.labels, obs, cfg)
        assert a == b
        assert s0.p1_history == ()


class TestTemUpdate:
    def test_accumulation(self):
        cfg = cfg_for()
        s = initial_tem_state(cfg)
        obs = make_obs(freq=RL[0], util_max=0.75, duration=0.05, labels=(1, 0, 0))
        s = tem_update(s, obs.labels, obs, cfg)
        s = tem_update(s, obs.labels, obs, cfg)
        s = tem_update(s, obs.labels, obs, cfg)
        assert s.p[0][1] == pytest.approx(0.15)

    def test_inactive_rows_unchanged(self):
        cfg = cfg_for()
        s = initial_tem_state(cfg)
        obs = make_obs(freq=RL[0], labels=(1, 0, 2))
        s = tem_update(s, (1, 0, 2), obs, cfg)
        assert s.p[0][1] == pytest.approx(0.05)  # low freq, full load
        assert s.p[1] == (0.0,) * 4
        assert s.p[2] == (0.0,) * 4

    def test_regression_rejected(self):
        cfg = cfg_for()
        s = initial_tem_state(cfg)
        s = tem_update(s, (2, 0, 0), make_obs(freq=RL[0]), cfg)
        with pytest.raises(EncoderError, match="regressed"):
            tem_update(s, (1, 0, 0), make_obs(freq=RL[0]), cfg)

    def test_row_sums_bounded_by_consumed_time(self):
        cfg = cfg_for()
        rng = np.random.default_rng(3)
        s = initial_tem_state(cfg)
        labels = [0, 0, 0]
        for _ in range(40):
            for i in range(3):
                if labels[i] < 2 and rng.random() < 0.2:
                    labels[i] += 1
            obs = make_obs(
                freq=RL[int(rng.integers(2))],
                util_max=float(rng.uniform(0, 1)),
                util_avg=float(rng.uniform(0, 1)),
                duration=float(rng.uniform(0.01, 0.08)),
                labels=tuple(labels),
            )
            s = tem_update(s, obs.labels, obs, cfg)
            for row in s.p:
                assert sum(row) <= s.c + 1e-12


class TestAgainstSimulator:
    def test_tem_row_sum_tracks_execution_time(self):
        ts = builtin_taskset("three")
        sim_cfg = SimConfig()
        cfg = EncoderConfig(n_tasks=3, rl_freqs=sim_cfg.rl_freqs, t_norm=ts.hyperperiod_T)
        freq = sim_cfg.rl_freqs[0]
        summary, trace = run_episode(ts, sim_cfg, constant_governor(freq), record=True)
        s = initial_tem_state(cfg)
        for obs in trace:
            s = tem_update(s, obs.labels, obs, cfg)
        for i in range(3):
            assert sum(s.p[i]) == pytest.approx(summary.exet[i], abs=sim_cfg.decision_interval + 1e-9)

    def test_consumed_time_equals_observed_durations(self):
        ts = builtin_taskset("five")
        sim_cfg = SimConfig()
        cfg = EncoderConfig(n_tasks=5, rl_freqs=sim_cfg.rl_freqs, t_norm=ts.hyperperiod_T)
        summary, trace = run_episode(ts, sim_cfg, constant_governor(sim_cfg.rl_freqs[1]), record=True)
        s = initial_tegm_state(cfg)
        for obs in trace:
            s = tegm_update(s, obs.labels, obs, cfg)
        assert s.c == pytest.approx(sum(o.duration for o in trace), rel=1e-12)
        weighted = sum(o.util_avg * o.duration for o in trace) / sum(o.duration for o in trace)
        assert s.u / s.c == pytest.approx(weighted, rel=1e-12)
        assert 0.0 <= s.u / s.c <= 1.0


class TestNetworkInputs:
    def test_tegm_sequence_mapping(self):
        cfg = cfg_for()
        obs = make_obs(freq=RL[0], util_max=0.75, duration=0.05, labels=(1, 0, 0))
        s = tegm_update(initial_tegm_state(cfg), obs.labels, obs, cfg)
        seq, tail = tegm_network_inputs(s, RL[0], cfg)
        assert seq.shape == (1, 2)
        assert seq[0, 0] == pytest.approx(1 / 3)
        assert seq[0, 1] == pytest.approx(0.05 / 1.2)
        assert len(tail) == 11

    def test_empty_history_gives_empty_sequence(self):
        cfg = cfg_for()
        seq, tail = tegm_network_inputs(initial_tegm_state(cfg), RL[0], cfg)
        assert seq.shape == (0, 2)
        assert len(tail) == tegm_tail_length(cfg)

    def test_tail_contents(self):
        cfg = cfg_for()
        obs = make_obs(freq=RL[1], util_max=0.9, util_avg=0.4, duration=0.05, labels=(1, 0, 0))
        s = tegm_update(initial_tegm_state(cfg), obs.labels, obs, cfg)
        _, tail = tegm_network_inputs(s, RL[1], cfg)
        # unset timestamps keep the sentinel, set ones are normalized
        assert tail[0] == pytest.approx(0.0)  # start latched at c=0
        assert tail[1] == UNSET
        assert tail[2] == UNSET
        assert tail[6] == pytest.approx(0.9)
        assert tail[7] == pytest.approx(0.4)
        assert tail[8] == pytest.approx(s.u / 1.2)
        assert tail[9] == pytest.approx(0.05 / 1.2)
        assert tail[10] == pytest.approx(1.0)  # action at the top frequency

    def test_tem_vector_arity(self):
        assert tem_input_length(cfg_for(n_tasks=3)) == 17
        assert tem_input_length(cfg_for(n_tasks=8)) == 37
        cfg = cfg_for(n_tasks=8)
        vec = tem_network_inputs(initial_tem_state(cfg), RL[0], cfg)
        assert vec.shape == (37,)

    def test_tem_fresh_state_vector(self):
        cfg = cfg_for()
        obs = make_obs(freq=RL[0], util_max=0.3, util_avg=0.1, labels=(0, 0, 0))
        s = tem_update(initial_tem_state(cfg), obs.labels, obs, cfg)
        vec = tem_network_inputs(s, RL[0], cfg)
        assert np.all(vec[:12] == 0.0)
        assert vec[12] == pytest.approx(0.3)
        assert vec[16] == pytest.approx(RL[0] / RL[1])

    def test_gru_arity_independent_of_task_count(self):
        for n in (3, 8):
            cfg = cfg_for(n_tasks=n)
            obs = make_obs(freq=RL[0], labels=(1,) * n)
            s = tegm_update(initial_tegm_state(cfg), obs.labels, obs, cfg)
            seq, _ = tegm_network_inputs(s, RL[0], cfg)
            assert seq.shape[1] == 2
