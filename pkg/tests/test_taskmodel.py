import numpy as np
import pytest

from dvfslab.taskmodel import (
    BenchmarkProfile,
    DEFAULT_F_MAX,
    TaskSetSpec,
    TaskSpec,
    WorkloadError,
    baseline_time,
    builtin_taskset,
    generate_random_taskset,
    load_taskset,
    save_taskset,
)


def timing_tuple(spec):
    return [
        (t.profile.work, t.profile.duty, t.start_offset, t.relative_deadline)
        for t in spec.tasks
    ]


class TestBuiltins:
    def test_three_matches_published_timing(self):
        ts = builtin_taskset("three")
        assert [t.start_offset for t in ts.tasks] == [0.0, 0.3, 0.7]
        assert [t.relative_deadline for t in ts.tasks] == [0.3, 0.4, 0.5]
        assert ts.hyperperiod_T == pytest.approx(1.2)

    def test_five_matches_published_timing(self):
        ts = builtin_taskset("five")
        assert [t.start_offset for t in ts.tasks] == [0.0, 0.0, 0.0, 0.0, 1.0]
        assert [t.relative_deadline for t in ts.tasks] == [0.3, 0.5, 0.8, 1.0, 0.3]
        assert ts.hyperperiod_T == pytest.approx(1.3)

    def test_eight_matches_published_timing(self):
        ts = builtin_taskset("eight")
        assert [t.start_offset for t in ts.tasks] == [0.0] * 4 + [1.0] * 4
        assert [t.relative_deadline for t in ts.tasks] == [0.3, 0.5, 0.8, 1.0] * 2
        assert ts.hyperperiod_T == pytest.approx(2.0)

    def test_work_calibration_against_max_freq_times(self):
        # work values chosen so max-frequency execution times hit these targets
        targets = {
            "three": (0.138, 0.139, 0.139),
            "five": (0.100, 0.167, 0.307, 0.372, 0.086),
            "eight": (0.100, 0.167, 0.304, 0.371, 0.095, 0.167, 0.303, 0.371),
        }
        for name, expected in targets.items():
            ts = builtin_taskset(name)
            times = [baseline_time(t.profile, DEFAULT_F_MAX) for t in ts.tasks]
            assert times == pytest.approx(list(expected), rel=1e-12)

    def test_unknown_name_rejected(self):
        with pytest.raises(WorkloadError, match="unknown builtin"):
            builtin_taskset("nine")

    def test_deadlines_never_exceed_hyperperiod(self):
        for name in ("three", "five", "eight"):
            ts = builtin_taskset(name)
            for t in ts.tasks:
                assert t.absolute_deadline <= ts.hyperperiod_T + 1e-12


class TestBaselineTime:
    def test_direct_division(self):
        assert baseline_time(BenchmarkProfile("b", 0.3e9), 1.0e9) == pytest.approx(0.3)
        assert baseline_time(BenchmarkProfile("b", 1.2e9), 1.5e9) == pytest.approx(0.8)

    def test_zero_work_rejected_at_profile(self):
        with pytest.raises(WorkloadError, match="work"):
            BenchmarkProfile("b", 0.0)

    def test_bad_fmax(self):
        with pytest.raises(WorkloadError, match="f_max"):
            baseline_time(BenchmarkProfile("b", 1e9), 0.0)


class TestInvariants:
    def test_duty_bounds(self):
        with pytest.raises(WorkloadError):
            BenchmarkProfile("b", 1e9, duty=0.0)
        with pytest.raises(WorkloadError):
            BenchmarkProfile("b", 1e9, duty=1.5)
        assert BenchmarkProfile("b", 1e9, duty=1.0).duty == 1.0

    def test_negative_start_rejected(self):
        with pytest.raises(WorkloadError, match="start_offset"):
            TaskSpec(1, BenchmarkProfile("b", 1e9), -0.1, 0.5)

    def test_empty_set_rejected(self):
        with pytest.raises(WorkloadError, match="at least one task"):
            TaskSetSpec(tasks=())

    def test_explicit_hyperperiod_must_cover_deadlines(self):
        tasks = (
            TaskSpec(1, BenchmarkProfile("b", 1e9), 0.0, 0.5),
            TaskSpec(2, BenchmarkProfile("b", 1e9), 0.5, 0.9),
        )
        with pytest.raises(WorkloadError, match="task 2"):
            TaskSetSpec(tasks=tasks, hyperperiod_T=1.2)


class TestRandomGenerator:
    benches = (
        BenchmarkProfile("a", 0.15e9),
        BenchmarkProfile("b", 0.30e9),
    )

    def test_deterministic(self):
        a = generate_random_taskset(self.benches, 3, seed=42)
        b = generate_random_taskset(self.benches, 3, seed=42)
        assert timing_tuple(a) == timing_tuple(b)
        assert a.hyperperiod_T == b.hyperperiod_T

    def test_deadline_between_one_and_two_baselines(self):
        for seed in range(200):
            ts = generate_random_taskset(self.benches, 4, seed=seed, f_max=1.5e9)
            for t in ts.tasks:
                base = baseline_time(t.profile, 1.5e9)
                assert base < t.relative_deadline < 2.0 * base

    def test_single_task_hyperperiod_bounds(self):
        # enumerate the generator: with one 0.5 s benchmark, deadlines stay in
        # (0.5, 1.0), so whenever the start lands on 0 the hyperperiod does too
        bench = (BenchmarkProfile("solo", 0.75e9),)
        starts_seen_zero = 0
        for seed in range(1000):
            ts = generate_random_taskset(bench, 1, seed=seed, f_max=1.5e9)
            task = ts.tasks[0]
            assert 0.5 < task.relative_deadline < 1.0
            assert ts.hyperperiod_T == pytest.approx(
                task.start_offset + task.relative_deadline
            )
            if task.start_offset == 0.0:
                starts_seen_zero += 1
                assert 0.5 < ts.hyperperiod_T < 1.0
        assert starts_seen_zero > 0

    def test_start_offsets_quantized(self):
        ts = generate_random_taskset(self.benches, 6, seed=7)
        for t in ts.tasks:
            steps = t.start_offset / 0.1
            assert abs(steps - round(steps)) < 1e-9

    def test_invariant_deadline_within_hyperperiod(self):
        for seed in range(50):
            ts = generate_random_taskset(self.benches, 5, seed=seed)
            for t in ts.tasks:
                assert t.absolute_deadline <= ts.hyperperiod_T + 1e-12

    def test_degenerate_inputs(self):
        with pytest.raises(WorkloadError, match="count"):
            generate_random_taskset(self.benches, 0, seed=1)
        with pytest.raises(WorkloadError, match="non-empty"):
            generate_random_taskset((), 3, seed=1)


class TestFileRoundTrip:
    def test_builtin_round_trip(self, tmp_path):
        path = str(tmp_path / "three.txt")
        orig = builtin_taskset("three")
        save_taskset(orig, path)
        loaded = load_taskset(path)
        assert timing_tuple(loaded) == timing_tuple(orig)
        assert loaded.name == orig.name
        assert loaded.cores == orig.cores
        assert loaded.hyperperiod_T == pytest.approx(orig.hyperperiod_T)

    def test_generated_round_trip_exact(self, tmp_path):
        path = str(tmp_path / "w.txt")
        orig = generate_random_taskset(TestRandomGenerator.benches, 5, seed=9)
        save_taskset(orig, path)
        loaded = load_taskset(path)
        assert timing_tuple(loaded) == timing_tuple(orig)

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("taskset x cores=4\ntask 1 work=oops duty=1 start=0 ddl=1\n")
        with pytest.raises(WorkloadError, match=r":2:"):
            load_taskset(str(path))

    def test_invariant_violation_names_task(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text(
            "taskset x cores=4\ntask 7 work=1e9 duty=1.0 start=0.0 ddl=-1.0\n"
        )
        with pytest.raises(WorkloadError, match="task 7"):
            load_taskset(str(path))

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("taskset x cores=4\n# no tasks\n")
        with pytest.raises(WorkloadError, match="empty"):
            load_taskset(str(path))

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text(
            "# header comment\n\ntaskset demo cores=2\n"
            "task 1 work=1.5e8 duty=1.0 start=0.0 ddl=0.5  # trailing\n"
        )
        ts = load_taskset(str(path))
        assert ts.cores == 2
        assert ts.n_tasks == 1
