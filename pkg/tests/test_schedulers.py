import math

import pytest

from sgdsched import (
    ConfigurationError,
    DomainError,
    make_scheduler,
    on_grad_norm,
    on_step,
    stage_params,
)


def linear_state(**overrides):
    params = dict(
        batch0=8, lr0=0.1, stages=6, eps0=1.0, batch_increment=8
    )
    params.update(overrides)
    return make_scheduler("adaptive_linear", **params)


def exponential_state(**overrides):
    params = dict(
        batch0=16, lr0=0.1, stages=6, eps0=1.0, batch_factor=2.0, lr_factor=1.4
    )
    params.update(overrides)
    return make_scheduler("adaptive_exponential", **params)


class TestStageFormulas:
    def test_linear_stage_zero_is_identity(self):
        state = linear_state()
        assert stage_params(state, 0) == (8, 0.1, 1.0)

    def test_linear_first_threshold_is_eps0_over_sqrt2(self):
        state = linear_state()
        _, _, eps = stage_params(state, 1)
        assert eps == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-15)

    def test_exponential_worked_example(self):
        state = exponential_state()
        b, lr, eps = stage_params(state, 3)
        assert b == 128
        assert lr == pytest.approx(0.1 * 1.4**3, rel=1e-12)
        assert eps == pytest.approx(1.0 / math.sqrt(8.0), rel=1e-12)

    def test_formulas_exact_up_to_stage_twenty(self):
        lin = linear_state(stages=21)
        exp = exponential_state(stages=21)
        lr_by_mult, eps_denom = 0.1, 1.0
        for m in range(21):
            b, lr, eps = stage_params(lin, m)
            assert b == 8 + 8 * m
            assert lr == 0.1
            assert abs(eps - 1.0 / math.sqrt(1 + m)) <= 1e-12
            b, lr, eps = stage_params(exp, m)
            assert b == 16 * 2**m
            # cross-check the closed forms by repeated multiplication
            assert abs(lr - lr_by_mult) <= 1e-12 * lr_by_mult
            assert abs(eps - 1.0 / eps_denom) <= 1e-12
            lr_by_mult *= 1.4
            eps_denom *= math.sqrt(2.0)

    def test_threshold_ladder_strictly_decreasing(self):
        for state in (linear_state(stages=12), exponential_state(stages=12)):
            epsilons = [stage_params(state, m)[2] for m in range(state.stages)]
            assert all(b < a for a, b in zip(epsilons, epsilons[1:]))

    def test_exponential_threshold_batch_coupling(self):
        # on unrounded, uncapped values: eps_m * sqrt(b_m / b0) == eps0
        state = exponential_state(stages=15)
        for m in range(state.stages):
            eps = state.eps0 / math.sqrt(state.batch_factor**m)
            raw_b = state.batch0 * state.batch_factor**m
            assert eps * math.sqrt(raw_b / state.batch0) == pytest.approx(
                state.eps0, rel=1e-12
            )

    def test_stage_out_of_range(self):
        with pytest.raises(DomainError):
            stage_params(linear_state(), 6)

    def test_batch_rounding_forces_strict_increase(self):
        state = make_scheduler(
            "adaptive_exponential",
            batch0=4,
            lr0=0.1,
            stages=8,
            eps0=1.0,
            batch_factor=1.05,
            lr_factor=1.01,
        )
        batches = [stage_params(state, m)[0] for m in range(8)]
        assert all(b2 > b1 for b1, b2 in zip(batches, batches[1:]))

    def test_batch_cap_binds_at_dataset_size(self):
        state = exponential_state(n_cap=64, stages=6)
        batches = [stage_params(state, m)[0] for m in range(6)]
        assert batches == [16, 32, 64, 64, 64, 64]


class TestTransitions:
    def test_threshold_is_inclusive(self):
        state = linear_state()
        new, transitioned = on_grad_norm(state, state.eps)
        assert transitioned
        assert new.stage == 1

    def test_no_transition_at_last_stage(self):
        state = linear_state(stages=1)
        new, transitioned = on_grad_norm(state, 0.0)
        assert not transitioned
        assert new == state

    def test_one_transition_per_call(self):
        # a norm below the stage-2 threshold still advances only one stage
        state = exponential_state()
        deep = stage_params(state, 2)[2] / 10
        new, transitioned = on_grad_norm(state, deep)
        assert transitioned and new.stage == 1

    def test_identity_above_threshold(self):
        state = exponential_state()
        new, transitioned = on_grad_norm(state, state.eps * 1.0001)
        assert not transitioned
        assert new == state

    def test_monotone_sequence_crossing_k_thresholds(self):
        state = linear_state(stages=5)
        thresholds = [stage_params(state, m)[2] for m in range(5)]
        norms = [t * 0.999 for t in thresholds[:-1]]  # crosses 4 thresholds
        count = 0
        for norm in norms:
            state, transitioned = on_grad_norm(state, norm)
            count += int(transitioned)
        assert count == 4
        assert state.stage == 4

    def test_updates_current_values(self):
        state = exponential_state()
        new, _ = on_grad_norm(state, 0.0)
        assert (new.batch, new.lr, new.eps) == stage_params(state, 1)

    def test_non_adaptive_kinds_ignore_grad_norm(self):
        constant = make_scheduler("constant", batch0=8, lr0=0.1)
        fixed = make_scheduler(
            "fixed_interval", batch0=8, lr0=0.1, stages=4, interval=10,
            batch_increment=8,
        )
        for state in (constant, fixed):
            new, transitioned = on_grad_norm(state, 0.0)
            assert not transitioned
            assert new == state

    def test_cap_bound_flag_set_when_cap_binds(self):
        state = exponential_state(n_cap=32)
        state, _ = on_grad_norm(state, 0.0)  # stage 1: b = 32, exactly the cap
        assert not state.cap_bound
        state, _ = on_grad_norm(state, 0.0)  # stage 2: 64 clipped to 32
        assert state.cap_bound


class TestStepDriven:
    def test_cosine_endpoints(self):
        state = make_scheduler("cosine_lr", batch0=8, lr0=0.2, t_max=100)
        assert on_step(state, 0).lr == pytest.approx(0.2)
        assert on_step(state, 100).lr == pytest.approx(0.0, abs=1e-17)
        assert on_step(state, 250).lr == pytest.approx(0.0, abs=1e-17)

    def test_cosine_midpoint_and_floor(self):
        state = make_scheduler(
            "cosine_lr", batch0=8, lr0=0.2, t_max=100, lr_min=0.02
        )
        assert on_step(state, 50).lr == pytest.approx(0.11, rel=1e-12)
        assert on_step(state, 100).lr == pytest.approx(0.02, rel=1e-12)

    def test_fixed_interval_counts_elapsed_intervals(self):
        state = make_scheduler(
            "fixed_interval", batch0=4, lr0=0.1, stages=10, interval=100,
            batch_factor=2.0, lr_factor=1.3,
        )
        assert on_step(state, 250).stage == 2
        assert on_step(state, 99).stage == 0
        assert on_step(state, 5000).stage == 9  # clipped to the last stage

    def test_adaptive_kinds_unaffected_by_step(self):
        state = exponential_state()
        assert on_step(state, 10_000) == state

    def test_constant_never_changes(self):
        state = make_scheduler("constant", batch0=8, lr0=0.1)
        after = on_step(state, 123)
        assert (after.batch, after.lr) == (8, 0.1)
        after, transitioned = on_grad_norm(after, 0.0)
        assert not transitioned
        assert (after.batch, after.lr) == (8, 0.1)


class TestValidation:
    def test_paper_style_factors_accepted(self):
        state = exponential_state(batch_factor=2.0, lr_factor=1.4)
        assert state.lr_factor**2 < state.batch_factor

    def test_boundary_factor_rejected(self):
        with pytest.raises(ConfigurationError, match="lr_factor"):
            exponential_state(batch_factor=2.0, lr_factor=math.sqrt(2.0))

    def test_single_stage_accepted_for_every_kind(self):
        linear_state(stages=1)
        exponential_state(stages=1)
        make_scheduler("constant", batch0=4, lr0=0.1, stages=1)

    def test_missing_parameter_names_field(self):
        with pytest.raises(ConfigurationError, match="batch_increment"):
            make_scheduler("adaptive_linear", batch0=4, lr0=0.1, stages=3, eps0=1.0)
        with pytest.raises(ConfigurationError, match="batch_factor"):
            make_scheduler(
                "adaptive_exponential", batch0=4, lr0=0.1, stages=3, eps0=1.0,
                lr_factor=1.1,
            )
        with pytest.raises(ConfigurationError, match="t_max"):
            make_scheduler("cosine_lr", batch0=4, lr0=0.1)
        with pytest.raises(ConfigurationError, match="interval"):
            make_scheduler(
                "fixed_interval", batch0=4, lr0=0.1, stages=2, batch_increment=4
            )

    def test_bad_scalars_rejected(self):
        with pytest.raises(ConfigurationError, match="batch0"):
            linear_state(batch0=0)
        with pytest.raises(ConfigurationError, match="eps0"):
            linear_state(eps0=0.0)
        with pytest.raises(ConfigurationError, match="lr0"):
            linear_state(lr0=-0.1)
        with pytest.raises(ConfigurationError, match="stages"):
            linear_state(stages=0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigurationError, match="kind"):
            make_scheduler("warmup", batch0=4, lr0=0.1)

    def test_final_lr_at_stability_limit_warns_not_rejects(self):
        with pytest.warns(UserWarning, match="2/lipschitz"):
            state = exponential_state(stages=12, lipschitz=1.0)
        assert state.stages == 12
