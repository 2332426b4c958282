"""Reweighting diagonals, closed-form updates, the alternating fit loop,
and the first-order diagnostics around it."""

from __future__ import annotations

import numpy as np
import pytest

from poseact import (
    ConfigError,
    Dataset,
    FeatureLayout,
    LayoutError,
    SingularityError,
    SolverConfig,
    SynthSpec,
    ValidationError,
    attribute_norm,
    attribute_reweights,
    check_reweighting_inequality,
    fit,
    generate,
    loss,
    objective,
    skeletal_norm,
    skeletal_reweights,
    smoothed_gradients,
    smoothed_objective,
    stationarity_residual,
    update_object_weights,
    update_skeleton_weights,
)

from conftest import build_dataset


# --- SolverConfig -----------------------------------------------------------


def test_config_defaults():
    cfg = SolverConfig()
    assert cfg.lambda1 == 0.1
    assert cfg.lambda2 == 0.1
    assert cfg.tol == 1e-6
    assert cfg.max_iters == 100
    assert cfg.epsilon == 1e-8
    assert cfg.seed == 0


def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(lambda1=-0.1)
    with pytest.raises(ConfigError):
        SolverConfig(lambda2=float("inf"))
    with pytest.raises(ConfigError):
        SolverConfig(tol=0.0)
    with pytest.raises(ConfigError):
        SolverConfig(max_iters=0)
    with pytest.raises(ConfigError):
        SolverConfig(max_iters=2.5)
    with pytest.raises(ConfigError):
        SolverConfig(epsilon=0.0)
    with pytest.raises(ConfigError):
        SolverConfig(seed=-1)
    with pytest.raises(ConfigError):
        SolverConfig(seed=2**64)
    # zero penalties are legal; they switch the solver to plain least squares
    assert SolverConfig(lambda1=0.0, lambda2=0.0).lambda1 == 0.0


# --- reweighting diagonals ----------------------------------------------------


def test_skeletal_reweights_hand_example():
    layout = FeatureLayout(joint_dims=(2, 2), object_count=1, modality_dims=(1,))
    w_c = np.array([3.0, 4.0, 5.0, 12.0])
    diag = skeletal_reweights(w_c, layout, epsilon=1e-8)
    assert np.allclose(diag, [1 / 10, 1 / 10, 1 / 26, 1 / 26], rtol=1e-12)


def test_skeletal_reweights_zero_block_hits_floor():
    layout = FeatureLayout(joint_dims=(2, 2), object_count=1, modality_dims=(1,))
    w_c = np.array([0.0, 0.0, 3.0, 4.0])
    diag = skeletal_reweights(w_c, layout, epsilon=1e-8)
    assert np.allclose(diag[:2], 1.0 / 2e-8)
    assert np.allclose(diag[2:], 1.0 / 10.0)


def test_attribute_reweights_hand_example():
    layout = FeatureLayout(joint_dims=(1,), object_count=1, modality_dims=(3,))
    diag = attribute_reweights(np.array([0.0, 3.0, 4.0]), layout, epsilon=1e-8)
    assert np.allclose(diag, 1.0 / 10.0)
    all_zero = attribute_reweights(np.zeros(3), layout, epsilon=1e-8)
    assert np.allclose(all_zero, 1.0 / 2e-8)


def test_reweights_match_loop_oracle_and_stay_positive():
    rng = np.random.default_rng(101)
    for _ in range(20):
        layout = FeatureLayout(
            joint_dims=tuple(int(d) for d in rng.integers(1, 4, size=int(rng.integers(1, 5)))),
            object_count=int(rng.integers(1, 4)),
            modality_dims=tuple(int(d) for d in rng.integers(1, 4, size=int(rng.integers(1, 4)))),
        )
        w_c = rng.standard_normal(layout.d_t)
        u_c = rng.standard_normal(layout.d_o)
        dw = skeletal_reweights(w_c, layout, epsilon=1e-8)
        du = attribute_reweights(u_c, layout, epsilon=1e-8)
        assert np.all(dw > 0) and np.all(du > 0)
        for sl in layout.joint_slices:
            expected = 0.5 / max(np.sqrt(np.sum(w_c[sl] ** 2)), 1e-8)
            assert np.allclose(dw[sl], expected, rtol=1e-12)
        for sl in layout.object_block_slices:
            expected = 0.5 / max(np.sqrt(np.sum(u_c[sl] ** 2)), 1e-8)
            assert np.allclose(du[sl], expected, rtol=1e-12)


def test_reweights_reject_wrong_shape(small_layout):
    with pytest.raises(LayoutError):
        skeletal_reweights(np.zeros(small_layout.d_t + 1), small_layout, 1e-8)
    with pytest.raises(LayoutError):
        attribute_reweights(np.zeros((small_layout.d_o, 1)), small_layout, 1e-8)
    with pytest.raises(ConfigError):
        skeletal_reweights(np.zeros(small_layout.d_t), small_layout, 0.0)


# --- closed-form updates ------------------------------------------------------


def test_update_skeleton_identity_design_returns_labels():
    # T is the 4x4 identity, object side silenced, no penalty: w must equal y
    layout = FeatureLayout(joint_dims=(2, 2), object_count=1, modality_dims=(2,))
    labels = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    ds = Dataset(
        layout=layout,
        skeleton=np.eye(4),
        objects=np.random.default_rng(0).standard_normal((2, 4)),
        labels=labels,
    )
    w = update_skeleton_weights(ds, np.zeros(2), labels[:, 0], np.ones(4), 0.0)
    assert np.allclose(w, labels[:, 0], atol=1e-12)


def test_update_object_identity_design_returns_labels():
    layout = FeatureLayout(joint_dims=(2,), object_count=1, modality_dims=(1, 2))
    labels = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    ds = Dataset(
        layout=layout,
        skeleton=np.random.default_rng(1).standard_normal((2, 3)),
        objects=np.eye(3),
        labels=labels,
    )
    u = update_object_weights(ds, np.zeros(2), labels[:, 1], np.ones(3), 0.0)
    assert np.allclose(u, labels[:, 1], atol=1e-12)


def test_updates_match_least_squares_oracle():
    """With no penalty and the other side silenced, each update is the
    ordinary normal-equations solution."""
    rng = np.random.default_rng(107)
    layout = FeatureLayout(joint_dims=(3, 2), object_count=2, modality_dims=(2,))
    for k in range(10):
        ds = build_dataset(layout, n=30, n_classes=2, seed=200 + k)
        y = ds.labels[:, 0]
        w = update_skeleton_weights(ds, np.zeros(layout.d_o), y, np.ones(layout.d_t), 0.0)
        oracle, *_ = np.linalg.lstsq(ds.skeleton.T, y, rcond=None)
        assert np.allclose(w, oracle, atol=1e-9)
        u = update_object_weights(ds, np.zeros(layout.d_t), y, np.ones(layout.d_o), 0.0)
        oracle_u, *_ = np.linalg.lstsq(ds.objects.T, y, rcond=None)
        assert np.allclose(u, oracle_u, atol=1e-9)


def test_update_with_cross_term_matches_oracle():
    # nonzero u shifts the target to y - O'u; check against a dense solve
    layout = FeatureLayout(joint_dims=(2, 2), object_count=1, modality_dims=(3,))
    ds = build_dataset(layout, n=25, n_classes=2, seed=300)
    rng = np.random.default_rng(301)
    u_c = rng.standard_normal(layout.d_o)
    y = ds.labels[:, 1]
    d = skeletal_reweights(rng.standard_normal(layout.d_t), layout, 1e-8)
    w = update_skeleton_weights(ds, u_c, y, d, 0.7)
    t = ds.skeleton
    system = t @ t.T + 0.7 * np.diag(d)
    expected = np.linalg.solve(system, t @ (y - ds.objects.T @ u_c))
    assert np.allclose(w, expected, atol=1e-10)


def test_huge_penalty_crushes_the_solution():
    layout = FeatureLayout(joint_dims=(2, 3), object_count=1, modality_dims=(2,))
    ds = build_dataset(layout, n=40, n_classes=2, seed=303)
    y = ds.labels[:, 0]
    d = np.ones(layout.d_t)
    w_free = update_skeleton_weights(ds, np.zeros(layout.d_o), y, d, 0.0)
    w_crushed = update_skeleton_weights(ds, np.zeros(layout.d_o), y, d, 1e8)
    assert np.linalg.norm(w_crushed) < 1e-4 * np.linalg.norm(w_free)


def test_update_symmetry_under_role_swap():
    """Swapping the two data matrices (and block structures) swaps the roles
    of the two update rules exactly."""
    layout_a = FeatureLayout(joint_dims=(2, 1), object_count=1, modality_dims=(3,))
    layout_b = FeatureLayout(joint_dims=(3,), object_count=1, modality_dims=(2, 1))
    rng = np.random.default_rng(109)
    skeleton = rng.standard_normal((3, 20))
    objects = rng.standard_normal((3, 20))
    labels = np.zeros((20, 2))
    labels[np.arange(20), rng.integers(0, 2, size=20)] = 1.0
    ds_a = Dataset(layout=layout_a, skeleton=skeleton, objects=objects, labels=labels)
    ds_b = Dataset(layout=layout_b, skeleton=objects, objects=skeleton, labels=labels)
    fixed = rng.standard_normal(3)
    d = np.full(3, 0.25)
    y = labels[:, 0]
    from_a = update_object_weights(ds_a, fixed, y, d, 0.4)
    from_b = update_skeleton_weights(ds_b, fixed, y, d, 0.4)
    assert np.allclose(from_a, from_b, atol=1e-12)


def test_update_singular_gram_raises():
    # 5 skeleton rows from only 3 instances: T T' is rank deficient, and with
    # no penalty there is nothing to regularize the solve
    layout = FeatureLayout(joint_dims=(3, 2), object_count=1, modality_dims=(1,))
    rng = np.random.default_rng(113)
    ds = Dataset(
        layout=layout,
        skeleton=rng.standard_normal((5, 3)),
        objects=rng.standard_normal((1, 3)),
        labels=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]),
    )
    with pytest.raises(SingularityError, match="positive definite"):
        update_skeleton_weights(ds, np.zeros(1), ds.labels[:, 0], np.ones(5), 0.0)


# --- fit ---------------------------------------------------------------------


def linear_label_dataset(seed=0, n=60):
    """Labels that are an exact linear readout of the first joint block."""
    layout = FeatureLayout(joint_dims=(2, 3), object_count=1, modality_dims=(2,))
    rng = np.random.default_rng(seed)
    labels = np.zeros((n, 2))
    labels[np.arange(n), rng.integers(0, 2, size=n)] = 1.0
    skeleton = rng.standard_normal((layout.d_t, n))
    skeleton[0:2, :] = labels.T  # joint 0 carries the one-hot rows verbatim
    objects = rng.standard_normal((layout.d_o, n))
    return Dataset(layout=layout, skeleton=skeleton, objects=objects, labels=labels)


def test_fit_converges_on_linearly_separable_data():
    ds = linear_label_dataset()
    model, report = fit(ds, SolverConfig(lambda1=0.1, lambda2=0.1, tol=1e-6, max_iters=100))
    assert report.converged
    assert report.iterations_run <= 100
    trace = np.asarray(report.objective_trace)
    assert np.all(np.diff(trace) <= 1e-9 * np.maximum(1.0, trace[:-1]))


def test_fit_trace_is_monotone_on_random_problems():
    rng = np.random.default_rng(127)
    for k in range(10):
        layout = FeatureLayout(
            joint_dims=tuple(int(d) for d in rng.integers(1, 4, size=int(rng.integers(2, 5)))),
            object_count=int(rng.integers(1, 3)),
            modality_dims=tuple(int(d) for d in rng.integers(1, 4, size=int(rng.integers(1, 3)))),
        )
        ds = build_dataset(layout, n=int(rng.integers(20, 60)), n_classes=3, seed=400 + k)
        _, report = fit(ds, SolverConfig(max_iters=40, seed=k))
        trace = np.asarray(report.objective_trace)
        assert np.all(np.diff(trace) <= 1e-9 * np.maximum(1.0, trace[:-1]))
        assert len(report.loss_trace) == len(trace) == report.iterations_run


def test_fit_final_trace_entry_matches_objective_and_loss():
    ds = build_dataset(
        FeatureLayout(joint_dims=(2, 2), object_count=1, modality_dims=(2,)),
        n=30,
        n_classes=2,
        seed=11,
    )
    cfg = SolverConfig(lambda1=0.3, lambda2=0.2, max_iters=25)
    model, report = fit(ds, cfg)
    assert report.objective_trace[-1] == pytest.approx(
        objective(ds, model.w, model.u, 0.3, 0.2), rel=1e-12
    )
    assert report.loss_trace[-1] == pytest.approx(loss(ds, model.w, model.u), rel=1e-12)


def test_fit_unpenalized_square_system_reaches_least_squares_loss():
    # d_t + d_o = N and the stacked design is nonsingular: the flat minimum
    # is exact interpolation, which the alternation must approach
    layout = FeatureLayout(joint_dims=(2, 1), object_count=1, modality_dims=(3,))
    rng = np.random.default_rng(131)
    n = 6
    skeleton = rng.standard_normal((3, n))
    objects = rng.standard_normal((3, n))
    stacked = np.vstack([skeleton, objects])
    assert np.linalg.matrix_rank(stacked) == n
    labels = np.zeros((n, 2))
    labels[np.arange(n), rng.integers(0, 2, size=n)] = 1.0
    ds = Dataset(layout=layout, skeleton=skeleton, objects=objects, labels=labels)
    model, report = fit(
        ds, SolverConfig(lambda1=0.0, lambda2=0.0, tol=1e-15, max_iters=20000)
    )
    coef, *_ = np.linalg.lstsq(stacked.T, labels, rcond=None)
    oracle = float(np.sum((stacked.T @ coef - labels) ** 2))
    assert loss(ds, model.w, model.u) <= oracle + 1e-6


def test_fit_is_deterministic():
    ds = build_dataset(
        FeatureLayout(joint_dims=(2, 3), object_count=2, modality_dims=(1, 2)),
        n=35,
        n_classes=3,
        seed=17,
    )
    cfg = SolverConfig(seed=42, max_iters=30)
    model_a, report_a = fit(ds, cfg)
    model_b, report_b = fit(ds, cfg)
    assert np.array_equal(model_a.w, model_b.w)
    assert np.array_equal(model_a.u, model_b.u)
    assert report_a.objective_trace == report_b.objective_trace
    # a different seed starts elsewhere
    model_c, _ = fit(ds, SolverConfig(seed=43, max_iters=30))
    assert not np.array_equal(model_a.w, model_c.w)


def test_fit_reports_non_convergence_instead_of_raising():
    ds = build_dataset(
        FeatureLayout(joint_dims=(2, 2), object_count=1, modality_dims=(2,)),
        n=30,
        n_classes=2,
        seed=19,
    )
    model, report = fit(ds, SolverConfig(max_iters=1))
    assert not report.converged
    assert report.iterations_run == 1
    assert model.w.shape == (4, 2)


def test_fit_requires_labels(small_layout):
    rng = np.random.default_rng(23)
    ds = Dataset(
        layout=small_layout,
        skeleton=rng.standard_normal((small_layout.d_t, 5)),
        objects=rng.standard_normal((small_layout.d_o, 5)),
    )
    with pytest.raises(ValidationError):
        fit(ds, SolverConfig())


def test_fit_propagates_singularity():
    # unpenalized skeleton side with more rows than instances cannot be solved
    layout = FeatureLayout(joint_dims=(4, 3), object_count=1, modality_dims=(1,))
    ds = build_dataset(layout, n=4, n_classes=2, seed=29)
    with pytest.raises(SingularityError):
        fit(ds, SolverConfig(lambda1=0.0, lambda2=0.1))


def test_fit_model_carries_dataset_metadata():
    ds = build_dataset(
        FeatureLayout(joint_dims=(2,), object_count=1, modality_dims=(2,)),
        n=20,
        n_classes=2,
        seed=31,
    )
    cfg = SolverConfig(max_iters=10)
    model, _ = fit(ds, cfg)
    assert model.class_names == ds.class_names
    assert model.hyperparams == cfg
    assert model.names == ds.names
    assert model.standardizer is None


def test_half_iteration_update_never_raises_partial_objective():
    """Refreshing W alone (diagonals from the pre-update W, object side
    fixed) must not increase loss + penalty on the skeleton side."""
    rng = np.random.default_rng(137)
    layout = FeatureLayout(joint_dims=(2, 3, 1), object_count=2, modality_dims=(2,))
    for k in range(20):
        ds = build_dataset(layout, n=int(rng.integers(15, 50)), n_classes=2, seed=500 + k)
        w = 0.5 * rng.standard_normal((layout.d_t, 2))
        u = 0.5 * rng.standard_normal((layout.d_o, 2))
        lam1 = 0.3
        before = loss(ds, w, u) + lam1 * skeletal_norm(w, layout)
        w_new = np.empty_like(w)
        for c in range(2):
            d = skeletal_reweights(w[:, c], layout, 1e-8)
            w_new[:, c] = update_skeleton_weights(ds, u[:, c], ds.labels[:, c], d, lam1)
        after = loss(ds, w_new, u) + lam1 * skeletal_norm(w_new, layout)
        assert after <= before + 1e-9 * max(1.0, before)
        # symmetric statement for the object side
        lam2 = 0.25
        before_u = loss(ds, w, u) + lam2 * attribute_norm(u, layout)
        u_new = np.empty_like(u)
        for c in range(2):
            d = attribute_reweights(u[:, c], layout, 1e-8)
            u_new[:, c] = update_object_weights(ds, w[:, c], ds.labels[:, c], d, lam2)
        after_u = loss(ds, w, u_new) + lam2 * attribute_norm(u_new, layout)
        assert after_u <= before_u + 1e-9 * max(1.0, before_u)


# --- the scalar inequality behind the reweighting scheme ----------------------


def test_inequality_equality_case():
    assert check_reweighting_inequality(np.array([1.0, 0.0]), np.array([1.0, 0.0]))


def test_inequality_zero_candidate():
    assert check_reweighting_inequality(np.array([2.0, 0.0]), np.array([0.0, 0.0]))


def test_inequality_rejects_zero_reference():
    with pytest.raises(ValidationError):
        check_reweighting_inequality(np.zeros(3), np.ones(3))


def test_inequality_holds_on_random_pairs():
    rng = np.random.default_rng(139)
    for _ in range(2000):
        dim = int(rng.integers(1, 20))
        v = rng.standard_normal(dim)
        while np.linalg.norm(v) < 1e-6:
            v = rng.standard_normal(dim)
        v_tilde = rng.standard_normal(dim) * float(rng.uniform(0, 3))
        assert check_reweighting_inequality(v, v_tilde)


# --- stationarity residual -----------------------------------------------------


def square_interpolating_fixture(seed=211):
    layout = FeatureLayout(joint_dims=(2, 1), object_count=1, modality_dims=(3,))
    rng = np.random.default_rng(seed)
    n = 6
    skeleton = rng.standard_normal((3, n))
    objects = rng.standard_normal((3, n))
    labels = np.zeros((n, 2))
    labels[np.arange(n), rng.integers(0, 2, size=n)] = 1.0
    ds = Dataset(layout=layout, skeleton=skeleton, objects=objects, labels=labels)
    stacked = np.vstack([skeleton, objects])
    coef = np.linalg.solve(stacked.T, labels)
    return ds, coef[:3], coef[3:]


def test_residual_is_zero_at_exact_unpenalized_solution():
    ds, w, u = square_interpolating_fixture()
    from poseact import Model

    model = Model(
        layout=ds.layout, w=w, u=u, class_names=ds.class_names, hyperparams=SolverConfig()
    )
    assert stationarity_residual(ds, model, 0.0, 0.0, 1e-8) < 1e-8


def test_residual_is_small_after_tightly_converged_fit():
    layout = FeatureLayout(joint_dims=(2, 2, 2, 2), object_count=2, modality_dims=(2, 2))
    spec = SynthSpec(
        layout=layout,
        n_classes=3,
        n_instances=200,
        noise_sigma=0.1,
        planted_joints=((0,), (1,), (2,)),
        planted_blocks=(((0, 0),), ((0, 1),), ((1, 0),)),
        seed=1,
    )
    ds = generate(spec).dataset
    model, report = fit(ds, SolverConfig(tol=1e-10, max_iters=500, seed=1))
    assert report.converged
    assert stationarity_residual(ds, model, 0.1, 0.1, 1e-8) < 1e-4


def test_residual_positive_for_unfitted_weights(small_dataset):
    from poseact import Model

    rng = np.random.default_rng(149)
    model = Model(
        layout=small_dataset.layout,
        w=rng.standard_normal((small_dataset.layout.d_t, 3)),
        u=rng.standard_normal((small_dataset.layout.d_o, 3)),
        class_names=small_dataset.class_names,
        hyperparams=SolverConfig(),
    )
    assert stationarity_residual(small_dataset, model, 0.1, 0.1, 1e-8) > 1e-3


# --- smoothed objective / gradients ---------------------------------------------


def test_smoothed_objective_approaches_true_objective(small_dataset):
    rng = np.random.default_rng(151)
    layout = small_dataset.layout
    w = rng.standard_normal((layout.d_t, 3))
    u = rng.standard_normal((layout.d_o, 3))
    exact = objective(small_dataset, w, u, 0.1, 0.2)
    smooth = smoothed_objective(small_dataset, w, u, 0.1, 0.2, 1e-9)
    assert smooth == pytest.approx(exact, rel=1e-9)
    # smoothing only ever adds to each block norm
    assert smoothed_objective(small_dataset, w, u, 0.1, 0.2, 1e-2) >= exact


def test_smoothed_gradients_match_central_differences(small_dataset):
    rng = np.random.default_rng(157)
    layout = small_dataset.layout
    h = 1e-5
    for _ in range(20):
        w = rng.standard_normal((layout.d_t, 3))
        u = rng.standard_normal((layout.d_o, 3))
        gw, gu = smoothed_gradients(small_dataset, w, u, 0.1, 0.2, 1e-3)
        for arr, grad in ((w, gw), (u, gu)):
            i = int(rng.integers(arr.shape[0]))
            c = int(rng.integers(3))
            orig = arr[i, c]
            arr[i, c] = orig + h
            up = smoothed_objective(small_dataset, w, u, 0.1, 0.2, 1e-3)
            arr[i, c] = orig - h
            down = smoothed_objective(small_dataset, w, u, 0.1, 0.2, 1e-3)
            arr[i, c] = orig
            fd = (up - down) / (2 * h)
            assert abs(fd - grad[i, c]) <= 1e-5 * max(1.0, abs(fd))
