import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import I2, X, Y, Z
from nhgeom.dynamics import GeneratorSchedule, IntegratorConfig, bures_speed, evolve
from nhgeom.errors import BoundaryError, NotATangentError, PlanError, SingularFrameError
from nhgeom.geodesics import (
    GeodesicPlan,
    Purification,
    Verdict,
    align,
    d_pi,
    geodesic_generator,
    geodesic_path,
    geodesic_path_derivative,
    lift_generator,
    plan_geodesic,
    purify,
    qubit_ellipse_invariant,
    real_inner,
    split_tangent,
    time_independent_check,
    transport_operator,
)
from nhgeom.operators import psd_sqrt, random_density_matrix, random_hermitian, random_unitary, trace_distance
from nhgeom.states import (
    DensityOperator,
    NonHermitianGenerator,
    TangentVector,
    bures_inner,
    fidelity_and_angle,
    tangent_from_H_Gamma,
)

seeds = st.integers(0, 2**32 - 1)
RHO1 = 0.5 * (I2 + 0.2 * Z)
RHO2 = 0.5 * (I2 - 0.5 * X - 0.5 * Z)


def rand_state(rng, n, rank=None):
    return DensityOperator(random_density_matrix(n, rng, rank=rank))


def rand_sphere_tangent(rng, w):
    y = rng.normal(size=w.shape) + 1j * rng.normal(size=w.shape)
    return y - real_inner(w, y) * w


def qubit_plan():
    return plan_geodesic(DensityOperator(RHO1), DensityOperator(RHO2))


# -- purifications -----------------------------------------------------------


def test_purify_pure_state():
    psi = np.array([0.6, 0.8j])
    w = purify(DensityOperator.pure(psi)).W
    assert w.shape == (2, 1)
    overlap = np.vdot(psi, w[:, 0])
    assert abs(abs(overlap) - 1) <= 1e-12


def test_purify_full_rank_reconstructs(rng):
    rho = rand_state(rng, 3)
    w = purify(rho).W
    assert w.shape == (3, 3)
    assert np.allclose(w @ w.conj().T, rho.matrix, atol=1e-12)


def test_purify_low_rank(rng):
    rho = rand_state(rng, 3, rank=2)
    p = purify(rho)
    assert p.W.shape == (3, 2)
    assert np.trace(p.W.conj().T @ p.W).real == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(p.rho.matrix, rho.matrix, atol=1e-10)
    col_norms = np.linalg.norm(p.W, axis=0)
    assert np.all(np.diff(col_norms) <= 0)


def test_purification_validation():
    with pytest.raises(PlanError):
        Purification(np.eye(2))
    with pytest.raises(PlanError):
        Purification(np.array([[1.0, 0.0], [0.0, 0.0]]))


# -- alignment ---------------------------------------------------------------


def test_align_keeps_aligned_input(rng):
    w1 = purify(rand_state(rng, 3))
    w2 = purify(rand_state(rng, 3))
    a = align(w1, w2)
    assert np.allclose(align(w1, a).W, a.W, atol=1e-12)


def test_align_same_fiber_returns_w1(rng):
    w1 = purify(rand_state(rng, 3))
    w2 = Purification(w1.W @ random_unitary(3, rng))
    assert np.allclose(align(w1, w2).W, w1.W, atol=1e-12)


def test_align_qubit_pair_overlap_is_root_fidelity():
    w1 = Purification(psd_sqrt(RHO1))
    w2 = align(w1, Purification(psd_sqrt(RHO2)))
    f, _ = fidelity_and_angle(DensityOperator(RHO1), DensityOperator(RHO2))
    assert np.trace(w1.W.conj().T @ w2.W).real == pytest.approx(math.sqrt(f), abs=1e-9)
    overlap = w1.W.conj().T @ w2.W
    assert np.allclose(overlap, overlap.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(overlap)[0] >= -1e-10


@given(seed=seeds, n=st.integers(2, 4), low=st.booleans())
@settings(max_examples=20)
def test_alignment_is_optimal(seed, n, low):
    rng = np.random.default_rng(seed)
    r = n - 1 if low else n
    w1 = purify(rand_state(rng, n, rank=r))
    w2_raw = purify(rand_state(rng, n, rank=r))
    best = real_inner(w1.W, align(w1, w2_raw).W)
    for _ in range(50):
        v = random_unitary(r, rng)
        assert real_inner(w1.W, w2_raw.W @ v) <= best + 1e-10


def test_align_flags_singular_overlap():
    w1 = Purification(np.array([[1.0], [0.0]]))
    w2 = Purification(np.array([[0.0], [1.0]]))
    out = align(w1, w2)
    assert out.diagnostics and "rank-deficient" in out.diagnostics[0]


# -- vertical / horizontal ---------------------------------------------------


def test_global_phase_direction_is_vertical(rng):
    w = purify(rand_state(rng, 3))
    s = split_tangent(w.W * 0.7j, w)
    assert np.allclose(s.horizontal, 0, atol=1e-12)
    assert np.allclose(s.A, 0.7j * np.eye(3), atol=1e-12)


def test_hermitian_direction_is_horizontal(rng):
    rho = rand_state(rng, 3)
    w = purify(rho)
    L = random_hermitian(3, rng)
    L -= rho.expectation(L) * np.eye(3)
    s = split_tangent(L @ w.W, w)
    assert np.allclose(s.vertical, 0, atol=1e-10)
    assert np.allclose(s.L, L, atol=1e-9)


@given(seed=seeds, n=st.integers(2, 4), low=st.booleans())
def test_split_random_tangent(seed, n, low):
    rng = np.random.default_rng(seed)
    w = purify(rand_state(rng, n, rank=n - 1 if low else n))
    wd = rand_sphere_tangent(rng, w.W)
    s = split_tangent(wd, w)
    assert np.allclose(s.vertical + s.horizontal, wd, atol=1e-12)
    assert abs(real_inner(s.vertical, s.horizontal)) <= 1e-10
    assert np.max(np.abs(d_pi(s.vertical, w.W))) <= 1e-9
    assert np.max(np.abs(d_pi(s.horizontal, w.W) - d_pi(wd, w.W))) <= 1e-9
    assert np.allclose(s.A, -s.A.conj().T, atol=1e-12)
    assert np.allclose(s.L @ w.W, s.horizontal, atol=1e-9)
    assert abs(np.trace(s.L @ w.W @ w.W.conj().T)) <= 1e-9


def test_split_rejects_radial_direction(rng):
    w = purify(rand_state(rng, 2))
    with pytest.raises(NotATangentError):
        split_tangent(w.W, w)


# -- lifts -------------------------------------------------------------------


def test_gradient_flow_lift_is_horizontal(rng):
    w = purify(rand_state(rng, 3))
    gen = NonHermitianGenerator(np.zeros((3, 3)), random_hermitian(3, rng))
    wd, wh = lift_generator(gen, w)
    assert np.allclose(wd, wh, atol=1e-12)


def test_hamiltonian_lift_is_not_horizontal(rng):
    w = purify(rand_state(rng, 3))
    gen = NonHermitianGenerator(random_hermitian(3, rng), np.zeros((3, 3)))
    wd, wh = lift_generator(gen, w)
    assert np.max(np.abs(wd - wh)) > 1e-3


@given(seed=seeds, n=st.integers(2, 4), low=st.booleans())
def test_lift_projects_to_tangent_and_has_bures_length(seed, n, low):
    rng = np.random.default_rng(seed)
    rho = rand_state(rng, n, rank=n - 1 if low else n)
    w = purify(rho)
    gen = NonHermitianGenerator(random_hermitian(n, rng), random_hermitian(n, rng))
    wd, wh = lift_generator(gen, w)
    v = tangent_from_H_Gamma(gen, rho).matrix
    assert np.max(np.abs(d_pi(wd, w.W) - v)) <= 1e-10
    assert np.max(np.abs(d_pi(wh, w.W) - v)) <= 1e-10
    assert real_inner(wh, wh) == pytest.approx(bures_speed(gen, rho) ** 2, abs=1e-9)


@given(seed=seeds, n=st.integers(2, 4), low=st.booleans())
def test_horizontal_lift_metric_is_fiber_independent(seed, n, low):
    rng = np.random.default_rng(seed)
    r = n - 1 if low else n
    rho = rand_state(rng, n, rank=r)
    gens = [NonHermitianGenerator(random_hermitian(n, rng), random_hermitian(n, rng)) for _ in range(2)]
    v, u = (tangent_from_H_Gamma(g, rho) for g in gens)
    target = bures_inner(v, u)
    for frame in (np.eye(r), random_unitary(r, rng)):
        w = Purification(purify(rho).W @ frame)
        hv = split_tangent(lift_generator(gens[0], w)[0], w).horizontal
        hu = split_tangent(lift_generator(gens[1], w)[0], w).horizontal
        assert real_inner(hv, hu) == pytest.approx(target, abs=1e-8)


# -- geodesic paths ----------------------------------------------------------


def test_path_endpoints():
    plan = qubit_plan()
    w0, r0 = geodesic_path(plan, 0.0)
    w1, r1 = geodesic_path(plan, plan.theta)
    assert np.allclose(w0.W, plan.W1.W, atol=1e-12) and np.allclose(r0.matrix, RHO1, atol=1e-12)
    assert np.allclose(w1.W, plan.W2.W, atol=1e-12) and np.allclose(r1.matrix, RHO2, atol=1e-12)
    with pytest.raises(PlanError):
        geodesic_path(plan, plan.theta + 1e-3)


def test_midpoint_between_pure_states():
    a, b = np.array([1.0, 0.0]), np.array([1.0, 1.0]) / math.sqrt(2)
    plan = plan_geodesic(DensityOperator.pure(a), DensityOperator.pure(b))
    assert plan.theta == pytest.approx(math.pi / 4)
    mid = (a + b) / np.linalg.norm(a + b)
    _, rho = geodesic_path(plan, plan.theta / 2)
    assert np.allclose(rho.matrix, np.outer(mid, mid), atol=1e-12)


def test_unit_speed_and_arc_length():
    plan = qubit_plan()
    for tau in np.linspace(0, plan.theta, 9):
        d = geodesic_path_derivative(plan, tau)
        assert math.sqrt(real_inner(d, d)) == pytest.approx(1.0, abs=1e-8)

    def state_speed(tau, h=1e-6):
        rho = geodesic_path(plan, tau)[1]
        lo, hi = max(tau - h, 0.0), min(tau + h, plan.theta)
        v = (geodesic_path(plan, hi)[1].matrix - geodesic_path(plan, lo)[1].matrix) / (hi - lo)
        v = TangentVector(rho, v - np.trace(v) / 2 * np.eye(2))
        return math.sqrt(bures_inner(v, v))

    length, _ = quad(state_speed, 0.0, plan.theta, epsabs=1e-11)
    _, angle = fidelity_and_angle(DensityOperator(RHO1), DensityOperator(RHO2))
    assert length == pytest.approx(angle, abs=1e-7)


def test_generator_tangent_matches_path_derivative():
    plan = qubit_plan()
    k0 = geodesic_generator(plan, 0.0)
    v = tangent_from_H_Gamma(NonHermitianGenerator.from_matrix(k0), plan.rho1).matrix
    h = 1e-6
    fd = (geodesic_path(plan, h)[1].matrix - plan.rho1.matrix) / h
    fd2 = (geodesic_path(plan, 2 * h)[1].matrix - plan.rho1.matrix) / (2 * h)
    assert np.max(np.abs(v - (2 * fd - fd2))) <= 1e-6


# -- transport operator ------------------------------------------------------


def test_transport_full_rank_diagonal_qutrit():
    r1 = np.diag([0.2, 0.4, 0.4])
    r2 = np.diag([0.2, 0.3, 0.5])
    m = transport_operator(np.sqrt(r1), np.sqrt(r2))
    assert np.allclose(m, np.diag([1.0, math.sqrt(3) / 2, math.sqrt(5) / 2]), atol=1e-14)


def test_transport_identity_cases(rng):
    w = purify(rand_state(rng, 3))
    assert np.allclose(transport_operator(w, w), np.eye(3), atol=1e-12)
    wl = purify(rand_state(rng, 3, rank=2))
    p1 = wl.W @ np.linalg.pinv(wl.W)
    assert np.allclose(transport_operator(wl, wl), p1 + 1j * (np.eye(3) - p1), atol=1e-12)


def test_transport_pure_qubits(rng):
    a = DensityOperator.pure(rng.normal(size=2) + 1j * rng.normal(size=2))
    b = DensityOperator.pure(rng.normal(size=2) + 1j * rng.normal(size=2))
    plan = plan_geodesic(a, b)
    assert np.allclose(plan.M @ plan.W1.W, plan.W2.W, atol=1e-10)
    assert plan.min_singular_value(np.linspace(0, plan.theta, 100)) > 1e-8


def test_transport_requires_alignment(rng):
    w1 = purify(rand_state(rng, 2))
    with pytest.raises(PlanError):
        transport_operator(w1, Purification(-w1.W))


@given(seed=seeds, n=st.integers(2, 4), r=st.integers(1, 3))
@settings(max_examples=25)
def test_low_rank_plans_are_invertible(seed, n, r):
    rng = np.random.default_rng(seed)
    r = min(r, n - 1)
    plan = plan_geodesic(rand_state(rng, n, rank=r), rand_state(rng, n, rank=r))
    assert np.allclose(plan.M @ plan.W1.W, plan.W2.W, atol=1e-10)
    ev = np.linalg.eigvals(plan.M)
    assert not np.any((np.abs(ev.imag) <= 1e-12) & (ev.real <= 1e-12))
    assert plan.min_singular_value(np.linspace(0, plan.theta, 200)) > 1e-8


# -- generator ---------------------------------------------------------------


def test_identical_states_rejected():
    rho = DensityOperator(RHO1)
    with pytest.raises(PlanError):
        plan_geodesic(rho, rho)


def test_rank_mismatch_rejected(rng):
    with pytest.raises(PlanError):
        plan_geodesic(rand_state(rng, 3), rand_state(rng, 3, rank=2))


def test_full_rank_generator_is_anti_hermitian(rng):
    plan = plan_geodesic(rand_state(rng, 3), rand_state(rng, 3))
    for tau in np.linspace(0, plan.theta, 7):
        k = geodesic_generator(plan, tau)
        assert np.max(np.abs(k + k.conj().T)) <= 1e-9


def test_generator_drives_the_geodesic():
    plan = qubit_plan()
    rec = evolve(plan.rho1, plan.schedule(), IntegratorConfig(plan.theta / 2000))
    for tau, s in zip(rec.times[::50], rec.states[::50]):
        assert trace_distance(s.matrix, geodesic_path(plan, tau)[1].matrix) <= 1e-6


def test_low_rank_generator_drives_the_geodesic(rng):
    plan = plan_geodesic(rand_state(rng, 3, rank=2), rand_state(rng, 3, rank=2))
    rec = evolve(plan.rho1, plan.schedule(), IntegratorConfig(plan.theta / 1000))
    assert trace_distance(rec.states[-1].matrix, plan.rho2.matrix) <= 1e-6
    assert np.allclose(rec.speeds, 1.0, atol=1e-6)


def test_boundary_error_on_singular_evolution_operator():
    w1 = Purification(psd_sqrt(RHO1))
    bad = GeodesicPlan(w1, w1, 0.5, -np.eye(2))
    with pytest.raises(BoundaryError):
        geodesic_generator(bad, 0.25)


def test_plan_json_round_trip():
    plan = qubit_plan()
    back = GeodesicPlan.from_json(json.loads(json.dumps(plan.to_json())))
    assert back.theta == plan.theta
    assert np.array_equal(back.M, plan.M)
    assert np.array_equal(geodesic_generator(back, 0.1), geodesic_generator(plan, 0.1))


# -- structural checks -------------------------------------------------------


def test_time_independent_examples():
    v = time_independent_check(1j * Z)
    assert v.verdict is Verdict.EXISTS_SHORTEST_FORM and v.anti_hermitian_after_shift
    v = time_independent_check(1j * np.diag([1.0, 2.0, 3.0]))
    assert v.verdict is Verdict.FAILS and v.distinct_eigenvalues == 3


def test_time_independent_shifted_and_scaled():
    v = time_independent_check(3.0 * 1j * np.diag([1.0, -1.0, 1.0]) + 0.7 * np.eye(3))
    assert v and v.shift == pytest.approx(0.7)


def test_nilpotent_jordan_block_fails_two_value_test():
    assert not time_independent_check(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_ellipse_invariant_examples():
    assert qubit_ellipse_invariant(DensityOperator.from_bloch(0, 0, 0.3)) == 0.0
    assert qubit_ellipse_invariant(DensityOperator.maximally_mixed(2)) == 0.0
    with pytest.raises(SingularFrameError):
        qubit_ellipse_invariant(DensityOperator.pure([1, 0]))


def test_ellipse_invariant_along_flow():
    rho = DensityOperator.from_bloch(0.5, 0, 0)
    gen = NonHermitianGenerator.from_matrix(1j * Z)
    rec = evolve(rho, GeneratorSchedule.constant(gen, 0.0, 3.0), IntegratorConfig(1e-3))
    a = np.array([qubit_ellipse_invariant(s) for s in rec.states])
    assert np.max(np.abs(a - 0.25)) <= 1e-8


def test_ellipse_invariant_in_rotated_frame():
    frame = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
    rho = DensityOperator.from_bloch(0.1, 0.2, 0.3)
    assert qubit_ellipse_invariant(rho, frame) == pytest.approx(0.2**2 / (1 - 0.1**2))
