import math
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase, tag

from certify.pipeline import certify_problem, coupling_gain
from certify.theorems import RISE
from core.exceptions import (
    DomainExceeded,
    MassDepleted,
    NonPositiveTgo,
    NoPositiveTgo,
    ScenarioError,
    VertexExplosion,
)
from core.jsonio import read_json, write_json
from nncontroller.bounds import jacobian_box, vertices
from nncontroller.mlp import Layer, MlpController, forward
from scenarios import apollo, arm
from scenarios.guidance import (
    GuidanceState,
    apollo_acmd,
    apollo_rd,
    apollo_tgo,
    boundary_system,
    guidance_coefficients,
    guidance_controller,
)
from scenarios.loader import ApolloStudy, ArmStudy, load_scenario, scenario_path


def apollo_constants():
    return load_scenario("apollo").constants


def linear_axis_nets(sc):
    nets = []
    for i in range(3):
        k_p, k_d = sc.gains(i)
        nets.append(MlpController([Layer([[-k_p, -k_d]], [0.0], "linear")]))
    return MlpController.block_stack(nets, ApolloStudy.INPUT_GROUPS)


class ArmModelTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(3)

    def test_rearranged_field_is_exact(self):
        for g in (arm.GRAVITY_COEFF, 5.0):
            for _ in range(50):
                state = self.rng.uniform(-2.0, 2.0, size=2)
                tau = self.rng.uniform(-5.0, 5.0)
                np.testing.assert_allclose(
                    arm.arm_plant_field(state, tau, g), arm.arm_plant_field_rearranged(state, tau, g), atol=1e-12
                )

    def test_linearizing_torque_gives_reference_model(self):
        for _ in range(50):
            state = self.rng.uniform(-1.5, 1.5, size=2)
            r = self.rng.uniform(-1.0, 1.0)
            np.testing.assert_allclose(
                arm.arm_plant_field(state, arm.arm_ideal_controller(state, r)),
                arm.arm_reference(state, r),
                atol=1e-12,
            )

    def test_printed_sign_negates_torque(self):
        state, r = np.array([0.3, -0.4]), 0.2
        self.assertEqual(arm.arm_ideal_controller(state, r, printed_sign=True), -arm.arm_ideal_controller(state, r))

    def test_ideal_loop_matches_reference_matrix(self):
        plant = arm.arm_state_space()
        closed = plant.A + plant.control_input @ plant.C
        np.testing.assert_allclose(closed, [[-6.0, -9.0], [1.0, 0.0]])
        np.testing.assert_allclose(np.sort(np.linalg.eigvals(closed).real), [-3.0, -3.0], atol=1e-6)

    def test_reference_model_has_unit_dc_gain(self):
        plant = arm.arm_state_space()
        closed = plant.A + plant.control_input @ plant.C
        x_ss = np.linalg.solve(closed, -np.array([arm.FEEDFORWARD, 0.0]))
        self.assertAlmostEqual(x_ss[1], 1.0)

    def test_network_loop_differs_from_reference_by_gravity_mismatch(self):
        state, r = np.array([0.2, 0.7]), 0.4
        u = np.array([state[1]])
        gap = arm.loop_field()(0.0, state, u, r) - arm.reference_loop_field(0.0, state, u, r)
        np.testing.assert_allclose(gap, [10.0 * arm.arm_delta_value(state[1]), 0.0], atol=1e-12)

    def test_delta_sector_on_angle_domain(self):
        theta = np.linspace(-arm.ANGLE_LIMIT, arm.ANGLE_LIMIT, 2001)
        keep = theta != 0.0
        q, unc = arm.arm_delta(theta)
        slopes = q[keep] / theta[keep]
        self.assertAlmostEqual(float(slopes.max()), 1 - 2 / math.pi, places=6)
        self.assertGreaterEqual(float(slopes.min()), 0.0)
        self.assertTrue(unc.contains(theta[:, None], q[:, None]))

    def test_delta_outside_domain(self):
        with self.assertRaises(DomainExceeded):
            arm.arm_delta(2.0)

    def test_weaker_gravity_leaves_sector(self):
        theta = np.linspace(0.1, 1.5, 50)
        q = arm.arm_delta_value(theta, 5.0)
        self.assertFalse(arm.arm_uncertainty().contains(theta[:, None], q[:, None]))

    def test_random_references_are_bounded(self):
        rng = np.random.default_rng(0)
        t = np.linspace(0.0, 20.0, 2001)
        for _ in range(20):
            r = arm.random_reference(rng)
            self.assertLessEqual(max(abs(r(s)) for s in t), 1.0 + 1e-12)
        self.assertEqual(arm.case_a()(0.0), 0.0)


class ApolloModelTests(SimpleTestCase):
    def setUp(self):
        self.sc = apollo_constants()

    def test_drag_force(self):
        force = apollo.drag_force(self.sc, [100.0, 0.0, 0.0])
        self.assertAlmostEqual(force[0], -0.5 * 0.023 * 2.0 * self.sc.S * 1e4, places=9)
        self.assertAlmostEqual(force[0], -1181.608, places=3)

    def test_drag_uses_relative_wind(self):
        wind = np.array([10.0, 0.0, 0.0])
        np.testing.assert_array_equal(apollo.drag_force(self.sc, wind, wind), np.zeros(3))

    def test_throttle_clamp(self):
        np.testing.assert_array_equal(apollo.clamp_thrust(self.sc, np.zeros(3)), np.zeros(3))
        low = apollo.clamp_thrust(self.sc, [0.0, 0.0, 100.0])
        high = apollo.clamp_thrust(self.sc, [3000.0, 0.0, 4000.0])
        np.testing.assert_allclose(low, [0.0, 0.0, 0.3 * 3600.0])
        self.assertAlmostEqual(np.linalg.norm(high), 3600.0)
        np.testing.assert_allclose(high / np.linalg.norm(high), [0.6, 0.0, 0.8])

    def test_free_fall(self):
        state = np.array([0.0, 0.0, 100.0, 0.0, 0.0, 0.0, 500.0])
        deriv = apollo.apollo_dynamics(self.sc, state, np.zeros(3))
        np.testing.assert_allclose(deriv, [0.0, 0.0, 0.0, 0.0, 0.0, -3.725258, 0.0])

    def test_fuel_burn(self):
        state = np.array([0.0, 0.0, 100.0, 0.0, 0.0, 0.0, 500.0])
        deriv = apollo.apollo_dynamics(self.sc, state, [0.0, 0.0, 2000.0])
        self.assertAlmostEqual(deriv[6], -2000.0 / (225.0 * apollo.STANDARD_GRAVITY))
        self.assertAlmostEqual(deriv[5], 2000.0 / 500.0 - 3.725258)

    def test_dry_mass(self):
        state = np.array([0.0, 0.0, 100.0, 0.0, 0.0, 0.0, self.sc.dry_mass])
        with self.assertRaises(MassDepleted):
            apollo.apollo_dynamics(self.sc, state, np.zeros(3))

    def test_reference_is_linear(self):
        state = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        u = np.array([0.1, 0.2, 0.3])
        np.testing.assert_allclose(apollo.apollo_reference(self.sc, state, u), np.r_[state[3:], self.sc.a * state[3:] + u])

    def test_drag_mismatch_in_velocity_sector(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            direction = rng.normal(size=3)
            v = direction / np.linalg.norm(direction) * rng.uniform(0.0, self.sc.speed_max)
            m = rng.uniform(self.sc.dry_mass, self.sc.m0)
            q, classes = apollo.apollo_delta(self.sc, v, m)
            for i, unc in enumerate(classes):
                self.assertTrue(unc.contains([[0.0, v[i]]], [[q[i]]], tol=1e-9))

    def test_delta_outside_envelope(self):
        with self.assertRaises(DomainExceeded):
            apollo.apollo_delta(self.sc, [2 * self.sc.speed_max, 0.0, 0.0], self.sc.m0)

    def test_axis_gains_place_double_pole(self):
        for i, tau in enumerate(self.sc.tau):
            plant = apollo.axis_state_space(self.sc, i)
            k_p, k_d = self.sc.gains(i)
            closed = plant.A + plant.control_input @ np.array([[-k_p, -k_d]])
            np.testing.assert_allclose(np.linalg.eigvals(closed).real, [-1 / tau, -1 / tau], atol=1e-6)

    def test_fit_drag_gain(self):
        speeds = np.linspace(-50.0, 80.0, 27)
        k = 0.5 * self.sc.rho * self.sc.C_D * self.sc.S / 600.0
        expected = -k * np.sum(np.abs(speeds) ** 3) / np.sum(speeds**2)
        self.assertAlmostEqual(apollo.fit_drag_gain(speeds, 600.0, self.sc), expected)

    def test_headwind_opposes_ground_track(self):
        wind = apollo.headwind(self.sc, 20.0)
        self.assertAlmostEqual(np.linalg.norm(wind), 20.0)
        self.assertEqual(wind[2], 0.0)
        self.assertLess(float(np.dot(wind[:2], self.sc.v0[:2])), 0.0)


class GuidanceTests(SimpleTestCase):
    def test_linear_branch_example(self):
        state = GuidanceState(r=[0.0, 0.0, 0.0], v=[0.0, 0.0, 1.0], r_t=[0.0, 0.0, 3.0])
        self.assertEqual(apollo_tgo(state), 9.0)

    def test_no_positive_root(self):
        with self.assertRaises(NoPositiveTgo):
            apollo_tgo(GuidanceState(r=[0.0, 0.0, 3.0], v=[0.0, 0.0, 1.0]))
        with self.assertRaises(NoPositiveTgo):
            apollo_tgo(GuidanceState(r=[0.0, 0.0, 3.0], v=[0.0, 0.0, 0.0]))

    def test_nonpositive_tgo(self):
        state = GuidanceState(r=np.zeros(3), v=np.ones(3))
        with self.assertRaises(NonPositiveTgo):
            apollo_acmd(state, 0.0)
        with self.assertRaises(NonPositiveTgo):
            GuidanceState(r=np.zeros(3), v=np.ones(3), t_go=-1.0)

    def test_worked_example(self):
        state = GuidanceState(r=[0.0, 0.0, 0.0], v=[0.0, 0.0, 0.0], r_t=[0.0, 0.0, 1.0])
        c0, c1, c2 = guidance_coefficients(state, 1.0)
        np.testing.assert_allclose([c0[2], c1[2], c2[2]], [12.0, -48.0, 36.0])
        np.testing.assert_allclose(apollo_acmd(state, 1.0), c0)

    def test_coefficients_meet_boundary_conditions(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            state = GuidanceState(
                r=rng.uniform(-10, 10, 3),
                v=rng.uniform(-5, 5, 3),
                r_t=rng.uniform(-10, 10, 3),
                v_t=rng.uniform(-5, 5, 3),
                a_t=rng.uniform(-2, 2, 3),
            )
            T = rng.uniform(0.5, 5.0)
            C = np.vstack(guidance_coefficients(state, T))
            lhs = boundary_system(T) @ C
            rhs = np.vstack([state.a_t, state.v_t - state.v, state.r_t - state.r - state.v * T])
            np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)

    def test_quadratic_branch_removes_square_term(self):
        state = GuidanceState(r=[0.0, 0.0, 500.0], v=[0.0, 0.0, -20.0], a_t=[0.0, 0.0, 0.5], v_t=[0.0, 0.0, -1.0])
        t_go = apollo_tgo(state)
        self.assertGreater(t_go, 0.0)
        _, _, c2 = guidance_coefficients(state, t_go)
        self.assertAlmostEqual(c2[2], 0.0, places=9)

    def test_target_position_extrapolation(self):
        state = GuidanceState(r=np.zeros(3), v=np.zeros(3), r_t=[1.0, 2.0, 3.0], v_t=[0.0, 0.0, -1.0])
        np.testing.assert_allclose(apollo_rd(state, 2.0), [1.0, 2.0, 5.0])

    def test_controller_counts_down(self):
        target = GuidanceState(r=[0.0, 0.0, 100.0], v=[0.0, 0.0, -10.0])
        ctrl = guidance_controller(target, apollo_tgo(target))
        y = np.r_[target.r, target.v]
        np.testing.assert_allclose(ctrl(0.0, y), apollo_acmd(target, 30.0))


class LoaderTests(SimpleTestCase):
    def test_bundled_arm(self):
        study = load_scenario("arm")
        self.assertIsInstance(study, ArmStudy)
        self.assertEqual(study.grid, 400)
        runs = study.runs()
        self.assertEqual(len(runs), 52)
        self.assertEqual([run.label for run in runs[:2]], ["case_a", "case_b"])
        self.assertEqual(runs[5].reference(3.0), study.runs()[5].reference(3.0))

    def test_bundled_apollo(self):
        study = load_scenario("apollo")
        self.assertIsInstance(study, ApolloStudy)
        labels = [run.label for run in study.runs()]
        self.assertEqual(labels[0], "landing")
        self.assertIn("headwind", labels)
        self.assertIn("guidance", labels)

    def test_unknown_kind(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "boat.json")
            write_json({"name": "boat", "kind": "boat"}, path)
            with self.assertRaises(ScenarioError):
                load_scenario(path)

    def test_missing_file(self):
        with self.assertRaises(ScenarioError):
            load_scenario("/nonexistent/scenario.json")

    def test_apollo_axis_views_of_stacked_network(self):
        study = load_scenario("apollo")
        net = linear_axis_nets(study.constants)
        y = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        for i, problem in enumerate(study.problems(net)):
            self.assertEqual(problem.label, apollo.AXES[i])
            cols = list(problem.output_columns)
            np.testing.assert_allclose(forward(problem.net, y[cols]), problem.ideal(y[cols]))
        np.testing.assert_allclose(forward(net, y), apollo.ideal_controller(study.constants)(y))

    def test_arm_loop_tracks_reference_with_exact_network(self):
        study = load_scenario("arm")
        study.T = 5.0
        net = MlpController([Layer([[1.0]], [0.0], "linear")])
        traj = study.simulate(study.runs(count=0)[0], net)
        self.assertLess(float(np.max(np.abs(traj.y - traj.y_hat))), 0.5)
        self.assertEqual(study.class_notes(study.problems(net)[0], None, traj), [])

    def test_linearized_arm_tracks_reference(self):
        study = load_scenario("arm")
        study.T = 2.0
        traj = study.simulate_linearized(study.runs(count=0)[0])
        np.testing.assert_allclose(traj.y, traj.y_hat, atol=1e-9)


class ApolloCertificateTests(SimpleTestCase):
    @tag("slow")
    def test_axis_certificates_are_finite(self):
        study = load_scenario("apollo")
        problem = study.problems(linear_axis_nets(study.constants))[0]
        result = certify_problem(problem, (RISE,), gamma_range=study.gamma_range)
        self.assertEqual([cert.channel for cert in result.certificates], ["x:px", "x:vx"])
        for cert in result.certificates:
            self.assertLess(cert.level, study.gamma_range[1])

    @tag("slow")
    def test_layered_separable_network_matches_linear_level(self):
        study = load_scenario("apollo")
        linear = study.problems(linear_axis_nets(study.constants))[0]
        layered = study.problems(layered_axis_net(study.constants))[0]
        self.assertEqual(layered.output_columns, (0, 3))
        self.assertEqual(
            repr(layered_axis_net(study.constants)), "MlpController(6-40-40-40-3, tanh/sigmoid/tanh/linear)"
        )
        expected = certify_problem(linear, (RISE,), gamma_range=study.gamma_range).get(RISE, "x:px")
        cert = certify_problem(layered, (RISE,), gamma_range=study.gamma_range).get(RISE, "x:px")
        self.assertEqual(cert.vertices, 4)
        self.assertAlmostEqual(cert.level, expected.level, delta=0.1 * expected.level)

    @tag("slow")
    def test_weakly_coupled_network_matches_per_axis_level(self):
        study = load_scenario("apollo")
        separate = study.problems(linear_axis_nets(study.constants))[1]
        coupled = study.problems(coupled_linear_net(study.constants, 1e-6))[1]
        expected = certify_problem(separate, (RISE,), gamma_range=study.gamma_range).get(RISE, "y:py")
        result = certify_problem(coupled, (RISE,), gamma_range=study.gamma_range)
        self.assertGreater(result.coupling, 0.0)
        self.assertAlmostEqual(result.get(RISE, "y:py").level, expected.level, delta=0.05 * expected.level)


def layered_axis_net(sc, s=1e-3):
    """Lander-shaped network reproducing the per-axis laws almost linearly."""
    W1, W2, W3, W4 = np.zeros((40, 6)), np.zeros((40, 40)), np.zeros((40, 40)), np.zeros((3, 40))
    b3 = np.zeros(40)
    for i in range(3):
        k_p, k_d = sc.gains(i)
        W1[i, i], W1[i, 3 + i] = -s * k_p, -s * k_d
        W2[i, i] = 1.0
        # sigmoid(x) ~ 1/2 + x/4 near zero
        W3[i, i], b3[i] = 4.0, -2.0
        W4[i, i] = 1.0 / s
    return MlpController(
        [
            Layer(W1, np.zeros(40), "tanh"),
            Layer(W2, np.zeros(40), "sigmoid"),
            Layer(W3, b3, "tanh"),
            Layer(W4, np.zeros(3), "linear"),
        ]
    )


def coupled_linear_net(sc, cross):
    W = np.full((3, 6), cross)
    for i in range(3):
        W[i, i], W[i, 3 + i] = (-g for g in sc.gains(i))
    return MlpController([Layer(W, np.zeros(3), "linear")])


def arm_reference_study(**controller):
    data = read_json(scenario_path("arm"))
    data["controller"] = {**data["controller"], "inputs": ["theta", "r"], **controller}
    return ArmStudy(data)


def arm_reference_net(w_r=0.0):
    """``100 tanh(0.01 theta) + w_r r``, close to the identity in the angle."""
    return MlpController([Layer([[0.01, w_r]], [0.0], "tanh"), Layer([[100.0]], [0.0], "linear")])


class ArmReferenceInputTests(SimpleTestCase):
    def test_box_spans_the_command(self):
        study = arm_reference_study()
        np.testing.assert_allclose(study.box.lower, [-np.pi / 2, -1.0])
        np.testing.assert_allclose(study.box.upper, [np.pi / 2, 1.0])
        self.assertEqual(arm.arm_framework_ideal([0.3, 0.9]).tolist(), [0.3])

    def test_unknown_input(self):
        with self.assertRaises(ScenarioError):
            arm_reference_study(inputs=["theta", "omega"])

    def test_network_sees_the_command_in_simulation(self):
        study = arm_reference_study()
        study.T = 2.0
        net = arm_reference_net()
        run = study.runs(count=0)[0]
        traj = study.simulate(run, net)
        [problem] = study.problems(net)
        inputs = study.network_inputs(problem, run, traj)
        self.assertEqual(inputs.shape, (traj.t.size, 2))
        np.testing.assert_allclose(inputs[:, 1], [run.reference(t) for t in traj.t])
        self.assertLess(float(np.max(np.abs(traj.y - traj.y_hat))), 0.5)

    def test_certified_level(self):
        study = arm_reference_study()
        [problem] = study.problems(arm_reference_net())
        result = certify_problem(problem, (RISE,))
        self.assertLess(result.epsilon.c, 1e-3)
        cert = result.get(RISE, "arm:theta")
        self.assertEqual(cert.vertices, 2)
        self.assertTrue(0.40 < cert.level < 0.42)

    def test_error_that_ignores_the_angle_has_no_gain_bound(self):
        study = arm_reference_study()
        [problem] = study.problems(arm_reference_net(w_r=0.001), grid=401)
        with self.assertRaises(ScenarioError):
            certify_problem(problem, (RISE,))


class ApolloCouplingTests(SimpleTestCase):
    def test_dense_lander_network_is_split_per_axis(self):
        study = load_scenario("apollo")
        rng = np.random.default_rng(5)
        sizes = [6, 40, 40, 40, 3]
        acts = ["tanh", "sigmoid", "tanh", "linear"]
        net = MlpController(
            [
                Layer(0.1 * rng.normal(size=(n_out, n_in)), np.zeros(n_out), act)
                for n_in, n_out, act in zip(sizes, sizes[1:], acts)
            ]
        )
        with self.assertRaises(VertexExplosion):
            vertices(jacobian_box(net, study.output_box()))
        self.assertFalse(study.is_separable(net))
        for problem, group in zip(study.problems(net), ApolloStudy.INPUT_GROUPS):
            self.assertEqual(problem.plant_inputs, tuple(group))
            self.assertEqual(len(problem.coupled_inputs), 4)
            iv = jacobian_box(problem.net, problem.box)
            self.assertEqual(len(vertices(iv.select([0], problem.plant_inputs))), 4)
            self.assertTrue(np.isfinite(coupling_gain(problem, iv)))

    def test_coupled_problem_views(self):
        study = load_scenario("apollo")
        net = coupled_linear_net(study.constants, 1e-3)
        y = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        for i, problem in enumerate(study.problems(net)):
            self.assertEqual(problem.output_columns, tuple(range(6)))
            self.assertEqual(problem.channel_columns([0, 1]), [i, 3 + i])
            np.testing.assert_allclose(forward(problem.net, y), problem.ideal(y) + 1e-3 * (y.sum() - y[i] - y[3 + i]))

    def test_unknown_network_option(self):
        data = read_json(scenario_path("apollo"))
        data["controller"]["network"] = "shared"
        with self.assertRaises(ScenarioError):
            ApolloStudy(data)

    @tag("slow")
    def test_joint_training_builds_lander_network(self):
        data = read_json(scenario_path("apollo"))
        data["controller"].update(network="joint", max_iter=5)
        net = ApolloStudy(data).train(seed=0)
        self.assertEqual(repr(net), "MlpController(6-40-40-40-3, tanh/sigmoid/tanh/linear)")
