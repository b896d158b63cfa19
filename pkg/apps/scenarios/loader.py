"""scenarios/loader.py"""

import logging
import os
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from core.exceptions import ScenarioError
from core.jsonio import read_json
from iqclib.factors import UncertaintyClass
from nncontroller.bounds import jacobian_box
from nncontroller.mlp import MlpController, forward, load_weights, save_weights
from nncontroller.training import fit_to_teacher
from scenarios import apollo, arm
from scenarios.guidance import GuidanceState, apollo_tgo, guidance_controller
from simkit.integrate import LoopModel, simulate_closed_loop
from sysmodels.statespace import LpvParameterBox, StateSpace

logger = logging.getLogger(__name__)

BUNDLED = ("arm", "apollo")


@dataclass(frozen=True, eq=False)
class CertificationProblem:
    """One certificate target: a plant, its network, declared classes and output channels.

    ``output_columns`` picks the outputs the network reads from the scenario
    output y; they make up ``eta = (y[cols], y_hat[cols])``. The network reads
    those outputs first and then any commands shared by both loops, so ``box``
    spans both. ``error_inputs`` are the network inputs wired to this plant's
    outputs, in plant-output order; ``coupled_inputs`` carry outputs of other
    plants. ``channels`` lists ``(name, rows)`` in plant outputs.
    """

    label: str
    plant: StateSpace
    reference: StateSpace
    net: MlpController
    ideal: object
    box: LpvParameterBox
    uncertainties: tuple
    channels: tuple
    output_columns: tuple
    grid: int
    epsilon_mode: str = "gain"
    error_inputs: tuple = None
    coupled_inputs: tuple = ()

    @property
    def reference_dim(self):
        return len(self.output_columns)

    @property
    def plant_inputs(self):
        if self.error_inputs is None:
            return tuple(range(self.reference_dim))
        return tuple(self.error_inputs)

    @property
    def plant_columns(self):
        """Columns of the scenario output y measured by this plant."""
        return [self.output_columns[j] for j in self.plant_inputs]

    def channel_columns(self, rows):
        """Positions within ``output_columns`` of the plant outputs ``rows``."""
        return [self.plant_inputs[r] for r in rows]


@dataclass(frozen=True, eq=False)
class Run:
    label: str
    T: float
    dt: float
    reference: object = None
    initial: np.ndarray = None
    wind: np.ndarray = None
    network: bool = True


class Study:
    """A scenario document with its controller, certificate targets and test runs."""

    kind = ""

    def __init__(self, data, source=""):
        self.data = data
        self.source = source
        self.name = data.get("name", self.kind)
        self.grid = int(data.get("grid", 400))
        sim = data.get("simulation", {})
        self.dt = float(sim.get("dt", 1e-3))
        self.T = float(sim.get("T", 20.0))
        self.gamma_range = tuple(data.get("gamma_range", (1e-4, 1e2)))
        self.sigma_range = tuple(data.get("sigma_range", (1e-4, 1e2)))
        self.epsilon_mode = data.get("epsilon", {}).get("mode", "gain")
        self.training = data.get("controller", {})

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"

    @property
    def default_seed(self):
        return int(self.training.get("seed", 0))

    def controller(self, seed=None, weights=None, cache_dir=None):
        """Network from ``weights``, from the cache, or trained against the ideal law."""
        if weights:
            return load_weights(weights)
        seed = self.default_seed if seed is None else int(seed)
        cached = os.path.join(cache_dir, f"{self.name}_seed{seed}.json") if cache_dir else None
        if cached and os.path.exists(cached):
            return load_weights(cached)
        net = self.train(seed)
        if cached:
            save_weights(net, cached)
        return net

    def _fit(self, ideal, box, seed):
        return fit_to_teacher(
            ideal,
            box,
            self.training.get("arch", ["1:tanh"]),
            seed,
            max_iter=int(self.training.get("max_iter", 3000)),
            anchor=np.zeros(box.dim),
        )

    def train(self, seed):
        raise NotImplementedError

    def problems(self, net, grid=None):
        raise NotImplementedError

    def runs(self, seed=None, count=None):
        raise NotImplementedError

    def simulate(self, run, net, hold=None):
        raise NotImplementedError

    def uncertainty_samples(self, problem, run, traj):
        """Sampled ``(p, q)`` of the plant uncertainty seen by ``problem`` along ``traj``."""
        raise NotImplementedError

    def network_inputs(self, problem, run, traj, reference=True):
        """What ``problem.net`` reads along ``traj``: the (reference) outputs, then any commands."""
        y = traj.y_hat if reference else traj.y
        return y[:, list(problem.output_columns)]

    def class_notes(self, problem, run, traj):
        """Reasons the run left the model class the certificate assumes."""
        notes = []
        box = problem.box
        if not all(box.contains(row, tol=1e-9) for row in self.network_inputs(problem, run, traj, reference=False)):
            notes.append(f"{problem.label}: output left the operating box")
        if not all(box.contains(row, tol=1e-9) for row in self.network_inputs(problem, run, traj)):
            notes.append(f"{problem.label}: reference output left the operating box")
        return notes


class ArmStudy(Study):
    kind = "arm"

    def __init__(self, data, source=""):
        super().__init__(data, source)
        self.constants = arm.ArmScenario(**data.get("constants", {}))
        plant = data.get("plant")
        self.plant = StateSpace.from_dict(plant) if plant else arm.arm_state_space()
        runs = data.get("runs", {})
        self.random_runs = int(runs.get("random", 50))
        self.amplitude = float(runs.get("amplitude", 1.0))
        self.inputs = tuple(self.training.get("inputs", ["theta"]))
        if self.inputs not in (("theta",), ("theta", "r")):
            raise ScenarioError(f"arm network inputs must be [theta] or [theta, r], got {list(self.inputs)}")
        box = data.get("box")
        self.box = LpvParameterBox.from_dict(box) if box else LpvParameterBox([-arm.ANGLE_LIMIT], [arm.ANGLE_LIMIT])
        if self.reads_reference and self.box.dim == 1:
            span = max(self.amplitude, 1.0)
            self.box = LpvParameterBox(np.append(self.box.lower, -span), np.append(self.box.upper, span))
        if self.box.dim != len(self.inputs):
            raise ScenarioError(f"arm box has {self.box.dim} axes for inputs {list(self.inputs)}")
        self.uncertainty = tuple(
            UncertaintyClass.from_dict(item, domain=self.box.select([0]))
            for item in data.get("uncertainty", [arm.arm_uncertainty().to_dict()])
        )

    @property
    def reads_reference(self):
        return "r" in self.inputs

    def train(self, seed):
        return self._fit(arm.arm_framework_ideal, self.box, seed)

    def network_inputs(self, problem, run, traj, reference=True):
        y = super().network_inputs(problem, run, traj, reference)
        if not self.reads_reference:
            return y
        r = np.array([run.reference(t) for t in traj.t])
        return np.column_stack([y, r])

    def problems(self, net, grid=None):
        return [
            CertificationProblem(
                label="arm",
                plant=self.plant,
                reference=self.plant,
                net=net,
                ideal=arm.arm_framework_ideal,
                box=self.box,
                uncertainties=self.uncertainty,
                channels=(("theta", [0]),),
                output_columns=(0,),
                grid=grid or self.grid,
                epsilon_mode=self.epsilon_mode,
            )
        ]

    def runs(self, seed=None, count=None):
        seed = self.default_seed if seed is None else seed
        count = self.random_runs if count is None else count
        runs = [
            Run("case_a", self.T, self.dt, reference=arm.case_a()),
            Run("case_b", self.T, self.dt, reference=arm.case_b()),
        ]
        rng = np.random.default_rng(seed)
        for k in range(count):
            runs.append(Run(f"random_{k:02d}", self.T, self.dt, reference=arm.random_reference(rng, self.amplitude)))
        return runs

    def simulate(self, run, net, hold=None):
        def angle(x):
            return x[1:2]

        if self.reads_reference:
            def controller(t, y):
                return forward(net, np.append(y, run.reference(t)))
        else:
            def controller(t, y):
                return forward(net, y)

        reference = LoopModel(
            arm.reference_loop_field,
            lambda t, y: arm.arm_framework_ideal(y),
            angle,
        )
        return simulate_closed_loop(
            arm.loop_field(self.constants.gravity_coeff),
            controller,
            run.reference,
            np.zeros(2),
            run.T,
            run.dt,
            output=angle,
            reference=reference,
            hold=hold,
            label=run.label,
        )

    def simulate_linearized(self, run, printed_sign=False):
        """Arm under the feedback-linearizing torque against ``arm_reference``, full state observed."""
        reference = LoopModel(lambda t, x, u, r: arm.arm_reference(x, r), lambda t, x: np.zeros(1))
        return simulate_closed_loop(
            arm.plant_loop_field,
            arm.linearized_controller(run.reference, printed_sign),
            run.reference,
            np.zeros(2),
            run.T,
            run.dt,
            reference=reference,
            label=f"linearized_{run.label}",
        )

    def uncertainty_samples(self, problem, run, traj):
        theta = traj.y[:, 0]
        return theta[:, None], arm.arm_delta_value(theta, self.constants.gravity_coeff)[:, None]

    def class_notes(self, problem, run, traj):
        notes = super().class_notes(problem, run, traj)
        if np.any(np.abs(traj.y[:, 0]) > self.constants.angle_limit):
            notes.append("angle left the sector domain")
        if self.constants.gravity_coeff != arm.GRAVITY_COEFF:
            notes.append(f"gravity coefficient {self.constants.gravity_coeff:g} differs from the nominal")
        return notes


class ApolloStudy(Study):
    kind = "apollo"
    INPUT_GROUPS = ([0, 3], [1, 4], [2, 5])
    NETWORKS = ("per-axis", "joint")

    def __init__(self, data, source=""):
        super().__init__(data, source)
        try:
            self.constants = apollo.ApolloScenario(**data["constants"])
        except (KeyError, TypeError) as e:
            raise ScenarioError(f"Apollo constants are incomplete: {e}") from e
        runs = data.get("runs", {})
        self.random_runs = int(runs.get("random", 0))
        self.spread = float(runs.get("spread", 0.05))
        self.headwind = runs.get("headwind")
        self.with_guidance = bool(runs.get("guidance", False))
        self.drag_sector = data.get("drag_sector", "envelope")
        if self.drag_sector not in ("envelope", "printed"):
            raise ScenarioError(f"drag_sector must be envelope or printed, got {self.drag_sector!r}")
        self.network = self.training.get("network", "per-axis")
        if self.network not in self.NETWORKS:
            raise ScenarioError(f"controller network must be one of {self.NETWORKS}, got {self.network!r}")

    def axis_uncertainty(self, axis):
        """Velocity sector of the drag mismatch; ``printed`` uses the reference pairs, not sound on the envelope."""
        if self.drag_sector == "printed":
            alpha, beta = apollo.PRINTED_SECTORS[axis]
            return UncertaintyClass("sector", alpha=[alpha], beta=[beta], input_map=[[0.0, 1.0]])
        return apollo.axis_uncertainty(self.constants, axis)

    def axis_box(self, axis):
        sc = self.constants
        upper = np.array([sc.position_max[axis], sc.velocity_max[axis]])
        return LpvParameterBox(-upper, upper)

    def output_box(self):
        upper = apollo.output_envelope(self.constants)
        return LpvParameterBox(-upper, upper)

    def train(self, seed):
        if self.network == "joint":
            return fit_to_teacher(
                apollo.ideal_controller(self.constants),
                self.output_box(),
                self.training.get("joint_arch", apollo.JOINT_ARCH),
                seed,
                max_iter=int(self.training.get("max_iter", 3000)),
                anchor=np.zeros(6),
            )
        nets = [
            self._fit(apollo.axis_ideal(self.constants, i), self.axis_box(i), seed + i)
            for i in range(3)
        ]
        return MlpController.block_stack(nets, self.INPUT_GROUPS)

    def is_separable(self, net):
        """True when output i provably reads only the inputs of axis i over the envelope."""
        iv = jacobian_box(net, self.output_box())
        for i, group in enumerate(self.INPUT_GROUPS):
            others = [j for j in range(net.input_dim) if j not in group]
            block = iv.select([i], others)
            if np.any(block.lo != 0.0) or np.any(block.hi != 0.0):
                return False
        return True

    def problems(self, net, grid=None):
        """One problem per axis; a network mixing axes certifies each axis against
        all six outputs, its cross-axis Jacobian bounded as a coupling gain."""
        separable = self.is_separable(net)
        problems = []
        for i, axis in enumerate(apollo.AXES):
            plant = apollo.axis_state_space(self.constants, i)
            group = self.INPUT_GROUPS[i]
            common = dict(
                label=axis,
                plant=plant,
                reference=plant,
                uncertainties=(self.axis_uncertainty(i),),
                channels=((f"p{axis}", [0]), (f"v{axis}", [1])),
                grid=grid or self.grid,
                epsilon_mode=self.epsilon_mode,
            )
            if separable:
                problem = CertificationProblem(
                    net=net.restrict(group, [i]),
                    ideal=apollo.axis_ideal(self.constants, i),
                    box=self.axis_box(i),
                    output_columns=tuple(group),
                    **common,
                )
            else:
                problem = CertificationProblem(
                    net=net.restrict(range(net.input_dim), [i]),
                    ideal=_axis_law(apollo.ideal_controller(self.constants), i),
                    box=self.output_box(),
                    output_columns=tuple(range(net.input_dim)),
                    error_inputs=tuple(group),
                    coupled_inputs=tuple(j for j in range(net.input_dim) if j not in group),
                    **common,
                )
            problems.append(problem)
        logger.info("%s: %s network, %s problems", self.name, self.network, "per-axis" if separable else "coupled")
        return problems

    def runs(self, seed=None, count=None):
        seed = self.default_seed if seed is None else seed
        count = self.random_runs if count is None else count
        sc = self.constants
        start = np.concatenate([sc.p0, sc.v0])
        runs = [Run("landing", self.T, self.dt, initial=start)]
        rng = np.random.default_rng(seed)
        for k in range(count):
            scale = 1.0 + rng.uniform(-self.spread, self.spread, size=6)
            runs.append(Run(f"dispersed_{k:02d}", self.T, self.dt, initial=start * scale))
        if self.headwind:
            runs.append(Run("headwind", self.T, self.dt, initial=start, wind=apollo.headwind(sc, float(self.headwind))))
        if self.with_guidance:
            runs.append(Run("guidance", self.T, self.dt, initial=start, network=False))
        return runs

    def simulate(self, run, net, hold=None):
        sc = self.constants
        ideal = apollo.ideal_controller(sc)

        def rhs(t, x, u, r):
            return apollo.apollo_dynamics(sc, x, x[6] * (u - sc.gravity), run.wind)

        if run.network:
            controller = lambda t, y: forward(net, y)  # noqa: E731
        else:
            target = GuidanceState(r=run.initial[:3], v=run.initial[3:6])
            controller = guidance_controller(target, apollo_tgo(target))

        reference = LoopModel(lambda t, x, u, r: apollo.apollo_reference(sc, x, u), lambda t, y: ideal(y))
        return simulate_closed_loop(
            rhs,
            controller,
            None,
            np.concatenate([run.initial, [sc.m0]]),
            run.T,
            run.dt,
            output=lambda x: x[:6],
            reference=reference,
            x0_hat=run.initial,
            hold=hold,
            label=run.label,
        )

    def uncertainty_samples(self, problem, run, traj):
        sc = self.constants
        axis = apollo.AXES.index(problem.label)
        v, m = traj.x[:, 3:6], traj.x[:, 6]
        drag = np.array([apollo.drag_force(sc, row, run.wind) for row in v])
        q = drag[:, axis] / m - sc.a[axis] * v[:, axis]
        return traj.y[:, problem.plant_columns], q[:, None]

    def class_notes(self, problem, run, traj):
        notes = super().class_notes(problem, run, traj)
        sc = self.constants
        thrust = np.linalg.norm(traj.x[:, 6:7] * (traj.u - sc.gravity), axis=1)
        if np.any(thrust > sc.T_max) or np.any((thrust > 0) & (thrust < sc.throttle_min * sc.T_max)):
            notes.append("throttle saturated")
        if run.wind is not None and np.any(run.wind):
            notes.append("wind makes the drag mismatch leave its velocity sector")
        if not run.network:
            notes.append("guidance loop, no network in the loop")
        return notes


def _axis_law(ideal, axis):
    def law(y):
        return np.atleast_1d(ideal(y)[axis])

    return law


STUDIES = {"arm": ArmStudy, "apollo": ApolloStudy}


def scenario_path(name_or_path):
    if name_or_path in BUNDLED:
        return os.path.join(settings.KEEPCLOSE_SCENARIO_DIR, f"{name_or_path}.json")
    return str(name_or_path)


def load_scenario(name_or_path):
    path = scenario_path(name_or_path)
    data = read_json(path)
    kind = data.get("kind")
    if kind not in STUDIES:
        raise ScenarioError(f"Scenario {path} has unknown kind {kind!r}, expected one of {sorted(STUDIES)}")
    study = STUDIES[kind](data, source=path)
    logger.info("Loaded scenario %s from %s", study.name, path)
    return study
