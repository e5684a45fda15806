"""Ground-truth benchmark environments.

Pendulum swing-up (continuous torque) and cart-pole balancing (discrete
force direction), integrated by explicit Euler, with the quadratic pendulum
loss and the absorbing cart-pole success reward. Both expose single-step
probing (set an arbitrary state, apply one action) for surrogate building,
and parameter perturbation for robustness studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError, ProbeError
from .sampling import Dim, SpaceBounds

TWELVE_DEG = 12.0 * math.pi / 180.0
TWENTYFOUR_DEG = 24.0 * math.pi / 180.0


def _wrap_angle(theta: float) -> float:
    return float((theta + math.pi) % (2.0 * math.pi) - math.pi)


@dataclass(frozen=True)
class EnvSpec:
    """Static description of an environment's interface."""

    name: str
    obs_dim: int
    action_dim: int
    action_type: str                 # "continuous" | "discrete"
    bounds: SpaceBounds              # obs dims + encoded action dims
    horizon: int
    dt: float
    reset: dict = field(default_factory=dict)
    u_max: tuple = ()                # continuous action magnitude per dim
    action_options: tuple = ()       # encoded values per discrete dim
    success: str = ""                # name of the success predicate, if any

    @property
    def input_dim(self) -> int:
        return self.obs_dim + self.action_dim

    def action_bounds(self) -> SpaceBounds:
        return SpaceBounds(self.bounds.dims[self.obs_dim:])

    def random_action_encoded(self, rng: np.random.Generator) -> np.ndarray:
        if self.action_type == "discrete":
            return np.array([opts[rng.integers(len(opts))] for opts in self.action_options])
        lo = self.bounds.lowers[self.obs_dim:]
        hi = self.bounds.uppers[self.obs_dim:]
        return rng.uniform(lo, hi)

    def encode_action(self, native) -> np.ndarray:
        if self.action_type == "discrete":
            cats = np.atleast_1d(np.asarray(native, dtype=int))
            return np.array([self.action_options[i][c] for i, c in enumerate(cats)])
        return np.atleast_1d(np.asarray(native, dtype=float))

    def decode_action(self, encoded: np.ndarray):
        """Map an encoded action row back to a native action (snapping
        off-grid values to the nearest option for discrete dims)."""
        encoded = np.atleast_1d(np.asarray(encoded, dtype=float))
        if self.action_type == "discrete":
            cats = []
            for i, opts in enumerate(self.action_options):
                cats.append(int(np.argmin(np.abs(np.asarray(opts) - encoded[i]))))
            return cats[0] if len(cats) == 1 else cats
        lo = self.bounds.lowers[self.obs_dim:]
        hi = self.bounds.uppers[self.obs_dim:]
        clipped = np.clip(encoded, lo, hi)
        return float(clipped[0]) if self.action_dim == 1 else clipped

    def sample_reset_obs(self, rng: np.random.Generator) -> np.ndarray:
        """Draw an observation from the reset distribution (shared by the
        real environment and virtual-environment resets)."""
        kind = self.reset.get("kind")
        if kind == "pendulum":
            theta = rng.uniform(-math.pi, math.pi)
            theta_dot = rng.uniform(-1.0, 1.0)
            return np.array([math.cos(theta), math.sin(theta), theta_dot])
        if kind == "uniform":
            r = float(self.reset.get("range", 0.05))
            return rng.uniform(-r, r, size=self.obs_dim)
        raise InvalidInputError(f"unknown reset descriptor {self.reset!r}")

    def success_mask(self, states: np.ndarray) -> np.ndarray:
        """Per-state success flags (before absorbing), for envs that have a
        success predicate."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if self.success == "cartpole":
            return (np.abs(states[:, 0]) <= 2.4) & (np.abs(states[:, 2]) <= TWELVE_DEG)
        raise InvalidInputError(f"no success predicate for {self.name!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "obs_dim": self.obs_dim,
            "action_dim": self.action_dim,
            "action_type": self.action_type,
            "bounds": self.bounds.to_dict(),
            "horizon": self.horizon,
            "dt": self.dt,
            "reset": dict(self.reset),
            "u_max": list(self.u_max),
            "action_options": [list(o) for o in self.action_options],
            "success": self.success,
        }

    @staticmethod
    def from_dict(d: dict) -> "EnvSpec":
        return EnvSpec(
            name=d["name"],
            obs_dim=int(d["obs_dim"]),
            action_dim=int(d["action_dim"]),
            action_type=d["action_type"],
            bounds=SpaceBounds.from_dict(d["bounds"]),
            horizon=int(d["horizon"]),
            dt=float(d["dt"]),
            reset=dict(d["reset"]),
            u_max=tuple(d["u_max"]),
            action_options=tuple(tuple(o) for o in d["action_options"]),
            success=d["success"],
        )


def pendulum_loss(theta: float, theta_dot: float, torque: float) -> float:
    """Quadratic distance from the upright rest state with a small effort
    penalty; the angle is wrapped to [-pi, pi] before squaring."""
    theta = _wrap_angle(theta)
    return theta**2 + 0.1 * theta_dot**2 + 0.001 * torque**2


def cartpole_success(state: np.ndarray, prev_success: int) -> int:
    """1 while the cart stays within +-2.4 m and the pole within +-12 deg;
    0 after the first failure (absorbing)."""
    if prev_success == 0:
        return 0
    x, theta = float(state[0]), float(state[2])
    if abs(x) > 2.4 or abs(theta) > TWELVE_DEG:
        return 0
    return 1


@dataclass(frozen=True)
class PendulumParams:
    mass: float = 1.0
    length: float = 1.0
    gravity: float = 10.0
    max_torque: float = 2.0
    max_speed: float = 8.0


@dataclass(frozen=True)
class CartPoleParams:
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    force_mag: float = 10.0
    gravity: float = 9.8


class Pendulum:
    """Swing-up pendulum. Internal state (theta, theta_dot); observation
    (cos theta, sin theta, theta_dot). No early termination."""

    def __init__(self, params: PendulumParams | None = None, horizon: int = 200):
        self.params = params or PendulumParams()
        p = self.params
        self.spec = EnvSpec(
            name="pendulum",
            obs_dim=3,
            action_dim=1,
            action_type="continuous",
            bounds=SpaceBounds([
                Dim(-1.0, 1.0), Dim(-1.0, 1.0),
                Dim(-p.max_speed, p.max_speed),
                Dim(-p.max_torque, p.max_torque),
            ]),
            horizon=horizon,
            dt=0.05,
            reset={"kind": "pendulum"},
            u_max=(p.max_torque,),
        )
        # settable internal coordinates plus the action, for design sampling
        self.design_bounds = SpaceBounds([
            Dim(-math.pi, math.pi),
            Dim(-p.max_speed, p.max_speed),
            Dim(-p.max_torque, p.max_torque),
        ])
        self.state = np.zeros(2)
        self.t = 0
        self.steps_taken = 0

    def observe(self) -> np.ndarray:
        theta, theta_dot = self.state
        return np.array([math.cos(theta), math.sin(theta), theta_dot])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0)])
        self.t = 0
        return self.observe()

    def set_state(self, internal: np.ndarray) -> None:
        theta, theta_dot = float(internal[0]), float(internal[1])
        if not (math.isfinite(theta) and math.isfinite(theta_dot)):
            raise ProbeError("pendulum state must be finite")
        p = self.params
        self.state = np.array([_wrap_angle(theta), np.clip(theta_dot, -p.max_speed, p.max_speed)])
        self.t = 0

    def set_state_from_obs(self, obs: np.ndarray) -> None:
        c, s, theta_dot = float(obs[0]), float(obs[1]), float(obs[2])
        if abs(c) < 1e-12 and abs(s) < 1e-12:
            raise ProbeError("pendulum observation has no angle information")
        self.set_state(np.array([math.atan2(s, c), theta_dot]))

    def design_to_state(self, design_state: np.ndarray) -> np.ndarray:
        return np.asarray(design_state, dtype=float)

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if not np.all(np.isfinite(self.state)):
            raise InvalidInputError("pendulum state is non-finite")
        p = self.params
        u = float(np.clip(action, -p.max_torque, p.max_torque))
        theta, theta_dot = self.state
        reward = -pendulum_loss(theta, theta_dot, u)
        acc = (3.0 * p.gravity / (2.0 * p.length)) * math.sin(theta) \
            + (3.0 / (p.mass * p.length**2)) * u
        new_theta = _wrap_angle(theta + theta_dot * self.spec.dt)
        new_theta_dot = float(np.clip(theta_dot + acc * self.spec.dt,
                                      -p.max_speed, p.max_speed))
        self.state = np.array([new_theta, new_theta_dot])
        self.t += 1
        self.steps_taken += 1
        return self.observe(), reward, self.t >= self.spec.horizon

    def perturbed(self, noise_scale: float, rng: np.random.Generator) -> "Pendulum":
        """Copy with torque and speed limits scaled by (1 + noise * z)."""
        p = self.params
        new = replace(
            p,
            max_torque=max(p.max_torque * (1.0 + noise_scale * rng.standard_normal()), 1e-9),
            max_speed=max(p.max_speed * (1.0 + noise_scale * rng.standard_normal()), 1e-9),
        )
        return Pendulum(new, horizon=self.spec.horizon)


class CartPole:
    """Cart-pole balancing with two discrete force directions. The reward is
    the absorbing success flag of the state reached by the step."""

    def __init__(self, params: CartPoleParams | None = None, horizon: int = 200,
                 reset_range: float = 0.05, velocity_bound: float = 5.0):
        self.params = params or CartPoleParams()
        p = self.params
        self.reset_range = reset_range
        self.spec = EnvSpec(
            name="cartpole",
            obs_dim=4,
            action_dim=1,
            action_type="discrete",
            bounds=SpaceBounds([
                Dim(-4.8, 4.8),
                Dim(-velocity_bound, velocity_bound),
                Dim(-TWENTYFOUR_DEG, TWENTYFOUR_DEG),
                Dim(-velocity_bound, velocity_bound),
                Dim(-p.force_mag, p.force_mag),
            ]),
            horizon=horizon,
            dt=0.02,
            reset={"kind": "uniform", "range": reset_range},
            action_options=((-p.force_mag, p.force_mag),),
            success="cartpole",
        )
        self.design_bounds = SpaceBounds(self.spec.bounds.dims)
        self.state = np.zeros(4)
        self.prev_success = 1
        self.t = 0
        self.steps_taken = 0

    def observe(self) -> np.ndarray:
        return self.state.copy()

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = rng.uniform(-self.reset_range, self.reset_range, size=4)
        self.prev_success = 1
        self.t = 0
        return self.observe()

    def set_state(self, internal: np.ndarray) -> None:
        internal = np.asarray(internal, dtype=float)
        if not np.all(np.isfinite(internal)):
            raise ProbeError("cartpole state must be finite")
        self.state = internal.copy()
        self.prev_success = 1
        self.t = 0

    def set_state_from_obs(self, obs: np.ndarray) -> None:
        self.set_state(obs)

    def design_to_state(self, design_state: np.ndarray) -> np.ndarray:
        return np.asarray(design_state, dtype=float)

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if not np.all(np.isfinite(self.state)):
            raise InvalidInputError("cartpole state is non-finite")
        p = self.params
        force = p.force_mag if int(action) == 1 else -p.force_mag
        x, x_dot, theta, theta_dot = self.state
        total_mass = p.cart_mass + p.pole_mass
        pole_ml = p.pole_mass * p.pole_half_length
        sin_t, cos_t = math.sin(theta), math.cos(theta)
        temp = (force + pole_ml * theta_dot**2 * sin_t) / total_mass
        theta_acc = (p.gravity * sin_t - cos_t * temp) / (
            p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_t**2 / total_mass)
        )
        x_acc = temp - pole_ml * theta_acc * cos_t / total_mass
        dt = self.spec.dt
        self.state = np.array([
            x + dt * x_dot,
            x_dot + dt * x_acc,
            theta + dt * theta_dot,
            theta_dot + dt * theta_acc,
        ])
        self.prev_success = cartpole_success(self.state, self.prev_success)
        reward = float(self.prev_success)
        self.t += 1
        self.steps_taken += 1
        done = self.prev_success == 0 or self.t >= self.spec.horizon
        return self.observe(), reward, done

    def perturbed(self, noise_scale: float, rng: np.random.Generator) -> "CartPole":
        """Copy with pole and cart masses scaled by (1 + noise * z)."""
        p = self.params
        new = replace(
            p,
            pole_mass=max(p.pole_mass * (1.0 + noise_scale * rng.standard_normal()), 1e-9),
            cart_mass=max(p.cart_mass * (1.0 + noise_scale * rng.standard_normal()), 1e-9),
        )
        return CartPole(new, horizon=self.spec.horizon, reset_range=self.reset_range)


def perturb(env, noise_scale: float, rng: np.random.Generator):
    """Independent copy of env with physical parameters perturbed
    multiplicatively by Gaussian noise (clamped positive)."""
    if noise_scale < 0:
        raise InvalidInputError("noise scale must be non-negative")
    return env.perturbed(noise_scale, rng)


_REGISTRY = {"pendulum": Pendulum, "cartpole": CartPole}


def make_env(name: str, **kwargs):
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown environment {name!r}; available: {sorted(_REGISTRY)}"
        ) from None
    return cls(**kwargs)
