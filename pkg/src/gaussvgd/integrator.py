"""
Fixed-step fourth-order Runge-Kutta integration.

The state is a tuple of numpy arrays (for instance (mu, Sigma) or a particle
matrix), so the same stepper serves the mean-field flows, the particle ODEs
and the linear factor equations.
"""

import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

State = Tuple[np.ndarray, ...]
RhsFunction = Callable[[float, State], State]
Projection = Callable[[State], State]
StepCheck = Callable[[State], None]
RecordCallback = Callable[[int, float, State], None]


class IntegrationError(ArithmeticError):
    """Raised when an integrated state leaves the admissible set."""

    def __init__(self, message: str, step_index: int, time: float):
        super().__init__(f"{message} (step {step_index}, t={time:.6g})")
        self.step_index = step_index
        self.time = time


def _axpy(y: State, h: float, k: State) -> State:
    return tuple(yi + h * ki for yi, ki in zip(y, k))


class RK4:
    """
    Classical fourth-order Runge-Kutta stepper on tuples of arrays.

    An optional projection is applied to every stage state and to the result,
    which is how covariance blocks are kept exactly symmetric.
    """

    def __init__(self, rhs: RhsFunction, project: Optional[Projection] = None):
        self.rhs = rhs
        self.project = project or (lambda y: y)

    def step(self, t: float, y: State, dt: float) -> State:
        """
        Advance the state by one step of length dt.

        Args:
            t: Current time
            y: Current state
            dt: Step length

        Returns:
            State at t + dt
        """
        k1 = self.rhs(t, y)
        k2 = self.rhs(t + 0.5 * dt, self.project(_axpy(y, 0.5 * dt, k1)))
        k3 = self.rhs(t + 0.5 * dt, self.project(_axpy(y, 0.5 * dt, k2)))
        k4 = self.rhs(t + dt, self.project(_axpy(y, dt, k3)))
        out = tuple(
            yi + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            for yi, a, b, c, d in zip(y, k1, k2, k3, k4)
        )
        return self.project(out)


def step_count(dt: float, T: float) -> int:
    """Number of equal steps of length <= dt covering [0, T]."""
    if dt <= 0:
        raise ValueError(f"Step size must be positive, got {dt}")
    if T < 0:
        raise ValueError(f"Horizon must be non-negative, got {T}")
    if T == 0:
        return 0
    return max(1, int(math.ceil(T / dt - 1e-9)))


def integrate_fixed_step(rhs: RhsFunction, y0: State, dt: float, T: float,
                         project: Optional[Projection] = None,
                         check: Optional[StepCheck] = None,
                         record_every: int = 1,
                         on_record: Optional[RecordCallback] = None) -> State:
    """
    Integrate y' = rhs(t, y) from 0 to T with fixed-step RK4.

    The horizon is split into n = ceil(T/dt) equal steps of length T/n, which
    equals dt whenever T is a multiple of dt. The initial state, every
    record_every-th state and the final state are passed to on_record.

    Args:
        rhs: Right-hand side f(t, y)
        y0: Initial state
        dt: Requested step size
        T: Final time
        project: Projection applied to stage states (e.g. symmetrization)
        check: Called on each accepted state; raising any ValueError or
            ArithmeticError aborts the integration
        record_every: Record stride in steps
        on_record: Callback receiving (step_index, t, state)

    Returns:
        The state at time T

    Raises:
        IntegrationError: On non-finite state or a failed check
    """
    if record_every < 1:
        raise ValueError(f"record_every must be >= 1, got {record_every}")
    n_steps = step_count(dt, T)
    h = T / n_steps if n_steps else dt
    stepper = RK4(rhs, project)

    y = tuple(np.asarray(part, dtype=float) for part in y0)
    if on_record:
        on_record(0, 0.0, y)

    logger.debug(f"RK4 integration: {n_steps} steps of {h:.3g} up to T={T}")
    for k in range(1, n_steps + 1):
        t_prev = (k - 1) * h
        try:
            y = stepper.step(t_prev, y, h)
        except (ValueError, ArithmeticError) as e:
            raise IntegrationError(f"Right-hand side failed: {e}", k, t_prev) from e
        t = k * h
        if not all(np.all(np.isfinite(part)) for part in y):
            raise IntegrationError("Non-finite state", k, t)
        if check:
            try:
                check(y)
            except (ValueError, ArithmeticError) as e:
                raise IntegrationError(f"State check failed: {e}", k, t) from e
        if on_record and (k % record_every == 0 or k == n_steps):
            on_record(k, t, y)
    return y
