import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SimConfig(BaseModel):
    """
    Settings of the event-driven integrator.

    codim2_policy decides what happens when both players become indifferent at once:
      - "follow_J": continue along the spiral set with the convex-combination flow,
        stop with a discontinuity at saddle points
      - "abort": stop at every non-crossing codimension-two point
      - "perturb": shift the state by perturb_epsilon into a quadrant and carry on
    Crossing points are always passed through.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    tol_tie: float = Field(default=1e-9, gt=0)
    simultaneity: float = Field(default=1e-10, gt=0)
    max_events: int = Field(default=10_000, gt=0)
    max_time: float = Field(default=math.inf, gt=0)
    time_scale: Literal["s", "rho"] = "s"
    codim2_policy: Literal["abort", "follow_J", "perturb"] = "follow_J"
    perturb_epsilon: float = Field(default=1e-6, gt=0)
    equilibrium_radius: float = Field(default=1e-7, gt=0)

    @model_validator(mode="after")
    def _epsilon_above_tie(self):
        if self.perturb_epsilon <= self.tol_tie:
            raise ValueError("perturb_epsilon must exceed tol_tie")
        return self
