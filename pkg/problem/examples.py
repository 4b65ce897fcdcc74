"""
Built-in problem instances.

"3.1": Robin problem on [0, 1] with an advanced forcing argument m(t) = 2t
and delayed diffusion argument η(t) = t/2.
"3.2": Dirichlet problem on [0, π] with advanced arguments m(t) = t + 1,
η(t) = t + 2.
"""

import math
import logging
from fractions import Fraction

from numerics.expr import parse_expression
from problem.model import Dirichlet, Interval, PowerLaw, ProblemSpec, Robin, UnknownExampleError

logger = logging.getLogger(__name__)

EXAMPLES = {
    "3.1": {
        "alpha": 5,
        "r": "t",
        "p": "1",
        "p_hat": "1",
        "q": "1",
        "f_coef": "2",
        "a": "1",
        "a_k": "3+cos(k*t)",
        "s": 1,
        "m": "2*t",
        "eta": "t/2",
        "psi": "t",
        "domain": (0.0, 1.0),
        "t0": 1.0,
    },
    "3.2": {
        "alpha": 3,
        "r": "t^2",
        "p": "1",
        "p_hat": "2*t",
        "q": "t^4",
        "f_coef": "2*t^4",
        "a": "1",
        "a_k": "1+k*t",
        "s": 1,
        "m": "t+1",
        "eta": "t+2",
        "psi": None,
        "domain": (0.0, math.pi),
        "t0": 1.0,
    },
}


def builtin_example(example_id: str) -> ProblemSpec:
    """Return the coefficient set of a built-in example."""
    if example_id not in EXAMPLES:
        raise UnknownExampleError(f"Unknown example: {example_id} (known: {', '.join(sorted(EXAMPLES))})")

    e = EXAMPLES[example_id]
    bc = Robin(parse_expression(e["psi"])) if e["psi"] is not None else Dirichlet()
    return ProblemSpec(
        alpha=Fraction(e["alpha"]),
        r=parse_expression(e["r"]),
        p=parse_expression(e["p"]),
        p_hat=parse_expression(e["p_hat"]),
        q=parse_expression(e["q"]),
        a=parse_expression(e["a"]),
        a_family=parse_expression(e["a_k"]),
        s=e["s"],
        m=parse_expression(e["m"]),
        eta=parse_expression(e["eta"]),
        f_form=PowerLaw(parse_expression(e["f_coef"])),
        bc=bc,
        domain=Interval(*e["domain"]),
        t0=e["t0"],
        name=f"example {example_id}",
    )
