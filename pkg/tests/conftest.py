import hypothesis
import numpy as np
import pytest

from mttoken.tensor import GradientTape, Tensor, finite_diff_grad

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    diff = np.abs(a - b).max(initial=0.0)
    return diff / scale if scale > 0 else diff


def grad_errors(fn, *inputs, eps=1e-5):
    """Relative error of tape gradients vs central differences, one value per input.

    ``fn`` maps Tensors to a scalar Tensor.
    """
    leaves = [Tensor(np.array(x, dtype=float), requires_grad=True) for x in inputs]
    with GradientTape() as tape:
        out = fn(*leaves)
    analytic = tape.gradient(out, leaves)
    errs = []
    for k, leaf in enumerate(leaves):
        def f(x, k=k):
            args = [Tensor(l.data) for l in leaves]
            args[k] = x
            return fn(*args)
        errs.append(rel_err(analytic[k], finite_diff_grad(f, leaf, eps).data))
    return errs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# filled by test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
