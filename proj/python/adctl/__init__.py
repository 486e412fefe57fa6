"""Python access to the adctl core: parse a model, inspect its block
schedule, evaluate and linearize its state field, and simulate it."""

from ._core import AdctlError, Model, pendulum_jacobian, pendulum_rhs


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return Model(fh.read())


__all__ = ["AdctlError", "Model", "load_model", "pendulum_jacobian", "pendulum_rhs"]
