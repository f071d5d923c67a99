import csv
import os

import numpy as np
import pytest

from fairsense.models import TrainedModel


def central_difference(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Independent gradient oracle: central finite differences over every
    entry of ``arr``, which ``f`` must read on each call."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        f_plus = f()
        arr[idx] = orig - h
        f_minus = f()
        arr[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def assert_grad_close(analytic: np.ndarray, numeric: np.ndarray,
                      rtol: float = 1e-4, atol: float = 1e-7,
                      context: str = "") -> None:
    err = np.abs(analytic - numeric)
    tol = atol + rtol * np.abs(numeric)
    assert np.all(err <= tol), (
        f"{context}: max abs err {err.max():.3e} vs tolerance "
        f"{tol[np.unravel_index(err.argmax(), err.shape)]:.3e}")


def model_grad_check(model: TrainedModel, x: np.ndarray,
                     rtol=1e-4, atol=1e-7) -> None:
    """Check every input- and weight-gradient component against the oracle."""
    from fairsense.sensitivity import model_input_gradient
    from fairsense.tensor import Tensor

    x = np.asarray(x, dtype=np.float64)
    analytic_x = model_input_gradient(model, x)
    numeric_x = central_difference(
        lambda: model.forward(Tensor(x)).item(), x)
    assert_grad_close(analytic_x, numeric_x, rtol, atol, "input gradient")

    xt = Tensor(x)
    model.zero_grad()
    model.forward(xt).backward()
    for name, w in model.weights:
        numeric_w = central_difference(
            lambda: model.forward(Tensor(x)).item(), w.data)
        assert_grad_close(w.grad, numeric_w, rtol, atol,
                          f"weight gradient {name}")


def make_separable(n=100, seed=0):
    """Linearly separable 2-feature toy set."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    y = (x[:, 0] + x[:, 1] > 0).astype(float)
    return x, y


def make_biased(n=400, seed=0, input_dim=4, leak=1.0):
    """Synthetic set whose label leans on the protected column (index 0)."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, input_dim))
    protected = (rng.random(n) < 0.5).astype(float)
    x[:, 0] = protected
    logits = leak * (2.0 * protected - 1.0) + 0.5 * x[:, 1]
    y = (logits + 0.3 * rng.normal(size=n) > 0).astype(float)
    return x, y, protected


def write_synthetic_csv(path, n=300, seed=0):
    """Headered CSV in the shape the ingester expects, with a numeric,
    a categorical, a protected, and a label column."""
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["age", "job", "sex", "outcome"])
        for _ in range(n):
            sex = "Male" if rng.random() < 0.5 else "Female"
            job = rng.choice(["a", "b", "c"])
            age = int(rng.integers(18, 70))
            bias = 0.6 if sex == "Male" else 0.25
            outcome = "yes" if rng.random() < bias + (age - 44) / 200 else "no"
            w.writerow([age, job, sex, outcome])
    return path


@pytest.fixture
def synthetic_schema():
    from fairsense.data import DatasetSchema
    return DatasetSchema(
        name="synthetic",
        columns=(("age", "numeric"), ("job", "categorical"),
                 ("sex", "protected"), ("outcome", "label")),
        privileged_value="Male",
        positive_label_value="yes",
    )


@pytest.fixture
def synthetic_csv(tmp_path):
    return write_synthetic_csv(tmp_path / "synthetic.csv")


# real-data discovery for the dataset-bound acceptance criteria
DATA_DIR = os.environ.get(
    "FAIRSENSE_DATA_DIR",
    os.path.join(os.path.dirname(os.path.dirname(__file__)), "data"))
ADULT_CSV = os.path.join(DATA_DIR, "adult.data")
COMPAS_CSV = os.path.join(DATA_DIR, "compas-scores-two-years.csv")


def require_file(path):
    if not os.path.exists(path):
        pytest.skip(f"requires dataset file {path} (place it there or set "
                    f"FAIRSENSE_DATA_DIR); not distributable with the repo")
    return path
