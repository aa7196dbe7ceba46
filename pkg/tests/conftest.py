import os
from pathlib import Path

import numpy as np
import pytest

from pltanh import data as D

REPO = Path(__file__).resolve().parents[1]


def data_root() -> Path:
    return Path(os.environ.get("PLTANH_DATA_ROOT") or REPO / "data")


def digits_28(n=None) -> D.Dataset:
    """scikit-learn's bundled 8x8 digits, upscaled 3x and zero-padded to 28x28."""
    from sklearn.datasets import load_digits

    bunch = load_digits()
    img = bunch.images / 16.0
    img = np.kron(img, np.ones((1, 3, 3)))
    img = np.pad(img, ((0, 0), (2, 2), (2, 2)))[..., None].astype(np.float32)
    ds = D.Dataset(img, bunch.target.astype(np.int64), "digits", 10)
    return ds if n is None else ds.subset(n)


@pytest.fixture(scope="session")
def digits():
    return digits_28()


# -- acceptance summary -------------------------------------------------------

_criteria = {}


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker:
            item.user_properties.append(("criterion", marker.args[0]))


def pytest_runtest_logreport(report):
    label = dict(report.user_properties).get("criterion")
    if label is None:
        return
    entry = _criteria.setdefault(label, {"outcome": "PASS", "seconds": 0.0, "reason": ""})
    entry["seconds"] += report.duration
    if report.failed:
        entry["outcome"] = "FAIL"
        entry["reason"] = str(report.longrepr.reprcrash.message if hasattr(report.longrepr, "reprcrash") else report.longrepr).splitlines()[0]
    elif report.skipped and entry["outcome"] == "PASS":
        entry["outcome"] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    def order(label):
        head = label.split()[0]
        return (int(head) if head.isdigit() else 99, label)

    for label in sorted(_criteria, key=order):
        e = _criteria[label]
        line = f"{e['outcome']:4s} {label} ({e['seconds']:.1f} s)"
        if e["reason"]:
            line += f"  -- {e['reason'][:160]}"
        terminalreporter.write_line(line)
