from pathlib import Path

import numpy as np
import pytest

from spanre.gradcheck import tiny_config
from spanre.model import build_vocabs, init_params

FIXTURES = Path(__file__).parent / "fixtures"

TINY_RELATIONS = ["parent_company_of", "shareholders_of", "located_in"]


def make_params(tokens_list=(["IBM", "owns", "big", "Informix", "."],), relations=TINY_RELATIONS, seed=0,
                **overrides):
    vocab, chars = build_vocabs(tokens_list)
    return init_params(tiny_config(**overrides), vocab, chars, list(relations), np.random.default_rng(seed))


@pytest.fixture
def tiny_params():
    return make_params()


@pytest.fixture
def fixtures_dir():
    return FIXTURES


# one summary line per acceptance criterion, collected from record_property
_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" in props and (report.when == "call" or report.failed):
        _ACCEPTANCE.append((props["criterion"], report.passed, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, ok, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split()[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {name}" + (f"  [{detail}]" if detail else ""))
