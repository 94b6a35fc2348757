import pytest

from ecattack.campaign import CampaignPlan, Testbed, run_full_campaign
from ecattack.devicemodel import arduino, raspberry_pi

ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def rpi():
    return raspberry_pi()


@pytest.fixture
def ard():
    return arduino()


@pytest.fixture
def bed(rpi, ard):
    tb = Testbed({"rpi": rpi, "ard": ard}, seed=3)
    tb.associate_all()
    return tb


@pytest.fixture(scope="session")
def default_report():
    plan = CampaignPlan({"raspberry_pi": raspberry_pi(), "arduino": arduino()}, seed=0)
    return run_full_campaign(plan)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split(".")[0])):
        terminalreporter.write_line(f"{ACCEPTANCE[key]:4}  {key}")
