"""Prints the release-gate scoreboard after any run that touched it."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import CRITERIA
    except ImportError:
        return
    verdicts = {}
    labels = {}
    for status, passed in (("passed", True), ("failed", False), ("error", False)):
        for rep in terminalreporter.stats.get(status, ()):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            name = nodeid.rsplit("::", 1)[-1].split("[")[0]
            if name not in CRITERIA:
                continue
            number, label = CRITERIA[name]
            verdicts[number] = verdicts.get(number, True) and passed
            labels[number] = label
    if not verdicts:
        return
    terminalreporter.write_sep("-", "release gate")
    for number in sorted(verdicts):
        verdict = "PASS" if verdicts[number] else "FAIL"
        terminalreporter.write_line(f"criterion {number:02d} {verdict} {labels[number]}")
