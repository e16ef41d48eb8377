"""Prints one PASS/FAIL line per acceptance criterion at the end of the session."""

_results: dict[int, tuple[str, str, str]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    number = props["criterion"]
    if report.when == "call" or report.failed:
        outcome = "PASS" if report.passed else "FAIL"
        if number not in _results or outcome == "FAIL":
            _results[number] = (outcome, props.get("title", ""), props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        outcome, title, detail = _results[number]
        line = f"criterion {number:>2} {outcome}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
