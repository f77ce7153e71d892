"""Acceptance reporting: tests tagged with a ``criterion`` user property get
one PASS/FAIL line each in the terminal summary."""


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" not in props or (rep.when != "call" and outcome != "error"):
                continue
            status = "PASS" if outcome == "passed" else "FAIL"
            rows.append((props["criterion"], status, props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(rows):
        terminalreporter.write_line(f"{status}  {name}  {detail}".rstrip())
