import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one line per acceptance criterion after the run."""
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if getattr(rep, "when", "call") != "call":
                continue
            if "test_acceptance.py" in str(rep.nodeid):
                name = rep.nodeid.split("::")[-1]
                rows.append((name, status.upper(), getattr(rep, "duration", 0.0)))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status, duration in sorted(rows):
            terminalreporter.write_line(f"ACCEPTANCE {name}: {status} ({duration:.1f}s)")
