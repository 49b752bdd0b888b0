"""Console report with ANSI colors and formatting."""

import sys
from typing import Any, Dict, List, Optional


class Display:
    # ANSI color codes
    GRAY = "\033[90m"
    GOLD = "\033[33m"
    RED = "\033[31m"
    GREEN = "\033[32m"
    CYAN = "\033[36m"
    WHITE = "\033[97m"
    DIM = "\033[2m"
    BOLD = "\033[1m"
    RESET = "\033[0m"

    def __init__(self, color: Optional[bool] = None, stream=None):
        self.stream = stream or sys.stdout
        if color is None:
            color = hasattr(self.stream, "isatty") and self.stream.isatty()
        self.color = color

    def _c(self, code: str) -> str:
        return code if self.color else ""

    def _print(self, text: str = ""):
        print(text, file=self.stream)

    def show_header(self, command: str, seed: int, dimension: int):
        self._print(f"\n{self._c(self.BOLD)}{self._c(self.WHITE)}{'=' * 60}")
        self._print(f"  qkinetic {command}")
        self._print(f"{'=' * 60}{self._c(self.RESET)}")
        self._print(f"  {self._c(self.DIM)}dimension {dimension}  │  seed {seed}{self._c(self.RESET)}")

    def show_section(self, title: str):
        self._print(f"\n{self._c(self.CYAN)}{self._c(self.BOLD)}{title}{self._c(self.RESET)}")

    def show_value(self, label: str, value: Any, error: Optional[float] = None):
        text = _fmt(value)
        if error is not None:
            text += f"  {self._c(self.DIM)}± {_fmt(error)}{self._c(self.RESET)}"
        self._print(f"  {label:<24} {text}")

    def show_table(self, rows: List[Dict[str, Any]], columns: List[str], max_rows: int = 20):
        """Numbers as a fixed-width table."""
        if not rows:
            self._print(f"\n{self._c(self.DIM)}  (no rows){self._c(self.RESET)}")
            return
        shown = rows[:max_rows]
        widths = {col: len(col) for col in columns}
        for row in shown:
            for col in columns:
                widths[col] = max(widths[col], len(_fmt(row.get(col, ""))))

        header = " | ".join(col.rjust(widths[col]) for col in columns)
        separator = "-+-".join("-" * widths[col] for col in columns)
        self._print(f"\n{self._c(self.WHITE)}  {header}{self._c(self.RESET)}")
        self._print(f"  {self._c(self.DIM)}{separator}{self._c(self.RESET)}")
        for row in shown:
            self._print("  " + " | ".join(_fmt(row.get(col, "")).rjust(widths[col]) for col in columns))
        if len(rows) > max_rows:
            self._print(f"  {self._c(self.DIM)}... and {len(rows) - max_rows} more rows{self._c(self.RESET)}")

    def show_check(self, name: str, passed: bool, errors: List[str]):
        if passed:
            self._print(f"  {self._c(self.GREEN)}[PASS]{self._c(self.RESET)} {name}")
            return
        self._print(f"  {self._c(self.RED)}{self._c(self.BOLD)}[FAIL]{self._c(self.RESET)} {name}")
        for error in errors:
            self._print(f"         {self._c(self.RED)}{error}{self._c(self.RESET)}")

    def show_files(self, paths: List[str]):
        for path in paths:
            self._print(f"  {self._c(self.GOLD)}wrote{self._c(self.RESET)} {path}")

    def show_error(self, message: str):
        print(f"\n{self._c(self.RED)}  {message}{self._c(self.RESET)}", file=sys.stderr)

    def show_footer(self, passed: bool, wall_time: float):
        status = f"{self._c(self.GREEN)}all checks passed" if passed else f"{self._c(self.RED)}checks failed"
        self._print(f"\n  {self._c(self.BOLD)}{status}{self._c(self.RESET)}"
                    f"  {self._c(self.DIM)}({wall_time:.1f}s){self._c(self.RESET)}\n")


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, complex):
        return f"{value.real:.6g}{value.imag:+.3g}j"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)
