"""
console.py - CLI status lines and the run summary panel (plain ANSI codes).
"""

import sys

C_RESET = "\033[0m"
C_BLUE = "\033[34m"
C_CYAN = "\033[36m"
C_GREEN = "\033[32m"
C_RED = "\033[31m"
C_BOLD = "\033[1m"


def _paint(code: str, text: str, stream=None) -> str:
    stream = stream or sys.stdout
    if not getattr(stream, "isatty", lambda: False)():
        return text
    return f"{code}{text}{C_RESET}"


def success(text):
    print(f"{_paint(C_GREEN, 'OK')} {text}")


def error(text):
    print(f"{_paint(C_RED, 'ERROR', sys.stderr)} {text}", file=sys.stderr)


def info(text):
    print(f"{_paint(C_BLUE, 'INFO')} {text}")


def print_panel(title, lines):
    width = max([60] + [len(line) + 4 for line in lines])
    edge = _paint(C_CYAN, "+" + "-" * (width - 2) + "+")
    bar = _paint(C_CYAN, "|")
    print(edge)
    print(f"{bar} {_paint(C_BOLD, title.center(width - 4))} {bar}")
    print(edge)
    for line in lines:
        print(f"{bar} {line.ljust(width - 4)} {bar}")
    print(edge)


def summary_lines(rows):
    """One line per (L, beta) foliation summary row."""
    lines = []
    for row in rows:
        beta = "-" if row.get("beta") is None else f"{row['beta']:g}"
        lines.append(
            f"L={row['L']:<3} beta={beta:<6} J/log d={row['incoherence_ratio']:.4f}  "
            f"QFI={row['qfi']:.4g}  S_H={row['leaf_entropy']:.4f}"
        )
    return lines
