from .console import success, error, info, print_panel, summary_lines
